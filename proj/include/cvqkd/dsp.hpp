#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "cvqkd/simulate.hpp"

// Local-LO DSP chain: RRC pulse shaping, pilot-tone FDM, Zadoff-Chu frame
// synchronization, pilot-based phase recovery, matched filtering and
// decimation. All transforms are linear (phase recovery applies a frozen
// estimate), so the chain preserves Gaussian statistics up to a scale that
// the DSP shot-noise normalization removes.

namespace cvqkd::dsp {

using cdouble = std::complex<double>;

struct WaveformBuffer {
    std::vector<cdouble> samples;
    double sample_rate = 4.0;  // Hz
    double symbol_rate = 1.0;  // baud; sample_rate = sps * symbol_rate

    int sps() const;
};

struct FrameLayout {
    int zc_length = 255;       // odd
    int zc_root = 7;           // coprime with zc_length
    int payload_symbols = 0;   // 0 = derive from input block
    double pilot_freq_offset = 0.0;  // Hz; 0 = default 0.4 * sample_rate / 2
    double pilot_amplitude = 0.0;    // linear; 0 = default 100x RMS payload
    double rolloff = 0.3;
    int span_symbols = 64;     // RRC filter span, even
};

// Unit-energy root-raised-cosine taps, length span*sps + 1; singular points
// replaced by their analytic limits.
std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps);

// z[n] = exp(-i pi q n (n+1) / N) for odd N, gcd(q, N) = 1.
std::vector<cdouble> zadoff_chu(int length, int root);

// Upsample + RRC-shape the payload, prepend the shaped ZC preamble, add the
// continuous pilot tone. Throws on pilot/payload band overlap.
WaveformBuffer shape_and_mux(const simulate::SymbolBlock& symbols,
                             const FrameLayout& layout, int sps,
                             double symbol_rate = 1.0);

// Sample offset of the preamble via normalized cross-correlation against the
// shaped ZC reference. Throws if the peak-to-second-peak ratio is below 2.
std::size_t frame_sync(const WaveformBuffer& rx, const FrameLayout& layout);

struct PhaseRecovery {
    std::vector<double> phase;  // unwrapped estimate per sample, radians
    WaveformBuffer corrected;
    bool low_pilot_snr = false;  // pilot power below 10x its band's noise floor
};

// Narrowband-isolate the pilot, unwrap its phase, interpolate and derotate.
// The pilot phase is referenced to reference_sample (normally the frame_sync
// offset) so that a frame delay does not masquerade as a carrier phase.
PhaseRecovery pilot_phase_recover(const WaveformBuffer& rx, const FrameLayout& layout,
                                  std::size_t reference_sample = 0);

// Pilot removal, matched filter, decimation-phase search, preamble strip,
// and division by the DSP shot-noise unit so outputs are in SNU.
simulate::SymbolBlock demux_and_downsample(const WaveformBuffer& rx,
                                           const FrameLayout& layout, int sps,
                                           std::size_t preamble_offset);

// Variance of unit white noise pushed through the receive chain; the SNU of
// the DSP output. Deterministic (internal fixed seed).
double dsp_snu(const FrameLayout& layout, int sps, std::size_t n_symbols = 4096);

// Impairment injection helpers for tests and the loopback driver.
WaveformBuffer apply_static_phase(const WaveformBuffer& in, double radians);
WaveformBuffer apply_frequency_offset(const WaveformBuffer& in, double hz);
WaveformBuffer apply_delay(const WaveformBuffer& in, std::size_t samples);
WaveformBuffer add_white_noise(const WaveformBuffer& in, double variance_per_quad,
                               std::uint64_t seed);
// Wiener-process laser phase noise with the given linewidth.
WaveformBuffer apply_phase_noise(const WaveformBuffer& in, double linewidth_hz,
                                 std::uint64_t seed);

// CSV (sample_index, re, im) and binary ("CVQKDWAV" magic + interleaved
// little-endian float64 re,im) waveform exchange. Rates are not stored in
// the binary form and must be supplied on import.
void write_waveform_csv(const WaveformBuffer& buf, const std::string& path);
WaveformBuffer read_waveform_csv(const std::string& path, double sample_rate,
                                 double symbol_rate);
void write_waveform_binary(const WaveformBuffer& buf, const std::string& path);
WaveformBuffer read_waveform_binary(const std::string& path, double sample_rate,
                                    double symbol_rate);

}  // namespace cvqkd::dsp
