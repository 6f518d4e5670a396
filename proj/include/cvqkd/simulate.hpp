#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "cvqkd/keyrate.hpp"

// Monte-Carlo of the prepare-and-measure pipeline: modulation, channel,
// detection, shot-noise-unit calibration, and parameter estimation.
// All stages are deterministic given (seed, stream) and independent of the
// thread count.

namespace cvqkd::simulate {

using keyrate::ChannelParams;
using keyrate::DetectorParams;
using keyrate::ProtocolSpec;

enum class ExecPolicy { Serial, Parallel };

struct ModulationFormat {
    enum class Kind { Gaussian, Mpsk, Qam, Unidimensional };
    Kind kind = Kind::Gaussian;
    double v_mod = 4.0;      // target modulation variance, SNU
    int order = 4;           // constellation size for mpsk / qam
    bool gaussian_shaping = false;  // qam only: Maxwell-Boltzmann weights
};

struct SymbolBlock {
    std::vector<double> x_mod, p_mod;  // phase-space amplitudes, SNU
    ModulationFormat format;
    std::uint64_t seed = 0;

    std::size_t size() const { return x_mod.size(); }
};

enum class DetectionKind { Homodyne, Heterodyne };

// basis codes per symbol
inline constexpr std::uint8_t kBasisX = 0;
inline constexpr std::uint8_t kBasisP = 1;
inline constexpr std::uint8_t kBasisBoth = 2;

struct DetectionRecord {
    // electrical units; homodyne fills only the measured quadrature slot
    std::vector<double> raw_x, raw_p;
    std::vector<std::uint8_t> basis;
    // SNU after division by sqrt(snu_estimate)
    std::vector<double> norm_x, norm_p;
    double snu_estimate = 1.0;
    DetectionKind kind = DetectionKind::Homodyne;

    std::size_t size() const { return basis.size(); }
};

enum class CalibrationMode { TwoTime, OneTime };

struct CalibrationRecord {
    CalibrationMode mode = CalibrationMode::TwoTime;
    double v_ele_hat = 0.0;    // electronic-noise variance estimate (electrical)
    double v_total_hat = 0.0;  // total-noise variance estimate (electrical)
    double snu = 1.0;          // derived shot-noise unit
};

struct EstimationResult {
    double t_hat = 0.0;    // channel transmittance estimate
    double eps_hat = 0.0;  // channel-input-referenced excess noise estimate
    phase_space::CovarianceMatrix gamma_ab_hat;
    bool failed = false;   // nonpositive signal correlation
};

// Box-Muller: u1 in (0,1], u2 in [0,1) -> two standard normals.
std::pair<double, double> gaussian_pair(double u1, double u2);

SymbolBlock modulate(const ModulationFormat& format, std::size_t n,
                     std::uint64_t seed, ExecPolicy exec = ExecPolicy::Parallel);

// x_out = sqrt(T) x_in + g with Var(g) = 1 + T*eps: the signal's vacuum unit
// is accounted here, so Var(x_out) = T*V_M + 1 + T*eps.
SymbolBlock channel_apply(const SymbolBlock& block, const ChannelParams& chan,
                          std::uint64_t seed, ExecPolicy exec = ExecPolicy::Parallel);

// Raw electrical-domain detection; gain_a is the LO-proportional gain.
DetectionRecord detect(const SymbolBlock& block, const DetectorParams& det,
                       DetectionKind kind, std::uint64_t seed,
                       double gain_a = 1e3, ExecPolicy exec = ExecPolicy::Parallel);

// Sample-variance calibration from raw vacuum (LO on, signal blocked) and,
// for two-time, dark (LO off) records. Records shorter than 1e4 samples are
// rejected as too imprecise.
CalibrationRecord calibrate_snu(CalibrationMode mode,
                                const std::vector<double>& vacuum_record,
                                const std::vector<double>* dark_record);

// Generate the raw calibration records for a detector (vacuum input).
std::vector<double> vacuum_record(const DetectorParams& det, DetectionKind kind,
                                  std::size_t n, std::uint64_t seed, double gain_a);
std::vector<double> dark_record(const DetectorParams& det, std::size_t n,
                                std::uint64_t seed, double gain_a);

// Divide raw data by sqrt(snu) into the normalized slots.
void normalize(DetectionRecord& rec, double snu);

// Least-squares channel-parameter estimation from modulation data and
// normalized detection data, unfolding the known detector model. For
// one-time calibration the eta_e loss is divided back out so t_hat is the
// physical channel transmittance.
EstimationResult estimate_parameters(const SymbolBlock& mod,
                                     const DetectionRecord& det_norm,
                                     const DetectorParams& det_model,
                                     CalibrationMode mode, double v_mod);

// average photon number of the modulated ensemble
inline double mean_photon_number(double v_mod) { return v_mod / 2.0; }

// V_M = 2 P / (h f_opt f_rep): modulation variance from optical power,
// optical frequency and pulse repetition rate.
double modulation_variance_from_power(double power_watts, double optical_freq_hz,
                                      double rep_rate_hz);

struct RunConfig {
    ProtocolSpec spec;
    ChannelParams channel;
    DetectorParams detector;
    ModulationFormat format;
    CalibrationMode calibration = CalibrationMode::TwoTime;
    std::size_t n_symbols = 100000;
    std::size_t n_calibration = 100000;
    std::uint64_t seed = 1;
    double gain_a = 1e3;
    std::optional<keyrate::FiniteSizeParams> finite_size;
    ExecPolicy exec = ExecPolicy::Parallel;
};

struct RunReport {
    ChannelParams true_channel;
    double t_hat = 0.0;
    double eps_hat = 0.0;
    double snu = 1.0;
    bool estimation_failed = false;
    keyrate::KeyRateReport estimated_rate;       // from estimated covariance
    keyrate::KeyRateReport analytic_rate;        // at true parameters
    std::optional<keyrate::KeyRateReport> finite_rate;
    std::size_t n_used = 0;                      // post-sifting sample count
};

// modulate -> channel -> detect -> calibrate -> normalize -> estimate -> rate
RunReport end_to_end_run(const RunConfig& cfg);

}  // namespace cvqkd::simulate
