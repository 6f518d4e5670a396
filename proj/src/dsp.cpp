#include "cvqkd/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "cvqkd/rng.hpp"

namespace cvqkd::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

int checked_sps(double sample_rate, double symbol_rate) {
    const double ratio = sample_rate / symbol_rate;
    const int sps = static_cast<int>(std::lround(ratio));
    if (sps < 2 || std::abs(ratio - sps) > 1e-9 * ratio) {
        throw std::domain_error("sample_rate must be an integer multiple (>= 2) of symbol_rate");
    }
    return sps;
}

struct EffectiveLayout {
    FrameLayout base;
    double pilot_freq = 0.0;
    double pilot_amp = 0.0;
};

EffectiveLayout resolve(const FrameLayout& layout, double sample_rate,
                        double payload_rms) {
    EffectiveLayout e{layout, layout.pilot_freq_offset, layout.pilot_amplitude};
    if (e.pilot_freq == 0.0) e.pilot_freq = 0.4 * sample_rate / 2.0;
    if (e.pilot_amp == 0.0) e.pilot_amp = 100.0 * (payload_rms > 0.0 ? payload_rms : 1.0);
    if (e.pilot_amp < 0.0) e.pilot_amp = 0.0;  // negative request disables the pilot
    return e;
}

std::vector<cdouble> convolve_full(const std::vector<cdouble>& a,
                                   const std::vector<double>& taps) {
    std::vector<cdouble> out(a.size() + taps.size() - 1, cdouble{0.0, 0.0});
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == cdouble{0.0, 0.0}) continue;
        for (std::size_t j = 0; j < taps.size(); ++j) {
            out[i + j] += a[i] * taps[j];
        }
    }
    return out;
}

// shaped ZC preamble reference at the working sps
std::vector<cdouble> preamble_reference(const FrameLayout& layout, int sps) {
    const std::vector<cdouble> zc = zadoff_chu(layout.zc_length, layout.zc_root);
    std::vector<cdouble> up(static_cast<std::size_t>(layout.zc_length) * sps,
                            cdouble{0.0, 0.0});
    for (int i = 0; i < layout.zc_length; ++i) {
        up[static_cast<std::size_t>(i) * sps] = zc[i];
    }
    return convolve_full(up, rrc_taps(layout.rolloff, layout.span_symbols, sps));
}

// least-squares single-tone estimate and removal
cdouble estimate_tone(const std::vector<cdouble>& x, double freq_norm) {
    cdouble acc{0.0, 0.0};
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double ph = -2.0 * kPi * freq_norm * static_cast<double>(n);
        acc += x[n] * cdouble{std::cos(ph), std::sin(ph)};
    }
    return acc / static_cast<double>(x.size());
}

std::vector<cdouble> subtract_tone(const std::vector<cdouble>& x, double freq_norm,
                                   cdouble amp) {
    std::vector<cdouble> out(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double ph = 2.0 * kPi * freq_norm * static_cast<double>(n);
        out[n] = x[n] - amp * cdouble{std::cos(ph), std::sin(ph)};
    }
    return out;
}

// Tone removal restricted to the burst support: a delayed frame carries
// leading/trailing dead samples, and a full-buffer least-squares fit would
// under-estimate the pilot and leave a large residual (the pilot dominates
// the signal by design). The support is found from the envelope itself.
std::vector<cdouble> subtract_pilot(const std::vector<cdouble>& x, double freq_norm) {
    double peak = 0.0;
    for (const cdouble& v : x) peak = std::max(peak, std::abs(v));
    const double thr = 0.01 * peak;
    std::size_t first = 0, last = x.size();
    while (first < x.size() && std::abs(x[first]) < thr) ++first;
    while (last > first && std::abs(x[last - 1]) < thr) --last;
    if (last <= first) return x;

    cdouble acc{0.0, 0.0};
    for (std::size_t n = first; n < last; ++n) {
        const double ph = -2.0 * kPi * freq_norm * static_cast<double>(n);
        acc += x[n] * cdouble{std::cos(ph), std::sin(ph)};
    }
    acc /= static_cast<double>(last - first);

    std::vector<cdouble> out = x;
    for (std::size_t n = first; n < last; ++n) {
        const double ph = 2.0 * kPi * freq_norm * static_cast<double>(n);
        out[n] = x[n] - acc * cdouble{std::cos(ph), std::sin(ph)};
    }
    return out;
}

}  // namespace

int WaveformBuffer::sps() const { return checked_sps(sample_rate, symbol_rate); }

std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps) {
    if (!(rolloff > 0.0) || rolloff > 1.0) {
        throw std::domain_error("rolloff must be in (0, 1]");
    }
    if (span_symbols < 2 || span_symbols % 2 != 0) {
        throw std::domain_error("span_symbols must be even and >= 2");
    }
    if (sps < 2) throw std::domain_error("sps must be >= 2");

    const int n = span_symbols * sps + 1;
    const int mid = span_symbols * sps / 2;
    std::vector<double> taps(n);
    const double b = rolloff;
    for (int k = 0; k < n; ++k) {
        const double t = static_cast<double>(k - mid) / sps;  // symbol units
        double h;
        if (std::abs(t) < 1e-12) {
            h = 1.0 - b + 4.0 * b / kPi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
            // removable singularity of the generic expression
            h = (b / std::sqrt(2.0)) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) +
                 (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
        } else {
            const double num = std::sin(kPi * t * (1.0 - b)) +
                               4.0 * b * t * std::cos(kPi * t * (1.0 + b));
            h = num / (kPi * t * (1.0 - 16.0 * b * b * t * t));
        }
        taps[k] = h;
    }
    const double energy = std::inner_product(taps.begin(), taps.end(), taps.begin(), 0.0);
    const double inv = 1.0 / std::sqrt(energy);
    for (double& v : taps) v *= inv;
    return taps;
}

std::vector<cdouble> zadoff_chu(int length, int root) {
    if (length < 1 || length % 2 == 0) {
        throw std::domain_error("Zadoff-Chu length must be odd and positive");
    }
    if (std::gcd(root, length) != 1) {
        throw std::domain_error("Zadoff-Chu root must be coprime with the length");
    }
    std::vector<cdouble> z(length);
    for (int n = 0; n < length; ++n) {
        // n(n+1) can overflow the phase precision for long sequences; reduce
        // modulo 2N first (phase period of n(n+1)/N in half-turns)
        const long long q = static_cast<long long>(root) * n % (2LL * length) * (n + 1) %
                            (2LL * length);
        const double ph = -kPi * static_cast<double>(q) / length;
        z[n] = cdouble{std::cos(ph), std::sin(ph)};
    }
    return z;
}

WaveformBuffer shape_and_mux(const simulate::SymbolBlock& symbols,
                             const FrameLayout& layout, int sps,
                             double symbol_rate) {
    if (sps < 2) throw std::domain_error("sps must be >= 2");
    const double sample_rate = symbol_rate * sps;

    double ssum = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        ssum += symbols.x_mod[i] * symbols.x_mod[i] + symbols.p_mod[i] * symbols.p_mod[i];
    }
    const double rms = symbols.size() ? std::sqrt(ssum / symbols.size()) : 0.0;
    const EffectiveLayout eff = resolve(layout, sample_rate, rms);

    // pilot must sit outside the payload band with margin
    const double band_edge = (1.0 + layout.rolloff) * symbol_rate / 2.0;
    if (std::abs(eff.pilot_freq) < band_edge) {
        throw std::invalid_argument("pilot tone overlaps the payload band");
    }
    if (std::abs(eff.pilot_freq) >= sample_rate / 2.0) {
        throw std::invalid_argument("pilot tone beyond Nyquist");
    }

    // impulse train: ZC preamble followed by the payload symbols
    const std::size_t n_sym = static_cast<std::size_t>(layout.zc_length) + symbols.size();
    std::vector<cdouble> up(n_sym * sps, cdouble{0.0, 0.0});
    const std::vector<cdouble> zc = zadoff_chu(layout.zc_length, layout.zc_root);
    for (int i = 0; i < layout.zc_length; ++i) {
        up[static_cast<std::size_t>(i) * sps] = zc[i];
    }
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        up[(layout.zc_length + k) * sps] = cdouble{symbols.x_mod[k], symbols.p_mod[k]};
    }

    WaveformBuffer out;
    out.sample_rate = sample_rate;
    out.symbol_rate = symbol_rate;
    out.samples = convolve_full(up, rrc_taps(layout.rolloff, layout.span_symbols, sps));

    const double fnorm = eff.pilot_freq / sample_rate;
    for (std::size_t n = 0; n < out.samples.size(); ++n) {
        const double ph = 2.0 * kPi * fnorm * static_cast<double>(n);
        out.samples[n] += eff.pilot_amp * cdouble{std::cos(ph), std::sin(ph)};
    }
    return out;
}

std::size_t frame_sync(const WaveformBuffer& rx, const FrameLayout& layout) {
    const int sps = rx.sps();
    const EffectiveLayout eff = resolve(layout, rx.sample_rate, 1.0);

    // the pilot would swamp the correlation floor; remove it first
    const double fnorm = eff.pilot_freq / rx.sample_rate;
    const std::vector<cdouble> clean = subtract_pilot(rx.samples, fnorm);

    const std::vector<cdouble> ref = preamble_reference(layout, sps);
    if (clean.size() < ref.size()) {
        throw std::invalid_argument("buffer shorter than the preamble reference");
    }
    double ref_e = 0.0;
    for (const cdouble& v : ref) ref_e += std::norm(v);

    const std::size_t n_lags = clean.size() - ref.size() + 1;
    std::vector<double> score(n_lags, 0.0);
    double win_e = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) win_e += std::norm(clean[i]);
    for (std::size_t k = 0; k < n_lags; ++k) {
        cdouble acc{0.0, 0.0};
        for (std::size_t i = 0; i < ref.size(); ++i) {
            acc += std::conj(ref[i]) * clean[k + i];
        }
        score[k] = win_e > 0.0 ? std::abs(acc) / std::sqrt(ref_e * win_e) : 0.0;
        if (k + ref.size() < clean.size()) {
            win_e += std::norm(clean[k + ref.size()]) - std::norm(clean[k]);
            win_e = std::max(win_e, 0.0);
        }
    }
    const std::size_t peak =
        std::max_element(score.begin(), score.end()) - score.begin();
    // Second peak outside a one-reference guard around the main lobe: lags
    // whose window partially overlaps the true preamble belong to the main
    // correlation structure (and can score high in low-energy dead zones).
    const std::size_t guard = ref.size();
    double second = 0.0;
    for (std::size_t k = 0; k < n_lags; ++k) {
        if (k + guard >= peak && k <= peak + guard) continue;
        second = std::max(second, score[k]);
    }
    if (!(score[peak] >= 2.0 * second)) {
        throw std::runtime_error("frame synchronization failed: ambiguous correlation peak");
    }
    return peak;
}

PhaseRecovery pilot_phase_recover(const WaveformBuffer& rx, const FrameLayout& layout,
                                  std::size_t reference_sample) {
    const int sps = rx.sps();
    const EffectiveLayout eff = resolve(layout, rx.sample_rate, 1.0);
    const double fnorm = eff.pilot_freq / rx.sample_rate;
    const std::size_t n = rx.samples.size();
    if (n == 0) throw std::invalid_argument("empty buffer");

    // down-mix the pilot to DC, phase-referenced to the frame start so a
    // bulk delay contributes no spurious constant phase
    std::vector<cdouble> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ph = -2.0 * kPi * fnorm *
                          (static_cast<double>(i) - static_cast<double>(reference_sample));
        d[i] = rx.samples[i] * cdouble{std::cos(ph), std::sin(ph)};
    }

    // zero-phase narrowband filter around DC: a symmetric FIR preserves the
    // phase of any in-band tone exactly, so frequency-offset ramps pass
    // undistorted. Cutoff and transition fill the gap between the pilot and
    // the down-mixed payload band edge.
    const double band_gap =
        std::abs(fnorm) - (1.0 + layout.rolloff) / (2.0 * sps);
    const double fc = std::max(band_gap / 2.0, 1.0 / static_cast<double>(n));
    const std::size_t w =
        std::min<std::size_t>(static_cast<std::size_t>(std::ceil(6.6 / band_gap)) | 1u,
                              (n / 2) * 2 - 1);
    const std::size_t half = w / 2;
    std::vector<double> lp(w);
    for (std::size_t k = 0; k < w; ++k) {
        const double t = static_cast<double>(k) - static_cast<double>(half);
        const double sinc = t == 0.0 ? 2.0 * fc
                                     : std::sin(2.0 * kPi * fc * t) / (kPi * t);
        const double hamming =
            0.54 - 0.46 * std::cos(2.0 * kPi * k / static_cast<double>(w - 1));
        lp[k] = sinc * hamming;
    }
    // partial-window renormalization keeps the estimate unbiased at the edges
    std::vector<cdouble> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        cdouble acc{0.0, 0.0};
        double wsum = 0.0;
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(i + half + 1, n);
        for (std::size_t j = lo; j < hi; ++j) {
            const double c = lp[j - i + half];
            acc += c * d[j];
            wsum += c;
        }
        p[i] = wsum != 0.0 ? acc / wsum : acc;
    }

    double sig = 0.0, resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sig += std::norm(p[i]);
        resid += std::norm(d[i] - p[i]);
    }
    sig /= static_cast<double>(n);
    resid /= static_cast<double>(n);

    PhaseRecovery out;
    out.low_pilot_snr = sig < 10.0 * resid * 2.0 * fc;

    out.phase.resize(n);
    double prev = std::arg(p[0]);
    double offset = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = std::arg(p[i]);
        double delta = raw - prev;
        while (delta > kPi) { delta -= 2.0 * kPi; offset -= 2.0 * kPi; }
        while (delta < -kPi) { delta += 2.0 * kPi; offset += 2.0 * kPi; }
        prev = raw;
        out.phase[i] = raw + offset;
    }

    out.corrected = rx;
    for (std::size_t i = 0; i < n; ++i) {
        out.corrected.samples[i] *=
            cdouble{std::cos(-out.phase[i]), std::sin(-out.phase[i])};
    }
    return out;
}

namespace {

// receive chain shared by payload and the SNU reference: pilot removal,
// matched filter, decimation with an energy-maximizing phase search
std::vector<cdouble> receive_chain(const std::vector<cdouble>& samples,
                                   const FrameLayout& layout, int sps,
                                   double pilot_fnorm, std::size_t first_symbol_sample,
                                   std::size_t n_symbols, bool do_phase_search) {
    std::vector<cdouble> clean = subtract_pilot(samples, pilot_fnorm);
    const std::vector<double> taps = rrc_taps(layout.rolloff, layout.span_symbols, sps);
    const std::vector<cdouble> mf = convolve_full(clean, taps);

    int best_phase = 0;
    if (do_phase_search) {
        double best_e = -1.0;
        for (int ph = 0; ph < sps; ++ph) {
            double e = 0.0;
            std::size_t cnt = 0;
            for (std::size_t k = 0; k < n_symbols; ++k) {
                const std::size_t idx = first_symbol_sample + ph + k * sps;
                if (idx < mf.size()) {
                    e += std::norm(mf[idx]);
                    ++cnt;
                }
            }
            if (cnt > 0) e /= static_cast<double>(cnt);
            if (e > best_e) {
                best_e = e;
                best_phase = ph;
            }
        }
    }

    std::vector<cdouble> out(n_symbols, cdouble{0.0, 0.0});
    for (std::size_t k = 0; k < n_symbols; ++k) {
        const std::size_t idx = first_symbol_sample + best_phase + k * sps;
        if (idx >= mf.size()) {
            throw std::invalid_argument("buffer too short for the requested payload");
        }
        out[k] = mf[idx];
    }
    return out;
}

}  // namespace

double dsp_snu(const FrameLayout& layout, int sps, std::size_t n_symbols) {
    (void)n_symbols;
    // The receive chain is linear: a decimated output quadrature is a fixed
    // linear combination of input samples with the matched-filter taps as
    // weights. Unit white noise (vacuum) therefore comes out with variance
    // equal to the noise power gain sum(taps^2) -- computed here exactly
    // instead of by sampling, which would inject estimator noise into every
    // normalized symbol.
    const std::vector<double> taps = rrc_taps(layout.rolloff, layout.span_symbols, sps);
    return std::inner_product(taps.begin(), taps.end(), taps.begin(), 0.0);
}

simulate::SymbolBlock demux_and_downsample(const WaveformBuffer& rx,
                                           const FrameLayout& layout, int sps,
                                           std::size_t preamble_offset) {
    if (sps != rx.sps()) throw std::domain_error("sps mismatch with buffer rates");
    const EffectiveLayout eff = resolve(layout, rx.sample_rate, 1.0);
    const double fnorm = eff.pilot_freq / rx.sample_rate;

    const std::size_t group_delay = static_cast<std::size_t>(layout.span_symbols) * sps / 2;
    // preamble_offset marks where the shaped preamble begins; the first
    // payload symbol peaks one preamble length later, delayed by both the
    // transmit shaping filter and the receive matched filter
    const std::size_t first = preamble_offset +
                              static_cast<std::size_t>(layout.zc_length) * sps +
                              2 * group_delay;

    std::size_t n_symbols = layout.payload_symbols;
    if (n_symbols == 0) {
        const std::size_t mf_len = rx.samples.size() + layout.span_symbols * sps;
        n_symbols = mf_len > first + group_delay ? (mf_len - first - group_delay) / sps : 0;
    }

    const std::vector<cdouble> sym =
        receive_chain(rx.samples, layout, sps, fnorm, first, n_symbols, true);

    const double snu = dsp_snu(layout, sps);
    const double inv = 1.0 / std::sqrt(snu);
    simulate::SymbolBlock out;
    out.x_mod.resize(sym.size());
    out.p_mod.resize(sym.size());
    for (std::size_t k = 0; k < sym.size(); ++k) {
        out.x_mod[k] = sym[k].real() * inv;
        out.p_mod[k] = sym[k].imag() * inv;
    }
    return out;
}

WaveformBuffer apply_static_phase(const WaveformBuffer& in, double radians) {
    WaveformBuffer out = in;
    const cdouble rot{std::cos(radians), std::sin(radians)};
    for (cdouble& v : out.samples) v *= rot;
    return out;
}

WaveformBuffer apply_frequency_offset(const WaveformBuffer& in, double hz) {
    WaveformBuffer out = in;
    const double fnorm = hz / in.sample_rate;
    for (std::size_t n = 0; n < out.samples.size(); ++n) {
        const double ph = 2.0 * kPi * fnorm * static_cast<double>(n);
        out.samples[n] *= cdouble{std::cos(ph), std::sin(ph)};
    }
    return out;
}

WaveformBuffer apply_delay(const WaveformBuffer& in, std::size_t samples) {
    WaveformBuffer out = in;
    out.samples.assign(samples, cdouble{0.0, 0.0});
    out.samples.insert(out.samples.end(), in.samples.begin(), in.samples.end());
    return out;
}

WaveformBuffer add_white_noise(const WaveformBuffer& in, double variance_per_quad,
                               std::uint64_t seed) {
    WaveformBuffer out = in;
    const rng::Stream s(seed, 17);
    const double sigma = std::sqrt(variance_per_quad);
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto [z0, z1] =
            simulate::gaussian_pair(s.uniform_at(2 * i), s.uniform_at(2 * i + 1));
        out.samples[i] += cdouble{sigma * z0, sigma * z1};
    }
    return out;
}

WaveformBuffer apply_phase_noise(const WaveformBuffer& in, double linewidth_hz,
                                 std::uint64_t seed) {
    WaveformBuffer out = in;
    const rng::Stream s(seed, 23);
    // Wiener process: phase increments of variance 2*pi*linewidth/fs
    const double sigma = std::sqrt(2.0 * kPi * linewidth_hz / in.sample_rate);
    double theta = 0.0;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        theta += sigma * simulate::gaussian_pair(s.uniform_at(2 * i),
                                                 s.uniform_at(2 * i + 1))
                             .first;
        out.samples[i] *= cdouble{std::cos(theta), std::sin(theta)};
    }
    return out;
}

void write_waveform_csv(const WaveformBuffer& buf, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "sample_index,re,im\n";
    f.precision(17);
    for (std::size_t i = 0; i < buf.samples.size(); ++i) {
        f << i << ',' << buf.samples[i].real() << ',' << buf.samples[i].imag() << '\n';
    }
}

WaveformBuffer read_waveform_csv(const std::string& path, double sample_rate,
                                 double symbol_rate) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    WaveformBuffer buf;
    buf.sample_rate = sample_rate;
    buf.symbol_rate = symbol_rate;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::size_t idx;
        double re, im;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &idx, &re, &im) != 3) {
            throw std::runtime_error("malformed waveform CSV line: " + line);
        }
        buf.samples.emplace_back(re, im);
    }
    return buf;
}

namespace {
constexpr char kMagic[8] = {'C', 'V', 'Q', 'K', 'D', 'W', 'A', 'V'};
}

void write_waveform_binary(const WaveformBuffer& buf, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.write(kMagic, sizeof(kMagic));
    for (const cdouble& v : buf.samples) {
        const double re = v.real(), im = v.imag();
        f.write(reinterpret_cast<const char*>(&re), sizeof(re));
        f.write(reinterpret_cast<const char*>(&im), sizeof(im));
    }
}

WaveformBuffer read_waveform_binary(const std::string& path, double sample_rate,
                                    double symbol_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (f.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("not a waveform binary file: " + path);
    }
    WaveformBuffer buf;
    buf.sample_rate = sample_rate;
    buf.symbol_rate = symbol_rate;
    double re, im;
    while (f.read(reinterpret_cast<char*>(&re), sizeof(re)) &&
           f.read(reinterpret_cast<char*>(&im), sizeof(im))) {
        buf.samples.emplace_back(re, im);
    }
    return buf;
}

}  // namespace cvqkd::dsp
