#include "cvqkd/simulate.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cvqkd/rng.hpp"

namespace cvqkd::simulate {

namespace {

// pipeline-stage stream ids
enum : std::uint64_t {
    kStageModulate = 1,
    kStageChannel = 2,
    kStageDetect = 3,
    kStageVacuum = 4,
    kStageDark = 5,
};

// two standard normals for element i of a stream, counters 2i / 2i+1
inline std::pair<double, double> normals_at(const rng::Stream& s, std::uint64_t i) {
    return gaussian_pair(s.uniform_at(2 * i), s.uniform_at(2 * i + 1));
}

double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    const double mu = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

std::pair<double, double> gaussian_pair(double u1, double u2) {
    if (!(u1 > 0.0) || u1 > 1.0 || !(u2 >= 0.0) || u2 >= 1.0) {
        throw std::domain_error("gaussian_pair requires u1 in (0,1], u2 in [0,1)");
    }
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
}

SymbolBlock modulate(const ModulationFormat& format, std::size_t n,
                     std::uint64_t seed, ExecPolicy exec) {
    if (n < 1) throw std::domain_error("modulate requires n >= 1");
    if (!(format.v_mod >= 0.0)) throw std::domain_error("V_M must be >= 0");

    SymbolBlock out;
    out.format = format;
    out.seed = seed;
    out.x_mod.resize(n);
    out.p_mod.resize(n);
    const rng::Stream s = rng::Stream(seed, kStageModulate);
    const double sigma = std::sqrt(format.v_mod);
    const std::ptrdiff_t pn = static_cast<std::ptrdiff_t>(n);

    switch (format.kind) {
        case ModulationFormat::Kind::Gaussian: {
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
            for (std::ptrdiff_t i = 0; i < pn; ++i) {
                const auto [z0, z1] = normals_at(s, i);
                out.x_mod[i] = sigma * z0;
                out.p_mod[i] = sigma * z1;
            }
            break;
        }
        case ModulationFormat::Kind::Unidimensional: {
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
            for (std::ptrdiff_t i = 0; i < pn; ++i) {
                const auto [z0, z1] = normals_at(s, i);
                (void)z1;
                out.x_mod[i] = sigma * z0;
                out.p_mod[i] = 0.0;
            }
            break;
        }
        case ModulationFormat::Kind::Mpsk: {
            if (format.order < 2) throw std::domain_error("mpsk order must be >= 2");
            // per-quadrature second moment of a ring of radius A is A^2/2
            const double radius = std::sqrt(2.0 * format.v_mod);
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
            for (std::ptrdiff_t i = 0; i < pn; ++i) {
                const std::uint64_t k = s.bits_at(i) % format.order;
                const double phi = 2.0 * std::numbers::pi *
                                   (static_cast<double>(k) + 0.5) / format.order;
                out.x_mod[i] = radius * std::cos(phi);
                out.p_mod[i] = radius * std::sin(phi);
            }
            break;
        }
        case ModulationFormat::Kind::Qam: {
            const int side = static_cast<int>(std::lround(std::sqrt(format.order)));
            if (side * side != format.order || side < 2) {
                throw std::domain_error("qam order must be a square >= 4");
            }
            // amplitude levels +-1, +-3, ... scaled to the target variance
            std::vector<double> levels(side), weights(side);
            for (int l = 0; l < side; ++l) {
                levels[l] = 2.0 * l - (side - 1);
            }
            double m2 = 0.0, wsum = 0.0;
            for (int l = 0; l < side; ++l) {
                weights[l] = format.gaussian_shaping
                                 ? std::exp(-levels[l] * levels[l] /
                                            (2.0 * 0.25 * side * side))
                                 : 1.0;
                wsum += weights[l];
            }
            for (int l = 0; l < side; ++l) {
                weights[l] /= wsum;
                m2 += weights[l] * levels[l] * levels[l];
            }
            const double scale = m2 > 0.0 ? std::sqrt(format.v_mod / m2) : 0.0;
            std::vector<double> cdf(side);
            double acc = 0.0;
            for (int l = 0; l < side; ++l) cdf[l] = (acc += weights[l]);
            const auto pick = [&](double u) {
                for (int l = 0; l < side - 1; ++l) {
                    if (u <= cdf[l]) return levels[l] * scale;
                }
                return levels[side - 1] * scale;
            };
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
            for (std::ptrdiff_t i = 0; i < pn; ++i) {
                out.x_mod[i] = pick(s.uniform_at(2 * i) - 0x1p-54);
                out.p_mod[i] = pick(s.uniform_at(2 * i + 1) - 0x1p-54);
            }
            break;
        }
    }
    return out;
}

SymbolBlock channel_apply(const SymbolBlock& block, const ChannelParams& chan,
                          std::uint64_t seed, ExecPolicy exec) {
    chan.validate();
    SymbolBlock out = block;
    out.seed = seed;
    const rng::Stream s = rng::Stream(seed, kStageChannel);
    const double rt = std::sqrt(chan.transmittance);
    // vacuum unit plus channel excess noise, referred to the output
    const double sigma =
        std::sqrt(1.0 + chan.transmittance * chan.excess_noise);
    const std::ptrdiff_t pn = static_cast<std::ptrdiff_t>(block.size());
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
    for (std::ptrdiff_t i = 0; i < pn; ++i) {
        const auto [gx, gp] = normals_at(s, i);
        out.x_mod[i] = rt * block.x_mod[i] + sigma * gx;
        out.p_mod[i] = rt * block.p_mod[i] + sigma * gp;
    }
    return out;
}

DetectionRecord detect(const SymbolBlock& block, const DetectorParams& det,
                       DetectionKind kind, std::uint64_t seed, double gain_a,
                       ExecPolicy exec) {
    det.validate();
    const std::size_t n = block.size();
    DetectionRecord rec;
    rec.kind = kind;
    rec.raw_x.assign(n, 0.0);
    rec.raw_p.assign(n, 0.0);
    rec.basis.assign(n, kBasisBoth);
    const rng::Stream s = rng::Stream(seed, kStageDetect);
    const rng::Stream sv = s.fork(1);  // optical vacua
    const rng::Stream se = s.fork(2);  // electronic noise
    const rng::Stream sb = s.fork(3);  // basis choice
    const double se_sigma = std::sqrt(det.nu_ele);
    const std::ptrdiff_t pn = static_cast<std::ptrdiff_t>(n);

    if (kind == DetectionKind::Homodyne) {
        const double ceta = std::sqrt(det.eta);
        const double cvac = std::sqrt(1.0 - det.eta);
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
        for (std::ptrdiff_t i = 0; i < pn; ++i) {
            const bool measure_p = (sb.bits_at(i) & 1) != 0;
            const double q = measure_p ? block.p_mod[i] : block.x_mod[i];
            const auto [v, v2] = normals_at(sv, i);
            (void)v2;
            const auto [e, e2] = normals_at(se, i);
            (void)e2;
            const double y = gain_a * (ceta * q + cvac * v + se_sigma * e);
            rec.basis[i] = measure_p ? kBasisP : kBasisX;
            (measure_p ? rec.raw_p : rec.raw_x)[i] = y;
        }
    } else {
        // 50:50 split: sqrt(eta/2) signal, the split's vacuum enters with
        // weight sqrt(1/2), detector loss vacuum with sqrt((1-eta)/2)
        const double csig = std::sqrt(det.eta / 2.0);
        const double closs = std::sqrt((1.0 - det.eta) / 2.0);
        const double csplit = std::sqrt(0.5);
#pragma omp parallel for if (exec == ExecPolicy::Parallel)
        for (std::ptrdiff_t i = 0; i < pn; ++i) {
            const auto [v1x, v1p] = normals_at(sv, 2 * i);
            const auto [v2x, v2p] = normals_at(sv, 2 * i + 1);
            const auto [ex, ep] = normals_at(se, i);
            rec.raw_x[i] = gain_a * (csig * block.x_mod[i] + closs * v1x +
                                     csplit * v2x + se_sigma * ex);
            rec.raw_p[i] = gain_a * (csig * block.p_mod[i] + closs * v1p +
                                     csplit * v2p + se_sigma * ep);
        }
    }
    return rec;
}

std::vector<double> vacuum_record(const DetectorParams& det, DetectionKind kind,
                                  std::size_t n, std::uint64_t seed, double gain_a) {
    ModulationFormat vac;
    vac.v_mod = 0.0;
    SymbolBlock block = modulate(vac, n, seed ^ 0x5eedbeef, ExecPolicy::Parallel);
    // signal port blocked: the detector sees vacuum in place of the signal
    ChannelParams open{1.0, 0.0};
    block = channel_apply(block, open, rng::mix64(seed) ^ kStageVacuum,
                          ExecPolicy::Parallel);
    DetectionRecord rec =
        detect(block, det, kind, rng::mix64(seed + 1) ^ kStageVacuum, gain_a,
               ExecPolicy::Parallel);
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(rec.basis[i] == kBasisP ? rec.raw_p[i] : rec.raw_x[i]);
    }
    return out;
}

std::vector<double> dark_record(const DetectorParams& det, std::size_t n,
                                std::uint64_t seed, double gain_a) {
    const rng::Stream s = rng::Stream(seed, kStageDark);
    const double sigma = gain_a * std::sqrt(det.nu_ele);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = sigma * normals_at(s, i).first;
    }
    return out;
}

CalibrationRecord calibrate_snu(CalibrationMode mode,
                                const std::vector<double>& vacuum_rec,
                                const std::vector<double>* dark_rec) {
    constexpr std::size_t kMinSamples = 10000;
    if (vacuum_rec.size() < kMinSamples) {
        throw std::runtime_error("calibration record too short for target precision");
    }
    CalibrationRecord out;
    out.mode = mode;
    out.v_total_hat = sample_variance(vacuum_rec);
    if (mode == CalibrationMode::TwoTime) {
        if (dark_rec == nullptr) {
            throw std::invalid_argument("two-time calibration needs a dark record");
        }
        if (dark_rec->size() < kMinSamples) {
            throw std::runtime_error("calibration record too short for target precision");
        }
        out.v_ele_hat = sample_variance(*dark_rec);
        out.snu = out.v_total_hat - out.v_ele_hat;
    } else {
        // electronic noise deliberately left inside the unit
        out.v_ele_hat = 0.0;
        out.snu = out.v_total_hat;
    }
    if (!(out.snu > 0.0)) {
        throw std::runtime_error("nonpositive shot-noise-unit estimate");
    }
    return out;
}

void normalize(DetectionRecord& rec, double snu) {
    if (!(snu > 0.0)) throw std::domain_error("snu must be positive");
    const double inv = 1.0 / std::sqrt(snu);
    const std::size_t n = rec.size();
    rec.norm_x.assign(n, 0.0);
    rec.norm_p.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        rec.norm_x[i] = rec.raw_x[i] * inv;
        rec.norm_p[i] = rec.raw_p[i] * inv;
    }
    rec.snu_estimate = snu;
}

EstimationResult estimate_parameters(const SymbolBlock& mod,
                                     const DetectionRecord& det_norm,
                                     const DetectorParams& det_model,
                                     CalibrationMode mode, double v_mod) {
    if (mod.size() != det_norm.size()) {
        throw std::invalid_argument("modulation/detection length mismatch");
    }
    if (det_norm.norm_x.size() != det_norm.size()) {
        throw std::invalid_argument("detection record is not normalized");
    }
    const std::size_t n = mod.size();
    const bool het = det_norm.kind == DetectionKind::Heterodyne;
    const double eta = det_model.eta;
    // one-time calibration leaves the electronic noise inside the unit;
    // the residual detector model is then noiseless with an eta_e loss
    const double nu = mode == CalibrationMode::OneTime ? 0.0 : det_model.nu_ele;
    const double eta_e = mode == CalibrationMode::OneTime
                             ? keyrate::one_time_eta_e(det_model.nu_ele)
                             : 1.0;

    // pooled second moments over both quadrature pairings
    double sxx = 0.0, sxy = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (het || det_norm.basis[i] == kBasisX) {
            sxx += mod.x_mod[i] * mod.x_mod[i];
            sxy += mod.x_mod[i] * det_norm.norm_x[i];
            ++used;
        }
        if (het || det_norm.basis[i] == kBasisP) {
            sxx += mod.p_mod[i] * mod.p_mod[i];
            sxy += mod.p_mod[i] * det_norm.norm_p[i];
            ++used;
        }
    }
    if (used < 2) throw std::invalid_argument("no usable symbol pairs");
    const double vx = sxx / used;
    const double cxy = sxy / used;
    (void)v_mod;  // empirical modulation variance is the lower-bias choice

    EstimationResult res{0.0, 0.0,
                         phase_space::CovarianceMatrix(Eigen::MatrixXd::Identity(4, 4)),
                         false};
    // detection gain per quadrature: sqrt(eta T) homodyne, sqrt(eta T / 2) het
    const double half = het ? 0.5 : 1.0;
    if (!(cxy > 0.0) || !(vx > 0.0)) {
        res.failed = true;
        return res;
    }
    const double gain = cxy / vx;  // least-squares slope = sqrt(eta*half*T_eff)
    const double t_eff = gain * gain / (eta * half);
    // excess noise from the regression residual: its variance excludes the
    // modulated term, which keeps the estimator variance low
    double srr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (het || det_norm.basis[i] == kBasisX) {
            const double r = det_norm.norm_x[i] - gain * mod.x_mod[i];
            srr += r * r;
        }
        if (het || det_norm.basis[i] == kBasisP) {
            const double r = det_norm.norm_p[i] - gain * mod.p_mod[i];
            srr += r * r;
        }
    }
    // Var(resid) = eta*half*(1 + T_eff*eps) + (1-eta)*half + (het: 1/2) + nu
    double noise_floor = (1.0 - eta) * half + nu;
    if (het) noise_floor += 0.5;
    const double vr = srr / used;
    res.eps_hat = ((vr - noise_floor) / (eta * half) - 1.0) / t_eff;
    res.t_hat = t_eff / eta_e;

    keyrate::ProtocolSpec shape;
    shape.v_mod = vx;
    res.gamma_ab_hat = keyrate::shared_covariance(
        shape, keyrate::ChannelParams{std::min(t_eff, 1.0),
                                      std::max(res.eps_hat, 0.0)});
    return res;
}

double modulation_variance_from_power(double power_watts, double optical_freq_hz,
                                      double rep_rate_hz) {
    if (!(power_watts >= 0.0) || !(optical_freq_hz > 0.0) || !(rep_rate_hz > 0.0)) {
        throw std::domain_error("power/frequency arguments must be positive");
    }
    constexpr double kPlanck = 6.62607015e-34;
    return 2.0 * power_watts / (kPlanck * optical_freq_hz * rep_rate_hz);
}

RunReport end_to_end_run(const RunConfig& cfg) {
    cfg.spec.validate();
    cfg.channel.validate();
    cfg.detector.validate();

    const DetectionKind kind = cfg.spec.measurement == keyrate::MeasurementKind::Heterodyne
                                   ? DetectionKind::Heterodyne
                                   : DetectionKind::Homodyne;

    ModulationFormat fmt = cfg.format;
    fmt.v_mod = cfg.spec.v_mod;
    SymbolBlock mod = modulate(fmt, cfg.n_symbols, cfg.seed, cfg.exec);
    SymbolBlock rx = channel_apply(mod, cfg.channel, rng::mix64(cfg.seed) + 1, cfg.exec);
    DetectionRecord det =
        detect(rx, cfg.detector, kind, rng::mix64(cfg.seed) + 2, cfg.gain_a, cfg.exec);

    const std::vector<double> vac =
        vacuum_record(cfg.detector, kind, cfg.n_calibration, cfg.seed + 11, cfg.gain_a);
    CalibrationRecord cal;
    if (cfg.calibration == CalibrationMode::TwoTime) {
        const std::vector<double> dark =
            dark_record(cfg.detector, cfg.n_calibration, cfg.seed + 12, cfg.gain_a);
        cal = calibrate_snu(CalibrationMode::TwoTime, vac, &dark);
    } else {
        cal = calibrate_snu(CalibrationMode::OneTime, vac, nullptr);
    }
    normalize(det, cal.snu);

    const EstimationResult est =
        estimate_parameters(mod, det, cfg.detector, cfg.calibration, cfg.spec.v_mod);

    RunReport rep;
    rep.true_channel = cfg.channel;
    rep.t_hat = est.t_hat;
    rep.eps_hat = est.eps_hat;
    rep.snu = cal.snu;
    rep.estimation_failed = est.failed;
    rep.n_used = cfg.n_symbols;

    keyrate::DetectorParams sec_det = cfg.detector;
    sec_det.calibration = cfg.calibration == CalibrationMode::OneTime
                              ? keyrate::Calibration::OneTime
                              : keyrate::Calibration::TwoTime;
    rep.analytic_rate = keyrate::asymptotic_rate(cfg.spec, cfg.channel, sec_det);
    if (!est.failed) {
        const keyrate::ChannelParams est_chan{std::min(est.t_hat, 1.0),
                                              std::max(est.eps_hat, 0.0)};
        rep.estimated_rate = keyrate::asymptotic_rate(cfg.spec, est_chan, sec_det);
        if (cfg.finite_size) {
            rep.finite_rate =
                keyrate::finite_size_rate(cfg.spec, est_chan, sec_det, *cfg.finite_size);
        }
    }
    return rep;
}

}  // namespace cvqkd::simulate
