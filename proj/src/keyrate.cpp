#include "cvqkd/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cvqkd::keyrate {

namespace ps = cvqkd::phase_space;

void ProtocolSpec::validate() const {
    if (!(v_mod >= 0.0) || !std::isfinite(v_mod)) {
        throw std::domain_error("modulation variance must be >= 0");
    }
    if (!(beta > 0.0) || beta > 1.0) {
        throw std::domain_error("reconciliation efficiency must be in (0, 1]");
    }
}

void ChannelParams::validate() const {
    if (!(transmittance > 0.0) || transmittance > 1.0) {
        throw std::domain_error("transmittance must be in (0, 1]");
    }
    if (!(excess_noise >= 0.0)) {
        throw std::domain_error("excess noise must be >= 0");
    }
}

void DetectorParams::validate() const {
    if (!(eta > 0.0) || eta > 1.0) {
        throw std::domain_error("detector efficiency must be in (0, 1]");
    }
    if (!(nu_ele >= 0.0)) {
        throw std::domain_error("electronic noise must be >= 0");
    }
}

void FiniteSizeParams::validate() const {
    if (!(kept_symbols > 0.0) || kept_symbols >= total_symbols) {
        throw std::domain_error("finite-size split requires 0 < n < N");
    }
    for (double e : {eps_pe, eps_bar, eps_pa}) {
        if (!(e > 0.0) || e >= 1.0) {
            throw std::domain_error("failure probabilities must be in (0, 1)");
        }
    }
}

double one_time_eta_e(double nu_ele) { return 1.0 / (1.0 + nu_ele); }

OneTimeModel one_time_calibration_adjustment(const ChannelParams& chan,
                                             const DetectorParams& det) {
    OneTimeModel model;
    model.eta_e = one_time_eta_e(det.nu_ele);
    // the eta_e beamsplitter's open port is untrusted vacuum: fold it into
    // the channel (input-referenced epsilon is unchanged by appended loss)
    model.channel = chan;
    model.channel.transmittance *= model.eta_e;
    model.detector = det;
    model.detector.nu_ele = 0.0;
    model.detector.calibration = Calibration::TwoTime;
    return model;
}

namespace {

constexpr double kLog2e = 1.4426950408889634;

double g_of(double x) { return ps::g_function(std::max(x, 1.0)); }

struct Resolved {
    ChannelParams chan;
    DetectorParams det;
};

// Fold untrusted detector imperfections and the one-time calibration's
// untrusted loss into the channel; what remains is trusted or ideal.
Resolved resolve_model(const ProtocolSpec& spec, ChannelParams chan,
                       DetectorParams det) {
    spec.validate();
    chan.validate();
    det.validate();
    if (det.calibration == Calibration::OneTime) {
        const OneTimeModel m = one_time_calibration_adjustment(chan, det);
        chan = m.channel;
        det = m.detector;
    }
    if (det.trust == DetectorTrust::Untrusted && !det.ideal()) {
        const double nu_factor =
            spec.measurement == MeasurementKind::Heterodyne ? 2.0 : 1.0;
        const double t_eff = chan.transmittance * det.eta;
        chan.excess_noise += nu_factor * det.nu_ele / t_eff;
        chan.transmittance = t_eff;
        det.eta = 1.0;
        det.nu_ele = 0.0;
    }
    return {chan, det};
}

double chi_detector(const ProtocolSpec& spec, const DetectorParams& det) {
    return spec.measurement == MeasurementKind::Heterodyne ? det.chi_het()
                                                          : det.chi_hom();
}

// Total noise referred to the channel input, as seen by I_AB.
double chi_total(const ProtocolSpec& spec, const Resolved& r) {
    // chi_het carries the heterodyne vacuum unit, so it is added even for an
    // ideal detector (where it equals 1); chi_hom is then 0 as expected
    return r.chan.chi_line() + chi_detector(spec, r.det) / r.chan.transmittance;
}

double mutual_information_impl(const ProtocolSpec& spec, double /*t*/, double chi) {
    const double v = spec.V();
    if (spec.v_mod <= 0.0) return 0.0;
    switch (spec.measurement) {
        case MeasurementKind::Homodyne:
            if (spec.state == StateKind::Squeezed) {
                return 0.5 * std::log2((v + chi) / (chi + 1.0 / v));
            }
            return 0.5 * std::log2((v + chi) / (chi + 1.0));
        case MeasurementKind::Heterodyne:
            // the heterodyne vacuum penalty lives inside chi (via chi_het)
            if (spec.state == StateKind::Squeezed) {
                return 0.5 * std::log2((v + chi) / (chi + 1.0 / v));
            }
            return std::log2((v + chi) / (chi + 1.0));
    }
    return 0.0;
}

struct TwoModeBlocks {
    double a, b, c;
};

TwoModeBlocks shared_blocks(const ProtocolSpec& spec, const ChannelParams& chan) {
    const double v = spec.V();
    const double t = chan.transmittance;
    return {v, t * (v + chan.chi_line()), std::sqrt(t * (v * v - 1.0))};
}

double pair_entropy(double delta, double dsq) {
    const double root = std::sqrt(std::max(delta * delta - 4.0 * dsq, 0.0));
    const double l1sq = std::max(0.5 * (delta + root), 1.0);
    const double l1 = std::sqrt(l1sq);
    // lambda1^2 * lambda2^2 = dsq; the product form avoids cancellation
    const double l2 = std::sqrt(std::max(dsq, 0.0) / l1sq);
    return g_of(l1) + g_of(l2);
}

// Symplectic-pair entropy of the (a, b, c) two-mode state. The radical
// delta^2 - 4D^2 factors as (a-b)^2 ((a+b)^2 - 4c^2), which stays accurate
// for large variances where the direct form cancels catastrophically.
double joint_entropy_abc(double a, double b, double c) {
    const double delta = a * a + b * b - 2.0 * c * c;
    const double sum = (a + b) * (a + b) - 4.0 * c * c;
    const double root = std::abs(a - b) * std::sqrt(std::max(sum, 0.0));
    const double l1sq = std::max(0.5 * (delta + root), 1.0);
    const double d = a * b - c * c;
    const double l1 = std::sqrt(l1sq);
    const double l2 = std::sqrt(std::max(d * d, 0.0) / l1sq);
    return g_of(l1) + g_of(l2);
}

// Closed-form conditional entropy for the eight ideal-detector protocol
// variants, from Gaussian conditioning of the (a, b, c) two-mode state.
double conditional_entropy_closed_form(const ProtocolSpec& spec,
                                       const TwoModeBlocks& m) {
    const double a = m.a, b = m.b, c = m.c;
    const double c2 = c * c;
    const double delta = a * a + b * b - 2.0 * c2;
    const double d = a * b - c2;
    if (spec.reconciliation == Reconciliation::Direct) {
        if (spec.state == StateKind::Squeezed) {
            // sharp homodyne on the preparation mode, both protocol variants
            return g_of(std::sqrt(std::max(b * (b - c2 / a), 1.0)));
        }
        if (spec.measurement == MeasurementKind::Homodyne) {
            // one quadrature of the preparation-side heterodyne
            const double e = (a + b * d + delta) / (a + 1.0);
            const double f = d * (b + d) / (a + 1.0);
            return pair_entropy(e, f);
        }
        return g_of(b - c2 / (a + 1.0));  // full preparation-side heterodyne
    }
    // reverse reconciliation: condition on Bob's measurement
    if (spec.measurement == MeasurementKind::Homodyne) {
        return g_of(std::sqrt(std::max(a * (a - c2 / b), 1.0)));
    }
    if (spec.state == StateKind::Squeezed) {
        // one quadrature of Bob's heterodyne
        const double e = (b + a * d + delta) / (b + 1.0);
        const double f = d * (a + d) / (b + 1.0);
        return pair_entropy(e, f);
    }
    return g_of(a - c2 / (b + 1.0));  // full heterodyne at Bob
}

double holevo_untrusted(const ProtocolSpec& spec, const ChannelParams& chan) {
    const TwoModeBlocks m = shared_blocks(spec, chan);
    return joint_entropy_abc(m.a, m.b, m.c) - conditional_entropy_closed_form(spec, m);
}

// Trusted-detector closed forms (reverse reconciliation, coherent states):
// lambda'_{3,4}^2 = (E +- sqrt(E^2 - 4F))/2, lambda'_5 = 1.
double holevo_trusted_coherent(const ProtocolSpec& spec, const ChannelParams& chan,
                               const DetectorParams& det) {
    const double v = spec.V();
    const double t = chan.transmittance;
    const double chi_line = chan.chi_line();
    const double chi_det = chi_detector(spec, det);
    const double chi_tot = chi_line + chi_det / t;
    const TwoModeBlocks m = shared_blocks(spec, chan);
    const double delta = m.a * m.a + m.b * m.b - 2.0 * m.c * m.c;
    const double d = m.a * m.b - m.c * m.c;

    double e, f;
    const double denom = t * (v + chi_tot);
    if (spec.measurement == MeasurementKind::Homodyne) {
        e = (delta * chi_det + v * d + t * (v + chi_line)) / denom;
        f = d * (v + d * chi_det) / denom;
    } else {
        e = (delta * chi_det * chi_det + d * d + 1.0 +
             2.0 * chi_det * (v * d + t * (v + chi_line)) +
             2.0 * t * (v * v - 1.0)) /
            (denom * denom);
        const double r = (v + d * chi_det) / denom;
        f = r * r;
    }
    return joint_entropy_abc(m.a, m.b, m.c) - pair_entropy(e, f);
}

enum class KeyMeasurement { SharpHomX, FullHet, PartialHetX };

KeyMeasurement bob_key_measurement(const ProtocolSpec& spec) {
    if (spec.measurement == MeasurementKind::Homodyne) {
        return KeyMeasurement::SharpHomX;
    }
    return spec.state == StateKind::Squeezed ? KeyMeasurement::PartialHetX
                                             : KeyMeasurement::FullHet;
}

KeyMeasurement alice_key_measurement(const ProtocolSpec& spec) {
    if (spec.state == StateKind::Squeezed) {
        return KeyMeasurement::SharpHomX;
    }
    return spec.measurement == MeasurementKind::Homodyne
               ? KeyMeasurement::PartialHetX
               : KeyMeasurement::FullHet;
}

Eigen::MatrixXd beamsplitter_on(int n_modes, int i, int j, double transmittance) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes);
    const double ct = std::sqrt(transmittance);
    const double st = std::sqrt(1.0 - transmittance);
    for (int q = 0; q < 2; ++q) {
        s(2 * i + q, 2 * i + q) = ct;
        s(2 * j + q, 2 * j + q) = ct;
        s(2 * i + q, 2 * j + q) = st;
        s(2 * j + q, 2 * i + q) = -st;
    }
    return s;
}

Eigen::MatrixXd append_modes(const Eigen::MatrixXd& gamma,
                             const Eigen::MatrixXd& extra) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(gamma.rows() + extra.rows(),
                                                gamma.cols() + extra.cols());
    out.topLeftCorner(gamma.rows(), gamma.cols()) = gamma;
    out.bottomRightCorner(extra.rows(), extra.cols()) = extra;
    return out;
}

// Conditional covariance of the unmeasured modes after the key measurement
// on the given mode. PartialHetX models the heterodyne 50:50 split
// explicitly and conditions on the x output only.
ps::CovarianceMatrix condition_for_key(const ps::CovarianceMatrix& cov, int mode,
                                       KeyMeasurement kind) {
    switch (kind) {
        case KeyMeasurement::SharpHomX: {
            ps::GaussianState st(Eigen::VectorXd::Zero(2 * cov.n_modes()), cov);
            return ps::condition_on_measurement(st, mode, ps::Measurement::HomodyneX);
        }
        case KeyMeasurement::FullHet: {
            ps::GaussianState st(Eigen::VectorXd::Zero(2 * cov.n_modes()), cov);
            return ps::condition_on_measurement(st, mode, ps::Measurement::Heterodyne);
        }
        case KeyMeasurement::PartialHetX: {
            const int n = cov.n_modes();
            Eigen::MatrixXd ext = append_modes(cov.mat(), Eigen::Matrix2d::Identity());
            const Eigen::MatrixXd bs = beamsplitter_on(n + 1, mode, n, 0.5);
            ps::CovarianceMatrix split(bs * ext * bs.transpose());
            ps::GaussianState st(Eigen::VectorXd::Zero(2 * (n + 1)), split);
            return ps::condition_on_measurement(st, mode, ps::Measurement::HomodyneX);
        }
    }
    throw std::logic_error("unreachable");
}

// Trusted reverse-reconciliation Holevo bound by explicit construction of
// the four-mode state (A, B, F, G) with the detector EPR ancilla.
double holevo_trusted_numeric(const ProtocolSpec& spec, const ChannelParams& chan,
                              const DetectorParams& det) {
    const double nu_factor =
        spec.measurement == MeasurementKind::Heterodyne ? 2.0 : 1.0;
    // V_D diverges as eta -> 1; clamp for the numeric model
    const double eta = std::min(det.eta, 1.0 - 1e-7);
    const double v_d = 1.0 + nu_factor * det.nu_ele / (1.0 - eta);

    const TwoModeBlocks m = shared_blocks(spec, chan);
    Eigen::MatrixXd gamma_ab = Eigen::MatrixXd::Zero(4, 4);
    gamma_ab.diagonal() << m.a, m.a, m.b, m.b;
    gamma_ab(0, 2) = gamma_ab(2, 0) = m.c;
    gamma_ab(1, 3) = gamma_ab(3, 1) = -m.c;
    const ps::CovarianceMatrix pre_detector(gamma_ab);

    // modes: A(0), B(1), F0(2), G(3); detector beamsplitter couples B and F0
    Eigen::MatrixXd gamma4 = append_modes(gamma_ab, ps::epr_state(v_d).cov.mat());
    const Eigen::MatrixXd bs = beamsplitter_on(4, 1, 2, eta);
    const ps::CovarianceMatrix after(bs * gamma4 * bs.transpose());

    const ps::CovarianceMatrix cond =
        condition_for_key(after, 1, bob_key_measurement(spec));
    return ps::von_neumann_entropy(pre_detector) - ps::von_neumann_entropy(cond);
}

double inverse_erf(double p) {
    if (!(p > -1.0 && p < 1.0)) {
        throw std::domain_error("inverse_erf argument must be in (-1, 1)");
    }
    // bisection bracket, then Newton polish
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::erf(mid) < p ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 8; ++i) {
        const double err = std::erf(x) - p;
        const double deriv = 2.0 / std::sqrt(M_PI) * std::exp(-x * x);
        if (deriv <= 0.0) break;
        x -= err / deriv;
    }
    return x;
}

}  // namespace

double mutual_information(const ProtocolSpec& spec, const ChannelParams& chan,
                          const DetectorParams& det) {
    const Resolved r = resolve_model(spec, chan, det);
    return mutual_information_impl(spec, r.chan.transmittance, chi_total(spec, r));
}

double holevo_bound(const ProtocolSpec& spec, const ChannelParams& chan,
                    const DetectorParams& det) {
    const Resolved r = resolve_model(spec, chan, det);
    if (r.det.ideal() || spec.reconciliation == Reconciliation::Direct) {
        // in direct reconciliation the eavesdropper's knowledge of Alice's
        // data does not involve the trusted receiver ancillas
        return holevo_untrusted(spec, r.chan);
    }
    if (spec.state == StateKind::Coherent) {
        return holevo_trusted_coherent(spec, r.chan, r.det);
    }
    return holevo_trusted_numeric(spec, r.chan, r.det);
}

KeyRateReport asymptotic_rate(const ProtocolSpec& spec, const ChannelParams& chan,
                              const DetectorParams& det) {
    KeyRateReport rep;
    rep.mutual_info = mutual_information(spec, chan, det);
    rep.holevo = holevo_bound(spec, chan, det);
    rep.rate = spec.beta * rep.mutual_info - rep.holevo;
    rep.regime = Regime::Asymptotic;
    return rep;
}

KeyRateReport finite_size_rate(const ProtocolSpec& spec, const ChannelParams& chan,
                               const DetectorParams& det,
                               const FiniteSizeParams& fs) {
    fs.validate();
    chan.validate();
    const double n = fs.kept_symbols;
    const double m = fs.total_symbols - fs.kept_symbols;
    const double t = chan.transmittance;
    const double eps = chan.excess_noise;
    const double v_m = spec.v_mod;

    // two-sided Gaussian tail: (1 - erf(z / sqrt2)) / 2 = eps_PE / 2
    const double z = std::sqrt(2.0) * inverse_erf(1.0 - fs.eps_pe);
    const double sigma2 = 1.0 + t * eps;
    WorstCaseParams wc;
    wc.t_min = std::max(std::sqrt(t) - z * std::sqrt(sigma2 / (m * v_m)), 1e-12);
    wc.sigma2_max = sigma2 + z * sigma2 * std::sqrt(2.0 / m);

    ChannelParams worst;
    worst.transmittance = std::min(wc.t_min * wc.t_min, 1.0);
    worst.excess_noise = (wc.sigma2_max - 1.0) / worst.transmittance;

    const double delta_n =
        (2.0 * fs.dim_hx + 3.0) * std::sqrt(std::log2(2.0 / fs.eps_bar) / n) +
        2.0 / n * std::log2(1.0 / fs.eps_pa);

    KeyRateReport rep;
    rep.mutual_info = mutual_information(spec, chan, det);
    rep.holevo = holevo_bound(spec, worst, det);
    rep.rate = (n / fs.total_symbols) *
               (spec.beta * rep.mutual_info - rep.holevo - delta_n);
    rep.regime = Regime::Finite;
    rep.worst_case = wc;
    return rep;
}

double plob_bound(double transmittance) {
    if (!(transmittance > 0.0)) return 0.0;
    if (transmittance >= 1.0) return std::numeric_limits<double>::infinity();
    return -std::log2(1.0 - transmittance);
}

OptimizeResult optimize_modulation_variance(
    ProtocolSpec spec, const ChannelParams& chan, const DetectorParams& det,
    Regime regime, const std::optional<FiniteSizeParams>& fs) {
    constexpr double kLo = 1e-3;
    constexpr double kHi = 1e3;

    const auto rate_at = [&](double v_mod) {
        spec.v_mod = v_mod;
        if (regime == Regime::Finite) {
            return finite_size_rate(spec, chan, det, fs.value()).rate;
        }
        return asymptotic_rate(spec, chan, det).rate;
    };

    // coarse log-grid scan to bracket the maximum, then golden-section refine
    constexpr int kGrid = 61;
    const double log_lo = std::log(kLo), log_hi = std::log(kHi);
    int best_i = 0;
    double best_rate = -std::numeric_limits<double>::infinity();
    std::vector<double> grid(kGrid);
    for (int i = 0; i < kGrid; ++i) {
        grid[i] = log_lo + (log_hi - log_lo) * i / (kGrid - 1);
        const double rr = rate_at(std::exp(grid[i]));
        if (rr > best_rate) {
            best_rate = rr;
            best_i = i;
        }
    }

    double lo = grid[std::max(best_i - 1, 0)];
    double hi = grid[std::min(best_i + 1, kGrid - 1)];
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = rate_at(std::exp(x1));
    double f2 = rate_at(std::exp(x2));
    for (int i = 0; i < 120 && hi - lo > 1e-12; ++i) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = rate_at(std::exp(x2));
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = rate_at(std::exp(x1));
        }
    }

    OptimizeResult out;
    out.v_mod = std::exp(0.5 * (lo + hi));
    out.rate = rate_at(out.v_mod);
    if (best_rate > out.rate) {
        out.v_mod = std::exp(grid[best_i]);
        out.rate = best_rate;
    }
    out.at_boundary = out.v_mod <= kLo * 1.01 || out.v_mod >= kHi * 0.99;
    return out;
}

std::vector<CurvePoint> rate_distance_curve(
    const ProtocolSpec& spec, const DetectorParams& det, double alpha_db_per_km,
    const std::vector<double>& distances_km, double epsilon, bool optimize_v_mod,
    Regime regime, const std::optional<FiniteSizeParams>& fs) {
    if (!(alpha_db_per_km > 0.0)) {
        throw std::domain_error("attenuation must be positive");
    }
    std::vector<CurvePoint> out(distances_km.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
        CurvePoint& p = out[i];
        p.distance_km = distances_km[i];
        p.transmittance =
            std::min(std::pow(10.0, -alpha_db_per_km * p.distance_km / 10.0), 1.0);
        ChannelParams chan{p.transmittance, epsilon};
        if (optimize_v_mod) {
            const OptimizeResult r =
                optimize_modulation_variance(spec, chan, det, regime, fs);
            p.rate = r.rate;
            p.v_mod = r.v_mod;
        } else {
            p.v_mod = spec.v_mod;
            p.rate = regime == Regime::Finite
                         ? finite_size_rate(spec, chan, det, fs.value()).rate
                         : asymptotic_rate(spec, chan, det).rate;
        }
    }
    return out;
}

phase_space::CovarianceMatrix shared_covariance(const ProtocolSpec& spec,
                                                const ChannelParams& chan) {
    const TwoModeBlocks m = shared_blocks(spec, chan);
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(4, 4);
    gamma.diagonal() << m.a, m.a, m.b, m.b;
    gamma(0, 2) = gamma(2, 0) = m.c;
    gamma(1, 3) = gamma(3, 1) = -m.c;
    return ps::CovarianceMatrix(gamma);
}

double holevo_from_covariance(const phase_space::CovarianceMatrix& gamma_ab,
                              const ProtocolSpec& spec) {
    if (gamma_ab.n_modes() != 2) {
        throw std::invalid_argument("expected a two-mode covariance matrix");
    }
    const bool reverse = spec.reconciliation == Reconciliation::Reverse;
    const int mode = reverse ? 1 : 0;
    const KeyMeasurement kind =
        reverse ? bob_key_measurement(spec) : alice_key_measurement(spec);
    const ps::CovarianceMatrix cond = condition_for_key(gamma_ab, mode, kind);
    return ps::von_neumann_entropy(gamma_ab) - ps::von_neumann_entropy(cond);
}

KeyRateReport keyrate_from_covariance(const phase_space::CovarianceMatrix& gamma_ab,
                                      const ProtocolSpec& spec) {
    if (gamma_ab.n_modes() != 2) {
        throw std::invalid_argument("expected a two-mode covariance matrix");
    }
    if (!ps::is_physical(gamma_ab)) {
        throw std::domain_error("estimated covariance matrix is unphysical");
    }
    const Eigen::MatrixXd& g = gamma_ab.mat();
    const double a = 0.5 * (g(0, 0) + g(1, 1));
    const double b = 0.5 * (g(2, 2) + g(3, 3));
    const double c = 0.5 * (g(0, 2) - g(1, 3));

    // conditional variance of B given Alice's preparation-side data
    const double denom = spec.state == StateKind::Coherent ? a + 1.0 : a;
    const double vb_cond = b - c * c / denom;

    KeyRateReport rep;
    switch (spec.measurement) {
        case MeasurementKind::Homodyne:
            rep.mutual_info = 0.5 * std::log2(b / vb_cond);
            break;
        case MeasurementKind::Heterodyne: {
            const double ratio = (b + 1.0) / (vb_cond + 1.0);
            rep.mutual_info = spec.state == StateKind::Coherent
                                  ? std::log2(ratio)
                                  : 0.5 * std::log2(ratio);
            break;
        }
    }
    rep.mutual_info = std::max(rep.mutual_info, 0.0);
    rep.holevo = holevo_from_covariance(gamma_ab, spec);
    rep.rate = spec.beta * rep.mutual_info - rep.holevo;
    rep.regime = Regime::Asymptotic;
    return rep;
}

phase_space::CovarianceMatrix discrete_modulation_covariance(double v_mod,
                                                             double transmittance,
                                                             double excess_noise,
                                                             double z_correlation) {
    const double a = v_mod + 1.0;
    const double b = transmittance * v_mod + 1.0 + transmittance * excess_noise;
    const double c = std::sqrt(transmittance) * z_correlation;
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(4, 4);
    gamma.diagonal() << a, a, b, b;
    gamma(0, 2) = gamma(2, 0) = c;
    gamma(1, 3) = gamma(3, 1) = -c;
    return ps::CovarianceMatrix(gamma);
}

}  // namespace cvqkd::keyrate
