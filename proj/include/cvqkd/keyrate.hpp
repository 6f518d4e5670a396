#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvqkd/phase_space.hpp"

// Secret-key-rate computation for Gaussian-modulated one-way protocols
// under collective attacks. Rates are in bits per symbol; all variances
// in shot-noise units (vacuum = 1). Excess noise is referenced to the
// channel input.

namespace cvqkd::keyrate {

enum class StateKind { Coherent, Squeezed };
enum class MeasurementKind { Homodyne, Heterodyne };
enum class Reconciliation { Direct, Reverse };
enum class DetectorTrust { Trusted, Untrusted };
enum class Calibration { TwoTime, OneTime };
enum class Regime { Asymptotic, Finite };

struct ProtocolSpec {
    StateKind state = StateKind::Coherent;
    MeasurementKind measurement = MeasurementKind::Heterodyne;
    Reconciliation reconciliation = Reconciliation::Reverse;
    double v_mod = 4.0;  // modulation variance V_M > 0
    double beta = 1.0;   // reconciliation efficiency in (0, 1]

    double V() const { return v_mod + 1.0; }
    void validate() const;
};

struct ChannelParams {
    double transmittance = 1.0;  // T in (0, 1]
    double excess_noise = 0.0;   // epsilon >= 0, channel-input referenced

    double chi_line() const { return 1.0 / transmittance - 1.0 + excess_noise; }
    void validate() const;
};

struct DetectorParams {
    double eta = 1.0;      // detection efficiency in (0, 1]
    double nu_ele = 0.0;   // electronic noise variance, SNU
    DetectorTrust trust = DetectorTrust::Trusted;
    Calibration calibration = Calibration::TwoTime;

    double chi_hom() const { return ((1.0 - eta) + nu_ele) / eta; }
    double chi_het() const { return (1.0 + (1.0 - eta) + 2.0 * nu_ele) / eta; }
    bool ideal() const { return eta >= 1.0 && nu_ele <= 0.0; }
    void validate() const;
};

struct FiniteSizeParams {
    double total_symbols = 1e9;   // N
    double kept_symbols = 5e8;    // n, key symbols (m = N - n for estimation)
    double eps_pe = 1e-10;
    double eps_bar = 1e-10;
    double eps_pa = 1e-10;
    int dim_hx = 2;

    void validate() const;
};

struct WorstCaseParams {
    double t_min = 0.0;       // worst-case sqrt-transmittance
    double sigma2_max = 0.0;  // worst-case noise variance 1 + T*eps
};

struct KeyRateReport {
    double mutual_info = 0.0;  // I_AB, bits/symbol
    double holevo = 0.0;       // chi_E, bits/symbol
    double rate = 0.0;         // beta*I_AB - chi_E (- finite-size terms), raw
    Regime regime = Regime::Asymptotic;
    std::optional<WorstCaseParams> worst_case;

    double rate_clamped() const { return rate > 0.0 ? rate : 0.0; }
};

// One-time SNU calibration: the electronic-noise loss is modeled as an
// untrusted beamsplitter of transmittance eta_e appended to the channel.
struct OneTimeModel {
    double eta_e = 1.0;           // 1 / (1 + nu_ele)
    ChannelParams channel;        // channel with eta_e folded in
    DetectorParams detector;      // residual detector (nu_ele = 0)
};

double one_time_eta_e(double nu_ele);
OneTimeModel one_time_calibration_adjustment(const ChannelParams& chan,
                                             const DetectorParams& det);

double mutual_information(const ProtocolSpec& spec, const ChannelParams& chan,
                          const DetectorParams& det);

double holevo_bound(const ProtocolSpec& spec, const ChannelParams& chan,
                    const DetectorParams& det);

KeyRateReport asymptotic_rate(const ProtocolSpec& spec, const ChannelParams& chan,
                              const DetectorParams& det);

KeyRateReport finite_size_rate(const ProtocolSpec& spec, const ChannelParams& chan,
                               const DetectorParams& det, const FiniteSizeParams& fs);

// Repeaterless secret-key capacity of a pure-loss channel, -log2(1 - T).
double plob_bound(double transmittance);

struct OptimizeResult {
    double v_mod = 0.0;
    double rate = 0.0;
    bool at_boundary = false;  // optimizer pinned at a search bound
};

OptimizeResult optimize_modulation_variance(
    ProtocolSpec spec, const ChannelParams& chan, const DetectorParams& det,
    Regime regime = Regime::Asymptotic,
    const std::optional<FiniteSizeParams>& fs = std::nullopt);

struct CurvePoint {
    double distance_km = 0.0;
    double transmittance = 0.0;
    double rate = 0.0;
    double v_mod = 0.0;
};

// Rate vs distance with T = 10^(-alpha*d/10); epsilon_of_d may be null for a
// constant profile. Points are evaluated in parallel, output order fixed.
std::vector<CurvePoint> rate_distance_curve(
    const ProtocolSpec& spec, const DetectorParams& det, double alpha_db_per_km,
    const std::vector<double>& distances_km, double epsilon,
    bool optimize_v_mod = false, Regime regime = Regime::Asymptotic,
    const std::optional<FiniteSizeParams>& fs = std::nullopt);

// Rate from an estimated two-mode covariance matrix (modes A, B), using the
// generic entropic conditioning path rather than the closed forms.
KeyRateReport keyrate_from_covariance(const phase_space::CovarianceMatrix& gamma_ab,
                                      const ProtocolSpec& spec);

// Holevo bound evaluated by numeric conditioning of the two-mode covariance.
// Independent of the closed-form route in holevo_bound.
double holevo_from_covariance(const phase_space::CovarianceMatrix& gamma_ab,
                              const ProtocolSpec& spec);

// Two-mode covariance of the shared state for given protocol/channel
// (a = V, b = T(V + chi_line), c = sqrt(T(V^2 - 1))).
phase_space::CovarianceMatrix shared_covariance(const ProtocolSpec& spec,
                                                const ChannelParams& chan);

// Linear-channel covariance shell for discrete modulation: requires the
// correlation term Z explicitly, there is no Gaussian default.
phase_space::CovarianceMatrix discrete_modulation_covariance(double v_mod,
                                                             double transmittance,
                                                             double excess_noise,
                                                             double z_correlation);

}  // namespace cvqkd::keyrate
