// cvqkd: command-line front end for the rate engine, simulator, DSP loopback
// and postprocessing chain. Exit codes: 0 success, 2 configuration error,
// 3 runtime/estimation failure.

#include <omp.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvqkd/dsp.hpp"
#include "cvqkd/keyrate.hpp"
#include "cvqkd/network.hpp"
#include "cvqkd/postprocess.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/simulate.hpp"

using nlohmann::json;
namespace kr = cvqkd::keyrate;
namespace sim = cvqkd::simulate;
namespace dsp = cvqkd::dsp;
namespace pp = cvqkd::postprocess;
namespace net = cvqkd::network;

namespace {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct CommonOpts {
    std::string protocol = "coherent-het";
    std::string recon = "reverse";
    double vm = 4.0;
    double beta = 0.95;
    double T = 1.0;
    double eps = 0.0;
    double xi = -1.0;  // output-referenced excess noise; converts to eps = xi/T
    double eta = 1.0;
    double nu = 0.0;
    bool untrusted = false;
    std::string calibration = "two-time";
    bool finite = false;
    double fs_total = 1e9;
    double fs_kept = -1.0;  // default: total / 2
    double eps_pe = 1e-10, eps_bar = 1e-10, eps_pa = 1e-10;
    double symbol_rate = 0.0;  // baud; > 0 adds bits/s to summaries
};

kr::ProtocolSpec make_spec(const CommonOpts& o) {
    kr::ProtocolSpec s;
    if (o.protocol == "coherent-het") {
        s.state = kr::StateKind::Coherent;
        s.measurement = kr::MeasurementKind::Heterodyne;
    } else if (o.protocol == "coherent-hom") {
        s.state = kr::StateKind::Coherent;
        s.measurement = kr::MeasurementKind::Homodyne;
    } else if (o.protocol == "squeezed-hom") {
        s.state = kr::StateKind::Squeezed;
        s.measurement = kr::MeasurementKind::Homodyne;
    } else if (o.protocol == "squeezed-het") {
        s.state = kr::StateKind::Squeezed;
        s.measurement = kr::MeasurementKind::Heterodyne;
    } else {
        throw ConfigError("protocol: unknown value '" + o.protocol + "'");
    }
    if (o.recon == "reverse") {
        s.reconciliation = kr::Reconciliation::Reverse;
    } else if (o.recon == "direct") {
        s.reconciliation = kr::Reconciliation::Direct;
    } else {
        throw ConfigError("protocol.reconciliation: unknown value '" + o.recon + "'");
    }
    s.v_mod = o.vm;
    s.beta = o.beta;
    s.validate();
    return s;
}

kr::ChannelParams make_channel(const CommonOpts& o) {
    kr::ChannelParams c;
    c.transmittance = o.T;
    c.excess_noise = o.xi >= 0.0 ? o.xi / o.T : o.eps;
    c.validate();
    return c;
}

kr::DetectorParams make_detector(const CommonOpts& o) {
    kr::DetectorParams d;
    d.eta = o.eta;
    d.nu_ele = o.nu;
    d.trust = o.untrusted ? kr::DetectorTrust::Untrusted : kr::DetectorTrust::Trusted;
    if (o.calibration == "two-time") {
        d.calibration = kr::Calibration::TwoTime;
    } else if (o.calibration == "one-time") {
        d.calibration = kr::Calibration::OneTime;
    } else {
        throw ConfigError("detector.calibration: unknown value '" + o.calibration + "'");
    }
    d.validate();
    return d;
}

std::optional<kr::FiniteSizeParams> make_finite(const CommonOpts& o) {
    if (!o.finite) return std::nullopt;
    kr::FiniteSizeParams fs;
    fs.total_symbols = o.fs_total;
    fs.kept_symbols = o.fs_kept > 0.0 ? o.fs_kept : o.fs_total / 2.0;
    fs.eps_pe = o.eps_pe;
    fs.eps_bar = o.eps_bar;
    fs.eps_pa = o.eps_pa;
    fs.validate();
    return fs;
}

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--protocol", o.protocol,
                    "coherent-het | coherent-hom | squeezed-hom | squeezed-het");
    cmd->add_option("--recon", o.recon, "reverse | direct");
    cmd->add_option("--vm", o.vm, "modulation variance V_M, SNU");
    cmd->add_option("--beta", o.beta, "reconciliation efficiency in (0, 1]");
    cmd->add_option("--T", o.T, "channel transmittance in (0, 1]");
    cmd->add_option("--eps", o.eps, "excess noise, channel-input referenced, SNU");
    cmd->add_option("--xi", o.xi,
                    "excess noise referenced to the channel output (xi = T*eps); "
                    "overrides --eps");
    cmd->add_option("--eta", o.eta, "detector efficiency in (0, 1]");
    cmd->add_option("--nu", o.nu, "electronic noise variance, SNU");
    cmd->add_flag("--untrusted", o.untrusted, "treat detector loss/noise as Eve's");
    cmd->add_option("--calibration", o.calibration, "two-time | one-time");
    cmd->add_flag("--finite", o.finite, "finite-size rate instead of asymptotic");
    cmd->add_option("--fs-total", o.fs_total, "finite-size: total symbols N");
    cmd->add_option("--fs-kept", o.fs_kept, "finite-size: key symbols n (default N/2)");
    cmd->add_option("--eps-pe", o.eps_pe, "parameter-estimation failure probability");
    cmd->add_option("--eps-bar", o.eps_bar, "smoothing parameter");
    cmd->add_option("--eps-pa", o.eps_pa, "privacy-amplification failure probability");
    cmd->add_option("--symbol-rate", o.symbol_rate,
                    "symbol rate in baud; adds bits/s to reports");
}

// ---- JSON config ----------------------------------------------------------

double jnum(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

void apply_common_config(const json& j, CommonOpts& o) {
    if (auto it = j.find("protocol"); it != j.end()) {
        const json& p = *it;
        if (!p.is_object()) throw ConfigError("protocol: expected an object");
        if (p.contains("kind")) o.protocol = p["kind"].get<std::string>();
        if (p.contains("reconciliation")) o.recon = p["reconciliation"].get<std::string>();
        if (p.contains("v_mod")) o.vm = jnum(p["v_mod"], "protocol.v_mod");
        if (p.contains("beta")) o.beta = jnum(p["beta"], "protocol.beta");
    }
    if (auto it = j.find("channel"); it != j.end()) {
        const json& c = *it;
        if (!c.is_object()) throw ConfigError("channel: expected an object");
        if (c.contains("transmittance")) o.T = jnum(c["transmittance"], "channel.transmittance");
        if (c.contains("excess_noise")) o.eps = jnum(c["excess_noise"], "channel.excess_noise");
        if (c.contains("excess_noise_output"))
            o.xi = jnum(c["excess_noise_output"], "channel.excess_noise_output");
        if (o.T <= 0.0 || o.T > 1.0)
            throw ConfigError("channel.transmittance: must be in (0, 1]");
    }
    if (auto it = j.find("detector"); it != j.end()) {
        const json& d = *it;
        if (!d.is_object()) throw ConfigError("detector: expected an object");
        if (d.contains("eta")) o.eta = jnum(d["eta"], "detector.eta");
        if (d.contains("nu_ele")) o.nu = jnum(d["nu_ele"], "detector.nu_ele");
        if (d.contains("untrusted")) o.untrusted = d["untrusted"].get<bool>();
        if (d.contains("calibration")) o.calibration = d["calibration"].get<std::string>();
        if (o.eta <= 0.0 || o.eta > 1.0)
            throw ConfigError("detector.eta: must be in (0, 1]");
        if (o.nu < 0.0) throw ConfigError("detector.nu_ele: must be >= 0");
    }
    if (auto it = j.find("finite_size"); it != j.end()) {
        const json& f = *it;
        if (!f.is_object()) throw ConfigError("finite_size: expected an object");
        o.finite = true;
        if (f.contains("enabled")) o.finite = f["enabled"].get<bool>();
        if (f.contains("total_symbols")) o.fs_total = jnum(f["total_symbols"], "finite_size.total_symbols");
        if (f.contains("kept_symbols")) o.fs_kept = jnum(f["kept_symbols"], "finite_size.kept_symbols");
        if (f.contains("eps_pe")) o.eps_pe = jnum(f["eps_pe"], "finite_size.eps_pe");
        if (f.contains("eps_bar")) o.eps_bar = jnum(f["eps_bar"], "finite_size.eps_bar");
        if (f.contains("eps_pa")) o.eps_pa = jnum(f["eps_pa"], "finite_size.eps_pa");
    }
    if (auto it = j.find("symbol_rate"); it != j.end())
        o.symbol_rate = jnum(*it, "symbol_rate");
}

json echo_common(const CommonOpts& o, const kr::ChannelParams& chan) {
    json j;
    j["protocol"] = {{"kind", o.protocol},
                     {"reconciliation", o.recon},
                     {"v_mod", o.vm},
                     {"beta", o.beta}};
    j["channel"] = {{"transmittance", chan.transmittance},
                    {"excess_noise", chan.excess_noise}};
    j["detector"] = {{"eta", o.eta},
                     {"nu_ele", o.nu},
                     {"untrusted", o.untrusted},
                     {"calibration", o.calibration}};
    if (o.finite) {
        j["finite_size"] = {{"enabled", true},
                            {"total_symbols", o.fs_total},
                            {"kept_symbols", o.fs_kept > 0 ? o.fs_kept : o.fs_total / 2.0},
                            {"eps_pe", o.eps_pe},
                            {"eps_bar", o.eps_bar},
                            {"eps_pa", o.eps_pa}};
    }
    if (o.symbol_rate > 0.0) j["symbol_rate"] = o.symbol_rate;
    return j;
}

void write_config_echo(const json& j, const std::string& out, const std::string& cmd) {
    const std::string path =
        out.empty() ? "cvqkd_" + cmd + ".config.json" : out + ".config.json";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config echo " + path);
    f << j.dump(2) << '\n';
}

std::string rate_suffix(double rate, double symbol_rate) {
    if (symbol_rate <= 0.0) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.6g bits/s)", rate * symbol_rate);
    return buf;
}

std::vector<double> parse_distances(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        double start = 0, step = 0, stop = 0;
        char c1 = 0, c2 = 0;
        std::istringstream ss(text);
        if (!(ss >> start >> c1 >> step >> c2 >> stop) || c1 != ':' || c2 != ':' ||
            step <= 0.0 || stop < start) {
            throw ConfigError("distances: expected start:step:stop with step > 0");
        }
        for (double d = start; d <= stop + 1e-9; d += step) out.push_back(d);
        return out;
    }
    std::istringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    if (out.empty()) throw ConfigError("distances: empty list");
    return out;
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t seed) {
    if (opt->count() > 0) return seed;
    std::random_device rd;
    const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    std::cout << "seed: " << s << " (generated)\n";
    return s;
}

json report_json(const kr::KeyRateReport& r) {
    json j{{"mutual_info_bits", r.mutual_info},
           {"holevo_bits", r.holevo},
           {"rate_bits_per_symbol", r.rate},
           {"regime", r.regime == kr::Regime::Finite ? "finite" : "asymptotic"}};
    if (r.worst_case) {
        j["worst_case"] = {{"t_min", r.worst_case->t_min},
                           {"sigma2_max", r.worst_case->sigma2_max}};
    }
    return j;
}

// ---- subcommand bodies ----------------------------------------------------

int run_rate(const CommonOpts& o, const std::string& out) {
    const auto spec = make_spec(o);
    const auto chan = make_channel(o);
    const auto det = make_detector(o);
    const auto fs = make_finite(o);
    const auto rep = fs ? kr::finite_size_rate(spec, chan, det, *fs)
                        : kr::asymptotic_rate(spec, chan, det);
    std::printf("rate: I_AB=%.6g chi_E=%.6g K=%.6g bits/symbol%s\n", rep.mutual_info,
                rep.holevo, rep.rate, rate_suffix(rep.rate, o.symbol_rate).c_str());
    if (!out.empty()) {
        json j = report_json(rep);
        if (o.symbol_rate > 0.0) j["rate_bits_per_second"] = rep.rate * o.symbol_rate;
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        f << j.dump(2) << '\n';
    }
    write_config_echo(echo_common(o, chan), out, "rate");
    return 0;
}

int run_curve(const CommonOpts& o, const std::string& dtext, double alpha,
              bool optimize_vm, const std::string& out) {
    const auto spec = make_spec(o);
    const auto det = make_detector(o);
    const auto fs = make_finite(o);
    const auto distances = parse_distances(dtext);
    const double eps = o.xi >= 0.0 ? o.xi : o.eps;  // input-referenced per point
    const auto curve = kr::rate_distance_curve(
        spec, det, alpha, distances, eps, optimize_vm,
        fs ? kr::Regime::Finite : kr::Regime::Asymptotic, fs);
    std::ostream* os = &std::cout;
    std::ofstream f;
    if (!out.empty()) {
        f.open(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        os = &f;
    }
    os->precision(12);
    *os << "distance_km,transmittance,rate_bits_per_symbol,v_mod";
    if (o.symbol_rate > 0.0) *os << ",rate_bits_per_second";
    *os << '\n';
    for (const auto& p : curve) {
        *os << p.distance_km << ',' << p.transmittance << ',' << p.rate << ','
            << p.v_mod;
        if (o.symbol_rate > 0.0) *os << ',' << p.rate * o.symbol_rate;
        *os << '\n';
    }
    std::printf("curve: %zu points, alpha=%.3g dB/km%s\n", curve.size(), alpha,
                out.empty() ? "" : (", wrote " + out).c_str());
    json echo = echo_common(o, kr::ChannelParams{1.0, eps});
    echo["curve"] = {{"alpha_db_per_km", alpha},
                     {"distances_km", distances},
                     {"optimize_v_mod", optimize_vm}};
    write_config_echo(echo, out, "curve");
    return 0;
}

int run_optimize(const CommonOpts& o, const std::string& out) {
    const auto spec = make_spec(o);
    const auto chan = make_channel(o);
    const auto det = make_detector(o);
    const auto fs = make_finite(o);
    const auto res = kr::optimize_modulation_variance(
        spec, chan, det, fs ? kr::Regime::Finite : kr::Regime::Asymptotic, fs);
    std::printf("optimize: V_M*=%.6g K=%.6g bits/symbol%s%s\n", res.v_mod, res.rate,
                rate_suffix(res.rate, o.symbol_rate).c_str(),
                res.at_boundary ? " [at search boundary]" : "");
    if (!out.empty()) {
        json j{{"v_mod_opt", res.v_mod},
               {"rate_bits_per_symbol", res.rate},
               {"at_boundary", res.at_boundary}};
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        f << j.dump(2) << '\n';
    }
    write_config_echo(echo_common(o, chan), out, "optimize");
    return 0;
}

int run_simulate(const CommonOpts& o, std::size_t n, std::size_t n_cal,
                 std::uint64_t seed, const std::string& format, int order,
                 const std::string& out) {
    sim::RunConfig cfg;
    cfg.spec = make_spec(o);
    cfg.channel = make_channel(o);
    cfg.detector = make_detector(o);
    cfg.format.v_mod = o.vm;
    cfg.format.order = order;
    if (format == "gaussian") {
        cfg.format.kind = sim::ModulationFormat::Kind::Gaussian;
    } else if (format == "mpsk") {
        cfg.format.kind = sim::ModulationFormat::Kind::Mpsk;
    } else if (format == "qam") {
        cfg.format.kind = sim::ModulationFormat::Kind::Qam;
    } else {
        throw ConfigError("simulation.format: unknown value '" + format + "'");
    }
    cfg.calibration = o.calibration == "one-time" ? sim::CalibrationMode::OneTime
                                                  : sim::CalibrationMode::TwoTime;
    cfg.n_symbols = n;
    cfg.n_calibration = n_cal;
    cfg.seed = seed;
    cfg.finite_size = make_finite(o);

    const auto rep = sim::end_to_end_run(cfg);
    if (rep.estimation_failed) {
        std::cerr << "simulate: parameter estimation failed (nonpositive correlation)\n";
        return 3;
    }
    std::printf(
        "simulate: T_hat=%.6g eps_hat=%.6g snu=%.6g K_est=%.6g K_true=%.6g "
        "bits/symbol%s\n",
        rep.t_hat, rep.eps_hat, rep.snu, rep.estimated_rate.rate,
        rep.analytic_rate.rate, rate_suffix(rep.estimated_rate.rate, o.symbol_rate).c_str());
    json j{{"t_true", rep.true_channel.transmittance},
           {"eps_true", rep.true_channel.excess_noise},
           {"t_hat", rep.t_hat},
           {"eps_hat", rep.eps_hat},
           {"snu", rep.snu},
           {"n_used", rep.n_used},
           {"estimated", report_json(rep.estimated_rate)},
           {"analytic", report_json(rep.analytic_rate)}};
    if (rep.finite_rate) j["finite"] = report_json(*rep.finite_rate);
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        f << j.dump(2) << '\n';
    }
    json echo = echo_common(o, cfg.channel);
    echo["simulation"] = {{"n_symbols", n},
                          {"n_calibration", n_cal},
                          {"seed", seed},
                          {"format", format},
                          {"order", order}};
    write_config_echo(echo, out, "simulate");
    return 0;
}

int run_dsp_loopback(std::size_t n_symbols, int sps, double phase_deg,
                     std::size_t delay, double noise, std::uint64_t seed,
                     const std::string& out) {
    dsp::FrameLayout layout;
    layout.payload_symbols = static_cast<int>(n_symbols);

    sim::ModulationFormat fmt;
    fmt.v_mod = 4.0;
    auto tx_syms = sim::modulate(fmt, n_symbols, seed);
    auto wf = dsp::shape_and_mux(tx_syms, layout, sps);
    if (delay > 0) wf = dsp::apply_delay(wf, delay);
    if (phase_deg != 0.0) wf = dsp::apply_static_phase(wf, phase_deg * M_PI / 180.0);
    if (noise > 0.0) wf = dsp::add_white_noise(wf, noise, seed + 1);

    const std::size_t offset = dsp::frame_sync(wf, layout);
    auto rec = dsp::pilot_phase_recover(wf, layout, offset);
    auto rx_syms = dsp::demux_and_downsample(rec.corrected, layout, sps, offset);

    double num = 0.0, den = 0.0;
    std::complex<double> acc = 0.0;
    const std::size_t m = std::min(rx_syms.size(), tx_syms.size());
    for (std::size_t i = 0; i < m; ++i) {
        const std::complex<double> tx(tx_syms.x_mod[i], tx_syms.p_mod[i]);
        const std::complex<double> rx(rx_syms.x_mod[i], rx_syms.p_mod[i]);
        num += std::norm(rx - tx);
        den += std::norm(tx);
        acc += std::conj(tx) * rx;
    }
    const double rel_err = std::sqrt(num / den);
    const double resid_deg = std::arg(acc) * 180.0 / M_PI;
    std::printf(
        "dsp-loopback: offset=%zu (applied %zu) rel_err=%.3g resid_phase=%.4g deg%s\n",
        offset, delay, rel_err, resid_deg, rec.low_pilot_snr ? " [low pilot SNR]" : "");
    if (!out.empty()) {
        json j{{"offset_found", offset},
               {"offset_applied", delay},
               {"relative_error", rel_err},
               {"residual_phase_deg", resid_deg},
               {"low_pilot_snr", rec.low_pilot_snr}};
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        f << j.dump(2) << '\n';
    }
    json echo{{"dsp", {{"n_symbols", n_symbols},
                       {"sps", sps},
                       {"phase_deg", phase_deg},
                       {"delay_samples", delay},
                       {"noise_variance", noise},
                       {"seed", seed}}}};
    write_config_echo(echo, out, "dsp-loopback");
    return 0;
}

int run_ptmp(const CommonOpts& o, int users, double trunk_km,
             const std::string& dtext, double alpha, const std::string& out) {
    net::PtmpConfig cfg;
    cfg.n_users = users;
    cfg.trunk_distance_km = trunk_km;
    cfg.alpha_db_per_km = alpha;
    cfg.spec = make_spec(o);
    cfg.detector = make_detector(o);
    cfg.excess_noise = o.xi >= 0.0 ? o.xi : o.eps;  // end-to-end input referenced
    cfg.validate();

    const auto fs = make_finite(o);
    const auto regime = fs ? kr::Regime::Finite : kr::Regime::Asymptotic;
    const std::vector<double> distances =
        dtext.empty() ? std::vector<double>{trunk_km} : parse_distances(dtext);
    const auto table = net::network_rate_table(cfg, distances, regime, fs);
    if (!out.empty()) net::write_rate_table_csv(table, out);
    const auto& first = table.front();
    std::printf("ptmp: N=%d first row d=%.6g km per-user=%.6g aggregate=%.6g "
                "bits/symbol%s\n",
                users, first.distance_km, first.rate_bits_per_symbol, first.aggregate,
                out.empty() ? "" : (", wrote " + out).c_str());
    json echo = echo_common(o, kr::ChannelParams{1.0, cfg.excess_noise});
    echo["network"] = {{"n_users", users},
                       {"trunk_distance_km", trunk_km},
                       {"alpha_db_per_km", alpha},
                       {"distances_km", distances}};
    write_config_echo(echo, out, "ptmp");
    return 0;
}

int run_postprocess(int frames, double snr, std::uint64_t seed,
                    const std::string& out) {
    if (frames < 1) throw ConfigError("postprocess.frames: must be >= 1");
    if (!(snr > 0.0)) throw ConfigError("postprocess.snr: must be > 0");
    const int n = 2048, dim = 8;
    const int chunks = n / dim;
    const auto code = pp::make_regular_ldpc(n, 3, 6, 11);
    const double rho = std::sqrt(snr / (1.0 + snr));

    cvqkd::rng::Stream data(seed, 1), bits(seed, 2);
    int ok = 0, mismatches = 0;
    std::vector<std::uint8_t> key_bits;
    for (int fr = 0; fr < frames; ++fr) {
        // correlated Gaussian source, then reverse-reconciliated MD mapping
        std::vector<double> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            auto [g1, g2] = sim::gaussian_pair(data.uniform(), data.uniform());
            x[i] = g1;
            y[i] = rho * g1 + std::sqrt(1.0 - rho * rho) * g2;
        }
        std::vector<std::uint8_t> u(n);
        for (auto& b : u) b = static_cast<std::uint8_t>(bits.next_bits() & 1u);

        std::vector<double> llr(n);
        for (int c = 0; c < chunks; ++c) {
            std::vector<double> xc(dim), yc(dim);
            double nx = 0.0, ny = 0.0;
            for (int i = 0; i < dim; ++i) {
                xc[i] = x[c * dim + i];
                yc[i] = y[c * dim + i];
                nx += xc[i] * xc[i];
                ny += yc[i] * yc[i];
            }
            for (int i = 0; i < dim; ++i) {
                xc[i] /= std::sqrt(nx);
                yc[i] /= std::sqrt(ny);
            }
            std::vector<std::uint8_t> uc(u.begin() + c * dim,
                                         u.begin() + (c + 1) * dim);
            const auto msg = pp::md_message(yc, uc);
            const auto v = pp::md_apply(xc, msg);
            // moment-based LLR scale: |v_i| ~ alpha/sqrt(dim) + noise
            double mu = 0.0;
            for (double vi : v) mu += std::abs(vi);
            mu /= dim;
            double s2 = 0.0;
            for (double vi : v) s2 += (std::abs(vi) - mu) * (std::abs(vi) - mu);
            s2 = std::max(s2 / dim, 1e-9);
            for (int i = 0; i < dim; ++i) llr[c * dim + i] = 2.0 * mu * v[i] / s2;
        }

        const auto synd = pp::ldpc_syndrome(code, u);
        const auto res = pp::ldpc_correct(llr, synd, code);
        if (!res.success) continue;
        pp::BitBlock bob;
        bob.bits = u;
        if (pp::verification_hash(res.bits) != pp::verification_hash(bob)) {
            ++mismatches;  // hash-detected residual errors: frame discarded
            continue;
        }
        ++ok;
        key_bits.insert(key_bits.end(), u.begin(), u.end());
    }

    const double leaked_per_bit =
        static_cast<double>(code.syndrome_bits() + 64) / n;
    const double i_ab = 0.5 * std::log2(1.0 + snr);
    const double beta_meas = pp::reconciliation_efficiency(1.0, leaked_per_bit, i_ab);
    std::printf(
        "postprocess: frames=%d decoded=%d hash_rejects=%d beta=%.4f "
        "(I_AB=%.4f bits/sample, leak=%.4f)\n",
        frames, ok, mismatches, beta_meas, i_ab, leaked_per_bit);

    if (!key_bits.empty()) {
        // compress with a 20% margin below the corrected-key information content
        const double secret_frac = std::max(0.0, beta_meas * i_ab) * 0.8;
        const std::size_t out_len = std::max<std::size_t>(
            64, static_cast<std::size_t>(secret_frac * key_bits.size()));
        pp::BitBlock raw;
        raw.origin = pp::Origin::Bob;
        raw.bits = key_bits;
        const auto toep = pp::random_toeplitz_seed(key_bits.size(),
                                                   std::min(out_len, key_bits.size() - 1),
                                                   seed + 17);
        const auto final_key = pp::privacy_amplify(raw, toep);
        std::printf("postprocess: raw=%zu bits final=%zu bits\n", key_bits.size(),
                    final_key.bits.size());
        if (!out.empty()) {
            pp::KeyMetadata meta;
            meta.n_raw = key_bits.size();
            meta.n_final = final_key.bits.size();
            meta.beta = beta_meas;
            meta.leaked_bits = leaked_per_bit * static_cast<double>(key_bits.size());
            meta.eps_pe = meta.eps_bar = meta.eps_pa = 1e-10;
            pp::export_key(final_key, meta, out);
            std::printf("postprocess: wrote %s (+ .meta.json)\n", out.c_str());
        }
    }
    json echo{{"postprocess",
               {{"frames", frames}, {"snr", snr}, {"seed", seed}, {"ldpc_n", n}}}};
    write_config_echo(echo, out, "postprocess");
    return 0;
}

json load_config_file(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream f(argv[i + 1]);
            if (!f) throw ConfigError(std::string("config: cannot open ") + argv[i + 1]);
            json j;
            try {
                f >> j;
            } catch (const json::parse_error& e) {
                throw ConfigError(std::string("config: malformed JSON: ") + e.what());
            }
            if (!j.is_object()) throw ConfigError("config: top level must be an object");
            return j;
        }
    }
    return json::object();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CV-QKD security-rate engine and protocol simulator"};
    app.require_subcommand(1);
    std::string config_path, out;
    app.add_option("--config", config_path, "JSON configuration file");
    int threads = 0;
    app.add_option("--threads", threads, "worker thread count (env CVQKD_THREADS)");

    CommonOpts o;
    std::string dtext, format = "gaussian";
    double alpha = 0.2, phase_deg = 0.0, noise = 0.0, snr = 3.0;
    bool optimize_vm = false;
    std::size_t n_symbols = 1000000, n_cal = 1000000, delay = 0, dsp_symbols = 4096;
    int order = 4, users = 8, frames = 100, sps = 4;
    double trunk_km = 10.0;
    std::uint64_t seed = 0;

    auto* c_rate = app.add_subcommand("rate", "single-point secret key rate");
    auto* c_curve = app.add_subcommand("curve", "rate vs distance CSV");
    auto* c_opt = app.add_subcommand("optimize", "optimal modulation variance");
    auto* c_sim = app.add_subcommand("simulate", "seeded end-to-end Monte-Carlo run");
    auto* c_dsp = app.add_subcommand("dsp-loopback", "pulse-shaping/recovery loopback");
    auto* c_ptmp = app.add_subcommand("ptmp", "point-to-multipoint rate table");
    auto* c_pp = app.add_subcommand("postprocess", "reconciliation + privacy amplification");

    for (auto* c : {c_rate, c_curve, c_opt, c_sim, c_ptmp}) add_common_flags(c, o);
    for (auto* c : {c_rate, c_curve, c_opt, c_sim, c_dsp, c_ptmp, c_pp}) {
        c->add_option("--out", out, "output file (CSV/JSON/key); config echo at <out>.config.json");
        c->fallthrough();  // --config/--threads usable after the subcommand
    }

    c_curve->add_option("--d", dtext, "distances km: start:step:stop or comma list")
        ->required();
    c_curve->add_option("--alpha", alpha, "fiber loss, dB/km");
    c_curve->add_flag("--optimize-vm", optimize_vm, "optimize V_M per point");

    c_sim->add_option("--n", n_symbols, "quantum symbols");
    c_sim->add_option("--n-cal", n_cal, "calibration samples");
    c_sim->add_option("--format", format, "gaussian | mpsk | qam");
    c_sim->add_option("--order", order, "constellation size for mpsk/qam");
    auto* seed_sim = c_sim->add_option("--seed", seed, "RNG seed");

    c_dsp->add_option("--n-symbols", dsp_symbols, "payload symbols");
    c_dsp->add_option("--sps", sps, "samples per symbol");
    c_dsp->add_option("--phase-deg", phase_deg, "static phase impairment, degrees");
    c_dsp->add_option("--delay", delay, "sample delay impairment");
    c_dsp->add_option("--noise", noise, "white noise variance per quadrature");
    auto* seed_dsp = c_dsp->add_option("--seed", seed, "RNG seed");

    c_ptmp->add_option("--users", users, "number of users N");
    c_ptmp->add_option("--trunk-km", trunk_km, "trunk fiber length, km");
    c_ptmp->add_option("--d", dtext, "trunk distance sweep (start:step:stop)");
    c_ptmp->add_option("--alpha", alpha, "fiber loss, dB/km");

    c_pp->add_option("--frames", frames, "LDPC frames (2048 bits each)");
    c_pp->add_option("--snr", snr, "per-sample SNR of the reconciled data");
    auto* seed_pp = c_pp->add_option("--seed", seed, "RNG seed");

    try {
        const json cfg = load_config_file(argc, argv);
        apply_common_config(cfg, o);
        if (cfg.contains("out") && out.empty()) out = cfg["out"].get<std::string>();
        if (auto it = cfg.find("simulation"); it != cfg.end()) {
            const json& s = *it;
            if (s.contains("n_symbols")) n_symbols = s["n_symbols"].get<std::size_t>();
            if (s.contains("n_calibration")) n_cal = s["n_calibration"].get<std::size_t>();
            if (s.contains("format")) format = s["format"].get<std::string>();
            if (s.contains("order")) order = s["order"].get<int>();
        }
        if (auto it = cfg.find("network"); it != cfg.end()) {
            const json& nw = *it;
            if (nw.contains("n_users")) users = nw["n_users"].get<int>();
            if (nw.contains("trunk_distance_km"))
                trunk_km = jnum(nw["trunk_distance_km"], "network.trunk_distance_km");
            if (nw.contains("alpha_db_per_km"))
                alpha = jnum(nw["alpha_db_per_km"], "network.alpha_db_per_km");
        }
        if (cfg.contains("seed")) {
            seed = cfg["seed"].get<std::uint64_t>();
            // a config-provided seed counts as explicit for all commands
            for (auto* opt : {seed_sim, seed_dsp, seed_pp}) {
                if (opt->count() == 0) opt->default_val(std::to_string(seed));
            }
        }

        app.parse(argc, argv);

        if (threads <= 0) {
            if (const char* env = std::getenv("CVQKD_THREADS")) threads = std::atoi(env);
        }
        if (threads > 0) omp_set_num_threads(threads);

        if (c_rate->parsed()) return run_rate(o, out);
        if (c_curve->parsed()) return run_curve(o, dtext, alpha, optimize_vm, out);
        if (c_opt->parsed()) return run_optimize(o, out);
        if (c_sim->parsed())
            return run_simulate(o, n_symbols, n_cal, resolve_seed(seed_sim, seed),
                                format, order, out);
        if (c_dsp->parsed())
            return run_dsp_loopback(dsp_symbols, sps, phase_deg, delay, noise,
                                    resolve_seed(seed_dsp, seed), out);
        if (c_ptmp->parsed()) return run_ptmp(o, users, trunk_km, dtext, alpha, out);
        if (c_pp->parsed())
            return run_postprocess(frames, snr, resolve_seed(seed_pp, seed), out);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
