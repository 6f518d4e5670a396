#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cvqkd/rng.hpp"
#include "cvqkd/simulate.hpp"

using namespace cvqkd::simulate;
using cvqkd::keyrate::Calibration;
using cvqkd::keyrate::DetectorTrust;
using cvqkd::keyrate::MeasurementKind;
using cvqkd::keyrate::Reconciliation;
using cvqkd::keyrate::StateKind;

namespace {

double variance(const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / (static_cast<double>(v.size()) - 1.0);
}

}  // namespace

TEST_CASE("gaussian_pair") {
    auto [a, b] = gaussian_pair(std::exp(-2.0), 0.0);
    CHECK(a == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(b == doctest::Approx(0.0));
    auto [c, d] = gaussian_pair(1.0, 0.37);
    CHECK(c == doctest::Approx(0.0));
    CHECK(d == doctest::Approx(0.0));

    cvqkd::rng::Stream u(7, 0);
    const std::size_t n = 1000000;
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; i += 2) {
        auto [x, y] = gaussian_pair(u.uniform(), u.uniform());
        xs[i] = x;
        xs[i + 1] = y;
    }
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(variance(xs) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("modulate") {
    SUBCASE("gaussian ensemble variance") {
        ModulationFormat f;
        f.v_mod = 4.0;
        const auto blk = modulate(f, 1000000, 11);
        CHECK(variance(blk.x_mod) == doctest::Approx(4.0).epsilon(0.01));
        CHECK(variance(blk.p_mod) == doctest::Approx(4.0).epsilon(0.01));
    }
    SUBCASE("qpsk ring") {
        ModulationFormat f;
        f.kind = ModulationFormat::Kind::Mpsk;
        f.order = 4;
        f.v_mod = 4.0;
        const auto blk = modulate(f, 4096, 3);
        double r0 = -1.0;
        for (std::size_t i = 0; i < blk.size(); ++i) {
            const double r = std::hypot(blk.x_mod[i], blk.p_mod[i]);
            if (r0 < 0.0) r0 = r;
            CHECK(r == doctest::Approx(r0).epsilon(1e-12));
        }
    }
    SUBCASE("zero modulation variance") {
        ModulationFormat f;
        f.v_mod = 0.0;
        const auto blk = modulate(f, 128, 5);
        for (std::size_t i = 0; i < blk.size(); ++i) {
            CHECK(blk.x_mod[i] == 0.0);
            CHECK(blk.p_mod[i] == 0.0);
        }
    }
    SUBCASE("serial and parallel execution agree bitwise") {
        ModulationFormat f;
        f.v_mod = 4.0;
        const auto a = modulate(f, 10000, 13, ExecPolicy::Serial);
        const auto b = modulate(f, 10000, 13, ExecPolicy::Parallel);
        CHECK(a.x_mod == b.x_mod);
        CHECK(a.p_mod == b.p_mod);
    }
}

TEST_CASE("channel_apply") {
    ModulationFormat f;
    f.v_mod = 4.0;
    const auto in = modulate(f, 1000000, 21);
    SUBCASE("identity channel adds one vacuum unit") {
        const auto out = channel_apply(in, {1.0, 0.0}, 22);
        CHECK(variance(out.x_mod) == doctest::Approx(5.0).epsilon(0.02));
    }
    SUBCASE("V_B = T V_M + 1 + T eps") {
        const auto out = channel_apply(in, {0.5, 0.05}, 23);
        CHECK(variance(out.x_mod) == doctest::Approx(3.025).epsilon(0.02));
        CHECK(variance(out.p_mod) == doctest::Approx(3.025).epsilon(0.02));
    }
    SUBCASE("vanishing transmittance leaves vacuum") {
        const auto out = channel_apply(in, {1e-12, 0.0}, 24);
        CHECK(variance(out.x_mod) == doctest::Approx(1.0).epsilon(0.02));
    }
    SUBCASE("deterministic across thread policies") {
        const auto a = channel_apply(in, {0.5, 0.05}, 25, ExecPolicy::Serial);
        const auto b = channel_apply(in, {0.5, 0.05}, 25, ExecPolicy::Parallel);
        CHECK(a.x_mod == b.x_mod);
    }
}

TEST_CASE("detect and calibrate") {
    DetectorParams ideal{1.0, 0.0, DetectorTrust::Trusted, Calibration::TwoTime};
    SUBCASE("ideal vacuum homodyne has unit raw variance at unit gain") {
        const auto rec = vacuum_record(ideal, DetectionKind::Homodyne, 200000, 31, 1.0);
        CHECK(variance(rec) == doctest::Approx(1.0).epsilon(0.02));
    }
    SUBCASE("noisy detector: normalized vacuum variance per calibration mode") {
        DetectorParams det{0.6, 0.15, DetectorTrust::Trusted, Calibration::TwoTime};
        const auto vac = vacuum_record(det, DetectionKind::Homodyne, 400000, 32, 1e3);
        const auto dark = dark_record(det, 400000, 33, 1e3);
        const auto two = calibrate_snu(CalibrationMode::TwoTime, vac, &dark);
        CHECK(variance(vac) / two.snu == doctest::Approx(1.15).epsilon(0.02));
        const auto one = calibrate_snu(CalibrationMode::OneTime, vac, nullptr);
        CHECK(variance(vac) / one.snu == doctest::Approx(1.0).epsilon(0.02));
    }
    SUBCASE("snu estimate converges to the true unit") {
        DetectorParams det{1.0, 0.15, DetectorTrust::Trusted, Calibration::TwoTime};
        const double gain = 2.0;  // true SNU = gain^2 = 4, electronic 0.6
        const auto vac = vacuum_record(det, DetectionKind::Homodyne, 1000000, 34, gain);
        const auto dark = dark_record(det, 1000000, 35, gain);
        const auto two = calibrate_snu(CalibrationMode::TwoTime, vac, &dark);
        CHECK(two.snu == doctest::Approx(4.0).epsilon(0.01));
        const auto one = calibrate_snu(CalibrationMode::OneTime, vac, nullptr);
        CHECK(one.snu == doctest::Approx(4.6).epsilon(0.01));
        const std::vector<double> zeros(20000, 0.0);
        const auto z = calibrate_snu(CalibrationMode::TwoTime, vac, &zeros);
        CHECK(z.snu == doctest::Approx(z.v_total_hat));
    }
    SUBCASE("heterodyne splits a known displacement") {
        DetectorParams det{0.8, 0.0, DetectorTrust::Trusted, Calibration::TwoTime};
        ModulationFormat f;
        f.v_mod = 0.0;
        auto blk = modulate(f, 200000, 36);
        for (auto& v : blk.x_mod) v = 3.0;  // fixed coherent displacement in x
        auto rec = detect(blk, det, DetectionKind::Heterodyne, 37, 1e3);
        const auto vac = vacuum_record(det, DetectionKind::Heterodyne, 200000, 38, 1e3);
        const auto dark = dark_record(det, 200000, 39, 1e3);
        const auto cal = calibrate_snu(CalibrationMode::TwoTime, vac, &dark);
        normalize(rec, cal.snu);
        const double mx =
            std::accumulate(rec.norm_x.begin(), rec.norm_x.end(), 0.0) / rec.size();
        CHECK(mx == doctest::Approx(3.0 * std::sqrt(det.eta / 2.0)).epsilon(0.01));
    }
}

TEST_CASE("estimate_parameters") {
    ModulationFormat f;
    f.v_mod = 4.0;
    SUBCASE("noiseless loopback") {
        DetectorParams det{1.0, 0.0, DetectorTrust::Trusted, Calibration::TwoTime};
        const auto mod = modulate(f, 1000000, 41);
        const auto out = channel_apply(mod, {1.0, 0.0}, 42);
        auto rec = detect(out, det, DetectionKind::Heterodyne, 43, 1e3);
        const auto vac = vacuum_record(det, DetectionKind::Heterodyne, 1000000, 44, 1e3);
        const auto dark = dark_record(det, 1000000, 45, 1e3);
        const auto cal = calibrate_snu(CalibrationMode::TwoTime, vac, &dark);
        normalize(rec, cal.snu);
        const auto est = estimate_parameters(mod, rec, det, CalibrationMode::TwoTime, 4.0);
        REQUIRE_FALSE(est.failed);
        CHECK(std::abs(est.t_hat - 1.0) < 0.01);
        CHECK(std::abs(est.eps_hat) < 0.005);
    }
    SUBCASE("noisy trusted operating point, frozen seed") {
        DetectorParams det{0.6, 0.15, DetectorTrust::Trusted, Calibration::TwoTime};
        const auto mod = modulate(f, 1000000, 51);
        const auto out = channel_apply(mod, {0.5, 0.05}, 52);
        auto rec = detect(out, det, DetectionKind::Homodyne, 53, 1e3);
        const auto vac = vacuum_record(det, DetectionKind::Homodyne, 4000000, 54, 1e3);
        const auto dark = dark_record(det, 4000000, 55, 1e3);
        const auto cal = calibrate_snu(CalibrationMode::TwoTime, vac, &dark);
        normalize(rec, cal.snu);
        const auto est = estimate_parameters(mod, rec, det, CalibrationMode::TwoTime, 4.0);
        REQUIRE_FALSE(est.failed);
        CHECK(std::abs(est.t_hat - 0.5) < 0.005);
        CHECK(std::abs(est.eps_hat - 0.05) < 0.005);
    }
    SUBCASE("zero correlation flags failure") {
        DetectorParams det{1.0, 0.0, DetectorTrust::Trusted, Calibration::TwoTime};
        const auto mod = modulate(f, 50000, 61);
        ModulationFormat vacf;
        vacf.v_mod = 0.0;
        const auto blank = modulate(vacf, 50000, 62);
        const auto noise = channel_apply(blank, {1e-9, 0.0}, 63);
        auto rec = detect(noise, det, DetectionKind::Heterodyne, 64, 1e3);
        normalize(rec, 1e6);
        const auto est = estimate_parameters(mod, rec, det, CalibrationMode::TwoTime, 4.0);
        CHECK(est.failed);
    }
    SUBCASE("heterodyne x/p estimates uncorrelated") {
        DetectorParams det{1.0, 0.0, DetectorTrust::Trusted, Calibration::TwoTime};
        const auto mod = modulate(f, 200000, 71);
        const auto out = channel_apply(mod, {0.7, 0.01}, 72);
        auto rec = detect(out, det, DetectionKind::Heterodyne, 73, 1e3);
        const auto vac = vacuum_record(det, DetectionKind::Heterodyne, 200000, 74, 1e3);
        const auto dark = dark_record(det, 200000, 75, 1e3);
        normalize(rec, calibrate_snu(CalibrationMode::TwoTime, vac, &dark).snu);
        double cxp = 0.0;
        for (std::size_t i = 0; i < rec.size(); ++i) {
            cxp += (rec.norm_x[i] - 0.0) * (rec.norm_p[i] - 0.0);
        }
        cxp /= static_cast<double>(rec.size());
        const double vx = variance(rec.norm_x);
        CHECK(std::abs(cxp) / vx < 5.0 / std::sqrt(static_cast<double>(rec.size())));
    }
}

TEST_CASE("end_to_end_run") {
    RunConfig cfg;
    cfg.spec.state = StateKind::Coherent;
    cfg.spec.measurement = MeasurementKind::Heterodyne;
    cfg.spec.reconciliation = Reconciliation::Reverse;
    cfg.spec.v_mod = 4.0;
    cfg.spec.beta = 0.95;
    cfg.format.v_mod = 4.0;
    cfg.n_symbols = 1000000;
    cfg.n_calibration = 2000000;
    cfg.seed = 1;
    // near the noiseless point the Holevo slope in epsilon diverges, so the
    // comparison is made at a small but nonzero excess noise
    SUBCASE("near-ideal loopback rate within 5% of analytic") {
        cfg.channel = {1.0, 0.02};
        const auto rep = end_to_end_run(cfg);
        REQUIRE_FALSE(rep.estimation_failed);
        CHECK(std::abs(rep.estimated_rate.rate - rep.analytic_rate.rate) <
              0.05 * rep.analytic_rate.rate);
    }
    SUBCASE("25 km access-network operating point is positive") {
        cfg.spec.measurement = MeasurementKind::Homodyne;
        cfg.spec.beta = 0.956;
        cfg.channel = {0.316, 0.0383};
        cfg.detector = {0.6, 0.15, DetectorTrust::Trusted, Calibration::TwoTime};
        cfg.n_calibration = 2000000;
        const auto rep = end_to_end_run(cfg);
        REQUIRE_FALSE(rep.estimation_failed);
        CHECK(rep.analytic_rate.rate > 0.0);
        CHECK(rep.estimated_rate.rate > 0.0);
    }
    SUBCASE("seeded runs are bit-identical across thread policies") {
        cfg.channel = {0.5, 0.02};
        auto a = cfg, b = cfg;
        a.exec = ExecPolicy::Serial;
        b.exec = ExecPolicy::Parallel;
        const auto ra = end_to_end_run(a);
        const auto rb = end_to_end_run(b);
        CHECK(ra.t_hat == rb.t_hat);
        CHECK(ra.eps_hat == rb.eps_hat);
        CHECK(ra.estimated_rate.rate == rb.estimated_rate.rate);
    }
}
