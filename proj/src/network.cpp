#include "cvqkd/network.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace cvqkd::network {

namespace {

double fiber_t(double km, double alpha_db_per_km) {
    return std::pow(10.0, -alpha_db_per_km * km / 10.0);
}

}  // namespace

void PtmpConfig::validate() const {
    if (n_users < 1) throw std::invalid_argument("n_users must be >= 1");
    if (trunk_distance_km < 0.0) throw std::invalid_argument("negative trunk distance");
    if (!(alpha_db_per_km >= 0.0)) throw std::invalid_argument("negative fiber loss");
    if (!drop_distances_km.empty() &&
        drop_distances_km.size() != static_cast<std::size_t>(n_users)) {
        throw std::invalid_argument("drop_distances_km size must equal n_users");
    }
    for (double d : drop_distances_km) {
        if (d < 0.0) throw std::invalid_argument("negative drop distance");
    }
    if (!splitter_transmittance.empty()) {
        if (splitter_transmittance.size() != static_cast<std::size_t>(n_users)) {
            throw std::invalid_argument("splitter port count must equal n_users");
        }
        double sum = 0.0;
        for (double t : splitter_transmittance) {
            if (t < 0.0 || t > 1.0) throw std::invalid_argument("port transmittance outside [0, 1]");
            sum += t;
        }
        if (sum > 1.0 + 1e-12) throw std::invalid_argument("splitter ports sum above unity");
    }
    if (!(excess_noise >= 0.0)) throw std::invalid_argument("negative excess noise");
    spec.validate();
    detector.validate();
}

double PtmpConfig::splitter_t(int user) const {
    if (user < 0 || user >= n_users) throw std::out_of_range("user index");
    if (splitter_transmittance.empty()) return 1.0 / n_users;
    return splitter_transmittance[user];
}

double PtmpConfig::drop_km(int user) const {
    if (user < 0 || user >= n_users) throw std::out_of_range("user index");
    return drop_distances_km.empty() ? 0.0 : drop_distances_km[user];
}

keyrate::KeyRateReport per_user_rate(
    const PtmpConfig& cfg, int user, keyrate::Regime regime,
    const std::optional<keyrate::FiniteSizeParams>& fs) {
    cfg.validate();
    const double t_eff = fiber_t(cfg.trunk_distance_km, cfg.alpha_db_per_km) *
                         cfg.splitter_t(user) *
                         fiber_t(cfg.drop_km(user), cfg.alpha_db_per_km);
    if (!(t_eff > 0.0)) {
        // dead port: no positive rate is attainable
        keyrate::KeyRateReport rep;
        rep.rate = -std::numeric_limits<double>::infinity();
        rep.regime = regime;
        return rep;
    }
    keyrate::ChannelParams chan{t_eff, cfg.excess_noise};
    if (regime == keyrate::Regime::Finite) {
        return keyrate::finite_size_rate(cfg.spec, chan, cfg.detector,
                                         fs.value_or(keyrate::FiniteSizeParams{}));
    }
    return keyrate::asymptotic_rate(cfg.spec, chan, cfg.detector);
}

std::vector<NetworkRateRow> network_rate_table(
    const PtmpConfig& cfg, const std::vector<double>& trunk_distances_km,
    keyrate::Regime regime, const std::optional<keyrate::FiniteSizeParams>& fs) {
    cfg.validate();
    std::vector<NetworkRateRow> table(trunk_distances_km.size() * cfg.n_users);

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t di = 0;
         di < static_cast<std::ptrdiff_t>(trunk_distances_km.size()); ++di) {
        PtmpConfig at = cfg;
        at.trunk_distance_km = trunk_distances_km[di];
        double aggregate = 0.0;
        for (int u = 0; u < cfg.n_users; ++u) {
            auto& row = table[di * cfg.n_users + u];
            row.distance_km = trunk_distances_km[di];
            row.user_id = u;
            row.rate_bits_per_symbol = per_user_rate(at, u, regime, fs).rate_clamped();
            aggregate += row.rate_bits_per_symbol;
        }
        for (int u = 0; u < cfg.n_users; ++u) {
            table[di * cfg.n_users + u].aggregate = aggregate;
        }
    }
    return table;
}

void write_rate_table_csv(const std::vector<NetworkRateRow>& table,
                          const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "distance_km,user_id,rate_bits_per_symbol,aggregate\n";
    f.precision(12);
    for (const auto& row : table) {
        f << row.distance_km << ',' << row.user_id << ','
          << row.rate_bits_per_symbol << ',' << row.aggregate << '\n';
    }
}

}  // namespace cvqkd::network
