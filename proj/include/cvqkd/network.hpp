#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvqkd/keyrate.hpp"

// Downstream point-to-multipoint rates over a passive splitter: trunk fiber,
// 1xN splitter, per-user drop fiber. The splitter is charged as untrusted
// channel loss per user, which lower-bounds any joint multiuser treatment.

namespace cvqkd::network {

struct PtmpConfig {
    int n_users = 1;
    double trunk_distance_km = 0.0;
    std::vector<double> drop_distances_km;       // size n_users, or empty = all 0
    std::vector<double> splitter_transmittance;  // empty = ideal 1/N; sum <= 1
    double alpha_db_per_km = 0.2;
    keyrate::ProtocolSpec spec;
    keyrate::DetectorParams detector;
    double excess_noise = 0.0;  // channel-input referenced, end to end

    void validate() const;
    double splitter_t(int user) const;  // resolved per-port transmittance
    double drop_km(int user) const;
};

// T_i = T_trunk * t_i * T_drop,i fed to the shared protocol spec.
keyrate::KeyRateReport per_user_rate(
    const PtmpConfig& cfg, int user,
    keyrate::Regime regime = keyrate::Regime::Asymptotic,
    const std::optional<keyrate::FiniteSizeParams>& fs = std::nullopt);

struct NetworkRateRow {
    double distance_km = 0.0;  // trunk distance
    int user_id = 0;
    double rate_bits_per_symbol = 0.0;  // clamped at zero
    double aggregate = 0.0;             // sum over users at this distance
};

// One row per (distance, user); aggregate repeated across a distance block.
std::vector<NetworkRateRow> network_rate_table(
    const PtmpConfig& cfg, const std::vector<double>& trunk_distances_km,
    keyrate::Regime regime = keyrate::Regime::Asymptotic,
    const std::optional<keyrate::FiniteSizeParams>& fs = std::nullopt);

// CSV: header distance_km,user_id,rate_bits_per_symbol,aggregate
void write_rate_table_csv(const std::vector<NetworkRateRow>& table,
                          const std::string& path);

}  // namespace cvqkd::network
