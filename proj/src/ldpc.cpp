#include <cmath>
#include <stdexcept>
#include <utility>

#include "cvqkd/postprocess.hpp"
#include "cvqkd/rng.hpp"

namespace cvqkd::postprocess {

LdpcCode make_regular_ldpc(int n, int var_degree, int check_degree,
                           std::uint64_t seed) {
    if (n < check_degree || (n * var_degree) % check_degree != 0) {
        throw std::invalid_argument("incompatible LDPC degree profile");
    }
    const int m = n * var_degree / check_degree;
    const int n_edges = n * var_degree;
    std::vector<int> socket(n_edges);
    for (int e = 0; e < n_edges; ++e) socket[e] = e / var_degree;  // variable id

    rng::Stream s(seed, 0x1d9c);
    for (int i = n_edges - 1; i > 0; --i) {  // Fisher-Yates
        const int j = static_cast<int>(s.next_bits() % (i + 1));
        std::swap(socket[i], socket[j]);
    }

    // resolve duplicate variable entries within a check by socket swaps
    const auto check_of = [&](int e) { return e / check_degree; };
    const auto has_dup = [&](int e) {
        const int c = check_of(e);
        for (int i = c * check_degree; i < (c + 1) * check_degree; ++i) {
            if (i != e && socket[i] == socket[e]) return true;
        }
        return false;
    };
    for (int pass = 0; pass < 64; ++pass) {
        bool clean = true;
        for (int e = 0; e < n_edges; ++e) {
            if (!has_dup(e)) continue;
            clean = false;
            const int j = static_cast<int>(s.next_bits() % n_edges);
            std::swap(socket[e], socket[j]);
        }
        if (clean) break;
    }

    LdpcCode code;
    code.n = n;
    code.m = m;
    code.check_to_var.assign(m, {});
    code.var_to_check.assign(n, {});
    for (int e = 0; e < n_edges; ++e) {
        code.check_to_var[check_of(e)].push_back(socket[e]);
    }
    for (int c = 0; c < m; ++c) {
        for (int v : code.check_to_var[c]) code.var_to_check[v].push_back(c);
    }
    return code;
}

std::vector<std::uint8_t> ldpc_syndrome(const LdpcCode& code,
                                        const std::vector<std::uint8_t>& bits) {
    if (static_cast<int>(bits.size()) != code.n) {
        throw std::invalid_argument("bit length does not match the code");
    }
    std::vector<std::uint8_t> s(code.m, 0);
    for (int c = 0; c < code.m; ++c) {
        std::uint8_t acc = 0;
        for (int v : code.check_to_var[c]) acc ^= bits[v];
        s[c] = acc;
    }
    return s;
}

LdpcResult ldpc_correct(const std::vector<double>& llr,
                        const std::vector<std::uint8_t>& syndrome,
                        const LdpcCode& code, int max_iters) {
    if (static_cast<int>(llr.size()) != code.n ||
        static_cast<int>(syndrome.size()) != code.m) {
        throw std::invalid_argument("LLR/syndrome length does not match the code");
    }
    LdpcResult res;
    res.leaked_bits = code.m;
    res.bits.origin = Origin::Alice;
    res.bits.bits.assign(code.n, 0);

    // normalized min-sum message passing with syndrome-adjusted check signs
    constexpr double kScale = 0.8;
    const int m = code.m;
    std::vector<std::vector<double>> c2v(m), v2c(m);
    for (int c = 0; c < m; ++c) {
        c2v[c].assign(code.check_to_var[c].size(), 0.0);
        v2c[c].assign(code.check_to_var[c].size(), 0.0);
    }
    std::vector<double> total = llr;
    const auto hard = [&] {
        for (int v = 0; v < code.n; ++v) res.bits.bits[v] = total[v] < 0.0 ? 1 : 0;
    };

    for (int iter = 1; iter <= max_iters; ++iter) {
        // variable -> check
        for (int c = 0; c < m; ++c) {
            for (std::size_t i = 0; i < code.check_to_var[c].size(); ++i) {
                v2c[c][i] = total[code.check_to_var[c][i]] - c2v[c][i];
            }
        }
        // check -> variable
        for (int c = 0; c < m; ++c) {
            const auto& vars = code.check_to_var[c];
            double min1 = 1e300, min2 = 1e300;
            int arg1 = -1;
            int sign = syndrome[c] ? -1 : 1;
            for (std::size_t i = 0; i < vars.size(); ++i) {
                const double a = std::abs(v2c[c][i]);
                if (a < min1) {
                    min2 = min1;
                    min1 = a;
                    arg1 = static_cast<int>(i);
                } else if (a < min2) {
                    min2 = a;
                }
                if (v2c[c][i] < 0.0) sign = -sign;
            }
            for (std::size_t i = 0; i < vars.size(); ++i) {
                const double mag = (static_cast<int>(i) == arg1 ? min2 : min1) * kScale;
                const int s_i = v2c[c][i] < 0.0 ? -sign : sign;
                c2v[c][i] = s_i * mag;
            }
        }
        // totals
        total = llr;
        for (int c = 0; c < m; ++c) {
            for (std::size_t i = 0; i < code.check_to_var[c].size(); ++i) {
                total[code.check_to_var[c][i]] += c2v[c][i];
            }
        }
        hard();
        res.iterations = iter;
        if (ldpc_syndrome(code, res.bits.bits) == syndrome) {
            res.success = true;
            return res;
        }
    }
    return res;  // failure flag: frame discarded by the caller
}

}  // namespace cvqkd::postprocess
