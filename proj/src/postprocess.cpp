#include "cvqkd/postprocess.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cvqkd/rng.hpp"

namespace cvqkd::postprocess {

SiftedData sift(const simulate::SymbolBlock& mod,
                const std::vector<std::uint8_t>& alice_basis,
                const simulate::DetectionRecord& det) {
    if (mod.size() != det.size()) {
        throw std::invalid_argument("modulation/detection length mismatch");
    }
    SiftedData out;
    if (det.kind == simulate::DetectionKind::Heterodyne) {
        out.no_op = true;
        out.alice.reserve(2 * mod.size());
        out.bob.reserve(2 * mod.size());
        for (std::size_t i = 0; i < mod.size(); ++i) {
            out.alice.push_back(mod.x_mod[i]);
            out.bob.push_back(det.norm_x[i]);
            out.alice.push_back(mod.p_mod[i]);
            out.bob.push_back(det.norm_p[i]);
        }
        return out;
    }
    if (alice_basis.size() != mod.size()) {
        throw std::invalid_argument("basis announcement length mismatch");
    }
    for (std::size_t i = 0; i < mod.size(); ++i) {
        if (alice_basis[i] != det.basis[i]) continue;
        if (det.basis[i] == simulate::kBasisX) {
            out.alice.push_back(mod.x_mod[i]);
            out.bob.push_back(det.norm_x[i]);
        } else {
            out.alice.push_back(mod.p_mod[i]);
            out.bob.push_back(det.norm_p[i]);
        }
    }
    return out;
}

namespace {

bool valid_dim(std::size_t d) { return d == 1 || d == 2 || d == 4 || d == 8; }

using Vec = std::vector<double>;

Vec half(const Vec& a, bool hi) {
    const std::size_t h = a.size() / 2;
    return hi ? Vec(a.begin() + h, a.end()) : Vec(a.begin(), a.begin() + h);
}

Vec join(const Vec& lo, const Vec& hi) {
    Vec out = lo;
    out.insert(out.end(), hi.begin(), hi.end());
    return out;
}

Vec neg(Vec a) {
    for (double& v : a) v = -v;
    return a;
}

Vec add(const Vec& a, const Vec& b) {
    Vec out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

}  // namespace

std::vector<double> algebra_conjugate(const std::vector<double>& a) {
    Vec out = neg(a);
    out[0] = a[0];
    return out;
}

// Cayley-Dickson doubling: (a,b)(c,d) = (ac - conj(d) b, d a + b conj(c)).
// One recursive rule yields the complex numbers, quaternions and octonions
// with a single consistent basis convention.
std::vector<double> algebra_multiply(const std::vector<double>& a,
                                     const std::vector<double>& b) {
    if (a.size() != b.size() || !valid_dim(a.size())) {
        throw std::invalid_argument("algebra dimension must be 2, 4 or 8 and match");
    }
    if (a.size() == 1) return {a[0] * b[0]};
    const Vec a1 = half(a, false), a2 = half(a, true);
    const Vec b1 = half(b, false), b2 = half(b, true);
    const Vec lo = add(algebra_multiply(a1, b1),
                       neg(algebra_multiply(algebra_conjugate(b2), a2)));
    const Vec hi = add(algebra_multiply(b2, a1),
                       algebra_multiply(a2, algebra_conjugate(b1)));
    return join(lo, hi);
}

std::vector<double> spherical_codeword(const std::vector<std::uint8_t>& u) {
    if (!valid_dim(u.size()) || u.size() < 2) {
        throw std::invalid_argument("codeword dimension must be 2, 4 or 8");
    }
    Vec s(u.size());
    const double c = 1.0 / std::sqrt(static_cast<double>(u.size()));
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] > 1) throw std::invalid_argument("codeword bits must be 0/1");
        s[i] = u[i] ? -c : c;
    }
    return s;
}

std::vector<double> md_message(const std::vector<double>& y,
                               const std::vector<std::uint8_t>& u) {
    if (y.size() != u.size()) {
        throw std::invalid_argument("vector/codeword dimension mismatch");
    }
    double n2 = 0.0;
    for (double v : y) n2 += v * v;
    if (!(n2 > 0.0)) throw std::domain_error("zero-norm vector cannot be mapped");
    Vec inv = algebra_conjugate(y);
    for (double& v : inv) v /= n2;
    return algebra_multiply(inv, spherical_codeword(u));
}

std::vector<double> md_apply(const std::vector<double>& x,
                             const std::vector<double>& m) {
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    if (!(n2 > 0.0)) throw std::domain_error("zero-norm vector cannot be mapped");
    return algebra_multiply(x, m);
}

double reconciliation_efficiency(double h_x_bits, double leaked_bits,
                                 double i_ab_bits) {
    if (!(i_ab_bits > 0.0)) {
        throw std::domain_error("mutual information must be positive");
    }
    return (h_x_bits - leaked_bits) / i_ab_bits;
}

std::uint64_t verification_hash(const BitBlock& key) {
    // bitwise CRC-64/ECMA-182 over the raw bit sequence
    constexpr std::uint64_t kPoly = 0x42f0e1eba9ea3693ull;
    std::uint64_t h = 0;
    for (std::uint8_t b : key.bits) {
        const std::uint64_t top = h >> 63;
        h = (h << 1) | (b & 1u);
        if (top) h ^= kPoly;
    }
    for (int i = 0; i < 64; ++i) {  // flush
        const std::uint64_t top = h >> 63;
        h <<= 1;
        if (top) h ^= kPoly;
    }
    return h;
}

ToeplitzSeed random_toeplitz_seed(std::size_t in_len, std::size_t out_len,
                                  std::uint64_t seed) {
    if (out_len >= in_len) throw std::invalid_argument("requires L < L'");
    ToeplitzSeed t;
    t.in_len = in_len;
    t.out_len = out_len;
    t.t.resize(in_len + out_len - 1);
    rng::Stream s(seed, 0x70e9);
    for (std::size_t i = 0; i < t.t.size(); ++i) {
        t.t[i] = static_cast<std::uint8_t>(s.next_bits() & 1u);
    }
    return t;
}

BitBlock privacy_amplify(const BitBlock& key, const ToeplitzSeed& seed) {
    if (key.bits.size() != seed.in_len || seed.out_len >= seed.in_len ||
        seed.t.size() != seed.in_len + seed.out_len - 1) {
        throw std::invalid_argument("Toeplitz seed/key length mismatch");
    }
    BitBlock out;
    out.origin = key.origin;
    out.bits.assign(seed.out_len, 0);
    for (std::size_t i = 0; i < seed.out_len; ++i) {
        std::uint8_t acc = 0;
        for (std::size_t j = 0; j < seed.in_len; ++j) {
            acc ^= static_cast<std::uint8_t>(seed.t[i - j + seed.in_len - 1] &
                                             key.bits[j]);
        }
        out.bits[i] = acc;
    }
    return out;
}

std::size_t final_key_length(const keyrate::KeyRateReport& report,
                             std::size_t n_kept) {
    const double l = std::floor(static_cast<double>(n_kept) * report.rate);
    return l > 0.0 ? static_cast<std::size_t>(l) : 0;
}

void export_key(const BitBlock& key, const KeyMetadata& meta, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::uint8_t byte = 0;
    int nbits = 0;
    for (std::uint8_t b : key.bits) {
        byte = static_cast<std::uint8_t>((byte << 1) | (b & 1u));
        if (++nbits == 8) {
            f.put(static_cast<char>(byte));
            byte = 0;
            nbits = 0;
        }
    }
    if (nbits > 0) f.put(static_cast<char>(byte << (8 - nbits)));

    nlohmann::json j{{"n_raw", meta.n_raw},
                     {"n_final", meta.n_final},
                     {"beta", meta.beta},
                     {"leaked_bits", meta.leaked_bits},
                     {"eps_pe", meta.eps_pe},
                     {"eps_bar", meta.eps_bar},
                     {"eps_pa", meta.eps_pa}};
    std::ofstream mf(path + ".meta.json");
    if (!mf) throw std::runtime_error("cannot open " + path + ".meta.json");
    mf << j.dump(2) << '\n';
}

}  // namespace cvqkd::postprocess
