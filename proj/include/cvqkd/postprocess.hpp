#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvqkd/keyrate.hpp"
#include "cvqkd/simulate.hpp"

// Classical key distillation: sifting, multidimensional reconciliation,
// LDPC syndrome decoding, leakage accounting and Toeplitz privacy
// amplification.

namespace cvqkd::postprocess {

enum class Origin { Alice, Bob };

struct BitBlock {
    std::vector<std::uint8_t> bits;  // entries in {0, 1}
    Origin origin = Origin::Alice;
};

struct SiftedData {
    std::vector<double> alice, bob;  // paired values, SNU
    bool no_op = false;              // heterodyne pass-through
};

// Basis reconciliation for homodyne protocols: keep symbols where Alice's
// prepared quadrature matches Bob's measured basis. Heterodyne data passes
// through unchanged (both quadratures kept, x then p per symbol).
SiftedData sift(const simulate::SymbolBlock& mod,
                const std::vector<std::uint8_t>& alice_basis,
                const simulate::DetectionRecord& det);

// --- multidimensional reconciliation (d = 2, 4, 8) ---

// product in the division algebra of dimension d (complex, quaternion,
// octonion in the Cayley basis)
std::vector<double> algebra_multiply(const std::vector<double>& a,
                                     const std::vector<double>& b);
std::vector<double> algebra_conjugate(const std::vector<double>& a);

// codeword point on the sphere: bit b_i -> (-1)^(b_i) / sqrt(d)
std::vector<double> spherical_codeword(const std::vector<std::uint8_t>& u);

// Bob's public message m = y^{-1} * s(u) for unit-norm y.
std::vector<double> md_message(const std::vector<double>& y,
                               const std::vector<std::uint8_t>& u);

// Alice's mapped estimate x * m; for x = y this reproduces s(u) exactly.
std::vector<double> md_apply(const std::vector<double>& x,
                             const std::vector<double>& m);

// --- LDPC syndrome decoding ---

struct LdpcCode {
    int n = 0;  // block length
    int m = 0;  // number of checks
    std::vector<std::vector<int>> check_to_var;  // per check, variable indices
    std::vector<std::vector<int>> var_to_check;  // per variable, check indices

    int syndrome_bits() const { return m; }
    double rate() const { return 1.0 - static_cast<double>(m) / n; }
};

// regular (3,6) Gallager-style construction, deterministic for a seed
LdpcCode make_regular_ldpc(int n, int var_degree, int check_degree,
                           std::uint64_t seed);

std::vector<std::uint8_t> ldpc_syndrome(const LdpcCode& code,
                                        const std::vector<std::uint8_t>& bits);

struct LdpcResult {
    BitBlock bits;
    bool success = false;
    int leaked_bits = 0;  // syndrome length charged to leakage
    int iterations = 0;
};

// Belief-propagation syndrome decoding of channel LLRs (positive = bit 0).
// Non-convergence is reported via the success flag, not an exception.
LdpcResult ldpc_correct(const std::vector<double>& llr,
                        const std::vector<std::uint8_t>& syndrome,
                        const LdpcCode& code, int max_iters = 60);

// beta = (H_X - leaked) / I_AB
double reconciliation_efficiency(double h_x_bits, double leaked_bits,
                                 double i_ab_bits);

// --- verification and privacy amplification ---

// 64-bit polynomial hash over GF(2)[x] mod an irreducible degree-64 poly;
// exchanged to verify error-correction success (length charged to leakage).
std::uint64_t verification_hash(const BitBlock& key);

struct ToeplitzSeed {
    std::vector<std::uint8_t> t;  // length out_len + in_len - 1
    std::size_t in_len = 0;       // L'
    std::size_t out_len = 0;      // L < L'
};

ToeplitzSeed random_toeplitz_seed(std::size_t in_len, std::size_t out_len,
                                  std::uint64_t seed);

// out_i = XOR_j T[i][j] key_j with T[i][j] = t[i - j + in_len - 1]
BitBlock privacy_amplify(const BitBlock& key, const ToeplitzSeed& seed);

// floor(n_kept * K), clamped at zero
std::size_t final_key_length(const keyrate::KeyRateReport& report, std::size_t n_kept);

struct KeyMetadata {
    std::size_t n_raw = 0, n_final = 0;
    double beta = 0.0;
    double leaked_bits = 0.0;
    double eps_pe = 0.0, eps_bar = 0.0, eps_pa = 0.0;
};

// raw bits MSB-first, 8 per byte, plus a JSON sidecar (path + ".meta.json")
void export_key(const BitBlock& key, const KeyMetadata& meta, const std::string& path);

}  // namespace cvqkd::postprocess
