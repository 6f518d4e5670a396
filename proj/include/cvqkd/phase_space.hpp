#pragma once

#include <Eigen/Dense>
#include <vector>

// Gaussian-state linear algebra in shot-noise units (vacuum variance = 1).
// All functions are pure and thread-safe.

namespace cvqkd::phase_space {

// Symmetric 2n x 2n covariance matrix of an n-mode Gaussian state,
// quadrature ordering (x1, p1, x2, p2, ...).
class CovarianceMatrix {
public:
    explicit CovarianceMatrix(Eigen::MatrixXd entries);

    int n_modes() const { return n_modes_; }
    const Eigen::MatrixXd& mat() const { return mat_; }

    // 2x2 block for mode pair (i, j).
    Eigen::Matrix2d block(int i, int j) const { return mat_.block<2, 2>(2 * i, 2 * j); }

private:
    int n_modes_;
    Eigen::MatrixXd mat_;
};

struct GaussianState {
    Eigen::VectorXd displacement;  // length 2n
    CovarianceMatrix cov;

    GaussianState(Eigen::VectorXd d, CovarianceMatrix c);
};

// Block-diagonal symplectic form, blocks [[0,1],[-1,0]].
Eigen::MatrixXd symplectic_form(int n_modes);

enum class Measurement { HomodyneX, HomodyneP, Heterodyne };

// Two-mode squeezed vacuum with quadrature variance V >= 1.
GaussianState epr_state(double V);

// Moduli of the eigenvalues of i*Omega*gamma, one per mode, descending.
std::vector<double> symplectic_eigenvalues(const CovarianceMatrix& cov);

// Heisenberg uncertainty test: min symplectic eigenvalue >= 1 - 1e-9.
bool is_physical(const CovarianceMatrix& cov);

// Entropy-of-thermal-eigenvalue function, in bits.
// g(1) = 0; requires x >= 1 (values within 1e-9 below 1 clamp to 1).
double g_function(double x);

// Sum of g over the symplectic spectrum, in bits.
double von_neumann_entropy(const CovarianceMatrix& cov);

// Covariance of the remaining modes after a Gaussian measurement on one mode.
CovarianceMatrix condition_on_measurement(const GaussianState& state, int mode,
                                          Measurement kind);

}  // namespace cvqkd::phase_space
