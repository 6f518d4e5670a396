#include "cvqkd/phase_space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace cvqkd::phase_space {

namespace {
constexpr double kSymTol = 1e-12;
constexpr double kEigClampTol = 1e-9;
}  // namespace

CovarianceMatrix::CovarianceMatrix(Eigen::MatrixXd entries) : mat_(std::move(entries)) {
    if (mat_.rows() != mat_.cols() || mat_.rows() < 2 || mat_.rows() % 2 != 0) {
        throw std::invalid_argument("covariance matrix must be 2n x 2n");
    }
    n_modes_ = static_cast<int>(mat_.rows()) / 2;
    const double scale = std::max(1.0, mat_.cwiseAbs().maxCoeff());
    if ((mat_ - mat_.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale) {
        throw std::invalid_argument("covariance matrix must be symmetric");
    }
    // exact symmetry keeps downstream solvers well-behaved
    mat_ = 0.5 * (mat_ + mat_.transpose().eval());
}

GaussianState::GaussianState(Eigen::VectorXd d, CovarianceMatrix c)
    : displacement(std::move(d)), cov(std::move(c)) {
    if (displacement.size() != 2 * cov.n_modes()) {
        throw std::invalid_argument("displacement length must be 2 * n_modes");
    }
}

Eigen::MatrixXd symplectic_form(int n_modes) {
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * n_modes, 2 * n_modes);
    for (int i = 0; i < n_modes; ++i) {
        omega(2 * i, 2 * i + 1) = 1.0;
        omega(2 * i + 1, 2 * i) = -1.0;
    }
    return omega;
}

GaussianState epr_state(double V) {
    if (V < 1.0) {
        throw std::domain_error("EPR variance must satisfy V >= 1");
    }
    const double c = std::sqrt(V * V - 1.0);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(4, 4);
    cov.diagonal() << V, V, V, V;
    cov(0, 2) = cov(2, 0) = c;
    cov(1, 3) = cov(3, 1) = -c;
    return {Eigen::VectorXd::Zero(4), CovarianceMatrix(cov)};
}

std::vector<double> symplectic_eigenvalues(const CovarianceMatrix& cov) {
    const int n = cov.n_modes();
    const Eigen::MatrixXd m = symplectic_form(n) * cov.mat();
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
    // eigenvalues of i*Omega*gamma come in pairs +-nu; collect moduli and pair them
    std::vector<double> all(2 * n);
    for (int i = 0; i < 2 * n; ++i) {
        all[i] = std::abs(solver.eigenvalues()(i));
    }
    std::sort(all.begin(), all.end(), std::greater<>());
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        out[i] = 0.5 * (all[2 * i] + all[2 * i + 1]);
    }
    return out;
}

bool is_physical(const CovarianceMatrix& cov) {
    const auto nu = symplectic_eigenvalues(cov);
    // eigensolver error scales with the matrix norm, so the pure-state
    // boundary needs a relative tolerance for large-variance states
    const double scale = std::max(1.0, cov.mat().cwiseAbs().maxCoeff());
    return nu.back() >= 1.0 - kEigClampTol * scale;
}

double g_function(double x) {
    if (x < 1.0 - kEigClampTol) {
        throw std::domain_error("g_function requires x >= 1");
    }
    if (x <= 1.0) {
        return 0.0;
    }
    const double a = 0.5 * (x + 1.0);
    const double b = 0.5 * (x - 1.0);
    const double bt = b > 0.0 ? b * std::log2(b) : 0.0;
    return a * std::log2(a) - bt;
}

double von_neumann_entropy(const CovarianceMatrix& cov) {
    if (!is_physical(cov)) {
        throw std::domain_error("entropy of an unphysical covariance matrix");
    }
    double s = 0.0;
    for (double nu : symplectic_eigenvalues(cov)) {
        s += g_function(std::max(nu, 1.0));
    }
    return s;
}

CovarianceMatrix condition_on_measurement(const GaussianState& state, int mode,
                                          Measurement kind) {
    const int n = state.cov.n_modes();
    if (mode < 0 || mode >= n) {
        throw std::invalid_argument("measured mode index out of range");
    }
    if (n < 2) {
        throw std::invalid_argument("conditioning needs at least two modes");
    }
    const Eigen::MatrixXd& full = state.cov.mat();

    // indices of the remaining modes' quadratures
    std::vector<int> keep;
    keep.reserve(2 * (n - 1));
    for (int i = 0; i < n; ++i) {
        if (i == mode) continue;
        keep.push_back(2 * i);
        keep.push_back(2 * i + 1);
    }

    Eigen::MatrixXd gamma_a(keep.size(), keep.size());
    Eigen::MatrixXd sigma_ab(keep.size(), 2);
    for (size_t r = 0; r < keep.size(); ++r) {
        for (size_t c = 0; c < keep.size(); ++c) {
            gamma_a(r, c) = full(keep[r], keep[c]);
        }
        sigma_ab(r, 0) = full(keep[r], 2 * mode);
        sigma_ab(r, 1) = full(keep[r], 2 * mode + 1);
    }
    const Eigen::Matrix2d gamma_b = state.cov.block(mode, mode);

    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    switch (kind) {
        case Measurement::HomodyneX:
            // (X gamma_B X)^MP has a single nonzero entry
            h(0, 0) = 1.0 / gamma_b(0, 0);
            break;
        case Measurement::HomodyneP:
            h(1, 1) = 1.0 / gamma_b(1, 1);
            break;
        case Measurement::Heterodyne: {
            const Eigen::Matrix2d m = gamma_b + Eigen::Matrix2d::Identity();
            const double det = m.determinant();
            if (det <= 0.0) {
                throw std::runtime_error("singular heterodyne block");
            }
            h = m.inverse();
            break;
        }
    }
    return CovarianceMatrix(gamma_a - sigma_ab * h * sigma_ab.transpose());
}

}  // namespace cvqkd::phase_space
