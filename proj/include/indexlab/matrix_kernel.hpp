#ifndef INDEXLAB_MATRIX_KERNEL_HPP
#define INDEXLAB_MATRIX_KERNEL_HPP

#include <Eigen/Dense>
#include <complex>
#include <limits>

#include "indexlab/errors.hpp"

namespace indexlab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

namespace defaults {
// The inputs come from exact algebra; every threshold below is an artifact
// decision, not a property of the math. Decomposition checks are relative
// 1e-10, projection validation 1e-8.
inline constexpr double hermitian_tol = 1e-10;
inline constexpr double projection_tol = 1e-8;
inline constexpr double unitary_tol = 1e-9;
inline constexpr double inf_order = std::numeric_limits<double>::infinity();
}  // namespace defaults

struct EighResult {
    RealVector eigenvalues;  // ascending
    Matrix eigenvectors;     // columns, phase-fixed (first component above
                             // 1e-12*colmax made real positive)
};

// Hermitian eigendecomposition via LAPACK zheevd on the symmetrized input.
// Throws NonHermitian if ||A - A*||_F > tol * max(1, ||A||_F),
// ConvergenceFailure if the solver fails.
EighResult eigh(const Matrix& a, double hermiticity_tol = defaults::hermitian_tol);

// Singular values, descending.
RealVector singular_values(const Matrix& a);

// (sum sigma_i^p)^(1/p); p = infinity gives the operator norm.
// Throws InvalidOrder for p < 1.
double schatten_norm(const Matrix& a, double p);

inline double operator_norm(const Matrix& a) { return schatten_norm(a, defaults::inf_order); }
inline double trace_norm(const Matrix& a) { return schatten_norm(a, 1.0); }

// exp(i t A) for Hermitian A, unitary by construction (spectral calculus).
Matrix expm_antihermitian(const Matrix& a, double t,
                          double hermiticity_tol = defaults::hermitian_tol);

// Hermitian idempotent wrapper. Construct through validate_projection or the
// spectral helpers so the residuals have actually been checked.
class Projection {
  public:
    Projection() = default;

    const Matrix& matrix() const { return p_; }
    double tol() const { return tol_; }
    Eigen::Index dim() const { return p_.rows(); }
    int rank() const { return rank_; }
    double hermiticity_residual() const { return herm_res_; }
    double idempotency_residual() const { return idem_res_; }

    Matrix complement() const { return Matrix::Identity(p_.rows(), p_.cols()) - p_; }

    friend Projection validate_projection(const Matrix& m, double tol);

  private:
    Matrix p_;
    double tol_ = defaults::projection_tol;
    int rank_ = 0;
    double herm_res_ = 0.0;
    double idem_res_ = 0.0;
};

// Checks ||M - M*|| and ||M^2 - M|| in operator norm and that the spectrum
// sits within tol of {0, 1}. Throws NotProjection with both residuals.
Projection validate_projection(const Matrix& m, double tol = defaults::projection_tol);

// Convenience: projection onto the span of orthonormal columns.
Projection projection_from_columns(const Matrix& columns, double tol = defaults::projection_tol);

// Spectral projection chi_(-inf, mu] of a Hermitian matrix. No eigenvalue may
// lie within gap_tol of mu; this is enforced by the caller-facing wrappers in
// flux_lattice (FermiLevelInSpectrum) and asserted here.
Projection spectral_projection_below(const Matrix& h, double mu,
                                     double gap_tol = 1e-9);

void require_finite(const Matrix& a, const char* who);
void require_square(const Matrix& a, const char* who);
void require_same_shape(const Matrix& a, const Matrix& b, const char* who);

}  // namespace indexlab

#endif
