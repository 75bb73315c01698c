#include "indexlab/matrix_kernel.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace indexlab {

const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::NonHermitian: return "NonHermitian";
        case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorCode::InvalidOrder: return "InvalidOrder";
        case ErrorCode::NotProjection: return "NotProjection";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::AmbiguousSpectrum: return "AmbiguousSpectrum";
        case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
        case ErrorCode::TooManyModes: return "TooManyModes";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::NotUnitary: return "NotUnitary";
        case ErrorCode::NotInvariant: return "NotInvariant";
        case ErrorCode::NotOrthonormal: return "NotOrthonormal";
        case ErrorCode::DecayViolation: return "DecayViolation";
        case ErrorCode::OriginOnBoundary: return "OriginOnBoundary";
        case ErrorCode::FermiLevelInSpectrum: return "FermiLevelInSpectrum";
        case ErrorCode::UnresolvedCrossing: return "UnresolvedCrossing";
        case ErrorCode::NonSimpleCrossing: return "NonSimpleCrossing";
        case ErrorCode::StepFloorReached: return "StepFloorReached";
        case ErrorCode::UnitarityLoss: return "UnitarityLoss";
        case ErrorCode::NotCommensurate: return "NotCommensurate";
        case ErrorCode::GapClosesOnBZ: return "GapClosesOnBZ";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

void require_finite(const Matrix& a, const char* who) {
    if (!a.allFinite()) throw Error(ErrorCode::NonFinite, std::string(who) + ": entries must be finite");
}

void require_square(const Matrix& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() < 1)
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(who) + ": expected a square matrix, got " + std::to_string(a.rows()) +
                        "x" + std::to_string(a.cols()));
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(who) + ": shapes " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

namespace {

void require_hermitian(const Matrix& a, double tol, const char* who) {
    const double defect = (a - a.adjoint()).norm();
    const double scale = std::max(1.0, a.norm());
    if (defect > tol * scale)
        throw Error(ErrorCode::NonHermitian, std::string(who) + ": ||A - A*||_F = " +
                                                 std::to_string(defect) + " exceeds " +
                                                 std::to_string(tol) + " * max(1, ||A||_F)");
}

// Deterministic phase convention: first component with magnitude above
// 1e-12 * colmax is rotated to the positive real axis.
void fix_phases(Matrix& u) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        const double colmax = u.col(j).cwiseAbs().maxCoeff();
        if (colmax == 0.0) continue;
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            const Complex x = u(i, j);
            if (std::abs(x) > 1e-12 * colmax) {
                u.col(j) *= std::conj(x) / std::abs(x);
                break;
            }
        }
    }
}

}  // namespace

EighResult eigh(const Matrix& a, double hermiticity_tol) {
    require_square(a, "eigh");
    require_finite(a, "eigh");
    require_hermitian(a, hermiticity_tol, "eigh");

    const lapack_int n = static_cast<lapack_int>(a.rows());
    // Column-major storage as LAPACK expects; symmetrize first so the
    // decomposition is a function of (A + A*)/2 only.
    Matrix work = 0.5 * (a + a.adjoint());
    RealVector evals(n);
    lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'L', n,
                                     reinterpret_cast<lapack_complex_double*>(work.data()), n,
                                     evals.data());
    if (info != 0)
        throw Error(ErrorCode::ConvergenceFailure,
                    "eigh: LAPACKE_zheevd returned info = " + std::to_string(info));
    fix_phases(work);
    return EighResult{std::move(evals), std::move(work)};
}

RealVector singular_values(const Matrix& a) {
    require_finite(a, "singular_values");
    const lapack_int m = static_cast<lapack_int>(a.rows());
    const lapack_int n = static_cast<lapack_int>(a.cols());
    Matrix work = a;
    RealVector sv(std::min(m, n));
    lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n,
                                     reinterpret_cast<lapack_complex_double*>(work.data()), m,
                                     sv.data(), nullptr, 1, nullptr, 1);
    if (info != 0)
        throw Error(ErrorCode::ConvergenceFailure,
                    "singular_values: LAPACKE_zgesdd returned info = " + std::to_string(info));
    return sv;
}

double schatten_norm(const Matrix& a, double p) {
    if (!(p >= 1.0))
        throw Error(ErrorCode::InvalidOrder, "schatten_norm: order p = " + std::to_string(p) +
                                                 " must satisfy p >= 1");
    const RealVector sv = singular_values(a);
    const double smax = sv.size() ? sv(0) : 0.0;
    if (smax == 0.0) return 0.0;
    if (std::isinf(p)) return smax;
    if (p == 1.0) return sv.sum();
    if (p == 2.0) return sv.norm();
    // Factor out the largest singular value to keep the powers in range.
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) acc += std::pow(sv(i) / smax, p);
    return smax * std::pow(acc, 1.0 / p);
}

Matrix expm_antihermitian(const Matrix& a, double t, double hermiticity_tol) {
    EighResult es = eigh(a, hermiticity_tol);
    Vector phases(es.eigenvalues.size());
    for (Eigen::Index i = 0; i < phases.size(); ++i)
        phases(i) = std::polar(1.0, t * es.eigenvalues(i));
    return es.eigenvectors * phases.asDiagonal() * es.eigenvectors.adjoint();
}

Projection validate_projection(const Matrix& m, double tol) {
    require_square(m, "validate_projection");
    require_finite(m, "validate_projection");

    const double herm_res = operator_norm(m - m.adjoint());
    const double idem_res = operator_norm(m * m - m);
    if (herm_res > tol || idem_res > tol) {
        std::ostringstream os;
        os << "validate_projection: ||P - P*|| = " << herm_res << ", ||P^2 - P|| = " << idem_res
           << ", tol = " << tol;
        throw Error(ErrorCode::NotProjection, os.str());
    }

    EighResult es = eigh(0.5 * (m + m.adjoint()), 1.0);  // already known Hermitian to tol
    int rank = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i) {
        const double lam = es.eigenvalues(i);
        const double dist = std::min(std::abs(lam), std::abs(lam - 1.0));
        if (dist > tol)
            throw Error(ErrorCode::NotProjection,
                        "validate_projection: eigenvalue " + std::to_string(lam) +
                            " not within tol of {0, 1}");
        if (lam > 0.5) ++rank;
    }

    Projection p;
    p.p_ = m;
    p.tol_ = tol;
    p.rank_ = rank;
    p.herm_res_ = herm_res;
    p.idem_res_ = idem_res;
    return p;
}

Projection projection_from_columns(const Matrix& columns, double tol) {
    if (columns.cols() == 0)
        return validate_projection(Matrix::Zero(columns.rows(), columns.rows()), tol);
    Matrix p = columns * columns.adjoint();
    return validate_projection(0.5 * (p + p.adjoint()), tol);
}

Projection spectral_projection_below(const Matrix& h, double mu, double gap_tol) {
    EighResult es = eigh(h);
    std::vector<Eigen::Index> below;
    for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i) {
        if (std::abs(es.eigenvalues(i) - mu) <= gap_tol)
            throw Error(ErrorCode::FermiLevelInSpectrum,
                        "spectral_projection_below: eigenvalue " + std::to_string(es.eigenvalues(i)) +
                            " within gap tolerance of mu = " + std::to_string(mu));
        if (es.eigenvalues(i) < mu) below.push_back(i);
    }
    Matrix cols(h.rows(), static_cast<Eigen::Index>(below.size()));
    for (std::size_t k = 0; k < below.size(); ++k) cols.col(static_cast<Eigen::Index>(k)) = es.eigenvectors.col(below[k]);
    return projection_from_columns(cols, defaults::projection_tol);
}

}  // namespace indexlab
