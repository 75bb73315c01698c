#include "indexlab/projection_index.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace indexlab {

namespace {

struct Classified {
    std::vector<Eigen::Index> plus;     // eigenvalues of D within tol of +1
    std::vector<Eigen::Index> minus;    // within tol of -1
    std::vector<Eigen::Index> generic;  // |lambda| below the excess band
    EighResult es;
};

Classified classify_difference(const Projection& p, const Projection& q, double tol,
                               const char* who) {
    require_same_shape(p.matrix(), q.matrix(), who);
    Classified c;
    c.es = eigh(p.matrix() - q.matrix());
    for (Eigen::Index i = 0; i < c.es.eigenvalues.size(); ++i) {
        const double lam = c.es.eigenvalues(i);
        const double d = 1.0 - std::abs(lam);
        if (d <= tol) {
            (lam > 0 ? c.plus : c.minus).push_back(i);
        } else if (d < 2.0 * tol) {
            std::ostringstream os;
            os << who << ": eigenvalue " << lam << " of P - Q lies in the dead zone ("
               << tol << ", " << 2.0 * tol << ") of " << (lam > 0 ? "+1" : "-1");
            throw Error(ErrorCode::AmbiguousSpectrum, os.str());
        } else {
            c.generic.push_back(i);
        }
    }
    return c;
}

}  // namespace

int index_eig(const Projection& p, const Projection& q, double crossing_tol) {
    Classified c = classify_difference(p, q, crossing_tol, "index_eig");
    return static_cast<int>(c.plus.size()) - static_cast<int>(c.minus.size());
}

double index_trace_power(const Projection& p, const Projection& q, int p_prime) {
    require_same_shape(p.matrix(), q.matrix(), "index_trace_power");
    if (p_prime < 0)
        throw Error(ErrorCode::InvalidOrder, "index_trace_power: p' must be >= 0");
    const Matrix d = p.matrix() - q.matrix();
    Matrix acc = d;
    for (int k = 0; k < 2 * p_prime; ++k) acc = acc * d;
    return acc.trace().real();
}

double index_arveson(const Projection& p, const Projection& q) {
    require_same_shape(p.matrix(), q.matrix(), "index_arveson");
    const Matrix d = p.matrix() - q.matrix();
    const Matrix qm = q.matrix();
    const Matrix qc = q.complement();
    return (qm * d * qm).trace().real() + (qc * d * qc).trace().real();
}

IndexReport compute_index_report(const Projection& p, const Projection& q, double crossing_tol) {
    IndexReport r;
    r.value_eig = index_eig(p, q, crossing_tol);
    r.value_trace_power = index_trace_power(p, q, 1);
    r.value_arveson = index_arveson(p, q);
    double res = std::abs(r.value_arveson - r.value_eig);
    for (int pp : {0, 1, 2})
        res = std::max(res, std::abs(index_trace_power(p, q, pp) - r.value_eig));
    r.agreement_residual = res;
    return r;
}

WoldDecomposition wold_decompose(const Projection& p1, const Projection& p2, double crossing_tol,
                                 double generic_guard) {
    Classified c = classify_difference(p1, p2, crossing_tol, "wold_decompose");
    const Eigen::Index n = p1.dim();

    for (Eigen::Index i : c.generic) {
        const double lam = std::abs(c.es.eigenvalues(i));
        if (lam >= 1.0 - generic_guard) {
            std::ostringstream os;
            os << "wold_decompose: generic part of P1 - P2 has |eigenvalue| = " << lam
               << " >= 1 - " << generic_guard << "; the direct rotation degenerates";
            throw Error(ErrorCode::DegenerateGeometry, os.str());
        }
    }

    // Excess of P2 is the -1 eigenspace of P1 - P2 (= +1 eigenspace of P2 - P1).
    WoldDecomposition w;
    w.n_plus = static_cast<int>(c.minus.size());
    w.n_minus = static_cast<int>(c.plus.size());
    w.plus_basis.resize(n, w.n_plus);
    w.minus_basis.resize(n, w.n_minus);
    for (int k = 0; k < w.n_plus; ++k) w.plus_basis.col(k) = c.es.eigenvectors.col(c.minus[k]);
    for (int k = 0; k < w.n_minus; ++k) w.minus_basis.col(k) = c.es.eigenvectors.col(c.plus[k]);
    w.N_plus = projection_from_columns(w.plus_basis.rows() ? w.plus_basis : Matrix::Zero(n, 0));
    w.N_minus = projection_from_columns(w.minus_basis.rows() ? w.minus_basis : Matrix::Zero(n, 0));

    // Direct (Kato) rotation on the generic subspace, identity on the excess
    // spaces: V = (P2 P1 + P2c P1c) (1 - D^2)^(-1/2) there.
    Matrix r_generic = Matrix::Zero(n, n);
    for (Eigen::Index i : c.generic) {
        const double lam = c.es.eigenvalues(i);
        r_generic += (1.0 / std::sqrt(1.0 - lam * lam)) * c.es.eigenvectors.col(i) *
                     c.es.eigenvectors.col(i).adjoint();
    }
    const Matrix base =
        p2.matrix() * p1.matrix() + p2.complement() * p1.complement();
    w.V = base * r_generic + w.N_plus.matrix() + w.N_minus.matrix();

    const double unit_res = operator_norm(w.V.adjoint() * w.V - Matrix::Identity(n, n));
    if (unit_res > 1e-8)
        throw Error(ErrorCode::DegenerateGeometry,
                    "wold_decompose: direct rotation failed the unitarity check, ||V*V - 1|| = " +
                        std::to_string(unit_res));

    const Matrix ptilde = w.V * p1.matrix() * w.V.adjoint();
    w.reconstruction_residual =
        operator_norm(p2.matrix() - (ptilde + w.N_plus.matrix() - w.N_minus.matrix()));
    return w;
}

}  // namespace indexlab
