#ifndef INDEXLAB_PROJECTION_INDEX_HPP
#define INDEXLAB_PROJECTION_INDEX_HPP

#include "indexlab/matrix_kernel.hpp"

namespace indexlab {

namespace defaults {
// Eigenvalue-vs-{+1,-1} classification for excess-mode counting. Values in
// (crossing_tol, 2*crossing_tol) of +-1 are refused (AmbiguousSpectrum)
// instead of silently rounded; a misclassified excess mode corrupts the
// integer index with no warning otherwise.
inline constexpr double crossing_tol = 1e-7;
// Wold rotation exists only while the generic part of P1 - P2 stays away
// from norm 1; |lambda| in [1 - generic_guard, 1 - 2*crossing_tol] is
// refused (DegenerateGeometry). Covers the classification line jointly with
// crossing_tol: excess [1-tol, 1], dead zone (1-2tol, 1-tol), degenerate
// [1-guard, 1-2tol], generic below.
inline constexpr double wold_generic_guard = 1e-6;
inline constexpr double index_agreement_tol = 1e-8;
}  // namespace defaults

struct IndexReport {
    int value_eig = 0;
    double value_trace_power = 0.0;  // p' = 1
    double value_arveson = 0.0;
    double agreement_residual = 0.0;  // max deviation of the real-valued formulas from value_eig
};

// index(P, Q) = dim(im P  ∩ ker Q) - dim(im Q ∩ ker P), counted as the
// multiplicities of the +1 and -1 eigenvalues of P - Q.
int index_eig(const Projection& p, const Projection& q,
              double crossing_tol = defaults::crossing_tol);

// tr((P - Q)^(2 p' + 1)) by explicit matrix powers; p'-independent and
// integer-valued for genuine projection pairs in finite dimension.
double index_trace_power(const Projection& p, const Projection& q, int p_prime);

// tr(Q (P - Q) Q) + tr(Q_perp (P - Q) Q_perp).
double index_arveson(const Projection& p, const Projection& q);

IndexReport compute_index_report(const Projection& p, const Projection& q,
                                 double crossing_tol = defaults::crossing_tol);

// P2 = V P1 V* + N_plus - N_minus with N_plus the excess of P2
// (+1 eigenspace of P2 - P1), N_minus the deficit, and V the direct rotation
// on the orthogonal complement of the excess spaces. With Ptilde = V P1 V*:
// Ptilde N_plus = 0 and Ptilde N_minus = N_minus.
struct WoldDecomposition {
    Matrix V;
    Projection N_plus;
    Projection N_minus;
    int n_plus = 0;
    int n_minus = 0;
    Matrix plus_basis;   // orthonormal columns spanning im N_plus
    Matrix minus_basis;  // orthonormal columns spanning im N_minus
    double reconstruction_residual = 0.0;
};

WoldDecomposition wold_decompose(const Projection& p1, const Projection& p2,
                                 double crossing_tol = defaults::crossing_tol,
                                 double generic_guard = defaults::wold_generic_guard);

}  // namespace indexlab

#endif
