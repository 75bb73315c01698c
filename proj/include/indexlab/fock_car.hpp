#ifndef INDEXLAB_FOCK_CAR_HPP
#define INDEXLAB_FOCK_CAR_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "indexlab/matrix_kernel.hpp"
#include "indexlab/projection_index.hpp"

namespace indexlab {

// Finite CAR algebra over n labelled modes, realized on the 2^n Fock space.
// Occupation basis: bit i of the basis index is the occupation of mode i,
// modes ordered as in ModeSpace::labels(). Jordan-Wigner sign strings run
// over the modes below i in that order.

struct ModeLabel {
    int x = 0;
    int y = 0;
    int internal = 0;
    int layer = 0;

    bool operator==(const ModeLabel&) const = default;
    std::string str() const;
};

class ModeSpace {
  public:
    static constexpr int default_cap = 14;

    explicit ModeSpace(std::vector<ModeLabel> labels, int cap = default_cap);

    // 1D chain x = x_min .. x_max (y = internal = layer = 0).
    static ModeSpace chain(int x_min, int x_max, int cap = default_cap);
    // Rectangular patch of Z^2 times an internal index.
    static ModeSpace patch(int x_min, int x_max, int y_min, int y_max, int n_internal = 1,
                           int cap = default_cap);
    // Two-layer stack of a base space; layers interleave in the mode order,
    // stacked index of (base mode i, layer l) = 2 i + l.
    static ModeSpace stacked(const ModeSpace& base, int cap = default_cap);

    int n_modes() const { return static_cast<int>(labels_.size()); }
    std::int64_t fock_dim() const { return std::int64_t(1) << n_modes(); }
    const std::vector<ModeLabel>& labels() const { return labels_; }
    const ModeLabel& label(int i) const { return labels_.at(static_cast<std::size_t>(i)); }

    // Index of a label; throws UnknownLabel.
    int find(const ModeLabel& l) const;
    // Modes belonging to one layer of a stacked space.
    std::vector<int> layer_modes(int layer) const;
    std::vector<int> all_modes() const;

    bool operator==(const ModeSpace& o) const { return labels_ == o.labels_; }

  private:
    std::vector<ModeLabel> labels_;
};

using ModeSpacePtr = std::shared_ptr<const ModeSpace>;

// Pure state / general vector on the 2^n Fock space, with matrix-free ladder
// actions. This is the representation-of-choice for states: 2^n numbers
// instead of a 4^n density matrix, and purity is structural.
class FockVector {
  public:
    FockVector(ModeSpacePtr modes, Vector v);

    static FockVector vacuum(ModeSpacePtr modes);
    // a*(col_k) ... a*(col_1) |vac> for orthonormal columns, unit norm.
    static FockVector slater(ModeSpacePtr modes, const Matrix& orbitals);

    const ModeSpacePtr& modes() const { return modes_; }
    const Vector& coeffs() const { return v_; }
    Eigen::Index dim() const { return v_.size(); }
    double norm() const { return v_.norm(); }

    FockVector apply_mode_annihilator(int i) const;
    FockVector apply_mode_creator(int i) const;
    FockVector apply_annihilator(const Vector& f) const;  // a(f), antilinear in f
    FockVector apply_creator(const Vector& f) const;      // a*(f)
    FockVector apply_excess(const Vector& f) const;       // a(f) + a*(f)

    Complex inner(const FockVector& other) const;  // <this, other>

  private:
    ModeSpacePtr modes_;
    Vector v_;
};

// Dense operator on the Fock space. Dense construction is guarded at
// dense_mode_limit modes; beyond that use FockVector pipelines.
class FockOperator {
  public:
    static constexpr int dense_mode_limit = 12;

    FockOperator(ModeSpacePtr modes, Matrix m);

    static FockOperator identity(ModeSpacePtr modes);
    static FockOperator zero(ModeSpacePtr modes);

    const ModeSpacePtr& modes() const { return modes_; }
    const Matrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }

    FockOperator adjoint() const { return FockOperator(modes_, m_.adjoint()); }
    Complex trace() const { return m_.trace(); }
    double frobenius_norm() const { return m_.norm(); }
    double norm() const { return operator_norm(m_); }

    FockVector apply(const FockVector& v) const;
    Complex expectation(const FockVector& v) const;  // <v, A v>

    bool is_unitary(double tol = defaults::unitary_tol) const;

    friend FockOperator operator+(const FockOperator& a, const FockOperator& b);
    friend FockOperator operator-(const FockOperator& a, const FockOperator& b);
    friend FockOperator operator*(const FockOperator& a, const FockOperator& b);
    friend FockOperator operator*(Complex s, const FockOperator& a);

  private:
    ModeSpacePtr modes_;
    Matrix m_;
};

FockOperator commutator(const FockOperator& a, const FockOperator& b);
FockOperator anticommutator(const FockOperator& a, const FockOperator& b);

struct CarOperators {
    ModeSpacePtr modes;
    std::vector<FockOperator> a;
    std::vector<FockOperator> adag;
};

// Dense ladder operators for every mode; entries are exactly 0 or +-1.
CarOperators build_car(ModeSpacePtr modes);

FockOperator annihilator_of(const Vector& f, ModeSpacePtr modes);
FockOperator creator_of(const Vector& f, ModeSpacePtr modes);

// Second-quantized one-body operator sum_ij h_ij a*_i a_j.
FockOperator second_quantized_one_body(const Matrix& h, ModeSpacePtr modes);

// Regional charge Q_Lambda = sum_{i in region} a*_i a_i. Diagonal in the
// occupation basis with spectrum {0, ..., |region|} exactly.
class ChargeOperator {
  public:
    ChargeOperator(ModeSpacePtr modes, std::vector<int> region);

    const ModeSpacePtr& modes() const { return modes_; }
    const std::vector<int>& region() const { return region_; }
    int charge_of_basis_state(std::int64_t b) const;

    FockOperator dense() const;
    FockVector apply(const FockVector& v) const;
    // e^{i t Q} v, diagonal phases.
    FockVector apply_phase(const FockVector& v, double t) const;
    // e^{i t Q} A e^{-i t Q}, elementwise phases on the dense matrix.
    FockOperator conjugate_phase(const FockOperator& a, double t) const;

  private:
    ModeSpacePtr modes_;
    std::vector<int> region_;
    std::uint64_t mask_ = 0;
};

ChargeOperator charge_operator(const std::vector<int>& region, ModeSpacePtr modes);
ChargeOperator full_charge(ModeSpacePtr modes);

// i [Q, A], the generator of the U(1) charge action on operators.
FockOperator delta_rho(const FockOperator& a, const ChargeOperator& q);

// Pure quasi-free state omega_P, cached as the Slater vector over the
// descending-eigenvalue eigenbasis of P (phase-fixed, reproducible).
class QuasiFreeState {
  public:
    QuasiFreeState(const Projection& p, ModeSpacePtr modes);

    const Projection& projection() const { return p_; }
    const FockVector& vector() const { return omega_; }
    const ModeSpacePtr& modes() const { return omega_.modes(); }
    int particle_number() const { return p_.rank(); }

    Complex evaluate(const FockOperator& a) const { return a.expectation(omega_); }

  private:
    Projection p_;
    FockVector omega_;
};

struct ManyBodyIndexOptions {
    double unitary_tol = defaults::unitary_tol;
    double invariance_tol = 1e-8;
    int invariance_samples = 4;
    unsigned seed = 0x1db1u;
};

// N_rho(omega, omega o Ad_u) = i omega(u* i[Q, u]). Checks that u is unitary
// and that omega is invariant under e^{itQ} conjugation on sampled quadratic
// monomials before evaluating.
double many_body_index(const FockVector& omega1, const FockOperator& u, const ChargeOperator& q,
                       const ManyBodyIndexOptions& opts = {});
double many_body_index(const QuasiFreeState& omega1, const FockOperator& u,
                       const ChargeOperator& q, const ManyBodyIndexOptions& opts = {});

// dGamma(A_1, ..., A_n) = a*(f_n)...a*(f_1) a(g_1)...a(g_n) extended
// multilinearly over rank-one decompositions A_i = |f><g|; independent of the
// decomposition, with ||dGamma(A_1,...,A_n)|| <= prod ||A_i||_1.
FockOperator dGamma(const std::vector<Matrix>& ops, ModeSpacePtr modes);

// Bogoliubov implementer Gamma(V) = 1 + sum_n (1/n!) dGamma(V-1, ..., V-1);
// the series truncates at n = rank(V-1). Satisfies
// Gamma(V) a*(f) = a*(V f) Gamma(V) and Gamma(V1) Gamma(V2) = Gamma(V1 V2).
FockOperator Gamma(const Matrix& v, ModeSpacePtr modes);

// v = prod_i (a(f_i) + a*(f_i)) over orthonormal vectors, in the given order.
FockOperator excess_unitary(const Matrix& vectors, ModeSpacePtr modes);

// Unitary u with omega_{P2} = omega_{P1} o Ad_u, built as v_+ v_- Gamma(V)
// from the Wold decomposition P2 = V P1 V* + N_+ - N_-.
FockOperator intertwiner(const Projection& p1, const Projection& p2, ModeSpacePtr modes);

// ||omega_1 - omega_2|| = 2 sqrt(1 - |<Omega_2, Omega_1>|^2) for pure vector states.
double state_distance(const FockVector& omega1, const FockVector& omega2);

// ---- stacking -------------------------------------------------------------

// Interleaved embedding of per-layer one-particle operators into the doubled
// space: out[2i+l, 2j+l] = (l == 0 ? a : b)[i, j].
Matrix stack_one_particle(const Matrix& layer0, const Matrix& layer1);
Vector embed_one_particle(const Vector& f, int layer, int n_base);

// Stacked pure state omega_P (x) omega_{P^perp} as a Fock vector on the
// doubled space, built from layer-pure orbitals so it is an exact eigenvector
// of the layer charges.
FockVector stacked_state_vector(const Projection& p, ModeSpacePtr stacked_modes);

// I(omega_P)-style index: many_body_index of the stacked state with the
// layer-0 charge and the supplied unitary on the doubled space.
double stacked_index(const Projection& p, const FockOperator& u_hat,
                     const ManyBodyIndexOptions& opts = {});

// Same index for u_hat = intertwiner(P (+) P_perp, P' (+) P'_perp), evaluated
// matrix-free through the Fock vector pipeline; usable up to the ModeSpace
// cap where dense operators no longer fit.
double stacked_index_intertwined(const Projection& p, const Projection& p_prime,
                                 int cap = 2 * ModeSpace::default_cap);

}  // namespace indexlab

#endif
