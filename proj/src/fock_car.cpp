#include "indexlab/fock_car.hpp"

#include <lapacke.h>

#include <bit>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

namespace indexlab {

namespace {

constexpr int kAbsoluteModeLimit = 24;  // 2^24 vector = 256 MiB; hard stop

std::int64_t bit(int i) { return std::int64_t(1) << i; }

int jw_sign(std::int64_t state, int mode) {
    const std::uint64_t below = static_cast<std::uint64_t>(state) & ((std::uint64_t(1) << mode) - 1);
    return (std::popcount(below) & 1) ? -1 : 1;
}

// out += coeff * a_mode * in  (raw vectors)
void accumulate_mode_annihilator(int mode, Complex coeff, const Vector& in, Vector& out) {
    const std::int64_t dim = in.size();
    const std::int64_t b_i = bit(mode);
    for (std::int64_t b = 0; b < dim; ++b) {
        if (b & b_i) out(b ^ b_i) += coeff * double(jw_sign(b, mode)) * in(b);
    }
}

// out += coeff * a*_mode * in
void accumulate_mode_creator(int mode, Complex coeff, const Vector& in, Vector& out) {
    const std::int64_t dim = in.size();
    const std::int64_t b_i = bit(mode);
    for (std::int64_t b = 0; b < dim; ++b) {
        if (!(b & b_i)) out(b | b_i) += coeff * double(jw_sign(b, mode)) * in(b);
    }
}

Vector field_annihilator(const Vector& f, const Vector& in) {
    Vector out = Vector::Zero(in.size());
    for (int i = 0; i < f.size(); ++i)
        if (f(i) != Complex(0)) accumulate_mode_annihilator(i, std::conj(f(i)), in, out);
    return out;
}

Vector field_creator(const Vector& f, const Vector& in) {
    Vector out = Vector::Zero(in.size());
    for (int i = 0; i < f.size(); ++i)
        if (f(i) != Complex(0)) accumulate_mode_creator(i, f(i), in, out);
    return out;
}

void ensure_vector_space(const ModeSpace& modes, const Vector& f, const char* who) {
    if (f.size() != modes.n_modes())
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(who) + ": one-particle vector of length " + std::to_string(f.size()) +
                        " on " + std::to_string(modes.n_modes()) + " modes");
}

void ensure_dense_allowed(const ModeSpace& modes, const char* who) {
    const int n = modes.n_modes();
    if (n > FockOperator::dense_mode_limit)
        throw Error(ErrorCode::TooManyModes,
                    std::string(who) + ": dense Fock operators are limited to " +
                        std::to_string(FockOperator::dense_mode_limit) +
                        " modes (got " + std::to_string(n) + "); use the FockVector pipeline");
    if (n >= 10) {
        const double mib = double(modes.fock_dim()) * double(modes.fock_dim()) * 16.0 / (1 << 20);
        std::clog << "[indexlab] " << who << ": dense Fock operator on " << n
                  << " modes, dim " << modes.fock_dim() << ", ~" << mib << " MiB per matrix\n";
    }
}

void ensure_same_modes(const ModeSpacePtr& a, const ModeSpacePtr& b, const char* who) {
    if (a == b) return;
    if (!a || !b || !(*a == *b))
        throw Error(ErrorCode::DimensionMismatch, std::string(who) + ": mode spaces differ");
}

Matrix gram_residual_check(const Matrix& cols, double tol, const char* who) {
    Matrix g = cols.adjoint() * cols;
    const double res = (g - Matrix::Identity(g.rows(), g.cols())).norm();
    if (res > tol)
        throw Error(ErrorCode::NotOrthonormal,
                    std::string(who) + ": Gram residual " + std::to_string(res));
    return g;
}

}  // namespace

std::string ModeLabel::str() const {
    std::ostringstream os;
    os << "(" << x << "," << y << ")";
    if (internal) os << "#" << internal;
    if (layer) os << "'";
    return os.str();
}

ModeSpace::ModeSpace(std::vector<ModeLabel> labels, int cap) : labels_(std::move(labels)) {
    const int n = static_cast<int>(labels_.size());
    if (n < 1) throw Error(ErrorCode::DimensionMismatch, "ModeSpace: needs at least one mode");
    if (n > cap || n > kAbsoluteModeLimit)
        throw Error(ErrorCode::TooManyModes, "ModeSpace: " + std::to_string(n) +
                                                 " modes exceeds cap " +
                                                 std::to_string(std::min(cap, kAbsoluteModeLimit)));
}

ModeSpace ModeSpace::chain(int x_min, int x_max, int cap) {
    std::vector<ModeLabel> ls;
    for (int x = x_min; x <= x_max; ++x) ls.push_back({x, 0, 0, 0});
    return ModeSpace(std::move(ls), cap);
}

ModeSpace ModeSpace::patch(int x_min, int x_max, int y_min, int y_max, int n_internal, int cap) {
    std::vector<ModeLabel> ls;
    for (int x = x_min; x <= x_max; ++x)
        for (int y = y_min; y <= y_max; ++y)
            for (int s = 0; s < n_internal; ++s) ls.push_back({x, y, s, 0});
    return ModeSpace(std::move(ls), cap);
}

ModeSpace ModeSpace::stacked(const ModeSpace& base, int cap) {
    std::vector<ModeLabel> ls;
    for (const ModeLabel& l : base.labels()) {
        ModeLabel l0 = l, l1 = l;
        l0.layer = 0;
        l1.layer = 1;
        ls.push_back(l0);
        ls.push_back(l1);
    }
    return ModeSpace(std::move(ls), cap);
}

int ModeSpace::find(const ModeLabel& l) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] == l) return static_cast<int>(i);
    throw Error(ErrorCode::UnknownLabel, "ModeSpace: no mode labelled " + l.str());
}

std::vector<int> ModeSpace::layer_modes(int layer) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i].layer == layer) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> ModeSpace::all_modes() const {
    std::vector<int> out(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) out[i] = static_cast<int>(i);
    return out;
}

// ---- FockVector ------------------------------------------------------------

FockVector::FockVector(ModeSpacePtr modes, Vector v) : modes_(std::move(modes)), v_(std::move(v)) {
    if (!modes_ || v_.size() != modes_->fock_dim())
        throw Error(ErrorCode::DimensionMismatch, "FockVector: coefficient length does not match 2^n");
}

FockVector FockVector::vacuum(ModeSpacePtr modes) {
    Vector v = Vector::Zero(modes->fock_dim());
    v(0) = 1.0;
    return FockVector(std::move(modes), std::move(v));
}

FockVector FockVector::slater(ModeSpacePtr modes, const Matrix& orbitals) {
    if (orbitals.rows() != modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch, "slater: orbital length mismatch");
    if (orbitals.cols() > 0) gram_residual_check(orbitals, 1e-8, "slater");
    FockVector out = vacuum(std::move(modes));
    for (Eigen::Index k = orbitals.cols() - 1; k >= 0; --k) out = out.apply_creator(orbitals.col(k));
    return out;
}

FockVector FockVector::apply_mode_annihilator(int i) const {
    Vector out = Vector::Zero(v_.size());
    accumulate_mode_annihilator(i, 1.0, v_, out);
    return FockVector(modes_, std::move(out));
}

FockVector FockVector::apply_mode_creator(int i) const {
    Vector out = Vector::Zero(v_.size());
    accumulate_mode_creator(i, 1.0, v_, out);
    return FockVector(modes_, std::move(out));
}

FockVector FockVector::apply_annihilator(const Vector& f) const {
    ensure_vector_space(*modes_, f, "apply_annihilator");
    return FockVector(modes_, field_annihilator(f, v_));
}

FockVector FockVector::apply_creator(const Vector& f) const {
    ensure_vector_space(*modes_, f, "apply_creator");
    return FockVector(modes_, field_creator(f, v_));
}

FockVector FockVector::apply_excess(const Vector& f) const {
    ensure_vector_space(*modes_, f, "apply_excess");
    Vector out = field_annihilator(f, v_);
    out += field_creator(f, v_);
    return FockVector(modes_, std::move(out));
}

Complex FockVector::inner(const FockVector& other) const {
    ensure_same_modes(modes_, other.modes_, "FockVector::inner");
    return v_.dot(other.v_);
}

// ---- FockOperator ----------------------------------------------------------

FockOperator::FockOperator(ModeSpacePtr modes, Matrix m) : modes_(std::move(modes)), m_(std::move(m)) {
    if (!modes_ || m_.rows() != modes_->fock_dim() || m_.cols() != modes_->fock_dim())
        throw Error(ErrorCode::DimensionMismatch, "FockOperator: matrix does not match 2^n");
}

FockOperator FockOperator::identity(ModeSpacePtr modes) {
    const auto d = modes->fock_dim();
    return FockOperator(std::move(modes), Matrix::Identity(d, d));
}

FockOperator FockOperator::zero(ModeSpacePtr modes) {
    const auto d = modes->fock_dim();
    return FockOperator(std::move(modes), Matrix::Zero(d, d));
}

FockVector FockOperator::apply(const FockVector& v) const {
    ensure_same_modes(modes_, v.modes(), "FockOperator::apply");
    return FockVector(modes_, m_ * v.coeffs());
}

Complex FockOperator::expectation(const FockVector& v) const {
    ensure_same_modes(modes_, v.modes(), "FockOperator::expectation");
    return v.coeffs().dot(m_ * v.coeffs());
}

bool FockOperator::is_unitary(double tol) const {
    const double res = (m_.adjoint() * m_ - Matrix::Identity(m_.rows(), m_.cols())).norm();
    return res <= tol * std::sqrt(double(m_.rows()));
}

FockOperator operator+(const FockOperator& a, const FockOperator& b) {
    ensure_same_modes(a.modes_, b.modes_, "FockOperator::operator+");
    return FockOperator(a.modes_, a.m_ + b.m_);
}

FockOperator operator-(const FockOperator& a, const FockOperator& b) {
    ensure_same_modes(a.modes_, b.modes_, "FockOperator::operator-");
    return FockOperator(a.modes_, a.m_ - b.m_);
}

FockOperator operator*(const FockOperator& a, const FockOperator& b) {
    ensure_same_modes(a.modes_, b.modes_, "FockOperator::operator*");
    return FockOperator(a.modes_, a.m_ * b.m_);
}

FockOperator operator*(Complex s, const FockOperator& a) { return FockOperator(a.modes_, s * a.m_); }

FockOperator commutator(const FockOperator& a, const FockOperator& b) {
    return FockOperator(a.modes(), a.matrix() * b.matrix() - b.matrix() * a.matrix());
}

FockOperator anticommutator(const FockOperator& a, const FockOperator& b) {
    return FockOperator(a.modes(), a.matrix() * b.matrix() + b.matrix() * a.matrix());
}

// ---- generators ------------------------------------------------------------

CarOperators build_car(ModeSpacePtr modes) {
    ensure_dense_allowed(*modes, "build_car");
    const std::int64_t dim = modes->fock_dim();
    CarOperators car;
    car.modes = modes;
    for (int i = 0; i < modes->n_modes(); ++i) {
        Matrix a = Matrix::Zero(dim, dim);
        const std::int64_t b_i = bit(i);
        for (std::int64_t b = 0; b < dim; ++b)
            if (b & b_i) a(b ^ b_i, b) = double(jw_sign(b, i));
        car.adag.emplace_back(modes, a.adjoint());
        car.a.emplace_back(modes, std::move(a));
    }
    return car;
}

FockOperator annihilator_of(const Vector& f, ModeSpacePtr modes) {
    ensure_vector_space(*modes, f, "annihilator_of");
    ensure_dense_allowed(*modes, "annihilator_of");
    const std::int64_t dim = modes->fock_dim();
    Matrix m = Matrix::Zero(dim, dim);
    for (std::int64_t b = 0; b < dim; ++b) {
        for (int i = 0; i < modes->n_modes(); ++i) {
            if (b & bit(i)) m(b ^ bit(i), b) += std::conj(f(i)) * double(jw_sign(b, i));
        }
    }
    return FockOperator(std::move(modes), std::move(m));
}

FockOperator creator_of(const Vector& f, ModeSpacePtr modes) {
    return annihilator_of(f, std::move(modes)).adjoint();
}

FockOperator second_quantized_one_body(const Matrix& h, ModeSpacePtr modes) {
    require_square(h, "second_quantized_one_body");
    if (h.rows() != modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch, "second_quantized_one_body: size mismatch");
    ensure_dense_allowed(*modes, "second_quantized_one_body");
    const std::int64_t dim = modes->fock_dim();
    const int n = modes->n_modes();
    Matrix m = Matrix::Zero(dim, dim);
    for (std::int64_t b = 0; b < dim; ++b) {
        for (int j = 0; j < n; ++j) {
            if (!(b & bit(j))) continue;
            const std::int64_t b1 = b ^ bit(j);
            const int s1 = jw_sign(b, j);
            for (int i = 0; i < n; ++i) {
                if (b1 & bit(i)) continue;
                if (h(i, j) == Complex(0)) continue;
                m(b1 | bit(i), b) += h(i, j) * double(s1 * jw_sign(b1, i));
            }
        }
    }
    return FockOperator(std::move(modes), std::move(m));
}

// ---- charge ----------------------------------------------------------------

ChargeOperator::ChargeOperator(ModeSpacePtr modes, std::vector<int> region)
    : modes_(std::move(modes)), region_(std::move(region)) {
    for (int i : region_) {
        if (i < 0 || i >= modes_->n_modes())
            throw Error(ErrorCode::UnknownLabel,
                        "ChargeOperator: mode index " + std::to_string(i) + " out of range");
        if (mask_ & (std::uint64_t(1) << i))
            throw Error(ErrorCode::UnknownLabel,
                        "ChargeOperator: duplicate mode " + std::to_string(i) + " in region");
        mask_ |= std::uint64_t(1) << i;
    }
}

int ChargeOperator::charge_of_basis_state(std::int64_t b) const {
    return std::popcount(static_cast<std::uint64_t>(b) & mask_);
}

FockOperator ChargeOperator::dense() const {
    ensure_dense_allowed(*modes_, "ChargeOperator::dense");
    const std::int64_t dim = modes_->fock_dim();
    Matrix m = Matrix::Zero(dim, dim);
    for (std::int64_t b = 0; b < dim; ++b) m(b, b) = double(charge_of_basis_state(b));
    return FockOperator(modes_, std::move(m));
}

FockVector ChargeOperator::apply(const FockVector& v) const {
    ensure_same_modes(modes_, v.modes(), "ChargeOperator::apply");
    Vector out = v.coeffs();
    for (std::int64_t b = 0; b < out.size(); ++b) out(b) *= double(charge_of_basis_state(b));
    return FockVector(modes_, std::move(out));
}

FockVector ChargeOperator::apply_phase(const FockVector& v, double t) const {
    ensure_same_modes(modes_, v.modes(), "ChargeOperator::apply_phase");
    Vector out = v.coeffs();
    for (std::int64_t b = 0; b < out.size(); ++b)
        out(b) *= std::polar(1.0, t * double(charge_of_basis_state(b)));
    return FockVector(modes_, std::move(out));
}

FockOperator ChargeOperator::conjugate_phase(const FockOperator& a, double t) const {
    ensure_same_modes(modes_, a.modes(), "ChargeOperator::conjugate_phase");
    Matrix m = a.matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const int dq = charge_of_basis_state(r) - charge_of_basis_state(c);
            if (dq) m(r, c) *= std::polar(1.0, t * double(dq));
        }
    return FockOperator(modes_, std::move(m));
}

ChargeOperator charge_operator(const std::vector<int>& region, ModeSpacePtr modes) {
    return ChargeOperator(std::move(modes), region);
}

ChargeOperator full_charge(ModeSpacePtr modes) {
    auto region = modes->all_modes();
    return ChargeOperator(std::move(modes), std::move(region));
}

FockOperator delta_rho(const FockOperator& a, const ChargeOperator& q) {
    ensure_same_modes(a.modes(), q.modes(), "delta_rho");
    Matrix m = a.matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) *= Complex(0.0, double(q.charge_of_basis_state(r) - q.charge_of_basis_state(c)));
    return FockOperator(a.modes(), std::move(m));
}

// ---- quasi-free states -----------------------------------------------------

namespace {

// Orbitals of omega_P: eigenbasis of P ordered by descending eigenvalue
// (occupied modes first), phase-fixed by eigh.
Matrix occupied_orbitals(const Projection& p) {
    EighResult es = eigh(p.matrix());
    const Eigen::Index n = es.eigenvalues.size();
    Matrix orb(n, p.rank());
    Eigen::Index k = 0;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (es.eigenvalues(i) > 0.5) orb.col(k++) = es.eigenvectors.col(i);
    }
    return orb;
}

}  // namespace

QuasiFreeState::QuasiFreeState(const Projection& p, ModeSpacePtr modes)
    : p_(p), omega_(FockVector::vacuum(modes)) {
    if (p.dim() != modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch, "QuasiFreeState: P does not act on the mode space");
    omega_ = FockVector::slater(modes, occupied_orbitals(p));
}

// ---- many-body index -------------------------------------------------------

namespace {

Complex two_point(const FockVector& psi, const Vector& f, const Vector& g) {
    // <psi, a*(f) a(g) psi> = <a(f) psi, a(g) psi>
    return psi.apply_annihilator(f).inner(psi.apply_annihilator(g));
}

void check_state_invariance(const FockVector& omega, const ChargeOperator& q,
                            const ManyBodyIndexOptions& opts) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> angle(0.3, 6.0);
    const int n = omega.modes()->n_modes();
    for (int s = 0; s < opts.invariance_samples; ++s) {
        Vector f(n), g(n);
        for (int i = 0; i < n; ++i) {
            f(i) = Complex(gauss(rng), gauss(rng));
            g(i) = Complex(gauss(rng), gauss(rng));
        }
        f.normalize();
        g.normalize();
        const double t = angle(rng);
        const Complex direct = two_point(omega, f, g);
        const FockVector rotated = q.apply_phase(omega, -t);
        const Complex conjugated = two_point(rotated, f, g);
        if (std::abs(direct - conjugated) > opts.invariance_tol)
            throw Error(ErrorCode::NotInvariant,
                        "many_body_index: omega_1 fails the sampled e^{itQ} invariance check, "
                        "deviation " +
                            std::to_string(std::abs(direct - conjugated)));
    }
}

}  // namespace

double many_body_index(const FockVector& omega1, const FockOperator& u, const ChargeOperator& q,
                       const ManyBodyIndexOptions& opts) {
    ensure_same_modes(omega1.modes(), u.modes(), "many_body_index");
    ensure_same_modes(omega1.modes(), q.modes(), "many_body_index");
    if (!u.is_unitary(opts.unitary_tol))
        throw Error(ErrorCode::NotUnitary, "many_body_index: u fails the unitarity check");
    check_state_invariance(omega1, q, opts);

    // i omega(u* delta(u)) with delta(u) = i[Q, u]:
    //   = -( <u omega, Q u omega> - <u omega, u Q omega> ).
    const FockVector psi = u.apply(omega1);
    const Complex quu = psi.inner(q.apply(psi));
    const Complex uqu = psi.inner(u.apply(q.apply(omega1)));
    return -(quu - uqu).real();
}

double many_body_index(const QuasiFreeState& omega1, const FockOperator& u,
                       const ChargeOperator& q, const ManyBodyIndexOptions& opts) {
    return many_body_index(omega1.vector(), u, q, opts);
}

// ---- implementers ----------------------------------------------------------

namespace {

struct RankOneTerms {
    std::vector<double> sigma;
    Matrix f;  // creator vectors, columns
    Matrix g;  // annihilator vectors, columns
};

RankOneTerms rank_one_decomposition(const Matrix& a, double cutoff_rel = 1e-12) {
    const lapack_int m = static_cast<lapack_int>(a.rows());
    Matrix work = a;
    RealVector sv(m);
    Matrix u(m, m), vt(m, m);
    lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'A', m, m,
                                     reinterpret_cast<lapack_complex_double*>(work.data()), m,
                                     sv.data(), reinterpret_cast<lapack_complex_double*>(u.data()),
                                     m, reinterpret_cast<lapack_complex_double*>(vt.data()), m);
    if (info != 0)
        throw Error(ErrorCode::ConvergenceFailure, "rank_one_decomposition: zgesdd failed");
    RankOneTerms t;
    const double cutoff = cutoff_rel * std::max(1.0, sv.size() ? sv(0) : 0.0);
    int r = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv(k) > cutoff) ++r;
    t.sigma.resize(r);
    t.f.resize(m, r);
    t.g.resize(m, r);
    for (int k = 0; k < r; ++k) {
        t.sigma[k] = sv(k);
        t.f.col(k) = u.col(k);
        t.g.col(k) = vt.row(k).adjoint();  // B = sum sigma |f><g|
    }
    return t;
}

// Left-multiply a dense operator by a(f) or a*(f), column by column.
void left_apply_field(const Vector& f, bool creator, Matrix& m) {
    Vector out(m.rows());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out.setZero();
        for (int i = 0; i < f.size(); ++i) {
            if (f(i) == Complex(0)) continue;
            if (creator)
                accumulate_mode_creator(i, f(i), m.col(c), out);
            else
                accumulate_mode_annihilator(i, std::conj(f(i)), m.col(c), out);
        }
        m.col(c) = out;
    }
}

}  // namespace

FockOperator dGamma(const std::vector<Matrix>& ops, ModeSpacePtr modes) {
    ensure_dense_allowed(*modes, "dGamma");
    if (ops.empty()) return FockOperator::identity(modes);
    const int n_ops = static_cast<int>(ops.size());
    std::vector<RankOneTerms> terms;
    std::int64_t n_tuples = 1;
    for (const Matrix& a : ops) {
        if (a.rows() != modes->n_modes() || a.cols() != modes->n_modes())
            throw Error(ErrorCode::DimensionMismatch, "dGamma: operator does not act on the mode space");
        terms.push_back(rank_one_decomposition(a));
        n_tuples *= std::max<std::int64_t>(1, static_cast<std::int64_t>(terms.back().sigma.size()));
        if (n_tuples > 200000)
            throw Error(ErrorCode::TooManyModes, "dGamma: rank-one expansion too large");
    }
    const std::int64_t dim = modes->fock_dim();
    Matrix acc = Matrix::Zero(dim, dim);
    std::vector<int> idx(n_ops, 0);
    for (;;) {
        double coeff = 1.0;
        bool zero = false;
        for (int i = 0; i < n_ops; ++i) {
            if (terms[i].sigma.empty()) { zero = true; break; }
            coeff *= terms[i].sigma[idx[i]];
        }
        if (!zero) {
            // a*(f_n)...a*(f_1) a(g_1)...a(g_n): apply right to left.
            Matrix term = Matrix::Identity(dim, dim);
            for (int i = n_ops - 1; i >= 0; --i) left_apply_field(terms[i].g.col(idx[i]), false, term);
            for (int i = 0; i < n_ops; ++i) left_apply_field(terms[i].f.col(idx[i]), true, term);
            acc += coeff * term;
        }
        int carry = n_ops - 1;
        while (carry >= 0) {
            if (terms[carry].sigma.empty()) { carry = -1; break; }
            if (++idx[carry] < static_cast<int>(terms[carry].sigma.size())) break;
            idx[carry] = 0;
            --carry;
        }
        if (carry < 0) break;
    }
    return FockOperator(std::move(modes), std::move(acc));
}

FockOperator Gamma(const Matrix& v, ModeSpacePtr modes) {
    require_square(v, "Gamma");
    if (v.rows() != modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch, "Gamma: V does not act on the mode space");
    const double unit_res = operator_norm(v.adjoint() * v - Matrix::Identity(v.rows(), v.cols()));
    if (unit_res > defaults::unitary_tol)
        throw Error(ErrorCode::NotUnitary, "Gamma: ||V*V - 1|| = " + std::to_string(unit_res));
    ensure_dense_allowed(*modes, "Gamma");

    const RankOneTerms t = rank_one_decomposition(v - Matrix::Identity(v.rows(), v.cols()));
    const int r = static_cast<int>(t.sigma.size());
    if (r > 16)
        throw Error(ErrorCode::TooManyModes, "Gamma: rank(V - 1) = " + std::to_string(r) +
                                                 " too large for the series expansion");

    // By the CAR, repeated rank-one factors vanish and the n! orderings of a
    // distinct tuple coincide, so the series collapses to a sum over subsets
    // S of the rank-one terms of (prod_k sigma_k) dGamma(B_{k_m},...,B_{k_1}).
    const std::int64_t dim = modes->fock_dim();
    Matrix acc = Matrix::Identity(dim, dim);
    const std::uint32_t n_subsets = std::uint32_t(1) << r;
    Matrix term(dim, dim);
    for (std::uint32_t s = 1; s < n_subsets; ++s) {
        double coeff = 1.0;
        term.setIdentity();
        // annihilators a(g_{k_1})...a(g_{k_m}): rightmost has the largest k
        for (int k = r - 1; k >= 0; --k)
            if (s & (1u << k)) left_apply_field(t.g.col(k), false, term);
        for (int k = 0; k < r; ++k) {
            if (s & (1u << k)) {
                left_apply_field(t.f.col(k), true, term);
                coeff *= t.sigma[k];
            }
        }
        acc += coeff * term;
    }
    return FockOperator(std::move(modes), std::move(acc));
}

FockOperator excess_unitary(const Matrix& vectors, ModeSpacePtr modes) {
    ensure_dense_allowed(*modes, "excess_unitary");
    if (vectors.cols() == 0) return FockOperator::identity(modes);
    if (vectors.rows() != modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch, "excess_unitary: vector length mismatch");
    gram_residual_check(vectors, 1e-8, "excess_unitary");
    const std::int64_t dim = modes->fock_dim();
    Matrix m = Matrix::Identity(dim, dim);
    // v = F_1 F_2 ... F_m with F_k = a(f_k) + a*(f_k); right factor acts first.
    for (Eigen::Index k = vectors.cols() - 1; k >= 0; --k) {
        Matrix next = m;
        left_apply_field(vectors.col(k), false, next);
        Matrix cre = m;
        left_apply_field(vectors.col(k), true, cre);
        m = next + cre;
    }
    return FockOperator(std::move(modes), std::move(m));
}

FockOperator intertwiner(const Projection& p1, const Projection& p2, ModeSpacePtr modes) {
    if (p1.dim() != modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch, "intertwiner: P does not act on the mode space");
    const WoldDecomposition w = wold_decompose(p1, p2);
    const FockOperator v_plus = excess_unitary(w.plus_basis, modes);
    const FockOperator v_minus = excess_unitary(w.minus_basis, modes);
    return v_plus * v_minus * Gamma(w.V, modes);
}

double state_distance(const FockVector& omega1, const FockVector& omega2) {
    const Complex ov = omega2.inner(omega1);
    const double x = std::max(0.0, 1.0 - std::norm(ov));
    return 2.0 * std::sqrt(x);
}

// ---- stacking --------------------------------------------------------------

Matrix stack_one_particle(const Matrix& layer0, const Matrix& layer1) {
    require_square(layer0, "stack_one_particle");
    require_same_shape(layer0, layer1, "stack_one_particle");
    const Eigen::Index n = layer0.rows();
    Matrix out = Matrix::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            out(2 * i, 2 * j) = layer0(i, j);
            out(2 * i + 1, 2 * j + 1) = layer1(i, j);
        }
    return out;
}

Vector embed_one_particle(const Vector& f, int layer, int n_base) {
    if (f.size() != n_base)
        throw Error(ErrorCode::DimensionMismatch, "embed_one_particle: length mismatch");
    Vector out = Vector::Zero(2 * n_base);
    for (int i = 0; i < n_base; ++i) out(2 * i + layer) = f(i);
    return out;
}

namespace {

// Layer-pure orbitals of omega_P (x) omega_{P^perp}: occupied P-orbitals on
// layer 0 followed by occupied P^perp-orbitals on layer 1. Keeps the stacked
// vector an exact eigenvector of both layer charges.
Matrix stacked_orbitals(const Projection& p) {
    const int n = static_cast<int>(p.dim());
    EighResult es = eigh(p.matrix());
    Matrix orb(2 * n, n);
    int k = 0;
    for (int i = n - 1; i >= 0; --i)
        if (es.eigenvalues(i) > 0.5)
            orb.col(k++) = embed_one_particle(es.eigenvectors.col(i), 0, n);
    for (int i = 0; i < n; ++i)
        if (es.eigenvalues(i) <= 0.5)
            orb.col(k++) = embed_one_particle(es.eigenvectors.col(i), 1, n);
    return orb;
}

}  // namespace

FockVector stacked_state_vector(const Projection& p, ModeSpacePtr stacked_modes) {
    if (2 * p.dim() != stacked_modes->n_modes())
        throw Error(ErrorCode::DimensionMismatch,
                    "stacked_state_vector: mode space is not the doubled one-particle space");
    return FockVector::slater(std::move(stacked_modes), stacked_orbitals(p));
}

double stacked_index(const Projection& p, const FockOperator& u_hat,
                     const ManyBodyIndexOptions& opts) {
    const ModeSpacePtr& modes = u_hat.modes();
    const FockVector omega = stacked_state_vector(p, modes);
    ChargeOperator q(modes, modes->layer_modes(0));
    return many_body_index(omega, u_hat, q, opts);
}

double stacked_index_intertwined(const Projection& p, const Projection& p_prime, int cap) {
    require_same_shape(p.matrix(), p_prime.matrix(), "stacked_index_intertwined");
    const int n = static_cast<int>(p.dim());
    auto base = ModeSpace::chain(0, n - 1, cap);
    auto modes = std::make_shared<const ModeSpace>(ModeSpace::stacked(base, cap));

    const Projection p1 = validate_projection(stack_one_particle(p.matrix(), p.complement()));
    const Projection p2 =
        validate_projection(stack_one_particle(p_prime.matrix(), p_prime.complement()));
    const WoldDecomposition w = wold_decompose(p1, p2);

    // u = v_+ v_- Gamma(V) applied to the stacked vector: Gamma rotates the
    // Slater orbitals, the excess factors toggle single modes.
    const Matrix orbitals = stacked_orbitals(p);
    FockVector psi = FockVector::slater(modes, w.V * orbitals);
    for (Eigen::Index k = w.minus_basis.cols() - 1; k >= 0; --k)
        psi = psi.apply_excess(w.minus_basis.col(k));
    for (Eigen::Index k = w.plus_basis.cols() - 1; k >= 0; --k)
        psi = psi.apply_excess(w.plus_basis.col(k));
    if (std::abs(psi.norm() - 1.0) > 1e-9)
        throw Error(ErrorCode::UnitarityLoss,
                    "stacked_index_intertwined: transported vector norm drifted to " +
                        std::to_string(psi.norm()));

    ChargeOperator q(modes, modes->layer_modes(0));
    const double charge_before = double(p.rank());
    const double charge_after = psi.inner(q.apply(psi)).real();
    return charge_before - charge_after;
}

}  // namespace indexlab
