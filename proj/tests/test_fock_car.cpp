#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "indexlab/fock_car.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace indexlab;
using testutil::random_projection;
using testutil::random_unit_vector;
using testutil::random_unitary;

namespace {

ModeSpacePtr make_modes(int n) {
    return std::make_shared<const ModeSpace>(ModeSpace::chain(0, n - 1));
}

Projection diagonal_projection(const std::vector<double>& d) {
    Matrix m = Matrix::Zero(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return validate_projection(m);
}

}  // namespace

TEST_CASE("build_car: single mode ladder matrix is exact") {
    auto modes = make_modes(1);
    CarOperators car = build_car(modes);
    Matrix expected(2, 2);
    expected << 0, 1, 0, 0;
    CHECK((car.a[0].matrix() - expected).norm() == 0.0);
    CHECK((car.adag[0].matrix() - expected.adjoint()).norm() == 0.0);
}

TEST_CASE("build_car: all anticommutator identities hold exactly on two modes") {
    auto modes = make_modes(2);
    CarOperators car = build_car(modes);
    const Matrix id = Matrix::Identity(4, 4);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const Matrix aa = anticommutator(car.a[i], car.a[j]).matrix();
            const Matrix cc = anticommutator(car.adag[i], car.adag[j]).matrix();
            const Matrix ac = anticommutator(car.a[i], car.adag[j]).matrix();
            CHECK(aa.norm() == 0.0);
            CHECK(cc.norm() == 0.0);
            CHECK((ac - (i == j ? id : Matrix::Zero(4, 4))).norm() == 0.0);
        }
    }
}

TEST_CASE("build_car: {a_3, a*_3} = 1 exactly on eight modes") {
    auto modes = make_modes(8);
    CarOperators car = build_car(modes);
    const Matrix id = Matrix::Identity(256, 256);
    CHECK((anticommutator(car.a[3], car.adag[3]).matrix() - id).norm() == 0.0);
    CHECK(anticommutator(car.a[3], car.adag[5]).matrix().norm() == 0.0);
}

TEST_CASE("ModeSpace: cap and dense guard") {
    CHECK_THROWS_AS(ModeSpace::chain(0, 14), Error);  // 15 modes > default cap
    ModeSpace big = ModeSpace::chain(0, 13);          // 14 modes, allowed
    CHECK(big.n_modes() == 14);
    auto big_ptr = std::make_shared<const ModeSpace>(big);
    try {
        build_car(big_ptr);
        FAIL("dense guard should trigger");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooManyModes);
    }
}

TEST_CASE("ModeSpace: label lookup and stacking") {
    ModeSpace base = ModeSpace::patch(-1, 0, 0, 1, 1);
    CHECK(base.n_modes() == 4);
    CHECK(base.find({-1, 1, 0, 0}) == 1);
    CHECK_THROWS_AS(base.find({5, 5, 0, 0}), Error);

    ModeSpace st = ModeSpace::stacked(base);
    CHECK(st.n_modes() == 8);
    CHECK(st.layer_modes(0) == std::vector<int>({0, 2, 4, 6}));
    CHECK(st.layer_modes(1) == std::vector<int>({1, 3, 5, 7}));
}

TEST_CASE("annihilator_of: basis vectors, linearity, antilinearity") {
    auto modes = make_modes(3);
    CarOperators car = build_car(modes);

    Vector e2 = Vector::Zero(3);
    e2(1) = 1.0;
    CHECK((annihilator_of(e2, modes).matrix() - car.a[1].matrix()).norm() == 0.0);

    Vector mix = Vector::Zero(3);
    mix(0) = mix(1) = 1.0 / std::sqrt(2.0);
    Matrix expect = (car.a[0].matrix() + car.a[1].matrix()) / std::sqrt(2.0);
    CHECK((annihilator_of(mix, modes).matrix() - expect).norm() < 1e-15);

    Vector im = Vector::Zero(3);
    im(0) = Complex(0, 1);
    CHECK((annihilator_of(im, modes).matrix() + Complex(0, 1) * car.a[0].matrix()).norm() == 0.0);

    Vector wrong = Vector::Zero(4);
    CHECK_THROWS_AS(annihilator_of(wrong, modes), Error);

    // CAR with smeared fields: {a(f), a*(g)} = <f, g> 1
    std::mt19937_64 rng(4);
    Vector f = random_unit_vector(3, rng), g = random_unit_vector(3, rng);
    Matrix lhs = anticommutator(annihilator_of(f, modes), creator_of(g, modes)).matrix();
    CHECK((lhs - f.dot(g) * Matrix::Identity(8, 8)).norm() < 1e-12);
}

TEST_CASE("quasi_free_state: vacuum and filled modes") {
    auto modes = make_modes(2);
    CarOperators car = build_car(modes);

    QuasiFreeState vac(diagonal_projection({0, 0}), modes);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(std::abs(vac.evaluate(car.adag[i] * car.a[j])) < 1e-14);

    QuasiFreeState one(diagonal_projection({1, 0}), modes);
    CHECK(one.evaluate(car.adag[0] * car.a[0]).real() == doctest::Approx(1.0));
    CHECK(std::abs(one.evaluate(car.adag[1] * car.a[1])) < 1e-14);
}

TEST_CASE("quasi_free_state: two-point function equals <g, P f>") {
    std::mt19937_64 rng(9);
    auto modes = make_modes(5);
    Projection p = random_projection(5, 2, rng);
    QuasiFreeState omega(p, modes);
    for (int t = 0; t < 8; ++t) {
        Vector f = testutil::random_vector(5, rng), g = testutil::random_vector(5, rng);
        const Complex lhs = omega.evaluate(creator_of(f, modes) * annihilator_of(g, modes));
        const Complex rhs = g.dot(p.matrix() * f);
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("quasi_free_state: Wick determinant oracle agrees with vector evaluation") {
    std::mt19937_64 rng(19);
    auto modes = make_modes(5);
    Projection p = random_projection(5, 3, rng);
    QuasiFreeState omega(p, modes);
    for (int degree : {1, 2, 3}) {
        for (int rep = 0; rep < 4; ++rep) {
            std::vector<Vector> fs, gs;
            for (int k = 0; k < degree; ++k) {
                fs.push_back(testutil::random_vector(5, rng));
                gs.push_back(testutil::random_vector(5, rng));
            }
            const Complex via_vector = omega.evaluate(oracles::wick_monomial(fs, gs, modes));
            const Complex via_det = oracles::wick_determinant(p.matrix(), fs, gs);
            CHECK(std::abs(via_vector - via_det) < 1e-9);
        }
    }
    // unbalanced monomial vanishes
    std::vector<Vector> fs = {testutil::random_vector(5, rng)};
    std::vector<Vector> gs = {testutil::random_vector(5, rng), testutil::random_vector(5, rng)};
    CHECK(std::abs(omega.evaluate(oracles::wick_monomial(fs, gs, modes))) < 1e-12);
}

TEST_CASE("quasi_free_state: invariant under the full U(1) action") {
    std::mt19937_64 rng(29);
    auto modes = make_modes(4);
    Projection p = random_projection(4, 2, rng);
    QuasiFreeState omega(p, modes);
    ChargeOperator q = full_charge(modes);
    std::uniform_real_distribution<double> ts(0.0, 6.28);
    for (int rep = 0; rep < 5; ++rep) {
        const double t = ts(rng);
        Vector f = testutil::random_vector(4, rng), g = testutil::random_vector(4, rng);
        FockOperator a = creator_of(f, modes) * annihilator_of(g, modes);
        const Complex direct = omega.evaluate(a);
        const Complex rotated = omega.evaluate(q.conjugate_phase(a, t));
        CHECK(std::abs(direct - rotated) < 1e-10);
    }
}

TEST_CASE("charge_operator: spectrum, regions, errors") {
    auto modes = make_modes(2);
    ChargeOperator empty(modes, {});
    CHECK(empty.dense().matrix().norm() == 0.0);

    ChargeOperator full = full_charge(modes);
    Matrix expected = Matrix::Zero(4, 4);
    expected(1, 1) = 1;
    expected(2, 2) = 1;
    expected(3, 3) = 2;
    CHECK((full.dense().matrix() - expected).norm() == 0.0);

    // e^{2 pi i Q} = 1 exactly up to roundoff in the phases
    FockVector v(modes, Vector::Ones(4).normalized());
    FockVector rot = full.apply_phase(v, 2.0 * M_PI);
    CHECK((rot.coeffs() - v.coeffs()).norm() < 1e-14);

    CHECK_THROWS_AS(ChargeOperator(modes, {7}), Error);
    CHECK_THROWS_AS(ChargeOperator(modes, {0, 0}), Error);
}

TEST_CASE("charge_operator: stacked half region counts layer-0 modes only") {
    ModeSpace base = ModeSpace::chain(0, 1);
    auto st = std::make_shared<const ModeSpace>(ModeSpace::stacked(base));
    ChargeOperator q0(st, st->layer_modes(0));
    // Basis state with layer-0 mode 0 and layer-1 mode 1 occupied:
    // stacked modes 0 and 3, index า b = 1 + 8 = 9.
    CHECK(q0.charge_of_basis_state(9) == 1);
    CHECK(q0.charge_of_basis_state(0b0101) == 2);  // both layer-0 modes
    CHECK(q0.charge_of_basis_state(0b1010) == 0);  // both layer-1 modes
}

TEST_CASE("charge_operator: commutes with parity") {
    auto modes = make_modes(3);
    ChargeOperator q(modes, {0, 2});
    FockOperator qd = q.dense();
    // parity = e^{i pi N}
    FockOperator parity(modes, expm_antihermitian(full_charge(modes).dense().matrix(), M_PI));
    CHECK(commutator(qd, parity).matrix().norm() < 1e-12);
}

TEST_CASE("delta_rho: identity, shift unitary, charge-neutral monomial") {
    auto modes = make_modes(3);
    CarOperators car = build_car(modes);
    ChargeOperator q = full_charge(modes);

    CHECK(delta_rho(FockOperator::identity(modes), q).matrix().norm() == 0.0);

    FockOperator u = car.a[0] + car.adag[0];
    FockOperator lhs = Complex(0, -1) * delta_rho(u, q);
    FockOperator rhs = Complex(-1, 0) * car.a[0] + car.adag[0];
    CHECK((lhs.matrix() - rhs.matrix()).norm() < 1e-14);

    FockOperator neutral = car.adag[1] * car.a[2];
    CHECK(delta_rho(neutral, q).matrix().norm() == 0.0);

    // delta_rho against the dense commutator route
    std::mt19937_64 rng(31);
    FockOperator a(modes, testutil::random_matrix(8, rng));
    FockOperator direct = delta_rho(a, q);
    FockOperator viadense = Complex(0, 1) * commutator(q.dense(), a);
    CHECK((direct.matrix() - viadense.matrix()).norm() < 1e-12);
}

TEST_CASE("many_body_index: u = 1 gives zero; shift example gives -1") {
    // chain -4..4, P = chi_{x >= 1}, u = a_0 + a*_0
    auto modes = std::make_shared<const ModeSpace>(ModeSpace::chain(-4, 4));
    std::vector<double> diag(9, 0.0);
    for (int x = 1; x <= 4; ++x) diag[x + 4] = 1.0;
    Projection p = diagonal_projection(diag);
    QuasiFreeState omega(p, modes);
    ChargeOperator q = full_charge(modes);

    CHECK(std::abs(many_body_index(omega, FockOperator::identity(modes), q)) < 1e-12);

    CarOperators car = build_car(modes);
    FockOperator u = car.a[4] + car.adag[4];  // site 0
    CHECK(many_body_index(omega, u, q) == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("many_body_index: error paths") {
    auto modes = make_modes(3);
    Projection p = diagonal_projection({1, 0, 0});
    QuasiFreeState omega(p, modes);
    ChargeOperator q = full_charge(modes);

    FockOperator not_unitary(modes, 0.5 * Matrix::Identity(8, 8));
    CHECK_THROWS_AS(many_body_index(omega, not_unitary, q), Error);

    // A state that is not invariant under a regional charge: P mixes the
    // region {0} with its complement.
    std::mt19937_64 rng(41);
    Matrix h = testutil::random_hermitian(3, rng);
    Projection pmix = spectral_projection_below(h, eigh(h).eigenvalues(1) + 0.1);
    QuasiFreeState omega_mix(pmix, modes);
    ChargeOperator q0(modes, {0});
    try {
        many_body_index(omega_mix, FockOperator::identity(modes), q0);
        FAIL("expected NotInvariant");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotInvariant);
    }
}

TEST_CASE("dGamma: rank-one definition and projector case") {
    auto modes = make_modes(4);
    CarOperators car = build_car(modes);
    std::mt19937_64 rng(51);

    Matrix e11 = Matrix::Zero(4, 4);
    e11(0, 0) = 1.0;
    CHECK((dGamma({e11}, modes).matrix() - (car.adag[0] * car.a[0]).matrix()).norm() < 1e-14);

    Vector f = testutil::random_vector(4, rng), g = testutil::random_vector(4, rng);
    Matrix fg = f * g.adjoint();
    FockOperator expect = creator_of(f, modes) * annihilator_of(g, modes);
    CHECK((dGamma({fg}, modes).matrix() - expect.matrix()).norm() < 1e-10);
}

TEST_CASE("dGamma: independent of the rank-one decomposition") {
    auto modes = make_modes(4);
    std::mt19937_64 rng(61);
    // random rank-2 operator
    Vector a1 = testutil::random_vector(4, rng), b1 = testutil::random_vector(4, rng);
    Vector a2 = testutil::random_vector(4, rng), b2 = testutil::random_vector(4, rng);
    Matrix a = a1 * b1.adjoint() + a2 * b2.adjoint();

    FockOperator via_svd = dGamma({a, a}, modes);

    // manual expansion over the non-orthogonal split
    Matrix manual = Matrix::Zero(16, 16);
    std::vector<Vector> fs = {a1, a2}, gs = {b1, b2};
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            // dGamma(|f_j><g_j|, |f_k><g_k|) = a*(f_k) a*(f_j) a(g_j) a(g_k)
            FockOperator term = creator_of(fs[k], modes) * creator_of(fs[j], modes) *
                                annihilator_of(gs[j], modes) * annihilator_of(gs[k], modes);
            manual += term.matrix();
        }
    CHECK((via_svd.matrix() - manual).norm() < 1e-10);
}

TEST_CASE("dGamma: norm bound by the product of trace norms") {
    auto modes = make_modes(4);
    std::mt19937_64 rng(71);
    for (int rep = 0; rep < 4; ++rep) {
        Matrix a = testutil::random_matrix(4, rng);
        Matrix b = testutil::random_matrix(4, rng);
        FockOperator d = dGamma({a, b}, modes);
        CHECK(d.norm() <= trace_norm(a) * trace_norm(b) * (1 + 1e-10));
    }
}

TEST_CASE("Gamma: identity and rank-one phase") {
    auto modes = make_modes(4);
    CarOperators car = build_car(modes);
    CHECK((Gamma(Matrix::Identity(4, 4), modes).matrix() - Matrix::Identity(16, 16)).norm() == 0.0);

    const double theta = 0.77;
    Matrix v = Matrix::Identity(4, 4);
    v(0, 0) = std::polar(1.0, theta);
    Matrix expect = Matrix::Identity(16, 16) +
                    (std::polar(1.0, theta) - 1.0) * (car.adag[0] * car.a[0]).matrix();
    CHECK((Gamma(v, modes).matrix() - expect).norm() < 1e-12);
}

TEST_CASE("Gamma: matches the literal truncating series") {
    auto modes = make_modes(4);
    std::mt19937_64 rng(81);
    // unitary with rank(V - 1) = 2: rotate inside a 2d subspace
    Matrix h = Matrix::Zero(4, 4);
    h.topLeftCorner(2, 2) = testutil::random_hermitian(2, rng);
    Matrix v = expm_antihermitian(h, 1.0);
    Matrix b = v - Matrix::Identity(4, 4);

    Matrix series = Matrix::Identity(16, 16);
    double factorial = 1.0;
    for (int n = 1; n <= 4; ++n) {
        factorial *= n;
        series += dGamma(std::vector<Matrix>(n, b), modes).matrix() / factorial;
    }
    FockOperator g = Gamma(v, modes);
    CHECK((g.matrix() - series).norm() < 1e-10);
    // series truncates at rank(V-1): the n = 3 term vanishes
    CHECK(dGamma({b, b, b}, modes).matrix().norm() < 1e-10);
}

TEST_CASE("Gamma: intertwining, unitarity, exponential oracle") {
    auto modes = make_modes(5);
    std::mt19937_64 rng(91);
    for (int rep = 0; rep < 3; ++rep) {
        Matrix v = random_unitary(5, rng);
        FockOperator g = Gamma(v, modes);
        CHECK(g.is_unitary(1e-9));
        Vector f = testutil::random_vector(5, rng);
        FockOperator lhs = g * creator_of(f, modes);
        FockOperator rhs = creator_of(v * f, modes) * g;
        CHECK((lhs.matrix() - rhs.matrix()).norm() < 1e-9);

        FockOperator oracle = oracles::gamma_exponential(v, modes);
        CHECK((g.matrix() - oracle.matrix()).norm() < 1e-9);
    }
}

TEST_CASE("Gamma: rejects a non-unitary argument") {
    auto modes = make_modes(3);
    Matrix v = 0.9 * Matrix::Identity(3, 3);
    try {
        Gamma(v, modes);
        FAIL("expected NotUnitary");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotUnitary);
    }
}

TEST_CASE("excess_unitary: empty, single, pair") {
    auto modes = make_modes(3);
    CarOperators car = build_car(modes);

    CHECK((excess_unitary(Matrix::Zero(3, 0), modes).matrix() - Matrix::Identity(8, 8)).norm() ==
          0.0);

    Vector e0 = Vector::Zero(3);
    e0(0) = 1.0;
    FockOperator v1 = excess_unitary(e0, modes);
    CHECK((v1.matrix() - (car.a[0] + car.adag[0]).matrix()).norm() == 0.0);
    CHECK(((v1 * v1).matrix() - Matrix::Identity(8, 8)).norm() < 1e-14);

    std::mt19937_64 rng(111);
    Matrix pair_basis = random_unitary(3, rng).leftCols(2);
    FockOperator v2 = excess_unitary(pair_basis, modes);
    CHECK(v2.is_unitary(1e-10));
    Matrix swapped(3, 2);
    swapped.col(0) = pair_basis.col(1);
    swapped.col(1) = pair_basis.col(0);
    CHECK((v2.matrix() + excess_unitary(swapped, modes).matrix()).norm() < 1e-12);

    Matrix not_on(3, 2);
    not_on.col(0) = e0;
    not_on.col(1) = 0.5 * e0;
    CHECK_THROWS_AS(excess_unitary(not_on, modes), Error);
}

TEST_CASE("intertwiner: equal projections give an omega-preserving unitary") {
    std::mt19937_64 rng(121);
    auto modes = make_modes(4);
    Projection p = random_projection(4, 2, rng);
    FockOperator u = intertwiner(p, p, modes);
    QuasiFreeState omega(p, modes);
    for (int rep = 0; rep < 5; ++rep) {
        Vector f = testutil::random_vector(4, rng), g = testutil::random_vector(4, rng);
        FockOperator a = creator_of(f, modes) * annihilator_of(g, modes);
        const Complex conj = omega.evaluate(u.adjoint() * a * u);
        CHECK(std::abs(conj - omega.evaluate(a)) < 1e-10);
    }
}

TEST_CASE("intertwiner: shift example reproduces omega_{P_R} on all a*_m a_n") {
    auto modes = std::make_shared<const ModeSpace>(ModeSpace::chain(-3, 3));
    std::vector<double> dp(7, 0.0), dr(7, 0.0);
    for (int x = -3; x <= 3; ++x) {
        if (x >= 1) dp[x + 3] = 1.0;
        if (x >= 0) dr[x + 3] = 1.0;
    }
    Projection p = diagonal_projection(dp), pr = diagonal_projection(dr);
    FockOperator u = intertwiner(p, pr, modes);
    QuasiFreeState omega_p(p, modes);
    CarOperators car = build_car(modes);
    for (int m = 0; m < 7; ++m)
        for (int n = 0; n < 7; ++n) {
            const Complex lhs = omega_p.evaluate(u.adjoint() * (car.adag[m] * car.a[n]) * u);
            const Complex rhs = (m == n ? Complex(dr[m]) : Complex(0));
            CHECK(std::abs(lhs - rhs) < 1e-9);
        }
}

TEST_CASE("intertwiner: conjugated two-point function equals <g, P2 f>") {
    std::mt19937_64 rng(131);
    auto modes = make_modes(6);
    std::uniform_int_distribution<int> ranks(1, 5);
    for (int rep = 0; rep < 3; ++rep) {
        Projection p1 = random_projection(6, ranks(rng), rng);
        Projection p2 = random_projection(6, ranks(rng), rng);
        FockOperator u = intertwiner(p1, p2, modes);
        CHECK(u.is_unitary(1e-9));
        QuasiFreeState omega1(p1, modes);
        for (int s = 0; s < 4; ++s) {
            Vector f = testutil::random_vector(6, rng), g = testutil::random_vector(6, rng);
            FockOperator a = creator_of(f, modes) * annihilator_of(g, modes);
            const Complex lhs = omega1.evaluate(u.adjoint() * a * u);
            const Complex rhs = g.dot(p2.matrix() * f);
            CHECK(std::abs(lhs - rhs) < 1e-8);
        }
    }
}

TEST_CASE("state_distance: coincident, orthogonal, 0.6 overlap") {
    auto modes = make_modes(2);
    Vector v1 = Vector::Zero(4), v2 = Vector::Zero(4);
    v1(0) = 1.0;
    v2(1) = 1.0;
    FockVector a(modes, v1), b(modes, v2);
    CHECK(state_distance(a, a) == 0.0);
    CHECK(state_distance(a, b) == doctest::Approx(2.0));

    Vector v3 = Vector::Zero(4);
    v3(0) = 0.6;
    v3(1) = 0.8;
    FockVector c(modes, v3);
    CHECK(state_distance(a, c) == doctest::Approx(1.6).epsilon(1e-12));
}
