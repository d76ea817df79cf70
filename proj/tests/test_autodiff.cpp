#include "angio/autodiff.hpp"
#include "angio/optim.hpp"
#include "angio/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace angio;

namespace {

// FD check for a scalar-valued graph of one differentiable input
double check_fd(const std::function<ad::Value(ad::Tape&, ad::Value)>& build, const MatX& x0,
                double h = 1e-5) {
    ad::Tape t;
    const ad::Value x = t.leaf(x0, true);
    const ad::Value y = build(t, x);
    t.backward(y);
    const MatX analytic = t.grad(x);

    const MatX numeric = oracles::finite_difference(
        [&](const MatX& xv) {
            ad::Tape tt;
            const ad::Value xx = tt.leaf(xv, false);
            return tt.scalar(build(tt, xx));
        },
        x0, h);
    return oracles::max_rel_err(analytic, numeric);
}

} // namespace

TEST_CASE("d(x^2)/dx = 2x") {
    ad::Tape t;
    MatX x(1, 1);
    x(0, 0) = 3.0;
    const ad::Value v = t.leaf(x, true);
    const ad::Value y = t.mul(v, v);
    t.backward(y);
    CHECK(t.grad(v)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("sum(relu(W x)) gradient matches finite differences") {
    Rng rng(3);
    const MatX w0 = oracles::random_matrix(8, 8, rng);
    const MatX x = oracles::random_matrix(8, 4, rng);
    const double err = check_fd(
        [&](ad::Tape& t, ad::Value w) { return t.sum(t.relu(t.matmul(w, t.constant(x)))); },
        w0);
    CHECK(err < 1e-6);
}

TEST_CASE("gradient of the norm of a normalized vector vanishes") {
    Rng rng(5);
    const MatX v0 = oracles::random_matrix(1, 3, rng);
    ad::Tape t;
    const ad::Value v = t.leaf(v0, true);
    const ad::Value y = t.norm_l2(t.normalize_rows(v));
    t.backward(y);
    CHECK(t.scalar(y) == doctest::Approx(1.0));
    CHECK(t.grad(v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("primitive gradients match finite differences") {
    Rng rng(7);
    const MatX a0 = oracles::random_matrix(5, 3, rng);
    const MatX b0 = oracles::random_matrix(5, 3, rng);
    const MatX m0 = oracles::random_matrix(4, 5, rng);

    SUBCASE("add/sub/mul/scale") {
        const double err = check_fd(
            [&](ad::Tape& t, ad::Value a) {
                const ad::Value b = t.constant(b0);
                return t.sum(t.mul(t.add(a, b), t.scale(t.sub(a, b), 0.7)));
            },
            a0);
        CHECK(err < 1e-6);
    }
    SUBCASE("matmul both sides") {
        CHECK(check_fd([&](ad::Tape& t, ad::Value m) {
                  return t.sum(t.matmul(m, t.constant(a0)));
              }, m0) < 1e-6);
        CHECK(check_fd([&](ad::Tape& t, ad::Value a) {
                  return t.sum(t.matmul(t.constant(m0), a));
              }, a0) < 1e-6);
    }
    SUBCASE("sparse-dense matmul") {
        std::vector<std::array<int, 2>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}};
        const ad::SpMat s = ad::normalized_adjacency(5, edges);
        CHECK(check_fd([&](ad::Tape& t, ad::Value a) { return t.sum(t.spmm(s, a)); }, a0) <
              1e-6);
    }
    SUBCASE("sigmoid, abs, sqrt, mean") {
        CHECK(check_fd([&](ad::Tape& t, ad::Value a) { return t.mean(t.sigmoid(a)); }, a0) <
              1e-6);
        CHECK(check_fd([&](ad::Tape& t, ad::Value a) { return t.sum(t.abs(a)); }, a0) < 1e-5);
        CHECK(check_fd(
                  [&](ad::Tape& t, ad::Value a) {
                      return t.sum(t.sqrt_ew(t.add_scalar(t.mul(a, a), 1.0)));
                  },
                  a0) < 1e-6);
    }
    SUBCASE("gather, cross, rows_dot, normalize_rows") {
        // keep the cross products well away from zero so finite differences
        // stay conditioned through the normalization
        MatX ac = a0;
        MatX bc = b0;
        for (int i = 0; i < 5; ++i) {
            ac.row(i) += 3.0 * Eigen::RowVector3d(1, 0, 0);
            bc.row(i) += 3.0 * Eigen::RowVector3d(0, 1, 0);
        }
        const MatX probe = oracles::random_matrix(5, 3, rng);
        const std::vector<int> idx = {0, 2, 2, 4, 1};
        const double err = check_fd(
            [&](ad::Tape& t, ad::Value a) {
                const ad::Value g = t.gather_rows(a, idx);
                const ad::Value c = t.cross_rows(g, t.constant(bc));
                return t.sum(t.rows_dot(t.normalize_rows(c), t.constant(probe)));
            },
            ac);
        CHECK(err < 1e-4);
    }
    SUBCASE("norm_l2") {
        CHECK(check_fd([&](ad::Tape& t, ad::Value a) { return t.norm_l2(a); }, a0) < 1e-6);
    }
}

TEST_CASE("gather gradient is invariant under index permutation") {
    Rng rng(11);
    const MatX a0 = oracles::random_matrix(6, 3, rng);
    auto grad_for = [&](std::vector<int> idx) {
        ad::Tape t;
        const ad::Value a = t.leaf(a0, true);
        const ad::Value y = t.sum(t.mul(t.gather_rows(a, idx), t.gather_rows(a, idx)));
        t.backward(y);
        return MatX(t.grad(a));
    };
    const MatX g1 = grad_for({0, 1, 2, 3, 4, 5});
    const MatX g2 = grad_for({5, 3, 1, 0, 2, 4});
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward rejects non-scalar outputs") {
    ad::Tape t;
    const ad::Value a = t.leaf(MatX::Ones(2, 2), true);
    CHECK_THROWS_AS(t.backward(a), InvalidInput);
}

TEST_CASE("adam: zero gradient leaves fresh parameters, decays moments") {
    MatX p = MatX::Ones(2, 2);
    MatX m, v;
    const MatX p0 = p;
    adam_step(p, MatX::Zero(2, 2), m, v, 1, 1e-3);
    CHECK((p - p0).cwiseAbs().maxCoeff() == 0.0);

    // after a real step, a zero-gradient step decays both moments by beta
    adam_step(p, MatX::Ones(2, 2), m, v, 2, 1e-3);
    const MatX m_before = m, v_before = v;
    adam_step(p, MatX::Zero(2, 2), m, v, 3, 1e-3);
    CHECK((m - 0.9 * m_before).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((v - 0.999 * v_before).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("adam: first step moves by -lr * sign(grad)") {
    Rng rng(13);
    MatX p = MatX::Zero(3, 3);
    MatX g = oracles::random_matrix(3, 3, rng);
    for (long i = 0; i < 9; ++i)
        if (std::abs(g(i / 3, i % 3)) < 0.1) g(i / 3, i % 3) = 0.5; // keep |g| away from eps
    MatX m, v;
    const double lr = 1e-3;
    adam_step(p, g, m, v, 1, lr);
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 3; ++j)
            CHECK(p(i, j) == doctest::Approx(-lr * (g(i, j) > 0 ? 1.0 : -1.0)).epsilon(1e-5));
}

TEST_CASE("adam: mirrored gradients give mirrored parameters") {
    Rng rng(17);
    const MatX g = oracles::random_matrix(4, 4, rng);
    MatX p1 = MatX::Zero(4, 4), m1, v1;
    MatX p2 = MatX::Zero(4, 4), m2, v2;
    for (int s = 1; s <= 2; ++s) {
        adam_step(p1, g, m1, v1, s, 1e-3);
        adam_step(p2, MatX(-g), m2, v2, s, 1e-3);
    }
    CHECK((p1 + p2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("adam with lr = 0 is the identity") {
    Rng rng(19);
    MatX p = oracles::random_matrix(3, 5, rng);
    const MatX p0 = p;
    MatX m, v;
    adam_step(p, oracles::random_matrix(3, 5, rng), m, v, 1, 0.0);
    CHECK((p - p0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("optimizer flags non-finite gradients with the block name") {
    MatX p = MatX::Ones(2, 2);
    AdamOptimizer opt;
    opt.add_block("enc.l0.c0.w", &p);
    MatX bad = MatX::Ones(2, 2);
    bad(1, 1) = std::nan("");
    try {
        opt.step({&bad}, 1e-3);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("enc.l0.c0.w") != std::string::npos);
    }
}

TEST_CASE("lr_schedule values") {
    CHECK(lr_schedule(0) == doctest::Approx(0.001));
    CHECK(lr_schedule(1, 0.001, 0.99) == doctest::Approx(0.00099));
    CHECK(lr_schedule(100, 0.001, 0.96) == doctest::Approx(0.001 * std::pow(0.96, 100)));
    CHECK_THROWS_AS(lr_schedule(-1), InvalidInput);
}
