#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "biaxis/model.hpp"
#include "biaxis/optim.hpp"
#include "biaxis/rng.hpp"

using namespace biaxis;

namespace {

// Test-only oracle: minimize the weighted prox objective restricted to the
// stationarity curve x(theta) by iteratively refined 1-D grid search over
// theta in [0, ||v||], including the theta = 0 (all-zero) candidate.
Vector brute_force_weighted_prox(const Vector& v, const Vector& d, double tau) {
    const std::size_t n = v.size();
    auto x_at = [&](double theta) {
        Vector x(n, 0.0);
        if (theta <= 0.0) return x;
        for (std::size_t i = 0; i < n; ++i) x[i] = d[i] * v[i] * theta / (d[i] * theta + tau);
        return x;
    };
    auto objective = [&](const Vector& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += 0.5 * d[i] * (x[i] - v[i]) * (x[i] - v[i]);
        return s + tau * norm2(x);
    };
    double lo = 0.0, hi = norm2(v);
    if (hi == 0.0) return Vector(n, 0.0);
    double best_theta = 0.0;
    for (int round = 0; round < 5; ++round) {
        const int grid = 4000;
        double best_obj = std::numeric_limits<double>::infinity();
        double local_best = lo;
        for (int i = 0; i <= grid; ++i) {
            const double theta = lo + (hi - lo) * i / grid;
            const double obj = objective(x_at(theta));
            if (obj < best_obj) {
                best_obj = obj;
                local_best = theta;
            }
        }
        best_theta = local_best;
        const double cell = (hi - lo) / grid;
        lo = std::max(0.0, best_theta - 2.0 * cell);
        hi = std::min(norm2(v), best_theta + 2.0 * cell);
    }
    Vector x_curve = x_at(best_theta);
    return objective(x_curve) <= objective(Vector(n, 0.0)) ? x_curve : Vector(n, 0.0);
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.d = 4;
    c.h1 = 3;
    c.h2 = 2;
    return c;
}

} // namespace

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
    ModelConfig c = tiny_config();
    RotationGAE m = RotationGAE::init(c, 5);
    const RotationGAE before = m;
    AdamState adam = AdamState::init(c, 1e-3);
    adam_step(adam, m, ModelGrads::zeros(c));
    REQUIRE(m.r.data() == before.r.data());
    REQUIRE(m.w0.data() == before.w0.data());
    REQUIRE(m.b0 == before.b0);
    REQUIRE(m.w1.data() == before.w1.data());
    REQUIRE(m.b1 == before.b1);
}

TEST_CASE("adam: first step magnitude is ~r for any nonzero gradient") {
    ModelConfig c = tiny_config();
    for (double g : {0.3, -2.0, 1e-3}) {
        RotationGAE m = RotationGAE::init(c, 6);
        const double before = m.w0(0, 0);
        AdamState adam = AdamState::init(c, 1e-3);
        ModelGrads grads = ModelGrads::zeros(c);
        grads.w0(0, 0) = g;
        adam_step(adam, m, grads);
        // bias-corrected first step: r * g / (|g| + eps)
        const double expect = 1e-3 * std::abs(g) / (std::abs(g) + 1e-8);
        REQUIRE(std::abs(m.w0(0, 0) - before) == Catch::Approx(expect).epsilon(1e-9));
        REQUIRE((g > 0 ? before - m.w0(0, 0) : m.w0(0, 0) - before) > 0.0);
    }
}

TEST_CASE("adam: identical seeds and gradients give bitwise-identical parameters") {
    ModelConfig c = tiny_config();
    Rng rng(17);
    std::vector<ModelGrads> history;
    for (int s = 0; s < 5; ++s) {
        ModelGrads g = ModelGrads::zeros(c);
        for (double& v : g.r.data()) v = rng.normal();
        for (double& v : g.w0.data()) v = rng.normal();
        for (double& v : g.b0) v = rng.normal();
        for (double& v : g.w1.data()) v = rng.normal();
        for (double& v : g.b1) v = rng.normal();
        history.push_back(std::move(g));
    }
    auto run = [&]() {
        RotationGAE m = RotationGAE::init(c, 9);
        AdamState adam = AdamState::init(c, 3e-4);
        for (const auto& g : history) adam_step(adam, m, g);
        return m;
    };
    const RotationGAE a = run();
    const RotationGAE b = run();
    REQUIRE(a.r.data() == b.r.data());
    REQUIRE(a.w0.data() == b.w0.data());
    REQUIRE(a.b0 == b.b0);
    REQUIRE(a.w1.data() == b.w1.data());
    REQUIRE(a.b1 == b.b1);
}

TEST_CASE("prox_row block soft-threshold") {
    SECTION("shrink factor 1 - tau/norm") {
        const Vector out = prox_row({3.0, 4.0}, 1.0);
        REQUIRE(out[0] == Catch::Approx(2.4).margin(1e-15));
        REQUIRE(out[1] == Catch::Approx(3.2).margin(1e-15));
    }
    SECTION("norm at the threshold boundary zeroes the row") {
        const Vector out = prox_row({3.0, 4.0}, 5.0);
        REQUIRE(out == Vector{0.0, 0.0});
    }
    SECTION("tau = 0 is the identity") {
        const Vector v{0.5, -1.5, 2.0};
        REQUIRE(prox_row(v, 0.0) == v);
    }
    SECTION("negative tau is rejected") {
        REQUIRE_THROWS_AS(prox_row({1.0}, -0.1), input_error);
    }
}

TEST_CASE("prox_row properties on random inputs") {
    Rng rng(101);
    for (int rep = 0; rep < 10000; ++rep) {
        const std::size_t n = 1 + rng.below(6);
        Vector u(n), v(n);
        for (double& x : u) x = rng.normal(0.0, 2.0);
        for (double& x : v) x = rng.normal(0.0, 2.0);
        const double tau = rng.uniform(0.0, 3.0);

        // non-expansive
        const Vector pu = prox_row(u, tau);
        const Vector pv = prox_row(v, tau);
        double d_in = 0.0, d_out = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d_in += (u[i] - v[i]) * (u[i] - v[i]);
            d_out += (pu[i] - pv[i]) * (pu[i] - pv[i]);
        }
        REQUIRE(std::sqrt(d_out) <= std::sqrt(d_in) + 1e-12);

        // output norm = max(0, ||v|| - tau)
        REQUIRE(norm2(pv) == Catch::Approx(std::max(0.0, norm2(v) - tau)).margin(1e-12));
    }
}

TEST_CASE("prox_row_weighted reduces to prox_row under uniform metrics") {
    Rng rng(55);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rng.below(6);
        Vector v(n);
        for (double& x : v) x = rng.normal(0.0, 2.0);
        const double c = rng.uniform(0.2, 5.0);
        const double tau = rng.uniform(0.0, 3.0);
        const Vector uniform(n, c);
        const Vector weighted = prox_row_weighted(v, uniform, tau);
        const Vector plain = prox_row(v, tau / c);
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(weighted[i] == Catch::Approx(plain[i]).margin(1e-10));
        }
    }
}

TEST_CASE("prox_row_weighted zero condition and stationarity") {
    Rng rng(66);
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t n = 1 + rng.below(6);
        Vector v(n), d(n);
        for (double& x : v) x = rng.normal(0.0, 2.0);
        for (double& x : d) x = rng.uniform(0.1, 4.0);
        const double tau = rng.uniform(0.0, 4.0);
        const Vector x = prox_row_weighted(v, d, tau);

        double dv_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) dv_norm += d[i] * v[i] * d[i] * v[i];
        dv_norm = std::sqrt(dv_norm);

        if (norm2(x) == 0.0) {
            REQUIRE(dv_norm <= tau + 1e-9);
        } else {
            // stationarity: diag(d)(x - v) + tau x/||x|| = 0
            const double xn = norm2(x);
            for (std::size_t i = 0; i < n; ++i) {
                const double res = d[i] * (x[i] - v[i]) + tau * x[i] / xn;
                REQUIRE(std::abs(res) < 1e-8);
            }
        }
    }
}

TEST_CASE("prox_row_weighted agrees with the brute-force grid oracle") {
    SECTION("the hand instance d=(1,4), v=(3,4), tau=2") {
        const Vector x = prox_row_weighted({3.0, 4.0}, {1.0, 4.0}, 2.0);
        const Vector oracle = brute_force_weighted_prox({3.0, 4.0}, {1.0, 4.0}, 2.0);
        for (std::size_t i = 0; i < 2; ++i) {
            REQUIRE(x[i] == Catch::Approx(oracle[i]).margin(1e-8));
        }
    }
    SECTION("random instances") {
        Rng rng(77);
        for (int rep = 0; rep < 50; ++rep) {
            const std::size_t n = 1 + rng.below(5);
            Vector v(n), d(n);
            for (double& x : v) x = rng.normal(0.0, 2.0);
            for (double& x : d) x = rng.uniform(0.1, 5.0);
            const double tau = rng.uniform(0.0, 2.5);
            const Vector got = prox_row_weighted(v, d, tau);
            const Vector oracle = brute_force_weighted_prox(v, d, tau);
            for (std::size_t i = 0; i < n; ++i) {
                REQUIRE(got[i] == Catch::Approx(oracle[i]).margin(1e-8));
            }
        }
    }
}

TEST_CASE("prox_row_weighted input validation") {
    REQUIRE_THROWS_AS(prox_row_weighted({1.0, 2.0}, {1.0}, 0.5), dimension_error);
    REQUIRE_THROWS_AS(prox_row_weighted({1.0}, {0.0}, 0.5), input_error);
    REQUIRE_THROWS_AS(prox_row_weighted({1.0}, {-1.0}, 0.5), input_error);
}

TEST_CASE("apply_structured_prox") {
    ModelConfig c = tiny_config();

    SECTION("lambda_s = 0 leaves W0 untouched") {
        RotationGAE m = RotationGAE::init(c, 12);
        const Matrix before = m.w0;
        AdamState adam = AdamState::init(c, 1e-3);
        ProxConfig prox;
        prox.lambda_s = 0.0;
        apply_structured_prox(m, adam, prox);
        REQUIRE(m.w0.data() == before.data());
    }
    SECTION("a zero row stays exactly zero") {
        RotationGAE m = RotationGAE::init(c, 13);
        for (std::size_t j = 0; j < c.h1; ++j) m.w0(1, j) = 0.0;
        AdamState adam = AdamState::init(c, 1e-3);
        adam.t = 3;  // non-trivial bias correction
        for (double& v : adam.w0.v) v = 0.01;
        ProxConfig prox;
        prox.lambda_s = 0.1;
        for (ProxMode mode : {ProxMode::kClosedForm, ProxMode::kWeightedNewton}) {
            prox.mode = mode;
            RotationGAE copy = m;
            apply_structured_prox(copy, adam, prox);
            for (std::size_t j = 0; j < c.h1; ++j) REQUIRE(copy.w0(1, j) == 0.0);
        }
    }
    SECTION("commutes with row permutation of W0") {
        Rng rng(14);
        RotationGAE m = RotationGAE::init(c, 14);
        AdamState adam = AdamState::init(c, 1e-3);
        adam.t = 5;
        for (double& v : adam.w0.v) v = rng.uniform(1e-6, 1e-2);
        ProxConfig prox;
        prox.lambda_s = 0.5;

        std::vector<std::size_t> perm(c.d);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);

        for (ProxMode mode : {ProxMode::kClosedForm, ProxMode::kWeightedNewton}) {
            prox.mode = mode;
            RotationGAE plain = m;
            apply_structured_prox(plain, adam, prox);

            RotationGAE permuted = m;
            AdamState adam_perm = adam;
            for (std::size_t i = 0; i < c.d; ++i) {
                for (std::size_t j = 0; j < c.h1; ++j) {
                    permuted.w0(i, j) = m.w0(perm[i], j);
                    adam_perm.w0.v[i * c.h1 + j] = adam.w0.v[perm[i] * c.h1 + j];
                }
            }
            apply_structured_prox(permuted, adam_perm, prox);
            for (std::size_t i = 0; i < c.d; ++i) {
                for (std::size_t j = 0; j < c.h1; ++j) {
                    REQUIRE(permuted.w0(i, j) == Catch::Approx(plain.w0(perm[i], j)).margin(1e-14));
                }
            }
        }
    }
}

TEST_CASE("active_rows") {
    REQUIRE(active_rows(Matrix{{3.0, 4.0}, {0.0, 0.0}}) == std::vector<std::size_t>{0});
    REQUIRE(active_rows(Matrix(4, 3)).empty());
    Rng rng(1);
    Matrix w(5, 3);
    for (double& v : w.data()) v = rng.normal();
    REQUIRE(active_rows(w) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}
