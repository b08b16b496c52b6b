#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "biaxis/rng.hpp"
#include "biaxis/subspace.hpp"

using namespace biaxis;

namespace {

SubspaceProjector identity_projector(std::size_t d, std::vector<std::size_t> active) {
    SubspaceProjector p;
    p.r = Matrix::identity(d);
    p.active = std::move(active);
    p.validate();
    return p;
}

AxisPair make_pair(std::uint64_t id, std::string wp, std::string wq, Vector xp, Vector xq,
                   std::uint64_t fp = 1000, std::uint64_t fq = 1000) {
    AxisPair a;
    a.pair_id = id;
    a.word_p = std::move(wp);
    a.word_q = std::move(wq);
    a.x_p = std::move(xp);
    a.x_q = std::move(xq);
    a.freq_p = fp;
    a.freq_q = fq;
    return a;
}

} // namespace

TEST_CASE("project selects rotated coordinates") {
    SECTION("identity rotation keeps the selected coordinates") {
        const auto p = identity_projector(3, {0, 1});
        const Vector out = project(p, {1.0, 2.0, 3.0});
        REQUIRE(out == Vector{1.0, 2.0});
    }
    SECTION("permutation rotation swapping 0 and 2") {
        SubspaceProjector p;
        p.r = Matrix{{0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}};
        p.active = {0};
        const Vector out = project(p, {1.0, 2.0, 3.0});
        REQUIRE(out == Vector{3.0});
    }
    SECTION("orthogonal rotation contracts norms") {
        Rng rng(5);
        Matrix gauss(6, 6);
        for (double& v : gauss.data()) v = rng.normal();
        SubspaceProjector p;
        p.r = qr_orthonormal(gauss);
        p.active = {0, 2, 5};
        for (int rep = 0; rep < 50; ++rep) {
            Vector x(6);
            for (double& v : x) v = rng.normal(0.0, 2.0);
            REQUIRE(norm2(project(p, x)) <= norm2(x) + 1e-12);
        }
    }
    SECTION("length mismatch is an error") {
        const auto p = identity_projector(3, {0});
        REQUIRE_THROWS_AS(project(p, {1.0, 2.0}), dimension_error);
    }
    SECTION("projection is linear") {
        Rng rng(6);
        Matrix gauss(5, 5);
        for (double& v : gauss.data()) v = rng.normal();
        SubspaceProjector p;
        p.r = qr_orthonormal(gauss);
        p.active = {1, 3};
        for (int rep = 0; rep < 50; ++rep) {
            Vector x(5), y(5);
            for (double& v : x) v = rng.normal();
            for (double& v : y) v = rng.normal();
            const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
            Vector combo(5);
            for (std::size_t i = 0; i < 5; ++i) combo[i] = a * x[i] + b * y[i];
            const Vector lhs = project(p, combo);
            const Vector px = project(p, x), py = project(p, y);
            for (std::size_t i = 0; i < lhs.size(); ++i) {
                REQUIRE(lhs[i] == Catch::Approx(a * px[i] + b * py[i]).margin(1e-10));
            }
        }
    }
}

TEST_CASE("complement projection carries the discarded coordinates") {
    const auto p = identity_projector(4, {1, 3});
    const Vector out = project_complement(p, {1.0, 2.0, 3.0, 4.0});
    REQUIRE(out == Vector{1.0, 3.0});
    // subspace + complement norms reassemble the rotated vector
    Rng rng(7);
    Matrix gauss(4, 4);
    for (double& v : gauss.data()) v = rng.normal();
    SubspaceProjector q;
    q.r = qr_orthonormal(gauss);
    q.active = {0, 2};
    for (int rep = 0; rep < 20; ++rep) {
        Vector x(4);
        for (double& v : x) v = rng.normal();
        const double sub = norm2(project(q, x));
        const double comp = norm2(project_complement(q, x));
        REQUIRE(std::sqrt(sub * sub + comp * comp) == Catch::Approx(norm2(x)).margin(1e-10));
    }
}

TEST_CASE("axis_score") {
    const auto p = identity_projector(2, {0, 1});
    SECTION("sum of projected norms") {
        const AxisScore s = axis_score(p, make_pair(1, "p", "q", {3.0, 4.0}, {0.0, 0.0}));
        REQUIRE(s.s == Catch::Approx(5.0));
        REQUIRE(s.pair_id == 1);
    }
    SECTION("zero projections give zero") {
        const auto p0 = identity_projector(2, {1});
        const AxisScore s = axis_score(p0, make_pair(2, "p", "q", {3.0, 0.0}, {-2.0, 0.0}));
        REQUIRE(s.s == 0.0);
    }
    SECTION("symmetric in p and q") {
        Rng rng(8);
        Vector a(2), b(2);
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        REQUIRE(axis_score(p, make_pair(3, "p", "q", a, b)).s ==
                Catch::Approx(axis_score(p, make_pair(3, "q", "p", b, a)).s).margin(1e-15));
    }
    SECTION("doubling both vectors doubles the score") {
        Vector a{1.0, -2.0}, b{0.5, 0.25};
        Vector a2{2.0, -4.0}, b2{1.0, 0.5};
        REQUIRE(axis_score(p, make_pair(4, "p", "q", a2, b2)).s ==
                Catch::Approx(2.0 * axis_score(p, make_pair(4, "p", "q", a, b)).s).margin(1e-12));
    }
}

TEST_CASE("mutual_nn_filter") {
    SECTION("disjoint regions keep both pairs") {
        const std::vector<AxisPair> pairs = {
            make_pair(1, "a", "b", {1.0, 0.0}, {0.9, 0.1}),
            make_pair(2, "c", "d", {-1.0, 0.0}, {-0.9, -0.1}),
        };
        REQUIRE(mutual_nn_filter(pairs).size() == 2);
    }
    SECTION("a closer third word breaks a pair") {
        // a's nearest neighbor is b (cosine 1), so (a, c) is dropped; and b's
        // nearest is a, dropping (b, c) too
        const std::vector<AxisPair> pairs = {
            make_pair(1, "a", "c", {0.0, 1.0}, {1.0, 0.0}),
            make_pair(2, "b", "c", {0.0, 0.9}, {1.0, 0.0}),
        };
        REQUIRE(mutual_nn_filter(pairs).empty());
    }
    SECTION("frequency threshold removes pairs regardless of geometry") {
        const std::vector<AxisPair> pairs = {
            make_pair(1, "a", "b", {1.0, 0.0}, {0.9, 0.1}, 99, 1000),
        };
        REQUIRE(mutual_nn_filter(pairs, 100).empty());
        REQUIRE(mutual_nn_filter(pairs, 99).size() == 1);
    }
    SECTION("output independent of input order") {
        Rng rng(9);
        std::vector<AxisPair> pairs;
        for (std::uint64_t i = 0; i < 12; ++i) {
            Vector a(4), b(4);
            for (double& v : a) v = rng.normal();
            for (double& v : b) v = rng.normal();
            pairs.push_back(make_pair(i, "w" + std::to_string(2 * i), "w" + std::to_string(2 * i + 1),
                                      a, b));
        }
        auto kept_ids = [](const std::vector<AxisPair>& kept) {
            std::vector<std::uint64_t> ids;
            for (const auto& p : kept) ids.push_back(p.pair_id);
            std::sort(ids.begin(), ids.end());
            return ids;
        };
        const auto base = kept_ids(mutual_nn_filter(pairs));
        std::vector<AxisPair> shuffled = pairs;
        std::reverse(shuffled.begin(), shuffled.end());
        REQUIRE(kept_ids(mutual_nn_filter(shuffled)) == base);
    }
}

TEST_CASE("compare_rating_extremes") {
    const auto p = identity_projector(2, {0, 1});
    auto build = [&](std::size_t n_pairs, auto rating_of) {
        std::vector<AxisPair> pairs;
        std::vector<AxisScore> scores;
        std::map<std::string, double> ratings;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            const double mag = 1.0 + static_cast<double>(i);
            AxisPair a = make_pair(i, "p" + std::to_string(i), "q" + std::to_string(i),
                                   {mag, 0.0}, {0.0, mag});
            scores.push_back(axis_score(p, a));
            ratings[a.word_p] = rating_of(i);
            ratings[a.word_q] = rating_of(i);
            pairs.push_back(std::move(a));
        }
        return std::make_tuple(pairs, scores, ratings);
    };

    SECTION("identical ratings give equal means and p = 1") {
        auto [pairs, scores, ratings] = build(10, [](std::size_t) { return 0.5; });
        const RatingComparison cmp = compare_rating_extremes(pairs, scores, ratings, 3);
        REQUIRE(cmp.mean_top == Catch::Approx(cmp.mean_bottom));
        REQUIRE(cmp.t == 0.0);
        REQUIRE(cmp.p == 1.0);
    }
    SECTION("constructed separation is detected") {
        Rng rng(10);
        auto [pairs, scores, ratings] = build(40, [&rng](std::size_t i) {
            return static_cast<double>(i) + rng.uniform(-0.01, 0.01);
        });
        const RatingComparison cmp = compare_rating_extremes(pairs, scores, ratings, 10);
        REQUIRE(cmp.mean_top > cmp.mean_bottom);
        REQUIRE(cmp.p < 1e-6);
    }
    SECTION("insufficient rated pairs is an error") {
        auto [pairs, scores, ratings] = build(10, [](std::size_t) { return 0.5; });
        REQUIRE_THROWS_AS(compare_rating_extremes(pairs, scores, ratings, 6), input_error);
        // unrated words drop pairs below the threshold as well
        ratings.erase("p9");
        REQUIRE_THROWS_AS(compare_rating_extremes(pairs, scores, ratings, 5), input_error);
    }
}

TEST_CASE("dispersion") {
    REQUIRE(dispersion({Vector{1.0, 2.0}}) == 0.0);
    REQUIRE(dispersion({Vector{0.0, 0.0}, Vector{2.0, 0.0}}) == Catch::Approx(1.0));
    REQUIRE(dispersion({Vector{1.0, 1.0}, Vector{1.0, 1.0}, Vector{1.0, 1.0}}) == 0.0);
    REQUIRE_THROWS_AS(dispersion({}), input_error);

    SECTION("translation invariant, scales linearly") {
        Rng rng(11);
        std::vector<Vector> pts;
        for (int i = 0; i < 12; ++i) {
            Vector v(3);
            for (double& x : v) x = rng.normal();
            pts.push_back(v);
        }
        const double base = dispersion(pts);
        std::vector<Vector> shifted = pts, scaled = pts;
        for (auto& v : shifted)
            for (std::size_t j = 0; j < 3; ++j) v[j] += 41.0;
        for (auto& v : scaled)
            for (double& x : v) x *= 2.5;
        REQUIRE(dispersion(shifted) == Catch::Approx(base).margin(1e-9));
        REQUIRE(dispersion(scaled) == Catch::Approx(2.5 * base).margin(1e-9));
    }
}

TEST_CASE("projector construction from a trained model") {
    ModelConfig mc;
    mc.d = 4;
    mc.h1 = 2;
    mc.h2 = 2;
    RotationGAE m = RotationGAE::init(mc, 1);
    m.w0 = Matrix{{1.0, 0.0}, {0.0, 0.0}, {0.5, 0.5}, {0.0, 0.0}};
    const SubspaceProjector p = projector_from_model(m);
    REQUIRE(p.active == std::vector<std::size_t>{0, 2});
    REQUIRE(p.d_star() == 2);

    // truncation keeps the largest rows, reported ascending
    const SubspaceProjector t1 = projector_truncated(m, 1);
    REQUIRE(t1.active == std::vector<std::size_t>{0});  // row 0 norm 1 > row 2 norm ~0.707
    const SubspaceProjector t3 = projector_truncated(m, 3);
    REQUIRE(t3.active.size() == 3);
    REQUIRE_THROWS_AS(projector_truncated(m, 0), input_error);
    REQUIRE_THROWS_AS(projector_truncated(m, 5), input_error);
}
