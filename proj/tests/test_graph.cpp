#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "biaxis/graph.hpp"
#include "biaxis/rng.hpp"

using namespace biaxis;

namespace {

Graph path_graph(std::size_t n) {
    Graph g(n);
    for (std::uint32_t i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1);
    return g;
}

Graph complete_graph(std::size_t n) {
    Graph g(n);
    for (std::uint32_t a = 0; a + 1 < n; ++a)
        for (std::uint32_t b = a + 1; b < n; ++b) g.add_edge(a, b);
    return g;
}

Graph random_graph(Rng& rng, std::size_t n, double p) {
    Graph g(n);
    for (std::uint32_t a = 0; a + 1 < n; ++a)
        for (std::uint32_t b = a + 1; b < n; ++b)
            if (rng.bernoulli(p)) g.add_edge(a, b);
    return g;
}

} // namespace

TEST_CASE("normalized adjacency basics") {
    SECTION("single isolated node keeps its self-loop") {
        const Matrix m = normalized_adjacency(Graph(1));
        REQUIRE(m.rows() == 1);
        REQUIRE(m(0, 0) == 1.0);
    }
    SECTION("2-node path is uniform 0.5") {
        const Matrix m = normalized_adjacency(path_graph(2));
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) REQUIRE(m(i, j) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("triangle is uniform 1/3") {
        const Matrix m = normalized_adjacency(complete_graph(3));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                REQUIRE(m(i, j) == Catch::Approx(1.0 / 3.0).margin(1e-15));
    }
    SECTION("diagonal strictly positive with isolated nodes") {
        Graph g(4);
        g.add_edge(0, 1);
        const Matrix m = normalized_adjacency(g);
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(m(i, i) > 0.0);
    }
}

TEST_CASE("normalized adjacency is symmetric with spectral radius <= 1") {
    Rng rng(4);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 2 + rng.below(19);
        const Graph g = random_graph(rng, n, 0.3);
        const Matrix m = normalized_adjacency(g);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) REQUIRE(m(i, j) == m(j, i));
        // power iteration for the dominant eigenvalue magnitude
        Vector v(n, 1.0);
        double lambda = 0.0;
        for (int it = 0; it < 2000; ++it) {
            Vector w = matvec(m, v);
            const double wn = norm2(w);
            if (wn == 0.0) break;
            for (double& x : w) x /= wn;
            lambda = wn;
            v = std::move(w);
        }
        REQUIRE(lambda <= 1.0 + 1e-9);
    }
}

TEST_CASE("split_edges follows the floor rule") {
    Rng rng(9);
    const Graph g = random_graph(rng, 10, 0.5);

    SECTION("all-train ratios") {
        const EdgeSplit s = split_edges(g, 1.0, 0.0, 0.0, 1);
        REQUIRE(s.train.size() == g.edge_count());
        REQUIRE(s.dev.empty());
        REQUIRE(s.test.empty());
        REQUIRE(s.dev_negatives.empty());
        REQUIRE(s.test_negatives.empty());
    }
    SECTION("10 edges split 6/2/2") {
        Graph g10(8);
        std::uint32_t added = 0;
        for (std::uint32_t a = 0; a + 1 < 8 && added < 10; ++a)
            for (std::uint32_t b = a + 1; b < 8 && added < 10; ++b) {
                g10.add_edge(a, b);
                ++added;
            }
        REQUIRE(g10.edge_count() == 10);
        const EdgeSplit s = split_edges(g10, 7);
        REQUIRE(s.train.size() == 6);
        REQUIRE(s.dev.size() == 2);
        REQUIRE(s.test.size() == 2);
        REQUIRE(s.dev_negatives.size() == 2);
        REQUIRE(s.test_negatives.size() == 2);
    }
    SECTION("same seed, same split") {
        const EdgeSplit a = split_edges(g, 42);
        const EdgeSplit b = split_edges(g, 42);
        REQUIRE(a.train == b.train);
        REQUIRE(a.dev == b.dev);
        REQUIRE(a.test == b.test);
        REQUIRE(a.dev_negatives == b.dev_negatives);
        REQUIRE(a.test_negatives == b.test_negatives);
    }
}

TEST_CASE("split_edges reconstitutes the edge set exactly") {
    Rng rng(123);
    int checked = 0;
    while (checked < 1000) {
        const std::size_t n = 5 + rng.below(12);
        Graph g = random_graph(rng, n, 0.4);
        if (g.edge_count() < 5) continue;
        const std::size_t want_negs = static_cast<std::size_t>(0.2 * g.edge_count()) * 2;
        if (want_negs > g.non_edge_count()) continue;
        ++checked;
        const EdgeSplit s = split_edges(g, rng.next_u64());
        std::set<Edge> parts;
        for (const auto& e : s.train) REQUIRE(parts.insert(e).second);
        for (const auto& e : s.dev) REQUIRE(parts.insert(e).second);
        for (const auto& e : s.test) REQUIRE(parts.insert(e).second);
        REQUIRE(parts == g.edges());
        // negatives are disjoint from edges and from each other
        std::set<Edge> negs;
        for (const auto& e : s.dev_negatives) {
            REQUIRE(g.edges().count(e) == 0);
            REQUIRE(negs.insert(e).second);
        }
        for (const auto& e : s.test_negatives) {
            REQUIRE(g.edges().count(e) == 0);
            REQUIRE(negs.insert(e).second);
        }
    }
}

TEST_CASE("sample_negatives") {
    SECTION("the unique non-edge of K3 minus an edge") {
        Graph g(3);
        g.add_edge(0, 1);
        g.add_edge(0, 2);
        const auto negs = sample_negatives(g, 1, 5);
        REQUIRE(negs.size() == 1);
        REQUIRE(negs[0] == Edge{1, 2});
    }
    SECTION("complete graph has nothing to sample") {
        REQUIRE_THROWS_AS(sample_negatives(complete_graph(4), 1, 5), input_error);
    }
    SECTION("m = 0 gives the empty set") {
        REQUIRE(sample_negatives(complete_graph(4), 0, 5).empty());
    }
}

TEST_CASE("sample_negatives never returns an edge or self-loop, exhaustively to |V|=5") {
    for (std::size_t n = 2; n <= 5; ++n) {
        const std::size_t pairs = n * (n - 1) / 2;
        for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask) {
            Graph g(n);
            std::size_t bit = 0;
            for (std::uint32_t a = 0; a + 1 < n; ++a)
                for (std::uint32_t b = a + 1; b < n; ++b, ++bit)
                    if (mask & (1ULL << bit)) g.add_edge(a, b);
            const std::size_t non_edges = g.non_edge_count();
            for (std::size_t m : {std::size_t(0), non_edges / 2, non_edges}) {
                const auto negs = sample_negatives(g, m, mask * 31 + n);
                REQUIRE(negs.size() == m);
                std::set<Edge> seen;
                for (const auto& [a, b] : negs) {
                    REQUIRE(a < b);
                    REQUIRE(!g.has_edge(a, b));
                    REQUIRE(seen.insert({a, b}).second);
                }
            }
        }
    }
}

TEST_CASE("graph_stats") {
    SECTION("triangle") {
        const GraphStats s = graph_stats(complete_graph(3));
        REQUIRE(s.density == Catch::Approx(1.0));
        REQUIRE(s.avg_degree == Catch::Approx(2.0));
        REQUIRE(s.avg_shortest_path == Catch::Approx(1.0));
    }
    SECTION("path on 3 nodes") {
        const GraphStats s = graph_stats(path_graph(3));
        REQUIRE(s.density == Catch::Approx(2.0 / 3.0));
        REQUIRE(s.avg_degree == Catch::Approx(4.0 / 3.0));
        REQUIRE(s.avg_shortest_path == Catch::Approx(4.0 / 3.0));
    }
    SECTION("single community partition has zero modularity") {
        Rng rng(77);
        const Graph g = random_graph(rng, 8, 0.4);
        const GraphStats s = graph_stats(g, std::vector<int>(8, 0));
        REQUIRE(s.modularity.has_value());
        REQUIRE(*s.modularity == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("two-clique partition is strongly modular") {
        Graph g(6);
        for (std::uint32_t a = 0; a < 3; ++a)
            for (std::uint32_t b = a + 1; b < 3; ++b) g.add_edge(a, b);
        for (std::uint32_t a = 3; a < 6; ++a)
            for (std::uint32_t b = a + 1; b < 6; ++b) g.add_edge(a, b);
        g.add_edge(2, 3);
        const GraphStats s = graph_stats(g, std::vector<int>{0, 0, 0, 1, 1, 1});
        // e_11 = e_22 = 3/7, a_1 = a_2 = 1/2 -> Q = 2*(3/7 - 1/4)
        REQUIRE(*s.modularity == Catch::Approx(2.0 * (3.0 / 7.0 - 0.25)).margin(1e-12));
    }
    SECTION("disconnected graphs average over reachable pairs only") {
        Graph g(4);
        g.add_edge(0, 1);
        g.add_edge(2, 3);
        const GraphStats s = graph_stats(g);
        REQUIRE(s.avg_shortest_path == Catch::Approx(1.0));
    }
    SECTION("partition size mismatch is an error") {
        REQUIRE_THROWS_AS(graph_stats(complete_graph(3), std::vector<int>{0, 1}), input_error);
    }
}

TEST_CASE("edge list round trip and parsing") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "biaxis_graph_test";
    fs::create_directories(dir);
    const auto path = (dir / "edges.tsv").string();

    {
        std::ofstream out(path);
        out << "# community graph\n";
        out << "alpha\tbeta\n";
        out << "beta\tgamma\n";
        out << "alpha\tbeta\n";  // duplicate collapses
    }
    const Graph g = load_edge_list(path);
    REQUIRE(g.node_count() == 3);
    REQUIRE(g.node_labels()[0] == "alpha");  // first-appearance order
    REQUIRE(g.node_labels()[2] == "gamma");
    REQUIRE(g.edge_count() == 2);

    save_edge_list(g, path + ".out");
    const Graph g2 = load_edge_list(path + ".out");
    REQUIRE(g2.edges() == g.edges());
    REQUIRE(g2.node_labels() == g.node_labels());

    {
        std::ofstream out(path);
        out << "a\ta\n";
    }
    REQUIRE_THROWS_AS(load_edge_list(path), input_error);

    {
        std::ofstream out(path);
        out << "a b no tab\n";
    }
    REQUIRE_THROWS_AS(load_edge_list(path), input_error);
}

TEST_CASE("partition file") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "biaxis_graph_test";
    fs::create_directories(dir);
    const auto epath = (dir / "p_edges.tsv").string();
    const auto ppath = (dir / "partition.tsv").string();
    {
        std::ofstream out(epath);
        out << "a\tb\nb\tc\n";
    }
    const Graph g = load_edge_list(epath);
    {
        std::ofstream out(ppath);
        out << "a\t0\nb\t0\nc\t1\n";
    }
    const auto partition = load_partition(g, ppath);
    REQUIRE(partition == std::vector<int>{0, 0, 1});
    {
        std::ofstream out(ppath);
        out << "a\t0\nb\t0\n";  // missing node c
    }
    REQUIRE_THROWS_AS(load_partition(g, ppath), input_error);
}
