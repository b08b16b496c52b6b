#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "biaxis/errors.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/rng.hpp"

namespace biaxis {

// Unordered node pair, stored with first < second.
using Edge = std::pair<std::uint32_t, std::uint32_t>;

inline Edge make_edge(std::uint32_t a, std::uint32_t b) {
    if (a == b) throw input_error("edge: self-loop " + std::to_string(a));
    return a < b ? Edge{a, b} : Edge{b, a};
}

// Undirected community graph. Immutable once built; shared read-only across
// parallel trials.
class Graph {
public:
    Graph() = default;

    Graph(std::size_t node_count, std::vector<std::string> labels = {})
        : node_count_(node_count), labels_(std::move(labels)) {
        if (!labels_.empty() && labels_.size() != node_count_) {
            throw input_error("Graph: label count != node count");
        }
        if (labels_.empty()) {
            labels_.reserve(node_count_);
            for (std::size_t i = 0; i < node_count_; ++i) labels_.push_back("n" + std::to_string(i));
        }
    }

    std::size_t node_count() const { return node_count_; }
    const std::vector<std::string>& node_labels() const { return labels_; }
    const std::set<Edge>& edges() const { return edges_; }
    std::size_t edge_count() const { return edges_.size(); }

    // Idempotent; rejects self-loops and out-of-range indices.
    void add_edge(std::uint32_t a, std::uint32_t b) {
        if (a >= node_count_ || b >= node_count_) {
            throw input_error("add_edge: node index out of range");
        }
        edges_.insert(make_edge(a, b));
    }

    bool has_edge(std::uint32_t a, std::uint32_t b) const {
        if (a == b) return false;
        return edges_.count(a < b ? Edge{a, b} : Edge{b, a}) > 0;
    }

    std::vector<std::vector<std::uint32_t>> adjacency_lists() const {
        std::vector<std::vector<std::uint32_t>> adj(node_count_);
        for (const auto& [a, b] : edges_) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        return adj;
    }

    std::size_t non_edge_count() const {
        return node_count_ * (node_count_ - 1) / 2 - edges_.size();
    }

    std::vector<Edge> non_edges() const {
        std::vector<Edge> out;
        out.reserve(non_edge_count());
        for (std::uint32_t a = 0; a + 1 < node_count_; ++a) {
            for (std::uint32_t b = a + 1; b < node_count_; ++b) {
                if (!edges_.count({a, b})) out.push_back({a, b});
            }
        }
        return out;
    }

private:
    std::size_t node_count_ = 0;
    std::vector<std::string> labels_;
    std::set<Edge> edges_;
};

struct EdgeSplit {
    std::vector<Edge> train;
    std::vector<Edge> dev;
    std::vector<Edge> test;
    std::vector<Edge> dev_negatives;
    std::vector<Edge> test_negatives;
    std::uint64_t seed = 0;
};

struct GraphStats {
    double density = 0.0;
    double avg_degree = 0.0;
    double avg_shortest_path = 0.0;  // over reachable pairs only
    std::optional<double> modularity; // only when a partition is supplied
};

// Message-passing operator: D^{-1/2} (A + I) D^{-1/2} over the given edges.
// Isolated nodes keep their self-loop, so every diagonal entry is positive.
inline Matrix normalized_adjacency(std::size_t node_count, const std::vector<Edge>& edges) {
    if (node_count < 1) throw input_error("normalized_adjacency: empty graph");
    Matrix a_tilde(node_count, node_count);
    for (std::size_t i = 0; i < node_count; ++i) a_tilde(i, i) = 1.0;
    for (const auto& [u, v] : edges) {
        a_tilde(u, v) = 1.0;
        a_tilde(v, u) = 1.0;
    }
    Vector deg(node_count, 0.0);
    for (std::size_t i = 0; i < node_count; ++i) {
        for (std::size_t j = 0; j < node_count; ++j) deg[i] += a_tilde(i, j);
    }
    Matrix out(node_count, node_count);
    for (std::size_t i = 0; i < node_count; ++i) {
        for (std::size_t j = 0; j < node_count; ++j) {
            if (a_tilde(i, j) != 0.0) out(i, j) = a_tilde(i, j) / std::sqrt(deg[i] * deg[j]);
        }
    }
    return out;
}

inline Matrix normalized_adjacency(const Graph& g) {
    return normalized_adjacency(g.node_count(), {g.edges().begin(), g.edges().end()});
}

// m distinct non-adjacent pairs, uniform without replacement.
inline std::vector<Edge> sample_negatives(const Graph& g, std::size_t m, std::uint64_t seed) {
    std::vector<Edge> pool = g.non_edges();
    if (m > pool.size()) {
        throw input_error("sample_negatives: requested " + std::to_string(m) + " of " +
                          std::to_string(pool.size()) + " non-edges");
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    pool.resize(m);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// 60/20/20-style partition of the edge set. Dev and test sizes are floored,
// the remainder goes to train. Evaluation negatives are drawn once here and
// frozen; dev and test negatives are disjoint.
inline EdgeSplit split_edges(const Graph& g, double train_ratio, double dev_ratio,
                             double test_ratio, std::uint64_t seed) {
    if (train_ratio < 0 || dev_ratio < 0 || test_ratio < 0 ||
        std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9) {
        throw input_error("split_edges: ratios must be non-negative and sum to 1");
    }
    if (g.edge_count() < 5) throw input_error("split_edges: need at least 5 edges");

    std::vector<Edge> all(g.edges().begin(), g.edges().end());
    Rng rng(seed);
    rng.shuffle(all);

    const std::size_t n = all.size();
    const std::size_t n_dev = static_cast<std::size_t>(dev_ratio * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(test_ratio * static_cast<double>(n));

    EdgeSplit split;
    split.seed = seed;
    split.dev.assign(all.begin(), all.begin() + n_dev);
    split.test.assign(all.begin() + n_dev, all.begin() + n_dev + n_test);
    split.train.assign(all.begin() + n_dev + n_test, all.end());
    std::sort(split.dev.begin(), split.dev.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());

    const std::size_t want = n_dev + n_test;
    if (want > g.non_edge_count()) {
        throw input_error("split_edges: not enough non-edges for " + std::to_string(want) +
                          " evaluation negatives");
    }
    std::vector<Edge> negatives = sample_negatives(g, want, derive_seed(seed, 0x6e656773ULL));
    Rng neg_rng(derive_seed(seed, 0x73706c74ULL));
    neg_rng.shuffle(negatives);
    split.dev_negatives.assign(negatives.begin(), negatives.begin() + n_dev);
    split.test_negatives.assign(negatives.begin() + n_dev, negatives.end());
    std::sort(split.dev_negatives.begin(), split.dev_negatives.end());
    std::sort(split.test_negatives.begin(), split.test_negatives.end());
    return split;
}

inline EdgeSplit split_edges(const Graph& g, std::uint64_t seed) {
    return split_edges(g, 0.6, 0.2, 0.2, seed);
}

// Density, mean degree, mean shortest path (reachable pairs), and Newman
// modularity of a supplied partition. The partition is given, never searched.
inline GraphStats graph_stats(const Graph& g,
                              const std::optional<std::vector<int>>& partition = std::nullopt) {
    const std::size_t n = g.node_count();
    const std::size_t m = g.edge_count();
    GraphStats stats;
    stats.density = n > 1 ? 2.0 * static_cast<double>(m) / (static_cast<double>(n) * static_cast<double>(n - 1)) : 0.0;
    stats.avg_degree = n > 0 ? 2.0 * static_cast<double>(m) / static_cast<double>(n) : 0.0;

    const auto adj = g.adjacency_lists();
    std::uint64_t dist_sum = 0;
    std::uint64_t pair_count = 0;
    std::vector<int> dist(n);
    for (std::uint32_t s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[s] = 0;
        std::queue<std::uint32_t> q;
        q.push(s);
        while (!q.empty()) {
            const std::uint32_t u = q.front();
            q.pop();
            for (std::uint32_t v : adj[u]) {
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    q.push(v);
                }
            }
        }
        for (std::uint32_t t = s + 1; t < n; ++t) {
            if (dist[t] > 0) {
                dist_sum += static_cast<std::uint64_t>(dist[t]);
                ++pair_count;
            }
        }
    }
    stats.avg_shortest_path = pair_count > 0 ? static_cast<double>(dist_sum) / static_cast<double>(pair_count) : 0.0;

    if (partition) {
        if (partition->size() != n) throw input_error("graph_stats: partition size != node count");
        int max_c = -1;
        for (int c : *partition) {
            if (c < 0) throw input_error("graph_stats: negative community id");
            max_c = std::max(max_c, c);
        }
        const std::size_t nc = static_cast<std::size_t>(max_c) + 1;
        // e_cc: fraction of edges inside community c; a_c: fraction of edge
        // endpoints in c. Q = sum_c (e_cc - a_c^2).
        std::vector<double> e_in(nc, 0.0), a_ends(nc, 0.0);
        if (m > 0) {
            for (const auto& [u, v] : g.edges()) {
                const int cu = (*partition)[u], cv = (*partition)[v];
                if (cu == cv) e_in[cu] += 1.0;
                a_ends[cu] += 0.5;
                a_ends[cv] += 0.5;
            }
            double q = 0.0;
            for (std::size_t c = 0; c < nc; ++c) {
                const double ec = e_in[c] / static_cast<double>(m);
                const double ac = a_ends[c] / static_cast<double>(m);
                q += ec - ac * ac;
            }
            stats.modularity = q;
        } else {
            stats.modularity = 0.0;
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Edge-list and partition files.
// Edge list: one `label_a<TAB>label_b` per line, `#` comments, node registry
// in first-appearance order. Partition: `label<TAB>community_id`.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_tsv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == '\t') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline bool is_blank_or_comment(const std::string& line) {
    for (char ch : line) {
        if (ch == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(ch))) return false;
    }
    return true;
}

} // namespace detail

inline Graph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open edge list: " + path);
    std::vector<std::string> labels;
    std::map<std::string, std::uint32_t> index;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> raw_edges;
    auto intern = [&](const std::string& label) -> std::uint32_t {
        auto it = index.find(label);
        if (it != index.end()) return it->second;
        const auto id = static_cast<std::uint32_t>(labels.size());
        labels.push_back(label);
        index.emplace(label, id);
        return id;
    };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_blank_or_comment(line)) continue;
        const auto fields = detail::split_tsv_line(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            throw input_error(path + ":" + std::to_string(lineno) + ": expected `a<TAB>b`");
        }
        const auto a = intern(fields[0]);
        const auto b = intern(fields[1]);
        if (a == b) throw input_error(path + ":" + std::to_string(lineno) + ": self-loop " + fields[0]);
        raw_edges.emplace_back(a, b);
    }
    Graph g(labels.size(), labels);
    for (const auto& [a, b] : raw_edges) g.add_edge(a, b);
    return g;
}

inline void save_edge_list(const Graph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write edge list: " + path);
    const auto& labels = g.node_labels();
    for (const auto& [a, b] : g.edges()) {
        out << labels[a] << '\t' << labels[b] << '\n';
    }
    if (!out) throw input_error("failed writing edge list: " + path);
}

// Community ids per node, aligned with the graph's registry. Nodes missing
// from the file are an error; communities may be sparse ids.
inline std::vector<int> load_partition(const Graph& g, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open partition: " + path);
    std::map<std::string, int> by_label;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_blank_or_comment(line)) continue;
        const auto fields = detail::split_tsv_line(line);
        if (fields.size() != 2) {
            throw input_error(path + ":" + std::to_string(lineno) + ": expected `label<TAB>community`");
        }
        try {
            by_label[fields[0]] = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw input_error(path + ":" + std::to_string(lineno) + ": bad community id");
        }
    }
    std::vector<int> partition(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        auto it = by_label.find(g.node_labels()[i]);
        if (it == by_label.end()) {
            throw input_error("partition missing node: " + g.node_labels()[i]);
        }
        partition[i] = it->second;
    }
    return partition;
}

} // namespace biaxis
