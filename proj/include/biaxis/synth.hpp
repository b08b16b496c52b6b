#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "biaxis/embedding.hpp"
#include "biaxis/errors.hpp"
#include "biaxis/graph.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/rng.hpp"
#include "biaxis/subspace.hpp"

namespace biaxis {

struct PlantedParams {
    std::size_t n_nodes = 40;
    std::size_t n_blocks = 2;
    double p_in = 0.5;
    double p_out = 0.02;
    std::size_t d = 32;
    std::size_t k = 3;  // planted signal dimensions
    std::size_t n_concepts = 50;
    double signal = 1.0;      // sigma of the per-concept block means
    double noise = 0.3;       // sigma of the per-node jitter
    std::uint64_t seed = 0;

    void validate() const {
        if (n_nodes < 2 || n_blocks < 1 || n_blocks > n_nodes) {
            throw input_error("PlantedParams: bad node/block counts");
        }
        if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0) && !(p_in == p_out && p_in <= 1.0)) {
            throw input_error("PlantedParams: need 0 <= p_out < p_in <= 1");
        }
        if (d < 1 || k > d) throw input_error("PlantedParams: need 0 <= k <= d");
        if (n_concepts < 3) throw input_error("PlantedParams: need >= 3 concepts");
        if (signal < 0.0 || noise < 0.0) throw input_error("PlantedParams: negative sigma");
    }
};

struct PlantedInstance {
    PlantedParams params;
    Graph graph;
    std::vector<int> communities;  // node -> block
    Matrix q_true;                 // d x d orthogonal; first k columns span the signal
    EmbeddingTable embeddings;
    std::vector<double> concept_signals;  // per-concept sigma actually used
    bool graph_connected = true;          // recorded, degenerate draws are not retried
};

// Homophilous SBM graph with concept embeddings whose block signal lives in a
// known rotated k-dimensional subspace. Per-concept signal strengths support
// the dispersion sweep; generate_planted uses a constant list.
inline PlantedInstance generate_planted_with_signals(const PlantedParams& params,
                                                     const std::vector<double>& concept_signals) {
    params.validate();
    if (concept_signals.size() != params.n_concepts) {
        throw input_error("generate_planted: signal list length != concept count");
    }
    PlantedInstance inst;
    inst.params = params;
    inst.concept_signals = concept_signals;

    Rng graph_rng(derive_seed(params.seed, 0x47ULL));
    inst.communities.resize(params.n_nodes);
    for (std::size_t i = 0; i < params.n_nodes; ++i) {
        inst.communities[i] = static_cast<int>(i * params.n_blocks / params.n_nodes);
    }
    std::vector<std::string> node_labels;
    node_labels.reserve(params.n_nodes);
    for (std::size_t i = 0; i < params.n_nodes; ++i) {
        node_labels.push_back("node" + std::to_string(i));
    }
    inst.graph = Graph(params.n_nodes, node_labels);
    for (std::uint32_t a = 0; a + 1 < params.n_nodes; ++a) {
        for (std::uint32_t b = a + 1; b < params.n_nodes; ++b) {
            const double p = inst.communities[a] == inst.communities[b] ? params.p_in : params.p_out;
            if (graph_rng.bernoulli(p)) inst.graph.add_edge(a, b);
        }
    }
    {
        // connectivity is recorded in the instance metadata, never enforced
        const auto adj = inst.graph.adjacency_lists();
        std::vector<bool> seen(params.n_nodes, false);
        std::vector<std::uint32_t> stack = {0};
        seen[0] = true;
        std::size_t reached = 1;
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (auto v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    ++reached;
                    stack.push_back(v);
                }
            }
        }
        inst.graph_connected = reached == params.n_nodes;
    }

    Rng rot_rng(derive_seed(params.seed, 0x52ULL));
    Matrix gauss(params.d, params.d);
    for (double& v : gauss.data()) v = rot_rng.normal();
    inst.q_true = qr_orthonormal(gauss);

    std::vector<std::string> concept_labels;
    concept_labels.reserve(params.n_concepts);
    for (std::size_t c = 0; c < params.n_concepts; ++c) {
        concept_labels.push_back("concept" + std::to_string(c));
    }
    inst.embeddings = EmbeddingTable(params.d, node_labels, concept_labels);

    Rng emb_rng(derive_seed(params.seed, 0x58ULL));
    Matrix latent(params.n_nodes, params.d);
    for (std::size_t c = 0; c < params.n_concepts; ++c) {
        const double sig = concept_signals[c];
        // block means on the signal coordinates, one shared mean elsewhere
        Matrix block_means(params.n_blocks, params.k);
        for (double& v : block_means.data()) v = emb_rng.normal(0.0, sig);
        Vector shared_mean(params.d > params.k ? params.d - params.k : 0);
        for (double& v : shared_mean) v = emb_rng.normal(0.0, sig);

        for (std::size_t i = 0; i < params.n_nodes; ++i) {
            const int g = inst.communities[i];
            for (std::size_t j = 0; j < params.k; ++j) {
                latent(i, j) = block_means(g, j) + emb_rng.normal(0.0, params.noise);
            }
            for (std::size_t j = params.k; j < params.d; ++j) {
                latent(i, j) = shared_mean[j - params.k] + emb_rng.normal(0.0, params.noise);
            }
        }
        // x_i = q_true * z_i, i.e. rows are z_i q_true^T
        inst.embeddings.concept_matrix(c) = matmul_bt(latent, inst.q_true);
    }
    return inst;
}

inline PlantedInstance generate_planted(const PlantedParams& params) {
    return generate_planted_with_signals(params,
                                         std::vector<double>(params.n_concepts, params.signal));
}

// Principal-angle affinity ||U^T V||_F^2 / min(|a|, |b|) between the spans;
// 1 for identical subspaces, 0 for orthogonal ones.
inline double subspace_affinity(const std::vector<Vector>& basis_a, const std::vector<Vector>& basis_b) {
    if (basis_a.empty() || basis_b.empty()) throw input_error("subspace_affinity: empty basis");
    const std::size_t d = basis_a.front().size();
    auto orthonormalize = [d](const std::vector<Vector>& basis) {
        std::vector<Vector> q;
        for (const Vector& v : basis) {
            if (v.size() != d) throw dimension_error("subspace_affinity: inconsistent dimensions");
            Vector u = v;
            for (int pass = 0; pass < 2; ++pass) {  // re-orthogonalize for stability
                for (const Vector& e : q) {
                    const double proj = dot(u, e);
                    for (std::size_t i = 0; i < d; ++i) u[i] -= proj * e[i];
                }
            }
            const double n = norm2(u);
            if (n < 1e-10) throw input_error("subspace_affinity: rank-deficient basis");
            for (double& x : u) x /= n;
            q.push_back(std::move(u));
        }
        return q;
    };
    const auto qa = orthonormalize(basis_a);
    const auto qb = orthonormalize(basis_b);
    double fro_sq = 0.0;
    for (const Vector& u : qa) {
        for (const Vector& v : qb) {
            const double c = dot(u, v);
            fro_sq += c * c;
        }
    }
    return fro_sq / static_cast<double>(std::min(qa.size(), qb.size()));
}

// The subspace the model selected, as vectors in the original embedding
// space: the active columns of R.
inline std::vector<Vector> recovered_basis(const SubspaceProjector& projector) {
    if (projector.active.empty()) throw input_error("recovered_basis: empty active set");
    std::vector<Vector> basis;
    basis.reserve(projector.active.size());
    for (std::size_t j : projector.active) basis.push_back(projector.r.col(j));
    return basis;
}

inline std::vector<Vector> planted_basis(const PlantedInstance& inst) {
    std::vector<Vector> basis;
    basis.reserve(inst.params.k);
    for (std::size_t j = 0; j < inst.params.k; ++j) basis.push_back(inst.q_true.col(j));
    return basis;
}

// ---------------------------------------------------------------------------
// Instance serialization: edge list + embedding table in their standard
// formats, plus a JSON manifest with q_true, communities and params so
// recovery scoring is reproducible from disk.
// ---------------------------------------------------------------------------

inline void save_planted_instance(const PlantedInstance& inst, const std::string& dir) {
    save_edge_list(inst.graph, dir + "/graph.tsv");
    save_embedding_table(inst.embeddings, dir + "/embeddings.json", dir + "/embeddings.f64");
    {
        std::ofstream out(dir + "/communities.tsv", std::ios::binary);
        if (!out) throw input_error("cannot write communities: " + dir);
        for (std::size_t i = 0; i < inst.graph.node_count(); ++i) {
            out << inst.graph.node_labels()[i] << '\t' << inst.communities[i] << '\n';
        }
    }
    nlohmann::json j;
    j["version"] = 1;
    j["params"] = {{"n_nodes", inst.params.n_nodes}, {"n_blocks", inst.params.n_blocks},
                   {"p_in", inst.params.p_in},       {"p_out", inst.params.p_out},
                   {"d", inst.params.d},             {"k", inst.params.k},
                   {"n_concepts", inst.params.n_concepts}, {"signal", inst.params.signal},
                   {"noise", inst.params.noise},     {"seed", inst.params.seed}};
    j["communities"] = inst.communities;
    j["concept_signals"] = inst.concept_signals;
    j["graph_connected"] = inst.graph_connected;
    j["q_true"] = inst.q_true.data();
    std::ofstream out(dir + "/instance.json", std::ios::binary);
    if (!out) throw input_error("cannot write instance manifest: " + dir);
    out << j.dump(2) << '\n';
}

inline PlantedInstance load_planted_instance(const std::string& dir) {
    std::ifstream in(dir + "/instance.json");
    if (!in) throw input_error("cannot open instance manifest: " + dir + "/instance.json");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("bad instance manifest: " + std::string(e.what()));
    }
    if (j.value("version", 0) != 1) throw input_error("unsupported instance manifest version");
    PlantedInstance inst;
    const auto& p = j.at("params");
    inst.params.n_nodes = p.at("n_nodes").get<std::size_t>();
    inst.params.n_blocks = p.at("n_blocks").get<std::size_t>();
    inst.params.p_in = p.at("p_in").get<double>();
    inst.params.p_out = p.at("p_out").get<double>();
    inst.params.d = p.at("d").get<std::size_t>();
    inst.params.k = p.at("k").get<std::size_t>();
    inst.params.n_concepts = p.at("n_concepts").get<std::size_t>();
    inst.params.signal = p.at("signal").get<double>();
    inst.params.noise = p.at("noise").get<double>();
    inst.params.seed = p.at("seed").get<std::uint64_t>();
    inst.communities = j.at("communities").get<std::vector<int>>();
    inst.concept_signals = j.at("concept_signals").get<std::vector<double>>();
    inst.graph_connected = j.value("graph_connected", true);
    inst.q_true = Matrix(inst.params.d, inst.params.d, j.at("q_true").get<Vector>());
    inst.graph = load_edge_list(dir + "/graph.tsv");
    inst.embeddings = load_embedding_table(dir + "/embeddings.json", dir + "/embeddings.f64");
    return inst;
}

} // namespace biaxis
