#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "biaxis/errors.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/model.hpp"

namespace biaxis {

// Per-concept, per-node embedding matrices with node/concept registries.
class EmbeddingTable {
public:
    EmbeddingTable() = default;

    EmbeddingTable(std::size_t d, std::vector<std::string> nodes, std::vector<std::string> concepts)
        : d_(d), nodes_(std::move(nodes)), concepts_(std::move(concepts)) {
        build_index(nodes_, node_index_, "node");
        build_index(concepts_, concept_index_, "concept");
        tensor_.assign(concepts_.size(), Matrix(nodes_.size(), d_));
    }

    std::size_t d() const { return d_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t concept_count() const { return concepts_.size(); }
    const std::vector<std::string>& node_labels() const { return nodes_; }
    const std::vector<std::string>& concept_labels() const { return concepts_; }

    const Matrix& concept_matrix(std::size_t c) const {
        if (c >= tensor_.size()) throw input_error("concept index out of range");
        return tensor_[c];
    }

    Matrix& concept_matrix(std::size_t c) {
        if (c >= tensor_.size()) throw input_error("concept index out of range");
        return tensor_[c];
    }

    std::size_t concept_index(const std::string& label) const {
        auto it = concept_index_.find(label);
        if (it == concept_index_.end()) throw input_error("unknown concept: " + label);
        return it->second;
    }

    bool has_concept(const std::string& label) const { return concept_index_.count(label) > 0; }

    std::size_t node_index(const std::string& label) const {
        auto it = node_index_.find(label);
        if (it == node_index_.end()) throw input_error("unknown node: " + label);
        return it->second;
    }

    // Embedding of one concept pooled over nodes; used for axis words.
    Vector mean_vector(std::size_t c) const {
        const Matrix& m = concept_matrix(c);
        Vector out(d_, 0.0);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < d_; ++j) out[j] += m(i, j);
        }
        for (double& v : out) v /= static_cast<double>(m.rows());
        return out;
    }

private:
    static void build_index(const std::vector<std::string>& labels,
                            std::map<std::string, std::size_t>& index, const char* kind) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!index.emplace(labels[i], i).second) {
                throw input_error(std::string("duplicate ") + kind + " label: " + labels[i]);
            }
        }
    }

    std::size_t d_ = 0;
    std::vector<std::string> nodes_;
    std::vector<std::string> concepts_;
    std::map<std::string, std::size_t> node_index_;
    std::map<std::string, std::size_t> concept_index_;
    std::vector<Matrix> tensor_;
};

// ---------------------------------------------------------------------------
// Table files: a JSON header (d, node list, concept list) and a raw data file
// of little-endian doubles, concept-major then row-major. The data length
// must match the header exactly.
// ---------------------------------------------------------------------------

inline void save_embedding_table(const EmbeddingTable& table, const std::string& header_path,
                                 const std::string& data_path) {
    nlohmann::json header;
    header["version"] = 1;
    header["d"] = table.d();
    header["nodes"] = table.node_labels();
    header["concepts"] = table.concept_labels();
    std::ofstream hout(header_path, std::ios::binary);
    if (!hout) throw input_error("cannot write embedding header: " + header_path);
    hout << header.dump(2) << '\n';

    std::ofstream dout(data_path, std::ios::binary);
    if (!dout) throw input_error("cannot write embedding data: " + data_path);
    for (std::size_t c = 0; c < table.concept_count(); ++c) {
        for (double v : table.concept_matrix(c).data()) detail::write_f64_le(dout, v);
    }
    if (!dout) throw input_error("failed writing embedding data: " + data_path);
}

inline EmbeddingTable load_embedding_table(const std::string& header_path, const std::string& data_path) {
    std::ifstream hin(header_path);
    if (!hin) throw input_error("cannot open embedding header: " + header_path);
    nlohmann::json header;
    try {
        hin >> header;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("bad embedding header " + header_path + ": " + e.what());
    }
    if (!header.contains("version") || header["version"].get<int>() != 1) {
        throw input_error("unsupported embedding table version in " + header_path);
    }
    const auto d = header.at("d").get<std::size_t>();
    auto nodes = header.at("nodes").get<std::vector<std::string>>();
    auto concepts = header.at("concepts").get<std::vector<std::string>>();
    EmbeddingTable table(d, std::move(nodes), std::move(concepts));

    std::ifstream din(data_path, std::ios::binary);
    if (!din) throw input_error("cannot open embedding data: " + data_path);
    din.seekg(0, std::ios::end);
    const std::uint64_t actual = static_cast<std::uint64_t>(din.tellg());
    const std::uint64_t expected =
        static_cast<std::uint64_t>(table.concept_count()) * table.node_count() * table.d() * 8;
    if (actual != expected) {
        throw input_error("embedding data " + data_path + ": expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual));
    }
    din.seekg(0, std::ios::beg);
    for (std::size_t c = 0; c < table.concept_count(); ++c) {
        Matrix& m = table.concept_matrix(c);
        for (double& v : m.data()) {
            v = detail::read_f64_le(din);
            if (!std::isfinite(v)) {
                throw input_error("embedding data " + data_path + ": non-finite entry in concept " +
                                  table.concept_labels()[c]);
            }
        }
    }
    return table;
}

} // namespace biaxis
