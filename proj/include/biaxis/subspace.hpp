#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "biaxis/embedding.hpp"
#include "biaxis/errors.hpp"
#include "biaxis/graph.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/model.hpp"
#include "biaxis/optim.hpp"
#include "biaxis/probe.hpp"

namespace biaxis {

// x_* = P^T R^T x: rotate, then keep the coordinates the sparsity pattern
// left alive. `active` is ascending and defines P.
struct SubspaceProjector {
    Matrix r;
    std::vector<std::size_t> active;

    std::size_t d() const { return r.rows(); }
    std::size_t d_star() const { return active.size(); }

    void validate() const {
        if (r.rows() != r.cols()) throw input_error("SubspaceProjector: R must be square");
        std::size_t prev = 0;
        bool first = true;
        for (std::size_t idx : active) {
            if (idx >= r.rows()) throw input_error("SubspaceProjector: active index out of range");
            if (!first && idx <= prev) throw input_error("SubspaceProjector: active indices must ascend");
            prev = idx;
            first = false;
        }
    }
};

inline SubspaceProjector projector_from_model(const RotationGAE& model) {
    SubspaceProjector p;
    p.r = model.r;
    p.active = active_rows(model.w0);
    p.validate();
    return p;
}

// Projector keeping the k dimensions with the largest W0 row norms.
inline SubspaceProjector projector_truncated(const RotationGAE& model, std::size_t k) {
    if (k < 1 || k > model.config.d) throw input_error("projector_truncated: bad size");
    const Vector norms = row_norms(model.w0);
    std::vector<std::size_t> ranked(model.config.d);
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&norms](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    ranked.resize(k);
    std::sort(ranked.begin(), ranked.end());
    SubspaceProjector p;
    p.r = model.r;
    p.active = std::move(ranked);
    p.validate();
    return p;
}

inline Vector project(const SubspaceProjector& p, const Vector& x) {
    if (x.size() != p.d()) throw dimension_error("project: vector length != d");
    Vector out(p.active.size());
    for (std::size_t k = 0; k < p.active.size(); ++k) {
        const std::size_t j = p.active[k];
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += p.r(i, j) * x[i];  // column j of R
        out[k] = s;
    }
    return out;
}

// Coordinates of R^T x the projection throws away.
inline Vector project_complement(const SubspaceProjector& p, const Vector& x) {
    if (x.size() != p.d()) throw dimension_error("project_complement: vector length != d");
    std::vector<bool> keep(p.d(), true);
    for (std::size_t j : p.active) keep[j] = false;
    Vector out;
    out.reserve(p.d() - p.active.size());
    for (std::size_t j = 0; j < p.d(); ++j) {
        if (!keep[j]) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += p.r(i, j) * x[i];
        out.push_back(s);
    }
    return out;
}

struct AxisPair {
    std::uint64_t pair_id = 0;
    std::string word_p;
    std::string word_q;
    Vector x_p;
    Vector x_q;
    std::uint64_t freq_p = 0;
    std::uint64_t freq_q = 0;
};

struct AxisScore {
    std::uint64_t pair_id = 0;
    double s = 0.0;
};

inline AxisScore axis_score(const SubspaceProjector& p, const AxisPair& pair) {
    return {pair.pair_id, norm2(project(p, pair.x_p)) + norm2(project(p, pair.x_q))};
}

namespace detail {

inline double cosine(const Vector& a, const Vector& b) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

} // namespace detail

// Frequency threshold, then mutual cosine-nearest-neighbor filtering in the
// full space, over the candidate words of the surviving pairs. Similarity
// ties fall to the word whose earliest pair has the lower id.
inline std::vector<AxisPair> mutual_nn_filter(const std::vector<AxisPair>& pairs,
                                              std::uint64_t min_freq = 100) {
    std::vector<AxisPair> frequent;
    for (const auto& p : pairs) {
        if (p.freq_p >= min_freq && p.freq_q >= min_freq) frequent.push_back(p);
    }

    struct WordInfo {
        Vector vec;
        std::uint64_t first_pair_id;
    };
    std::map<std::string, WordInfo> words;
    for (const auto& p : frequent) {
        auto [it_p, new_p] = words.try_emplace(p.word_p, WordInfo{p.x_p, p.pair_id});
        if (!new_p) it_p->second.first_pair_id = std::min(it_p->second.first_pair_id, p.pair_id);
        auto [it_q, new_q] = words.try_emplace(p.word_q, WordInfo{p.x_q, p.pair_id});
        if (!new_q) it_q->second.first_pair_id = std::min(it_q->second.first_pair_id, p.pair_id);
    }

    std::vector<const std::pair<const std::string, WordInfo>*> ordered;
    ordered.reserve(words.size());
    for (const auto& kv : words) ordered.push_back(&kv);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        if (a->second.first_pair_id != b->second.first_pair_id) {
            return a->second.first_pair_id < b->second.first_pair_id;
        }
        return a->first < b->first;
    });

    std::map<std::string, std::string> nearest;
    for (const auto& [w, info] : words) {
        double best = -2.0;
        const std::string* best_word = nullptr;
        for (const auto* cand : ordered) {
            if (cand->first == w) continue;
            const double sim = detail::cosine(info.vec, cand->second.vec);
            if (sim > best) {  // strict: earlier candidates win ties
                best = sim;
                best_word = &cand->first;
            }
        }
        if (best_word) nearest[w] = *best_word;
    }

    std::vector<AxisPair> kept;
    for (const auto& p : frequent) {
        auto np = nearest.find(p.word_p);
        auto nq = nearest.find(p.word_q);
        if (np != nearest.end() && nq != nearest.end() && np->second == p.word_q &&
            nq->second == p.word_p) {
            kept.push_back(p);
        }
    }
    return kept;
}

struct RatingComparison {
    double mean_top = 0.0;
    double mean_bottom = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    std::size_t n = 0;  // pairs per extreme
};

// Per-pair rating = mean of the two word ratings; compares the n pairs with
// the largest axis scores against the n with the smallest via a Welch
// two-tailed t-test. Pairs missing a rating for either word are skipped.
inline RatingComparison compare_rating_extremes(const std::vector<AxisPair>& pairs,
                                                const std::vector<AxisScore>& scores,
                                                const std::map<std::string, double>& ratings,
                                                std::size_t n = 100) {
    if (pairs.size() != scores.size()) throw dimension_error("compare_rating_extremes: size mismatch");
    if (n < 2) throw input_error("compare_rating_extremes: n must be >= 2");
    struct Rated {
        double s;
        std::uint64_t pair_id;
        double rating;
    };
    std::vector<Rated> rated;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto rp = ratings.find(pairs[i].word_p);
        auto rq = ratings.find(pairs[i].word_q);
        if (rp == ratings.end() || rq == ratings.end()) continue;
        rated.push_back({scores[i].s, scores[i].pair_id, 0.5 * (rp->second + rq->second)});
    }
    if (rated.size() < 2 * n) {
        throw input_error("compare_rating_extremes: only " + std::to_string(rated.size()) +
                          " rated pairs, need " + std::to_string(2 * n));
    }
    std::sort(rated.begin(), rated.end(), [](const Rated& a, const Rated& b) {
        if (a.s != b.s) return a.s > b.s;
        return a.pair_id < b.pair_id;
    });
    Vector top, bottom;
    top.reserve(n);
    bottom.reserve(n);
    for (std::size_t i = 0; i < n; ++i) top.push_back(rated[i].rating);
    for (std::size_t i = rated.size() - n; i < rated.size(); ++i) bottom.push_back(rated[i].rating);

    RatingComparison cmp;
    cmp.n = n;
    cmp.mean_top = std::accumulate(top.begin(), top.end(), 0.0) / static_cast<double>(n);
    cmp.mean_bottom = std::accumulate(bottom.begin(), bottom.end(), 0.0) / static_cast<double>(n);
    const WelchResult w = welch_t(top, bottom);
    cmp.t = w.t;
    cmp.df = w.df;
    cmp.p = w.p;
    return cmp;
}

// Mean Euclidean distance of the points to their centroid.
inline double dispersion(const std::vector<Vector>& points) {
    if (points.empty()) throw input_error("dispersion: need at least 1 point");
    const std::size_t d = points.front().size();
    Vector centroid(d, 0.0);
    for (const auto& p : points) {
        if (p.size() != d) throw dimension_error("dispersion: inconsistent dimensions");
        for (std::size_t j = 0; j < d; ++j) centroid[j] += p[j];
    }
    for (double& v : centroid) v /= static_cast<double>(points.size());
    double sum = 0.0;
    for (const auto& p : points) {
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += (p[j] - centroid[j]) * (p[j] - centroid[j]);
        sum += std::sqrt(ss);
    }
    return sum / static_cast<double>(points.size());
}

// ---------------------------------------------------------------------------
// Axis and rating files.
// Axis TSV: `pair_id<TAB>word_p<TAB>word_q<TAB>freq_p<TAB>freq_q`; word
// vectors are looked up in the embedding table (mean over nodes).
// Ratings TSV: `word<TAB>rating`.
// ---------------------------------------------------------------------------

inline std::vector<AxisPair> load_axis_pairs(const std::string& path, const EmbeddingTable& table) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open axis file: " + path);
    std::vector<AxisPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_blank_or_comment(line)) continue;
        const auto fields = detail::split_tsv_line(line);
        if (fields.size() != 5) {
            throw input_error(path + ":" + std::to_string(lineno) +
                              ": expected `pair_id<TAB>word_p<TAB>word_q<TAB>freq_p<TAB>freq_q`");
        }
        AxisPair p;
        try {
            p.pair_id = std::stoull(fields[0]);
            p.freq_p = std::stoull(fields[3]);
            p.freq_q = std::stoull(fields[4]);
        } catch (const std::exception&) {
            throw input_error(path + ":" + std::to_string(lineno) + ": bad numeric field");
        }
        p.word_p = fields[1];
        p.word_q = fields[2];
        p.x_p = table.mean_vector(table.concept_index(p.word_p));
        p.x_q = table.mean_vector(table.concept_index(p.word_q));
        pairs.push_back(std::move(p));
    }
    return pairs;
}

inline std::map<std::string, double> load_ratings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open ratings file: " + path);
    std::map<std::string, double> ratings;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_blank_or_comment(line)) continue;
        const auto fields = detail::split_tsv_line(line);
        if (fields.size() != 2) {
            throw input_error(path + ":" + std::to_string(lineno) + ": expected `word<TAB>rating`");
        }
        try {
            ratings[fields[0]] = std::stod(fields[1]);
        } catch (const std::exception&) {
            throw input_error(path + ":" + std::to_string(lineno) + ": bad rating");
        }
    }
    return ratings;
}

} // namespace biaxis
