#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "biaxis/embedding.hpp"
#include "biaxis/errors.hpp"
#include "biaxis/graph.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/model.hpp"
#include "biaxis/optim.hpp"
#include "biaxis/rng.hpp"

namespace biaxis {

// Area under the ROC curve in Mann-Whitney form, midranks for ties.
inline double auc(const Vector& pos_scores, const Vector& neg_scores) {
    if (pos_scores.empty() || neg_scores.empty()) {
        throw input_error("auc: both score lists must be non-empty");
    }
    struct Scored {
        double s;
        bool pos;
    };
    std::vector<Scored> all;
    all.reserve(pos_scores.size() + neg_scores.size());
    for (double s : pos_scores) all.push_back({s, true});
    for (double s : neg_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.s < b.s; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].s == all[i].s) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].pos) rank_sum_pos += midrank;
        }
        i = j;
    }
    const double np = static_cast<double>(pos_scores.size());
    const double nn = static_cast<double>(neg_scores.size());
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

struct ConceptSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> dev;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

// Same floor rule as the edge split: dev/test floored, remainder to train.
inline ConceptSplit split_concepts(std::size_t concept_count, std::uint64_t seed,
                                   double dev_ratio = 0.2, double test_ratio = 0.2) {
    if (concept_count < 3) throw input_error("split_concepts: need at least 3 concepts");
    std::vector<std::size_t> ids(concept_count);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    rng.shuffle(ids);
    const std::size_t n_dev = static_cast<std::size_t>(dev_ratio * static_cast<double>(concept_count));
    const std::size_t n_test = static_cast<std::size_t>(test_ratio * static_cast<double>(concept_count));
    ConceptSplit cs;
    cs.seed = seed;
    cs.dev.assign(ids.begin(), ids.begin() + n_dev);
    cs.test.assign(ids.begin() + n_dev, ids.begin() + n_dev + n_test);
    cs.train.assign(ids.begin() + n_dev + n_test, ids.end());
    std::sort(cs.dev.begin(), cs.dev.end());
    std::sort(cs.test.begin(), cs.test.end());
    std::sort(cs.train.begin(), cs.train.end());
    return cs;
}

// Everything a trial needs, immutable and shared across parallel trials.
struct TrainData {
    const Graph* graph = nullptr;
    const EmbeddingTable* table = nullptr;
    EdgeSplit edges;
    ConceptSplit concepts;
    Matrix a_train;  // message passing sees train edges only
    Matrix target;   // dense 0/1 train adjacency, zero diagonal
};

inline TrainData build_train_data(const Graph& g, const EmbeddingTable& table, std::uint64_t seed) {
    if (g.node_count() != table.node_count()) {
        throw input_error("build_train_data: graph nodes != embedding nodes");
    }
    TrainData data;
    data.graph = &g;
    data.table = &table;
    data.edges = split_edges(g, derive_seed(seed, 0xe5ULL));
    data.concepts = split_concepts(table.concept_count(), derive_seed(seed, 0xc5ULL));
    data.a_train = normalized_adjacency(g.node_count(), data.edges.train);
    data.target = Matrix(g.node_count(), g.node_count());
    for (const auto& [u, v] : data.edges.train) {
        data.target(u, v) = 1.0;
        data.target(v, u) = 1.0;
    }
    return data;
}

struct TrialSettings {
    double learning_rate = 1e-3;
    double lambda_o = 0.0;
    double lambda_s = 0.0;
    bool rotate = true;
    ProxMode prox_mode = ProxMode::kWeightedNewton;
    std::size_t superepochs = 100;
    std::size_t accumulation = 10;
    std::size_t h1 = 10;
    std::size_t h2 = 10;
    bool use_bias = true;
    std::uint64_t seed = 0;
};

struct TrialResult {
    TrialSettings settings;
    RotationGAE model;
    double dev_mauc = 0.0;
    double test_mauc = 0.0;
    std::size_t d_star = 0;
    Vector dev_concept_aucs;
    Vector test_concept_aucs;
    std::vector<std::size_t> d_star_history;  // per superepoch
    double wall_seconds = 0.0;
};

enum class EvalSplit { kDev, kTest };

// Scores one concept's held-out edges against the frozen negatives using the
// decoder logits; message passing over the train adjacency.
inline double concept_auc(const RotationGAE& model, const TrainData& data, std::size_t concept_id,
                          const std::vector<Edge>& positives, const std::vector<Edge>& negatives) {
    const Matrix& x = data.table->concept_matrix(concept_id);
    if (x.rows() != data.graph->node_count()) {
        throw input_error("concept " + data.table->concept_labels()[concept_id] +
                          ": embedding rows != node count");
    }
    const ForwardCache cache = forward(model, data.a_train, x);
    Vector pos, neg;
    pos.reserve(positives.size());
    neg.reserve(negatives.size());
    for (const auto& [u, v] : positives) pos.push_back(cache.logits(u, v));
    for (const auto& [u, v] : negatives) neg.push_back(cache.logits(u, v));
    return auc(pos, neg);
}

inline std::pair<double, Vector> evaluate_mauc(const RotationGAE& model, const TrainData& data,
                                               EvalSplit which) {
    const auto& concepts = which == EvalSplit::kDev ? data.concepts.dev : data.concepts.test;
    const auto& positives = which == EvalSplit::kDev ? data.edges.dev : data.edges.test;
    const auto& negatives = which == EvalSplit::kDev ? data.edges.dev_negatives : data.edges.test_negatives;
    if (concepts.empty()) throw input_error("evaluate_mauc: empty concept list");
    Vector per_concept;
    per_concept.reserve(concepts.size());
    for (std::size_t c : concepts) {
        per_concept.push_back(concept_auc(model, data, c, positives, negatives));
    }
    const double mean = std::accumulate(per_concept.begin(), per_concept.end(), 0.0) /
                        static_cast<double>(per_concept.size());
    return {mean, per_concept};
}

// One training run: superepochs loop over train concepts in a reshuffled
// order, one forward/backward per concept, Adam + structured prox every
// `accumulation` concepts.
inline TrialResult train_trial(const TrialSettings& settings, const TrainData& data) {
    const auto t0 = std::chrono::steady_clock::now();

    ModelConfig mc;
    mc.d = data.table->d();
    mc.h1 = settings.h1;
    mc.h2 = settings.h2;
    mc.lambda_o = settings.lambda_o;
    mc.lambda_s = settings.lambda_s;
    mc.rotate = settings.rotate;
    mc.use_bias = settings.use_bias;

    RotationGAE model = RotationGAE::init(mc, derive_seed(settings.seed, 0x1417ULL));
    AdamState adam = AdamState::init(mc, settings.learning_rate);
    ProxConfig prox;
    prox.lambda_s = settings.lambda_s;
    prox.mode = settings.prox_mode;

    Rng shuffle_rng(derive_seed(settings.seed, 0x50ULL));
    std::vector<std::size_t> order = data.concepts.train;

    ModelGrads accum = ModelGrads::zeros(mc);
    std::size_t window = 0;

    TrialResult result;
    result.settings = settings;
    result.d_star_history.reserve(settings.superepochs);

    for (std::size_t se = 0; se < settings.superepochs; ++se) {
        shuffle_rng.shuffle(order);
        for (std::size_t c : order) {
            const Matrix& x = data.table->concept_matrix(c);
            ForwardCache cache = forward(model, data.a_train, x);
            const LossBreakdown lb = loss(cache.logits, data.target, model);
            if (!std::isfinite(lb.total)) {
                throw numerical_error("train_trial: non-finite loss at superepoch " +
                                      std::to_string(se) + ", concept " +
                                      data.table->concept_labels()[c]);
            }
            accum.accumulate(backward(cache, data.target, model, data.a_train));
            if (++window == settings.accumulation) {
                accum.scale(1.0 / static_cast<double>(window));
                adam_step(adam, model, accum);
                apply_structured_prox(model, adam, prox);
                accum = ModelGrads::zeros(mc);
                window = 0;
            }
        }
        result.d_star_history.push_back(active_rows(model.w0).size());
    }
    if (window > 0) {
        accum.scale(1.0 / static_cast<double>(window));
        adam_step(adam, model, accum);
        apply_structured_prox(model, adam, prox);
    }

    result.model = std::move(model);
    result.d_star = active_rows(result.model.w0).size();
    auto [dev_mauc, dev_aucs] = evaluate_mauc(result.model, data, EvalSplit::kDev);
    auto [test_mauc, test_aucs] = evaluate_mauc(result.model, data, EvalSplit::kTest);
    result.dev_mauc = dev_mauc;
    result.test_mauc = test_mauc;
    result.dev_concept_aucs = std::move(dev_aucs);
    result.test_concept_aucs = std::move(test_aucs);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

struct TrainConfig {
    Vector lr_grid = {1e-4, 3e-4, 1e-3};
    Vector lambda_o_grid = {1e-3, 3e-3, 1e-2};
    Vector lambda_s_grid = {1e-2, 3e-2, 1e-1};
    bool rotate = true;
    ProxMode prox_mode = ProxMode::kWeightedNewton;
    std::size_t superepochs = 100;
    std::size_t accumulation = 10;
    std::size_t h1 = 10;
    std::size_t h2 = 10;
    bool use_bias = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr_grid.empty()) throw input_error("TrainConfig: empty learning-rate grid");
        if (rotate && (lambda_o_grid.empty() || lambda_s_grid.empty())) {
            throw input_error("TrainConfig: empty penalty grid");
        }
        if (accumulation == 0) throw input_error("TrainConfig: accumulation must be >= 1");
    }
};

// Grid points in lexicographic (r, lambda_o, lambda_s) order. The baseline
// grid (rotation off) varies the learning rate only.
inline std::vector<TrialSettings> grid_points(const TrainConfig& config) {
    config.validate();
    std::vector<TrialSettings> points;
    auto base = [&](double lr) {
        TrialSettings s;
        s.learning_rate = lr;
        s.rotate = config.rotate;
        s.prox_mode = config.prox_mode;
        s.superepochs = config.superepochs;
        s.accumulation = config.accumulation;
        s.h1 = config.h1;
        s.h2 = config.h2;
        s.use_bias = config.use_bias;
        return s;
    };
    if (config.rotate) {
        for (double lr : config.lr_grid) {
            for (double lo : config.lambda_o_grid) {
                for (double ls : config.lambda_s_grid) {
                    TrialSettings s = base(lr);
                    s.lambda_o = lo;
                    s.lambda_s = ls;
                    points.push_back(s);
                }
            }
        }
    } else {
        for (double lr : config.lr_grid) points.push_back(base(lr));
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        points[i].seed = derive_seed(config.seed, i);
    }
    return points;
}

struct GridResult {
    TrialResult best;
    std::vector<TrialResult> all;
};

// Selection rule: highest dev MAUC, ties to the smaller d_star, then to the
// lexicographically smaller (r, lambda_o, lambda_s).
inline std::size_t best_trial_index(const std::vector<TrialResult>& results) {
    if (results.empty()) throw input_error("best_trial_index: no trials");
    const auto key = [](const TrialResult& t) {
        return std::make_tuple(-t.dev_mauc, t.d_star, t.settings.learning_rate,
                               t.settings.lambda_o, t.settings.lambda_s);
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        if (key(results[i]) < key(results[best])) best = i;
    }
    return best;
}

// argmax dev MAUC; ties broken by smaller d_star, then lexicographically
// smaller (r, lambda_o, lambda_s). Trials are independent; `jobs` threads
// share a work queue and the outcome is identical for any thread count.
inline GridResult grid_search(const TrainConfig& config, const TrainData& data, std::size_t jobs = 1) {
    const std::vector<TrialSettings> points = grid_points(config);
    std::vector<TrialResult> results(points.size());

    if (jobs <= 1 || points.size() <= 1) {
        for (std::size_t i = 0; i < points.size(); ++i) results[i] = train_trial(points[i], data);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= points.size()) return;
                try {
                    results[i] = train_trial(points[i], data);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        const std::size_t n_threads = std::min(jobs, points.size());
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (error) std::rethrow_exception(error);
    }

    GridResult out;
    out.best = results[best_trial_index(results)];
    out.all = std::move(results);
    return out;
}

struct CurvePoint {
    std::size_t d_star = 0;
    double mauc = 0.0;
};

// Nested truncation of a trained rotate-on model: rank rotated dimensions by
// descending row norm of W0, keep the top k rows, evaluate dev MAUC.
inline std::vector<CurvePoint> mauc_curve(const TrialResult& trial, const TrainData& data,
                                          std::size_t max_size = 100) {
    if (max_size == 0) throw input_error("mauc_curve: max size must be >= 1");
    const std::size_t d = trial.model.config.d;
    const Vector norms = row_norms(trial.model.w0);
    std::vector<std::size_t> ranked(d);
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&norms](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    std::vector<CurvePoint> curve;
    const std::size_t upper = std::min(max_size, d);
    curve.reserve(upper);
    RotationGAE truncated = trial.model;
    for (std::size_t k = 1; k <= upper; ++k) {
        truncated.w0 = trial.model.w0;
        for (std::size_t r = k; r < d; ++r) {
            for (std::size_t j = 0; j < truncated.w0.cols(); ++j) truncated.w0(ranked[r], j) = 0.0;
        }
        auto [mauc, per_concept] = evaluate_mauc(truncated, data, EvalSplit::kDev);
        curve.push_back({k, mauc});
    }
    return curve;
}

// Dimension ranking used by the curve; the first d_star entries of this order
// define the knee-truncated projector.
inline std::vector<std::size_t> rank_dimensions(const Matrix& w0) {
    const Vector norms = row_norms(w0);
    std::vector<std::size_t> ranked(w0.rows());
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&norms](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    return ranked;
}

struct Knee {
    std::size_t index = 0;   // position in the curve
    std::size_t d_star = 0;  // x value at the knee
    double mauc = 0.0;
};

// Kneedle for concave increasing curves, sensitivity S = 1. Returns nothing
// when no difference-curve maximum clears the threshold.
inline std::optional<Knee> knee_select(const std::vector<CurvePoint>& curve) {
    const std::size_t n = curve.size();
    if (n < 3) throw input_error("knee_select: need at least 3 points");

    double x_min = curve.front().d_star, x_max = curve.front().d_star;
    double y_min = curve.front().mauc, y_max = curve.front().mauc;
    for (const auto& p : curve) {
        x_min = std::min(x_min, static_cast<double>(p.d_star));
        x_max = std::max(x_max, static_cast<double>(p.d_star));
        y_min = std::min(y_min, p.mauc);
        y_max = std::max(y_max, p.mauc);
    }
    if (x_max == x_min || y_max == y_min) return std::nullopt;  // flat or degenerate

    Vector diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xn = (static_cast<double>(curve[i].d_star) - x_min) / (x_max - x_min);
        const double yn = (curve[i].mauc - y_min) / (y_max - y_min);
        diff[i] = yn - xn;
    }

    // Normalized x spans [0,1], so the mean spacing is 1/(n-1) regardless of
    // the sampling grid.
    const double threshold_step = 1.0 / static_cast<double>(n - 1);

    std::vector<std::size_t> maxima;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (diff[i] > diff[i - 1] && diff[i] > diff[i + 1]) maxima.push_back(i);
    }
    for (std::size_t m = 0; m < maxima.size(); ++m) {
        const std::size_t i = maxima[m];
        const double bar = diff[i] - threshold_step;
        const std::size_t stop = m + 1 < maxima.size() ? maxima[m + 1] : n;
        for (std::size_t j = i + 1; j < stop; ++j) {
            if (diff[j] < bar) {
                return Knee{i, curve[i].d_star, curve[i].mauc};
            }
        }
    }
    return std::nullopt;
}

} // namespace biaxis
