// Command-line surface for the bias-subspace toolkit: synthetic benchmark
// generation, training, grid search, knee curves, projection, probing, graph
// statistics, and the end-to-end pipeline.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biaxis/embedding.hpp"
#include "biaxis/errors.hpp"
#include "biaxis/graph.hpp"
#include "biaxis/pipeline.hpp"
#include "biaxis/probe.hpp"
#include "biaxis/subspace.hpp"
#include "biaxis/synth.hpp"
#include "biaxis/train.hpp"

namespace fs = std::filesystem;
using namespace biaxis;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPipeline = 4;

struct CommonOpts {
    std::string manifest_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::size_t jobs = 1;
};

RunManifest load_with_overrides(const CommonOpts& opts) {
    RunManifest manifest = load_manifest(opts.manifest_path);
    if (opts.seed_override) {
        manifest.seed = *opts.seed_override;
        manifest.train.seed = *opts.seed_override;
    }
    if (opts.out_override) manifest.out_dir = *opts.out_override;
    return manifest;
}

void write_trial_jsonl(const std::string& path, const std::string& space,
                       const std::vector<TrialResult>& trials) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path);
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& t = trials[i];
        nlohmann::json j;
        j["space"] = space;
        j["trial"] = i;
        j["lr"] = t.settings.learning_rate;
        j["lambda_o"] = t.settings.lambda_o;
        j["lambda_s"] = t.settings.lambda_s;
        j["superepochs"] = t.settings.superepochs;
        j["accumulation"] = t.settings.accumulation;
        j["seed"] = t.settings.seed;
        j["dev_mauc"] = t.dev_mauc;
        j["test_mauc"] = t.test_mauc;
        j["d_star"] = t.d_star;
        j["wall_seconds"] = t.wall_seconds;
        out << j.dump() << '\n';
    }
}

int cmd_synth(const std::string& out_dir, const PlantedParams& params,
              const std::vector<double>& sweep) {
    fs::create_directories(out_dir);
    PlantedInstance inst;
    if (sweep.empty()) {
        inst = generate_planted(params);
    } else {
        std::vector<double> signals(params.n_concepts);
        for (std::size_t c = 0; c < params.n_concepts; ++c) signals[c] = sweep[c % sweep.size()];
        inst = generate_planted_with_signals(params, signals);
    }
    save_planted_instance(inst, out_dir);

    nlohmann::json manifest;
    manifest["seed"] = params.seed;
    manifest["edge_list"] = "graph.tsv";
    manifest["embedding_header"] = "embeddings.json";
    manifest["embedding_data"] = "embeddings.f64";
    manifest["partition"] = "communities.tsv";
    manifest["indexical_labels"] = "communities.tsv";
    manifest["out_dir"] = "out";
    std::ofstream mout(fs::path(out_dir) / "manifest.json", std::ios::binary);
    mout << manifest.dump(2) << '\n';

    std::cout << "instance written to " << out_dir << " (nodes=" << inst.graph.node_count()
              << ", edges=" << inst.graph.edge_count() << ", connected="
              << (inst.graph_connected ? "yes" : "no") << ")\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& opts, double lr, double lambda_o, double lambda_s, bool rotate,
              const std::string& prox) {
    const RunManifest manifest = load_with_overrides(opts);
    const Graph graph = load_edge_list(manifest.edge_list);
    const EmbeddingTable table = load_embedding_table(manifest.embedding_header, manifest.embedding_data);
    const TrainData data = build_train_data(graph, table, manifest.seed);

    TrialSettings settings;
    settings.learning_rate = lr;
    settings.lambda_o = rotate ? lambda_o : 0.0;
    settings.lambda_s = rotate ? lambda_s : 0.0;
    settings.rotate = rotate;
    settings.prox_mode = prox == "closed_form" ? ProxMode::kClosedForm : ProxMode::kWeightedNewton;
    settings.superepochs = manifest.train.superepochs;
    settings.accumulation = manifest.train.accumulation;
    settings.h1 = manifest.train.h1;
    settings.h2 = manifest.train.h2;
    settings.use_bias = manifest.train.use_bias;
    settings.seed = derive_seed(manifest.seed, 0);

    const TrialResult trial = train_trial(settings, data);
    fs::create_directories(manifest.out_dir);
    write_trial_jsonl((fs::path(manifest.out_dir) / "trial.jsonl").string(),
                      rotate ? "subspace" : "baseline", {trial});
    save_checkpoint(trial.model, (fs::path(manifest.out_dir) / "model.ckpt").string());
    std::cout << "dev_mauc=" << trial.dev_mauc << " test_mauc=" << trial.test_mauc
              << " d_star=" << trial.d_star << '\n';
    return kExitOk;
}

int cmd_grid(const CommonOpts& opts, bool baseline) {
    const RunManifest manifest = load_with_overrides(opts);
    const Graph graph = load_edge_list(manifest.edge_list);
    const EmbeddingTable table = load_embedding_table(manifest.embedding_header, manifest.embedding_data);
    const TrainData data = build_train_data(graph, table, manifest.seed);
    fs::create_directories(manifest.out_dir);

    TrainConfig cfg = manifest.train;
    cfg.rotate = true;
    const GridResult rotated = grid_search(cfg, data, opts.jobs);
    CsvWriter csv((fs::path(manifest.out_dir) / "trials.csv").string(), manifest.seed,
                  {"space", "trial", "lr", "lambda_o", "lambda_s", "dev_mauc", "test_mauc", "d_star"});
    auto emit = [&csv](const std::string& space, const std::vector<TrialResult>& all) {
        for (std::size_t i = 0; i < all.size(); ++i) {
            const auto& t = all[i];
            csv.write_row({space, format_size(i), format_double(t.settings.learning_rate),
                           format_double(t.settings.lambda_o), format_double(t.settings.lambda_s),
                           format_double(t.dev_mauc), format_double(t.test_mauc),
                           format_size(t.d_star)});
        }
    };
    emit("subspace", rotated.all);
    write_trial_jsonl((fs::path(manifest.out_dir) / "trials.jsonl").string(), "subspace", rotated.all);
    save_checkpoint(rotated.best.model, (fs::path(manifest.out_dir) / "model.ckpt").string());
    if (baseline) {
        TrainConfig base_cfg = manifest.train;
        base_cfg.rotate = false;
        base_cfg.lambda_o_grid = {0.0};
        base_cfg.lambda_s_grid = {0.0};
        const GridResult base = grid_search(base_cfg, data, opts.jobs);
        emit("baseline", base.all);
        std::cout << "baseline best test_mauc=" << base.best.test_mauc << '\n';
    }
    std::cout << "best dev_mauc=" << rotated.best.dev_mauc << " test_mauc="
              << rotated.best.test_mauc << " d_star=" << rotated.best.d_star << '\n';
    return kExitOk;
}

int cmd_curve(const CommonOpts& opts, const std::string& checkpoint) {
    const RunManifest manifest = load_with_overrides(opts);
    const Graph graph = load_edge_list(manifest.edge_list);
    const EmbeddingTable table = load_embedding_table(manifest.embedding_header, manifest.embedding_data);
    const TrainData data = build_train_data(graph, table, manifest.seed);
    TrialResult trial;
    trial.model = load_checkpoint(checkpoint);
    if (!trial.model.config.rotate) {
        throw input_error("curve: checkpoint was trained without rotation");
    }
    const auto curve = mauc_curve(trial, data, manifest.curve_max);
    const auto knee = knee_select(curve);
    fs::create_directories(manifest.out_dir);
    CsvWriter csv((fs::path(manifest.out_dir) / "curve.csv").string(), manifest.seed,
                  {"d_star", "dev_mauc", "is_knee"});
    for (const auto& p : curve) {
        csv.write_row({format_size(p.d_star), format_double(p.mauc),
                       knee && knee->d_star == p.d_star ? "1" : "0"});
    }
    if (knee) {
        std::cout << "knee at d_star=" << knee->d_star << " (dev_mauc=" << knee->mauc << ")\n";
    } else {
        std::cout << "no knee\n";
    }
    return kExitOk;
}

int cmd_project(const CommonOpts& opts, const std::string& projector_path, bool complement) {
    const RunManifest manifest = load_with_overrides(opts);
    const EmbeddingTable table = load_embedding_table(manifest.embedding_header, manifest.embedding_data);
    const SubspaceProjector projector = load_projector(projector_path);
    if (table.d() != projector.d()) throw input_error("project: table dimension != projector d");

    const std::size_t dim = complement ? projector.d() - projector.d_star() : projector.d_star();
    if (dim == 0) throw input_error("project: requested space is empty");
    EmbeddingTable out_table(dim, table.node_labels(), table.concept_labels());
    for (std::size_t c = 0; c < table.concept_count(); ++c) {
        const Matrix& src = table.concept_matrix(c);
        Matrix& dst = out_table.concept_matrix(c);
        for (std::size_t i = 0; i < src.rows(); ++i) {
            const Vector v = complement ? project_complement(projector, src.row(i))
                                        : project(projector, src.row(i));
            dst.set_row(i, v);
        }
    }
    fs::create_directories(manifest.out_dir);
    const std::string prefix = complement ? "complement" : "subspace";
    save_embedding_table(out_table, (fs::path(manifest.out_dir) / (prefix + ".json")).string(),
                         (fs::path(manifest.out_dir) / (prefix + ".f64")).string());
    std::cout << prefix << " table written (d=" << dim << ")\n";
    return kExitOk;
}

int cmd_probe_semantic(const CommonOpts& opts, const std::string& projector_path,
                       const std::vector<std::string>& rating_specs) {
    RunManifest manifest = load_with_overrides(opts);
    for (const auto& spec : rating_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw input_error("--ratings expects name=path");
        manifest.ratings[spec.substr(0, eq)] = spec.substr(eq + 1);
    }
    if (!manifest.axes) throw input_error("probe-semantic: manifest has no `axes` file");
    const EmbeddingTable table = load_embedding_table(manifest.embedding_header, manifest.embedding_data);
    const SubspaceProjector projector = load_projector(projector_path);

    const auto pairs = load_axis_pairs(*manifest.axes, table);
    const auto kept = mutual_nn_filter(pairs, manifest.semantic_min_freq);
    std::vector<AxisScore> scores;
    scores.reserve(kept.size());
    for (const auto& p : kept) scores.push_back(axis_score(projector, p));

    fs::create_directories(manifest.out_dir);
    CsvWriter csv((fs::path(manifest.out_dir) / "semantic_axes.csv").string(), manifest.seed,
                  {"pair_id", "word_p", "word_q", "s_a"});
    std::vector<std::size_t> order(kept.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        if (scores[a].s != scores[b].s) return scores[a].s > scores[b].s;
        return scores[a].pair_id < scores[b].pair_id;
    });
    for (std::size_t i : order) {
        csv.write_row({std::to_string(kept[i].pair_id), kept[i].word_p, kept[i].word_q,
                       format_double(scores[i].s)});
    }
    if (!manifest.ratings.empty()) {
        CsvWriter report((fs::path(manifest.out_dir) / "semantic_report.csv").string(), manifest.seed,
                         {"rating", "n_per_side", "mean_top", "mean_bottom", "t", "df", "p"});
        for (const auto& [name, path] : manifest.ratings) {
            const auto ratings = load_ratings(path);
            const RatingComparison cmp =
                compare_rating_extremes(kept, scores, ratings, manifest.semantic_top_n);
            report.write_row({name, format_size(cmp.n), format_double(cmp.mean_top),
                              format_double(cmp.mean_bottom), format_double(cmp.t),
                              format_double(cmp.df), format_double(cmp.p)});
        }
    }
    std::cout << kept.size() << " of " << pairs.size() << " axis pairs kept\n";
    return kExitOk;
}

int cmd_probe_indexical(const CommonOpts& opts, const std::string& projector_path,
                        const std::string& labels_override) {
    RunManifest manifest = load_with_overrides(opts);
    if (!labels_override.empty()) manifest.indexical_labels = labels_override;
    if (!manifest.indexical_labels) {
        throw input_error("probe-indexical: manifest has no `indexical_labels` file");
    }
    const Graph graph = load_edge_list(manifest.edge_list);
    const EmbeddingTable table = load_embedding_table(manifest.embedding_header, manifest.embedding_data);
    const SubspaceProjector projector = load_projector(projector_path);

    std::vector<std::uint32_t> labeled_nodes;
    const auto classes = load_class_labels(graph, *manifest.indexical_labels, labeled_nodes);
    const IndexicalReport report =
        run_indexical_probe(table, labeled_nodes, classes, projector, manifest.seed);

    fs::create_directories(manifest.out_dir);
    CsvWriter csv((fs::path(manifest.out_dir) / "indexical_report.csv").string(), manifest.seed,
                  {"space", "split", "accuracy", "test_name", "statistic", "p_value"});
    for (const auto& row : report.rows) {
        csv.write_row({space_name(row.space), row.split, format_double(row.accuracy),
                       row.has_test ? row.test_name : "",
                       row.has_test ? format_double(row.statistic) : "",
                       row.has_test ? format_double(row.p_value) : ""});
        std::cout << space_name(row.space) << '/' << row.split << " accuracy=" << row.accuracy << '\n';
    }
    return kExitOk;
}

int cmd_stats(const std::string& edges_path, const std::string& partition_path,
              const std::string& out_path) {
    const Graph g = load_edge_list(edges_path);
    std::optional<std::vector<int>> partition;
    if (!partition_path.empty()) partition = load_partition(g, partition_path);
    const GraphStats stats = graph_stats(g, partition);
    std::cout << "nodes=" << g.node_count() << " edges=" << g.edge_count()
              << " avg_degree=" << stats.avg_degree << " avg_path=" << stats.avg_shortest_path
              << " density=" << stats.density;
    if (stats.modularity) std::cout << " modularity=" << *stats.modularity;
    std::cout << '\n';
    if (!out_path.empty()) {
        CsvWriter csv(out_path, 0,
                      {"nodes", "edges", "avg_degree", "avg_shortest_path", "density", "modularity"});
        csv.write_row({format_size(g.node_count()), format_size(g.edge_count()),
                       format_double(stats.avg_degree), format_double(stats.avg_shortest_path),
                       format_double(stats.density),
                       stats.modularity ? format_double(*stats.modularity) : ""});
    }
    return kExitOk;
}

int cmd_pipeline(const CommonOpts& opts) {
    const RunManifest manifest = load_with_overrides(opts);
    const PipelineResult result = run_pipeline(manifest, opts.jobs);
    std::cout << "pipeline complete: out=" << result.out_dir
              << " best_dev_mauc=" << result.best_dev_mauc
              << " best_test_mauc=" << result.best_test_mauc;
    if (result.knee_d_star) std::cout << " knee_d_star=" << *result.knee_d_star;
    std::cout << " projector_d_star=" << result.projector_d_star << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised bias-subspace detection for contextualized embeddings"};
    app.require_subcommand(1);

    CommonOpts common;
    auto add_common = [&common](CLI::App* sub, bool with_manifest = true) {
        if (with_manifest) {
            sub->add_option("--manifest", common.manifest_path, "run manifest (JSON)")->required();
        }
        sub->add_option("--seed", common.seed_override, "override the manifest seed");
        sub->add_option("--out", common.out_override, "override the output directory");
        sub->add_option("--jobs", common.jobs, "parallel grid trials")->default_val(1);
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a planted-subspace benchmark instance");
    PlantedParams params;
    std::string synth_out = "instance";
    std::string sweep_csv;
    synth->add_option("--out", synth_out, "instance directory")->default_val("instance");
    synth->add_option("--nodes", params.n_nodes)->default_val(40);
    synth->add_option("--blocks", params.n_blocks)->default_val(2);
    synth->add_option("--p-in", params.p_in)->default_val(0.5);
    synth->add_option("--p-out", params.p_out)->default_val(0.02);
    synth->add_option("--dim", params.d)->default_val(32);
    synth->add_option("--k", params.k)->default_val(3);
    synth->add_option("--concepts", params.n_concepts)->default_val(50);
    synth->add_option("--signal", params.signal)->default_val(1.0);
    synth->add_option("--noise", params.noise)->default_val(0.3);
    synth->add_option("--seed", params.seed)->default_val(0);
    synth->add_option("--sweep", sweep_csv,
                      "comma-separated per-concept signal levels, assigned round-robin");

    // train
    auto* train = app.add_subcommand("train", "train one configuration");
    double lr = 1e-3, lambda_o = 1e-3, lambda_s = 1e-2;
    bool rotate = true;
    std::string prox = "weighted";
    add_common(train);
    train->add_option("--lr", lr)->default_val(1e-3);
    train->add_option("--lambda-o", lambda_o)->default_val(1e-3);
    train->add_option("--lambda-s", lambda_s)->default_val(1e-2);
    train->add_flag("--rotate,!--no-rotate", rotate, "learn the rotation (off = baseline)");
    train->add_option("--prox", prox, "weighted | closed_form")->default_val("weighted");

    // grid
    auto* grid = app.add_subcommand("grid", "hyperparameter grid search");
    bool grid_baseline = false;
    add_common(grid);
    grid->add_flag("--baseline", grid_baseline, "also run the rotate-off baseline grid");

    // curve
    auto* curve = app.add_subcommand("curve", "MAUC-vs-d_star curve with knee detection");
    std::string checkpoint = "model.ckpt";
    add_common(curve);
    curve->add_option("--checkpoint", checkpoint, "trained model checkpoint")->required();

    // project
    auto* project_cmd = app.add_subcommand("project", "project an embedding table");
    std::string projector_path;
    bool complement = false;
    add_common(project_cmd);
    project_cmd->add_option("--projector", projector_path, "projector JSON")->required();
    project_cmd->add_flag("--complement", complement, "emit the complement space instead");

    // probe-semantic
    auto* psem = app.add_subcommand("probe-semantic", "semantic-axis scoring and rating comparison");
    std::vector<std::string> rating_specs;
    std::string psem_projector;
    add_common(psem);
    psem->add_option("--projector", psem_projector, "projector JSON")->required();
    psem->add_option("--ratings", rating_specs, "extra ratings files as name=path");

    // probe-indexical
    auto* pidx = app.add_subcommand("probe-indexical", "indexical classification probe");
    std::string pidx_projector, pidx_labels;
    add_common(pidx);
    pidx->add_option("--projector", pidx_projector, "projector JSON")->required();
    pidx->add_option("--labels", pidx_labels, "node label -> class TSV (overrides manifest)");

    // stats
    auto* stats = app.add_subcommand("stats", "graph summary statistics");
    std::string stats_edges, stats_partition, stats_out;
    stats->add_option("--edges", stats_edges, "edge-list file")->required();
    stats->add_option("--partition", stats_partition, "optional partition file");
    stats->add_option("--out", stats_out, "optional CSV output path");

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "full run: grid -> knee -> projector -> probes");
    add_common(pipe);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            std::vector<double> sweep;
            if (!sweep_csv.empty()) {
                std::stringstream ss(sweep_csv);
                std::string tok;
                while (std::getline(ss, tok, ',')) sweep.push_back(std::stod(tok));
            }
            return cmd_synth(synth_out, params, sweep);
        }
        if (train->parsed()) return cmd_train(common, lr, lambda_o, lambda_s, rotate, prox);
        if (grid->parsed()) return cmd_grid(common, grid_baseline);
        if (curve->parsed()) return cmd_curve(common, checkpoint);
        if (project_cmd->parsed()) return cmd_project(common, projector_path, complement);
        if (psem->parsed()) return cmd_probe_semantic(common, psem_projector, rating_specs);
        if (pidx->parsed()) return cmd_probe_indexical(common, pidx_projector, pidx_labels);
        if (stats->parsed()) return cmd_stats(stats_edges, stats_partition, stats_out);
        if (pipe->parsed()) return cmd_pipeline(common);
    } catch (const pipeline_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitOk;
}
