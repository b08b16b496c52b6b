#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "biaxis/embedding.hpp"
#include "biaxis/errors.hpp"
#include "biaxis/graph.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/model.hpp"
#include "biaxis/probe.hpp"
#include "biaxis/subspace.hpp"
#include "biaxis/synth.hpp"
#include "biaxis/train.hpp"

namespace biaxis {

// ---------------------------------------------------------------------------
// Deterministic text formatting. All numeric output goes through to_chars so
// that reruns with the same manifest are byte-identical.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_size(std::size_t v) { return std::to_string(v); }

class CsvWriter {
public:
    CsvWriter(const std::string& path, std::uint64_t seed, const std::vector<std::string>& header)
        : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw input_error("cannot write " + path);
        out_ << "# seed=" << seed << "\n";
        write_row(header);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << escape(fields[i]);
        }
        out_ << '\n';
    }

    ~CsvWriter() { out_.flush(); }

private:
    static std::string escape(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q += c;
        }
        q += "\"";
        return q;
    }

    std::ofstream out_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// SVG scatter plots (the only non-CSV artifacts).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace detail

// Minimal standalone scatter plot: fixed 600x600 viewport, 5% margins, one
// fill color per group from a fixed palette, legend in the corner.
inline void emit_svg_scatter(const Matrix& points, const std::vector<std::string>& groups,
                             const std::string& path) {
    if (points.cols() != 2) throw dimension_error("emit_svg_scatter: points must be n x 2");
    if (points.rows() < 1) throw input_error("emit_svg_scatter: need at least one point");
    if (groups.size() != points.rows()) throw dimension_error("emit_svg_scatter: group count mismatch");

    static const char* kPalette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::vector<std::string> group_order;
    std::map<std::string, std::size_t> group_index;
    for (const auto& g : groups) {
        if (group_index.emplace(g, group_order.size()).second) group_order.push_back(g);
    }

    double xmin = points(0, 0), xmax = xmin, ymin = points(0, 1), ymax = ymin;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        xmin = std::min(xmin, points(i, 0));
        xmax = std::max(xmax, points(i, 0));
        ymin = std::min(ymin, points(i, 1));
        ymax = std::max(ymax, points(i, 1));
    }
    double xspan = xmax - xmin, yspan = ymax - ymin;
    if (xspan == 0.0) xspan = 1.0;
    if (yspan == 0.0) yspan = 1.0;
    const double size = 600.0, margin = 0.05 * size;
    const double plot = size - 2.0 * margin;
    auto sx = [&](double x) { return margin + (x - xmin) / xspan * plot; };
    auto sy = [&](double y) { return size - margin - (y - ymin) / yspan * plot; };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write svg: " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" "
           "viewBox=\"0 0 600 600\">\n"
        << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const std::size_t gi = group_index[groups[i]] % 8;
        out << "<circle cx=\"" << format_double(sx(points(i, 0))) << "\" cy=\""
            << format_double(sy(points(i, 1))) << "\" r=\"4\" fill=\"" << kPalette[gi]
            << "\" fill-opacity=\"0.75\"/>\n";
    }
    double ly = margin;
    for (std::size_t g = 0; g < group_order.size(); ++g) {
        out << "<rect x=\"" << format_double(size - margin - 130.0) << "\" y=\"" << format_double(ly)
            << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[g % 8] << "\"/>\n"
            << "<text x=\"" << format_double(size - margin - 112.0) << "\" y=\""
            << format_double(ly + 11.0) << "\" font-family=\"sans-serif\" font-size=\"13\">"
            << detail::xml_escape(group_order[g]) << "</text>\n";
        ly += 18.0;
    }
    out << "</svg>\n";
    if (!out) throw input_error("failed writing svg: " + path);
}

// ---------------------------------------------------------------------------
// Projector persistence: small JSON next to the binary checkpoint.
// ---------------------------------------------------------------------------

inline void save_projector(const SubspaceProjector& projector, const RotationGAE& model,
                           const std::string& json_path, const std::string& checkpoint_name) {
    const auto dir = std::filesystem::path(json_path).parent_path();
    save_checkpoint(model, (dir / checkpoint_name).string());
    nlohmann::json j;
    j["version"] = 1;
    j["d"] = projector.d();
    j["d_star"] = projector.d_star();
    j["active"] = projector.active;
    j["checkpoint"] = checkpoint_name;
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw input_error("cannot write projector: " + json_path);
    out << j.dump(2) << '\n';
}

inline SubspaceProjector load_projector(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw input_error("cannot open projector: " + json_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("bad projector file: " + std::string(e.what()));
    }
    if (j.value("version", 0) != 1) throw input_error("unsupported projector version");
    const auto dir = std::filesystem::path(json_path).parent_path();
    const RotationGAE model = load_checkpoint((dir / j.at("checkpoint").get<std::string>()).string());
    SubspaceProjector p;
    p.r = model.r;
    p.active = j.at("active").get<std::vector<std::size_t>>();
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Run manifest. All paths are resolved relative to the manifest file and must
// exist at load time.
// ---------------------------------------------------------------------------

struct RunManifest {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string edge_list;
    std::string embedding_header;
    std::string embedding_data;
    std::optional<std::string> partition;
    std::optional<std::string> axes;
    std::map<std::string, std::string> ratings;        // name -> path
    std::optional<std::string> indexical_labels;       // node label -> class
    TrainConfig train;
    bool baseline = true;          // also run the rotate-off grid
    std::size_t curve_max = 100;
    std::size_t semantic_top_n = 100;
    std::uint64_t semantic_min_freq = 100;
    std::string source_path;       // manifest location, for provenance
};

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("bad manifest " + path + ": " + e.what());
    }
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&base](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    auto require_file = [&path](const std::string& p) {
        if (!std::filesystem::exists(p)) {
            throw input_error("manifest " + path + " references missing file: " + p);
        }
        return p;
    };

    RunManifest m;
    m.source_path = path;
    m.seed = j.value("seed", 0ULL);
    m.out_dir = j.contains("out_dir") ? resolve(j["out_dir"].get<std::string>())
                                      : (base / "out").string();
    m.edge_list = require_file(resolve(j.at("edge_list").get<std::string>()));
    m.embedding_header = require_file(resolve(j.at("embedding_header").get<std::string>()));
    m.embedding_data = require_file(resolve(j.at("embedding_data").get<std::string>()));
    if (j.contains("partition")) m.partition = require_file(resolve(j["partition"].get<std::string>()));
    if (j.contains("axes")) m.axes = require_file(resolve(j["axes"].get<std::string>()));
    if (j.contains("ratings")) {
        for (const auto& [name, p] : j["ratings"].items()) {
            m.ratings[name] = require_file(resolve(p.get<std::string>()));
        }
    }
    if (j.contains("indexical_labels")) {
        m.indexical_labels = require_file(resolve(j["indexical_labels"].get<std::string>()));
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("lr_grid")) m.train.lr_grid = t["lr_grid"].get<Vector>();
        if (t.contains("lambda_o_grid")) m.train.lambda_o_grid = t["lambda_o_grid"].get<Vector>();
        if (t.contains("lambda_s_grid")) m.train.lambda_s_grid = t["lambda_s_grid"].get<Vector>();
        m.train.superepochs = t.value("superepochs", m.train.superepochs);
        m.train.accumulation = t.value("accumulation", m.train.accumulation);
        m.train.h1 = t.value("h1", m.train.h1);
        m.train.h2 = t.value("h2", m.train.h2);
        m.train.use_bias = t.value("use_bias", m.train.use_bias);
        if (t.contains("prox")) {
            const auto mode = t["prox"].get<std::string>();
            if (mode == "weighted") m.train.prox_mode = ProxMode::kWeightedNewton;
            else if (mode == "closed_form") m.train.prox_mode = ProxMode::kClosedForm;
            else throw input_error("manifest: prox must be `weighted` or `closed_form`");
        }
    }
    m.baseline = j.value("baseline", true);
    m.curve_max = j.value("curve_max", 100ULL);
    m.semantic_top_n = j.value("semantic_top_n", 100ULL);
    m.semantic_min_freq = j.value("semantic_min_freq", 100ULL);
    m.train.seed = m.seed;
    m.train.validate();
    return m;
}

inline std::vector<int> load_class_labels(const Graph& g, const std::string& path,
                                          std::vector<std::uint32_t>& labeled_nodes) {
    // reuse the partition format; restrict to the nodes present in the file
    std::ifstream in(path);
    if (!in) throw input_error("cannot open labels: " + path);
    std::map<std::string, int> by_label;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::is_blank_or_comment(line)) continue;
        const auto fields = detail::split_tsv_line(line);
        if (fields.size() != 2) throw input_error("labels file: expected `node<TAB>class`");
        try {
            by_label[fields[0]] = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw input_error("labels file: bad class id for " + fields[0]);
        }
    }
    labeled_nodes.clear();
    std::vector<int> classes;
    for (std::uint32_t i = 0; i < g.node_count(); ++i) {
        auto it = by_label.find(g.node_labels()[i]);
        if (it == by_label.end()) continue;
        labeled_nodes.push_back(i);
        classes.push_back(it->second);
    }
    if (labeled_nodes.empty()) throw input_error("labels file matches no graph node");
    std::set<int> distinct(classes.begin(), classes.end());
    if (distinct.size() != 2) {
        throw input_error("indexical probing needs exactly 2 classes, found " +
                          std::to_string(distinct.size()));
    }
    const int lo = *distinct.begin();
    for (int& c : classes) c = c == lo ? 0 : 1;
    return classes;
}

// ---------------------------------------------------------------------------
// Indexical probing shared by the pipeline and the CLI subcommand.
// ---------------------------------------------------------------------------

enum class SpaceTag { kFull, kSubspace, kComplement };

inline const char* space_name(SpaceTag s) {
    switch (s) {
        case SpaceTag::kFull: return "full";
        case SpaceTag::kSubspace: return "subspace";
        default: return "complement";
    }
}

struct IndexicalRow {
    SpaceTag space;
    std::string split;
    double accuracy;
    std::string test_name;  // filled on the best row per split
    double statistic = 0.0;
    double p_value = 1.0;
    bool has_test = false;
};

struct IndexicalReport {
    std::vector<IndexicalRow> rows;
    // per space: predictions on dev/test, for PCA plots and McNemar
    std::map<std::string, LabeledSet> sets;
    std::map<std::string, LogRegModel> models;
};

// Features: one row per (concept, labeled node); split 60/20/20 by concept so
// evaluation concepts are held out entirely.
inline LabeledSet build_indexical_set(const EmbeddingTable& table,
                                      const std::vector<std::uint32_t>& nodes,
                                      const std::vector<int>& classes, SpaceTag space,
                                      const SubspaceProjector& projector,
                                      const ConceptSplit& concepts) {
    std::size_t dim = 0;
    switch (space) {
        case SpaceTag::kFull: dim = table.d(); break;
        case SpaceTag::kSubspace: dim = projector.d_star(); break;
        case SpaceTag::kComplement: dim = projector.d() - projector.d_star(); break;
    }
    if (dim == 0) throw input_error(std::string("indexical probe: empty feature space `") +
                                    space_name(space) + "`");
    const std::size_t n = table.concept_count() * nodes.size();
    LabeledSet set;
    set.features = Matrix(n, dim);
    set.labels.resize(n);
    std::size_t row = 0;
    std::vector<int> concept_part(table.concept_count(), 0);  // 0 train, 1 dev, 2 test
    for (std::size_t c : concepts.dev) concept_part[c] = 1;
    for (std::size_t c : concepts.test) concept_part[c] = 2;
    for (std::size_t c = 0; c < table.concept_count(); ++c) {
        const Matrix& xc = table.concept_matrix(c);
        for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
            Vector x = xc.row(nodes[ni]);
            Vector f;
            switch (space) {
                case SpaceTag::kFull: f = std::move(x); break;
                case SpaceTag::kSubspace: f = project(projector, x); break;
                case SpaceTag::kComplement: f = project_complement(projector, x); break;
            }
            set.features.set_row(row, f);
            set.labels[row] = classes[ni];
            switch (concept_part[c]) {
                case 0: set.train.push_back(row); break;
                case 1: set.dev.push_back(row); break;
                default: set.test.push_back(row); break;
            }
            ++row;
        }
    }
    set.seed = concepts.seed;
    return set;
}

inline IndexicalReport run_indexical_probe(const EmbeddingTable& table,
                                           const std::vector<std::uint32_t>& nodes,
                                           const std::vector<int>& classes,
                                           const SubspaceProjector& projector, std::uint64_t seed) {
    const ConceptSplit concepts = split_concepts(table.concept_count(), derive_seed(seed, 0x1091ULL));
    IndexicalReport report;
    std::vector<SpaceTag> spaces = {SpaceTag::kSubspace, SpaceTag::kFull};
    if (projector.d_star() < projector.d()) spaces.push_back(SpaceTag::kComplement);

    for (SpaceTag space : spaces) {
        LabeledSet set = build_indexical_set(table, nodes, classes, space, projector, concepts);
        LogRegModel model = logreg_fit(set);
        report.sets.emplace(space_name(space), std::move(set));
        report.models.emplace(space_name(space), std::move(model));
    }

    for (const std::string split : {"dev", "test"}) {
        std::vector<std::pair<double, SpaceTag>> accs;
        for (SpaceTag space : spaces) {
            const auto& set = report.sets.at(space_name(space));
            const auto& model = report.models.at(space_name(space));
            const auto& rows = split == "dev" ? set.dev : set.test;
            accs.emplace_back(logreg_accuracy(model, set.features, set.labels, rows), space);
        }
        // best vs second-best McNemar on the shared evaluation rows
        auto best_it = std::max_element(accs.begin(), accs.end(),
                                        [](const auto& a, const auto& b) { return a.first < b.first; });
        const SpaceTag best_space = best_it->second;
        double second_acc = -1.0;
        SpaceTag second_space = best_space;
        for (const auto& [acc, space] : accs) {
            if (space != best_space && acc > second_acc) {
                second_acc = acc;
                second_space = space;
            }
        }
        for (const auto& [acc, space] : accs) {
            IndexicalRow row;
            row.space = space;
            row.split = split;
            row.accuracy = acc;
            if (space == best_space && second_acc >= 0.0) {
                const auto& set_a = report.sets.at(space_name(best_space));
                const auto& set_b = report.sets.at(space_name(second_space));
                const auto& rows_idx = split == "dev" ? set_a.dev : set_a.test;
                const auto& rows_idx_b = split == "dev" ? set_b.dev : set_b.test;
                const auto pred_a = logreg_predict(report.models.at(space_name(best_space)),
                                                   set_a.features, rows_idx);
                const auto pred_b = logreg_predict(report.models.at(space_name(second_space)),
                                                   set_b.features, rows_idx_b);
                std::uint64_t b_cnt = 0, c_cnt = 0;
                for (std::size_t i = 0; i < rows_idx.size(); ++i) {
                    const bool a_ok = pred_a[i] == set_a.labels[rows_idx[i]];
                    const bool b_ok = pred_b[i] == set_b.labels[rows_idx_b[i]];
                    if (a_ok && !b_ok) ++b_cnt;
                    if (!a_ok && b_ok) ++c_cnt;
                }
                row.test_name = std::string("mcnemar_vs_") + space_name(second_space);
                if (b_cnt + c_cnt > 0) {
                    const McNemarResult mn = mcnemar(b_cnt, c_cnt);
                    row.statistic = mn.chi2;
                    row.p_value = mn.p;
                } else {
                    row.statistic = 0.0;
                    row.p_value = 1.0;
                }
                row.has_test = true;
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// The full pipeline: grid search -> knee -> projector -> probes -> CSV/SVG.
// ---------------------------------------------------------------------------

struct PipelineResult {
    std::string out_dir;
    double best_dev_mauc = 0.0;
    double best_test_mauc = 0.0;
    std::optional<double> baseline_test_mauc;
    std::size_t trained_d_star = 0;
    std::optional<std::size_t> knee_d_star;
    std::size_t projector_d_star = 0;
};

// Carries the failing stage plus the exit code the CLI should use: 2 for
// input errors before any work, 3 for numerical failures, 4 for failures
// after earlier stages already produced output.
class pipeline_error : public std::runtime_error {
public:
    pipeline_error(std::string stage, const std::string& msg, int exit_code)
        : std::runtime_error("pipeline stage `" + stage + "`: " + msg),
          stage_(std::move(stage)),
          exit_code_(exit_code) {}
    const std::string& stage() const { return stage_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

inline PipelineResult run_pipeline(const RunManifest& manifest, std::size_t jobs = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(manifest.out_dir);
    const auto out = [&manifest](const std::string& name) {
        return (fs::path(manifest.out_dir) / name).string();
    };
    // stale failure markers from previous runs must not survive a success
    std::error_code ec;
    fs::remove(out("FAILED"), ec);

    std::string stage = "load";
    try {
        const Graph graph = load_edge_list(manifest.edge_list);
        const EmbeddingTable table =
            load_embedding_table(manifest.embedding_header, manifest.embedding_data);
        const TrainData data = build_train_data(graph, table, manifest.seed);

        PipelineResult result;
        result.out_dir = manifest.out_dir;

        stage = "grid";
        TrainConfig rotate_cfg = manifest.train;
        rotate_cfg.rotate = true;
        const GridResult rotated = grid_search(rotate_cfg, data, jobs);
        std::optional<GridResult> base;
        if (manifest.baseline) {
            TrainConfig base_cfg = manifest.train;
            base_cfg.rotate = false;
            base_cfg.lambda_o_grid = {0.0};
            base_cfg.lambda_s_grid = {0.0};
            base = grid_search(base_cfg, data, jobs);
        }
        {
            CsvWriter csv(out("trials.csv"), manifest.seed,
                          {"space", "trial", "lr", "lambda_o", "lambda_s", "superepochs",
                           "accumulation", "prox", "dev_mauc", "test_mauc", "d_star"});
            auto emit = [&csv](const std::string& space, const std::vector<TrialResult>& all) {
                for (std::size_t i = 0; i < all.size(); ++i) {
                    const auto& t = all[i];
                    csv.write_row({space, format_size(i), format_double(t.settings.learning_rate),
                                   format_double(t.settings.lambda_o),
                                   format_double(t.settings.lambda_s),
                                   format_size(t.settings.superepochs),
                                   format_size(t.settings.accumulation),
                                   t.settings.prox_mode == ProxMode::kWeightedNewton ? "weighted"
                                                                                     : "closed_form",
                                   format_double(t.dev_mauc), format_double(t.test_mauc),
                                   format_size(t.d_star)});
                }
            };
            emit("subspace", rotated.all);
            if (base) emit("baseline", base->all);
        }
        {
            // full per-trial records incl. runtime; runtime stays out of the CSVs
            std::ofstream jsonl(out("trials.jsonl"), std::ios::binary);
            auto emit = [&jsonl](const std::string& space, const std::vector<TrialResult>& all) {
                for (std::size_t i = 0; i < all.size(); ++i) {
                    const auto& t = all[i];
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
                    jsonl << j.dump() << '\n';
                }
            };
            emit("subspace", rotated.all);
            if (base) emit("baseline", base->all);
        }
        {
            // Mean/std of dev MAUC over the grid plus the winning config.
            auto summarize = [](const std::vector<TrialResult>& all) {
                double mu = 0.0;
                for (const auto& t : all) mu += t.dev_mauc;
                mu /= static_cast<double>(all.size());
                double var = 0.0;
                for (const auto& t : all) var += (t.dev_mauc - mu) * (t.dev_mauc - mu);
                var = all.size() > 1 ? var / static_cast<double>(all.size() - 1) : 0.0;
                return std::make_pair(mu, std::sqrt(var));
            };
            CsvWriter csv(out("grid_summary.csv"), manifest.seed,
                          {"space", "mu_m", "sigma_m", "best_lr", "best_lambda_o", "best_lambda_s",
                           "best_dev_mauc", "best_test_mauc", "best_d_star"});
            const auto [mu_r, sd_r] = summarize(rotated.all);
            csv.write_row({"subspace", format_double(mu_r), format_double(sd_r),
                           format_double(rotated.best.settings.learning_rate),
                           format_double(rotated.best.settings.lambda_o),
                           format_double(rotated.best.settings.lambda_s),
                           format_double(rotated.best.dev_mauc), format_double(rotated.best.test_mauc),
                           format_size(rotated.best.d_star)});
            if (base) {
                const auto [mu_b, sd_b] = summarize(base->all);
                csv.write_row({"baseline", format_double(mu_b), format_double(sd_b),
                               format_double(base->best.settings.learning_rate), "", "",
                               format_double(base->best.dev_mauc), format_double(base->best.test_mauc),
                               format_size(base->best.d_star)});
            }
        }
        result.best_dev_mauc = rotated.best.dev_mauc;
        result.best_test_mauc = rotated.best.test_mauc;
        result.trained_d_star = rotated.best.d_star;
        if (base) result.baseline_test_mauc = base->best.test_mauc;

        stage = "curve";
        const std::vector<CurvePoint> curve = mauc_curve(rotated.best, data, manifest.curve_max);
        const std::optional<Knee> knee = knee_select(curve);
        {
            CsvWriter csv(out("curve.csv"), manifest.seed, {"d_star", "dev_mauc", "is_knee"});
            for (const auto& p : curve) {
                const bool is_knee = knee && knee->d_star == p.d_star;
                csv.write_row({format_size(p.d_star), format_double(p.mauc), is_knee ? "1" : "0"});
            }
        }
        if (knee) result.knee_d_star = knee->d_star;

        stage = "projector";
        const SubspaceProjector projector =
            knee ? projector_truncated(rotated.best.model, knee->d_star)
                 : projector_from_model(rotated.best.model);
        if (projector.d_star() == 0) {
            throw numerical_error("projector: sparsity removed every dimension");
        }
        result.projector_d_star = projector.d_star();
        save_projector(projector, rotated.best.model, out("projector.json"), "model.ckpt");

        stage = "dispersion";
        {
            // Per-concept link-prediction AUC (dev edges) against dispersion of
            // the projected per-node embeddings, over train concepts.
            Vector aucs, dispersions;
            CsvWriter csv(out("concept_auc_dispersion.csv"), manifest.seed,
                          {"concept", "auc", "dispersion"});
            for (std::size_t c : data.concepts.train) {
                const double a = concept_auc(rotated.best.model, data, c, data.edges.dev,
                                             data.edges.dev_negatives);
                const Matrix& xc = table.concept_matrix(c);
                std::vector<Vector> projected;
                projected.reserve(xc.rows());
                for (std::size_t i = 0; i < xc.rows(); ++i) {
                    projected.push_back(project(projector, xc.row(i)));
                }
                const double disp = dispersion(projected);
                aucs.push_back(a);
                dispersions.push_back(disp);
                csv.write_row({table.concept_labels()[c], format_double(a), format_double(disp)});
            }
            CsvWriter ols_csv(out("ols_summary.csv"), manifest.seed,
                              {"x", "y", "n", "slope", "intercept", "r2", "f_stat", "p"});
            try {
                const OlsResult ols = ols_r2(dispersions, aucs);
                ols_csv.write_row({"dispersion", "auc", format_size(aucs.size()),
                                   format_double(ols.slope), format_double(ols.intercept),
                                   format_double(ols.r2), format_double(ols.f_stat),
                                   format_double(ols.p)});
            } catch (const input_error&) {
                ols_csv.write_row({"dispersion", "auc", format_size(aucs.size()), "", "", "", "", ""});
            }
        }

        if (manifest.axes) {
            stage = "semantic";
            const std::vector<AxisPair> pairs = load_axis_pairs(*manifest.axes, table);
            const std::vector<AxisPair> kept = mutual_nn_filter(pairs, manifest.semantic_min_freq);
            std::vector<AxisScore> scores;
            scores.reserve(kept.size());
            for (const auto& p : kept) scores.push_back(axis_score(projector, p));
            {
                CsvWriter csv(out("semantic_axes.csv"), manifest.seed,
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
            }
            if (!manifest.ratings.empty()) {
                CsvWriter csv(out("semantic_report.csv"), manifest.seed,
                              {"rating", "n_per_side", "mean_top", "mean_bottom", "t", "df", "p"});
                for (const auto& [name, path] : manifest.ratings) {
                    const auto ratings = load_ratings(path);
                    const RatingComparison cmp =
                        compare_rating_extremes(kept, scores, ratings, manifest.semantic_top_n);
                    csv.write_row({name, format_size(cmp.n), format_double(cmp.mean_top),
                                   format_double(cmp.mean_bottom), format_double(cmp.t),
                                   format_double(cmp.df), format_double(cmp.p)});
                }
            }
        }

        if (manifest.indexical_labels) {
            stage = "indexical";
            std::vector<std::uint32_t> labeled_nodes;
            const std::vector<int> classes =
                load_class_labels(graph, *manifest.indexical_labels, labeled_nodes);
            const IndexicalReport report =
                run_indexical_probe(table, labeled_nodes, classes, projector, manifest.seed);
            {
                CsvWriter csv(out("indexical_report.csv"), manifest.seed,
                              {"space", "split", "accuracy", "test_name", "statistic", "p_value"});
                for (const auto& row : report.rows) {
                    csv.write_row({space_name(row.space), row.split, format_double(row.accuracy),
                                   row.has_test ? row.test_name : "",
                                   row.has_test ? format_double(row.statistic) : "",
                                   row.has_test ? format_double(row.p_value) : ""});
                }
            }
            // PCA scatters over train concepts at the labeled nodes
            const ConceptSplit probe_concepts =
                split_concepts(table.concept_count(), derive_seed(manifest.seed, 0x1091ULL));
            for (const auto& [name, set] : report.sets) {
                Matrix pts(probe_concepts.train.size() * labeled_nodes.size(), set.features.cols());
                std::vector<std::string> groups;
                std::vector<std::string> concept_names, node_names;
                std::size_t row = 0;
                for (std::size_t c : probe_concepts.train) {
                    for (std::size_t ni = 0; ni < labeled_nodes.size(); ++ni) {
                        const std::size_t src = c * labeled_nodes.size() + ni;
                        pts.set_row(row, set.features.row(src));
                        groups.push_back("class" + std::to_string(classes[ni]));
                        concept_names.push_back(table.concept_labels()[c]);
                        node_names.push_back(graph.node_labels()[labeled_nodes[ni]]);
                        ++row;
                    }
                }
                const Pca2Result pca = pca_top2(pts);
                CsvWriter csv(out("pca_" + name + ".csv"), manifest.seed,
                              {"concept", "node", "class", "pc1", "pc2"});
                for (std::size_t i = 0; i < pca.coords.rows(); ++i) {
                    csv.write_row({concept_names[i], node_names[i], groups[i],
                                   format_double(pca.coords(i, 0)), format_double(pca.coords(i, 1))});
                }
                emit_svg_scatter(pca.coords, groups, out("pca_" + name + ".svg"));
            }
        }
        return result;
    } catch (const pipeline_error&) {
        throw;
    } catch (const std::exception& e) {
        std::ofstream marker(out("FAILED"), std::ios::binary);
        marker << stage << '\n';
        int code = 4;
        if (dynamic_cast<const numerical_error*>(&e)) {
            code = 3;
        } else if (stage == "load" && dynamic_cast<const input_error*>(&e)) {
            code = 2;
        }
        throw pipeline_error(stage, e.what(), code);
    }
}

} // namespace biaxis
