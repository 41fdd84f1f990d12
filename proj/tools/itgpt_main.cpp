#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "itgpt/checkpoint.hpp"
#include "itgpt/checks.hpp"
#include "itgpt/config.hpp"
#include "itgpt/synth.hpp"
#include "itgpt/trainer.hpp"

namespace fs = std::filesystem;
using namespace itgpt;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string output_root(const std::string& given, const std::string& command) {
    if (!given.empty()) return given;
    if (const char* root = std::getenv("ITGPT_OUT_ROOT")) {
        return std::string(root) + "/" + command;
    }
    throw usage_error("--out is required (or set ITGPT_OUT_ROOT)");
}

// Deterministic fields are hashed; wall clock is recorded but not hashed so
// reruns with the same inputs produce identical artifacts.
struct Manifest {
    std::string command;
    KvMap config;
    std::string data_fingerprint;
    std::string seeds;

    std::string hash() const {
        Fnv1a h;
        h.update(command);
        h.update(kv_to_text(config));
        h.update(data_fingerprint);
        h.update(seeds);
        return h.hex();
    }

    void write(const std::string& dir) const {
        KvMap kv = config;
        kv["manifest.command"] = command;
        kv["manifest.version"] = kVersion;
        kv["manifest.data_fingerprint"] = data_fingerprint;
        kv["manifest.seeds"] = seeds;
        kv["manifest.hash"] = hash();
        auto now = std::chrono::system_clock::now().time_since_epoch();
        kv["manifest.wall_clock_unix"] =
            std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now).count());
        write_file(dir + "/manifest.txt", kv_to_text(kv));
    }
};

std::string fingerprint_hex(const std::string& data_dir) {
    uint64_t fp = dataset_fingerprint(data_dir);
    Fnv1a h;
    h.update(&fp, sizeof(fp));
    return h.hex();
}

std::string na_or(const std::optional<double>& v) {
    return v ? format_double(*v) : "NA";
}

void write_results_tsv(const std::string& path, const std::vector<GridRow>& rows,
                       const std::string& manifest_hash) {
    std::string out = "# manifest " + manifest_hash + "\n";
    out += "fold\tscheme\tdepth\tmixing\tdropout\tp_l\tseed\tmetric\tvalue\n";
    for (const auto& r : rows) {
        std::string metric = r.metric + (r.klass.empty() ? "" : "_" + r.klass);
        out += std::to_string(r.fold) + "\t" + scheme_name(r.scheme) + "\t" +
               std::to_string(r.depth) + "\t" + mixing_name(r.mixing) + "\t" +
               format_double(r.dropout) + "\t" + format_double(r.p_l) + "\t" +
               std::to_string(r.seed) + "\t" + metric + "\t" + na_or(r.value) + "\n";
    }
    write_file(path, out);
}

void write_metrics_by_class(const std::string& path, const std::vector<GridRow>& rows,
                            const std::string& manifest_hash) {
    std::string out = "# manifest " + manifest_hash + "\n";
    out += "fold\tscheme\tmetric\tclass\tvalue\n";
    for (const auto& r : rows) {
        if (r.klass.empty()) continue;
        out += std::to_string(r.fold) + "\t" + scheme_name(r.scheme) + "\t" + r.metric + "\t" +
               r.klass + "\t" + na_or(r.value) + "\n";
    }
    write_file(path, out);
}

void write_traces(const std::string& path, const std::vector<EpochTrace>& traces,
                  const std::string& manifest_hash) {
    std::string out = "# manifest " + manifest_hash + "\n";
    out += "epoch\tsplit\tloss\n";
    for (const auto& t : traces) {
        out += std::to_string(t.epoch) + "\t" + t.split + "\t" + format_double(t.loss) + "\n";
    }
    write_file(path, out);
}

// config keys holding comma lists expand into a grid
struct ParsedTrainSpec {
    TrainConfig base;
    GridSpec grid;
};

ParsedTrainSpec parse_train_config(const KvMap& kv_in, const std::string& context) {
    KvMap kv = kv_in;
    GridSpec grid;
    auto take_list = [&](const char* key) -> std::vector<std::string> {
        auto it = kv.find(key);
        if (it == kv.end() || it->second.find(',') == std::string::npos) return {};
        std::vector<std::string> items;
        for (const auto& s : split(it->second, ',')) items.push_back(trim(s));
        kv.erase(it);
        return items;
    };
    for (const auto& s : take_list("depth")) {
        grid.depths.push_back(static_cast<int>(parse_long(s, context)));
    }
    for (const auto& s : take_list("mixing")) grid.mixings.push_back(parse_mixing(s));
    for (const auto& s : take_list("dropout")) grid.dropouts.push_back(parse_double(s, context));
    for (const auto& s : take_list("label_fraction")) {
        grid.label_fractions.push_back(parse_double(s, context));
    }
    for (const auto& s : take_list("scheme")) grid.schemes.push_back(parse_scheme(s));
    for (const auto& s : take_list("seed")) {
        grid.seeds.push_back(static_cast<uint64_t>(parse_long(s, context)));
    }
    ParsedTrainSpec spec;
    spec.base = TrainConfig::from_kv(kv, context);
    grid.base = spec.base;
    spec.grid = grid;
    return spec;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, uint64_t seed) {
    SynthSpec spec = SynthSpec::from_kv(load_kv_file(spec_path), spec_path);
    Dataset ds = synth_generate(spec, seed);
    save_dataset(ds, out_dir);
    Manifest manifest{"synth", spec.to_kv(), "", std::to_string(seed)};
    manifest.config["seed"] = std::to_string(seed);
    manifest.write(out_dir);
    std::cout << "wrote " << ds.size() << " observations to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir) {
    ParsedTrainSpec spec = parse_train_config(load_kv_file(config_path), config_path);
    ParseReport report;
    Dataset ds = load_dataset(data_dir, &report);
    std::cout << "loaded " << report.summary() << "\n";

    fs::create_directories(out_dir);
    Manifest manifest{"train", spec.base.to_kv(), fingerprint_hex(data_dir), ""};
    std::string seeds;
    for (uint64_t s : spec.grid.seeds.empty() ? std::vector<uint64_t>{spec.base.seed}
                                              : spec.grid.seeds) {
        seeds += std::to_string(s) + ",";
    }
    manifest.seeds = seeds;
    manifest.write(out_dir);
    std::string hash = manifest.hash();

    bool single_cell = spec.grid.n_cells() == 1 && spec.base.split == "timeseries";
    if (single_cell) {
        auto [train_set, valid_set] = split_timeseries(ds, spec.base.train_frac);
        TrainResult r = train(train_set, valid_set, spec.base);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        write_traces(out_dir + "/traces.tsv", r.traces, hash);
        std::vector<GridRow> rows;
        for (const auto& m : r.final_eval.metrics) {
            rows.push_back({0, spec.base.scheme, spec.base.depth, spec.base.mixing,
                            spec.base.dropout, spec.base.label_fraction, spec.base.seed, m.metric,
                            m.klass, m.value});
        }
        write_results_tsv(out_dir + "/results.tsv", rows, hash);
        write_metrics_by_class(out_dir + "/metrics_by_class.tsv", rows, hash);
        TrainConfig resolved = spec.base;
        resolved.lambda = r.resolved_lambda;
        save_checkpoint({resolved, ds.schema, r.model.params(), hash},
                        out_dir + "/checkpoint.itgpt");
        if (r.diverged) {
            std::cerr << "training diverged; checkpoint holds the last good parameters\n";
            return 3;
        }
        std::cout << "checkpoint, traces and metrics written to " << out_dir << "\n";
        return 0;
    }

    GridOutcome outcome = run_experiment_grid(ds, spec.grid, [](const std::string& line) {
        std::cout << line << "\n";
    });
    write_results_tsv(out_dir + "/results.tsv", outcome.rows, hash);
    write_metrics_by_class(out_dir + "/metrics_by_class.tsv", outcome.rows, hash);
    if (!outcome.failures.empty()) {
        std::string f;
        for (const auto& line : outcome.failures) f += line + "\n";
        write_file(out_dir + "/failures.txt", f);
        std::cerr << outcome.failures.size() << " cell(s) failed, see failures.txt\n";
    }
    std::cout << outcome.rows.size() << " result rows written to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset ds = load_dataset(data_dir);
    if (ckpt.config.log_normalize) log_normalize_dataset(ds);
    ItgptModel model(ckpt.config.model_config(), ckpt.schema);
    model.params() = ckpt.params;
    EvalResult result = evaluate(model, ds, ckpt.config);

    fs::create_directories(out_dir);
    Manifest manifest{"eval", ckpt.config.to_kv(), fingerprint_hex(data_dir),
                      std::to_string(ckpt.config.seed)};
    manifest.write(out_dir);
    std::string hash = manifest.hash();

    std::vector<GridRow> rows;
    for (const auto& m : result.metrics) {
        rows.push_back({0, ckpt.config.scheme, ckpt.config.depth, ckpt.config.mixing,
                        ckpt.config.dropout, ckpt.config.label_fraction, ckpt.config.seed,
                        m.metric, m.klass, m.value});
    }
    write_results_tsv(out_dir + "/results.tsv", rows, hash);
    write_metrics_by_class(out_dir + "/metrics_by_class.tsv", rows, hash);

    if (result.preds.n_rows() > 0) {
        Tensor cm = confusion_matrix(result.preds);
        std::string out = "# manifest " + hash + "\n";
        for (int i = 0; i < cm.extent(0); ++i) {
            for (int j = 0; j < cm.extent(1); ++j) {
                out += (j ? "\t" : "") + format_double(cm.at(i, j));
            }
            out += "\n";
        }
        write_file(out_dir + "/confusion.tsv", out);
    }
    for (const auto& m : result.metrics) {
        if (m.klass == "macro" || m.klass.empty()) {
            std::cout << m.metric << (m.klass.empty() ? "" : "_" + m.klass) << " = "
                      << na_or(m.value) << "\n";
        }
    }
    return 0;
}

int cmd_check(const std::string& kind, uint64_t seed, int depth, int coords, int instances,
              int observations, int cuts, int pairs) {
    std::vector<checks::CheckResult> results;
    if (kind == "pe" || kind == "all") {
        results.push_back(checks::check_pe_translation(pairs, {8, 32, 64}, seed));
    }
    if (kind == "grad" || kind == "all") {
        results.push_back(checks::check_grad_ops(100, seed));
        results.push_back(checks::check_grad_model(depth, coords, seed));
    }
    if (kind == "oracle" || kind == "all") {
        results.push_back(checks::check_oracle_equivalence(instances, seed));
    }
    if (kind == "causality" || kind == "all") {
        results.push_back(checks::check_causality(observations, cuts, seed));
    }
    if (results.empty()) {
        throw usage_error("unknown check kind '" + kind + "' (grad, oracle, causality, pe, all)");
    }
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << r.line() << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 3;
}

struct ReportKey {
    std::map<std::string, std::string> fields;
    bool operator<(const ReportKey& other) const { return fields < other.fields; }
};

int cmd_report(const std::vector<std::string>& inputs, const std::string& group_by,
               const std::string& out_path) {
    std::vector<std::string> group_cols = split(group_by, ',');
    std::map<ReportKey, std::vector<double>> groups;
    std::vector<std::string> header;
    for (const auto& path : inputs) {
        std::string text = read_file(path);
        std::vector<std::string> cols;
        for (const auto& raw : split(text, '\n')) {
            std::string line = trim(raw);
            if (line.empty() || line[0] == '#') continue;
            auto fields = split(line, '\t');
            if (cols.empty()) {
                cols.assign(fields.begin(), fields.end());
                if (header.empty()) {
                    header = cols;
                } else if (header != cols) {
                    throw data_error(path + ": column schema differs from earlier inputs");
                }
                continue;
            }
            if (fields.size() != cols.size()) {
                throw data_error(path + ": ragged row '" + line + "'");
            }
            std::map<std::string, std::string> row;
            for (size_t i = 0; i < cols.size(); ++i) row[cols[i]] = fields[i];
            if (row["value"] == "NA") continue;
            ReportKey key;
            for (const auto& c : group_cols) {
                auto it = row.find(trim(c));
                if (it == row.end()) throw usage_error("unknown group-by column '" + c + "'");
                key.fields[it->first] = it->second;
            }
            groups[key].push_back(parse_double(row["value"], path));
        }
    }

    auto quantile = [](const std::vector<double>& v, double q) {
        // linear interpolation between closest ranks
        double pos = q * static_cast<double>(v.size() - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, v.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return v[lo] * (1 - frac) + v[hi] * frac;
    };

    std::string out;
    for (const auto& c : group_cols) out += trim(c) + ",";
    out += "count,median,q1,q3,mean,std\n";
    for (auto& [key, values] : groups) {
        std::vector<double> v = values;
        std::sort(v.begin(), v.end());
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        for (const auto& c : group_cols) out += key.fields.at(trim(c)) + ",";
        out += std::to_string(v.size()) + "," + format_double(quantile(v, 0.5)) + "," +
               format_double(quantile(v, 0.25)) + "," + format_double(quantile(v, 0.75)) + "," +
               format_double(mean) + "," + format_double(sd) + "\n";
    }
    if (out_path.empty()) {
        std::cout << out;
    } else {
        write_file(out_path, out);
        std::cout << groups.size() << " group(s) written to " << out_path << "\n";
    }
    if (groups.empty()) std::cerr << "warning: no usable rows in input\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ITGPT: causal cross-attention over irregular multimodal timeseries"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string spec_path, data_dir, config_path, checkpoint_path, out_dir;
    std::string kind = "all", group_by = "scheme,depth,mixing,dropout,p_l,metric", report_out;
    std::vector<std::string> report_inputs;
    uint64_t seed = 1;
    int depth = 2, coords = 200, instances = 200, observations = 20, cuts = 10, pairs = 2000;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--spec", spec_path, "generator spec (key=value)")->required();
    synth->add_option("--out", out_dir, "output dataset directory");
    synth->add_option("--seed", seed, "generator seed");

    auto* train_cmd = app.add_subcommand("train", "train (single config or grid)");
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--config", config_path, "training config (key=value)")->required();
    train_cmd->add_option("--out", out_dir, "output directory");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--out", out_dir, "output directory");

    auto* check = app.add_subcommand("check", "run verification suites");
    check->add_option("--kind", kind, "grad | oracle | causality | pe | all");
    check->add_option("--seed", seed, "suite seed");
    check->add_option("--depth", depth, "model depth for grad check");
    check->add_option("--coords", coords, "sampled coordinates for grad check");
    check->add_option("--instances", instances, "oracle sweep instances");
    check->add_option("--observations", observations, "causality observations");
    check->add_option("--cuts", cuts, "causality cuts per observation");
    check->add_option("--pairs", pairs, "PE pairs per dimension");

    auto* report = app.add_subcommand("report", "aggregate result tables");
    report->add_option("inputs", report_inputs, "results.tsv files")->required();
    report->add_option("--group-by", group_by, "comma-separated grouping columns");
    report->add_option("--out", report_out, "output csv (stdout if omitted)");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(spec_path, output_root(out_dir, "synth"), seed);
        if (train_cmd->parsed()) {
            return cmd_train(data_dir, config_path, output_root(out_dir, "train"));
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(checkpoint_path, data_dir, output_root(out_dir, "eval"));
        }
        if (check->parsed()) {
            return cmd_check(kind, seed, depth, coords, instances, observations, cuts, pairs);
        }
        if (report->parsed()) return cmd_report(report_inputs, group_by, report_out);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
