#include "itgpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "itgpt/rng.hpp"
#include "itgpt/util.hpp"

namespace fs = std::filesystem;

namespace itgpt {

Tensor TargetSeries::one_hot(int n_classes) const {
    Tensor out({static_cast<int>(labels.size()), n_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes) {
            throw data_error("label " + std::to_string(labels[i]) + " out of range [0," +
                             std::to_string(n_classes) + ")");
        }
        out.at(static_cast<int>(i), labels[i]) = 1.0;
    }
    return out;
}

std::pair<double, double> Observation::span() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& m : modalities) {
        if (m.times.empty()) continue;
        lo = std::min(lo, m.times.front());
        hi = std::max(hi, m.times.back());
    }
    if (!(lo <= hi)) throw data_error("observation " + id + " has no samples in any modality");
    return {lo, hi};
}

bool Observation::empty() const {
    for (const auto& m : modalities)
        if (!m.times.empty()) return false;
    return true;
}

void DatasetSchema::validate() const {
    if (modality_names.empty()) throw data_error("schema declares zero modalities");
    if (modality_names.size() != modality_dims.size()) {
        throw data_error("schema modality name/dim count mismatch");
    }
    for (size_t i = 0; i < modality_names.size(); ++i) {
        if (modality_names[i].empty()) throw data_error("schema has an empty modality name");
        if (modality_dims[i] <= 0) {
            throw data_error("schema modality '" + modality_names[i] + "' has dim " +
                             std::to_string(modality_dims[i]));
        }
        for (size_t j = i + 1; j < modality_names.size(); ++j) {
            if (modality_names[i] == modality_names[j]) {
                throw data_error("duplicate modality name '" + modality_names[i] + "'");
            }
        }
    }
    if (n_classes < 0) throw data_error("schema n_classes negative");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != n_classes) {
        throw data_error("schema class_names count does not match classes");
    }
}

std::string DatasetSchema::to_text() const {
    std::string mods;
    for (size_t i = 0; i < modality_names.size(); ++i) {
        if (i) mods += ",";
        mods += modality_names[i] + ":" + std::to_string(modality_dims[i]);
    }
    KvMap kv;
    kv["modalities"] = mods;
    kv["classes"] = std::to_string(n_classes);
    if (!class_names.empty()) {
        std::string names;
        for (size_t i = 0; i < class_names.size(); ++i) {
            if (i) names += ",";
            names += class_names[i];
        }
        kv["class_names"] = names;
    }
    return kv_to_text(kv);
}

DatasetSchema DatasetSchema::from_text(const std::string& text, const std::string& context) {
    KvMap kv = parse_kv_text(text, context);
    DatasetSchema schema;
    auto it = kv.find("modalities");
    if (it == kv.end()) throw data_error(context + ": schema missing 'modalities'");
    for (const auto& entry : split(it->second, ',')) {
        auto parts = split(entry, ':');
        if (parts.size() != 2) {
            throw data_error(context + ": bad modality entry '" + entry + "' (want name:dim)");
        }
        schema.modality_names.push_back(trim(parts[0]));
        schema.modality_dims.push_back(
            static_cast<int>(parse_long(trim(parts[1]), context + " modality dim")));
    }
    it = kv.find("classes");
    if (it == kv.end()) throw data_error(context + ": schema missing 'classes'");
    schema.n_classes = static_cast<int>(parse_long(it->second, context + " classes"));
    it = kv.find("class_names");
    if (it != kv.end()) {
        for (const auto& n : split(it->second, ',')) schema.class_names.push_back(trim(n));
    }
    schema.validate();
    return schema;
}

double Dataset::max_timestamp() const {
    double hi = 0.0;
    for (const auto& obs : observations) {
        for (const auto& m : obs.modalities) {
            if (!m.times.empty()) hi = std::max(hi, m.times.back());
        }
        if (obs.target && !obs.target->times.empty()) hi = std::max(hi, obs.target->times.back());
    }
    return hi;
}

std::string ParseReport::summary() const {
    std::ostringstream ss;
    ss << n_observations << " observations, " << n_samples << " samples, " << n_target_rows
       << " target rows";
    if (n_duplicate_times) ss << ", " << n_duplicate_times << " duplicate timestamps";
    if (n_samples) ss << ", span [" << format_double(t_min) << ", " << format_double(t_max) << "]";
    return ss.str();
}

namespace {

struct TsvTable {
    std::vector<double> times;
    std::vector<double> values;  // row-major, cols per row
    size_t cols = 0;             // value columns (excluding time)
};

TsvTable read_tsv(const std::string& path, size_t expect_cols, const char* what) {
    TsvTable out;
    out.cols = expect_cols;
    std::string text = read_file(path);
    int lineno = 0;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields.size() != expect_cols + 1) {
            throw data_error(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(expect_cols + 1) + " columns for " + what + ", got " +
                             std::to_string(fields.size()));
        }
        std::string ctx = path + ":" + std::to_string(lineno);
        out.times.push_back(parse_double(trim(fields[0]), ctx));
        for (size_t c = 1; c < fields.size(); ++c) {
            out.values.push_back(parse_double(trim(fields[c]), ctx));
        }
    }
    for (size_t i = 1; i < out.times.size(); ++i) {
        if (out.times[i] < out.times[i - 1]) {
            throw data_error(path + ": timestamps not sorted at row " + std::to_string(i + 1));
        }
    }
    return out;
}

void write_tsv(const std::string& path, std::span<const double> times, const Tensor& values) {
    std::string out;
    int cols = values.rank() == 2 ? values.extent(1) : 0;
    for (size_t i = 0; i < times.size(); ++i) {
        out += format_double(times[i]);
        for (int c = 0; c < cols; ++c) {
            out += '\t';
            out += format_double(values.at(static_cast<int>(i), c));
        }
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace

Dataset load_dataset(const std::string& dir, ParseReport* report) {
    if (!fs::is_directory(dir)) throw data_error("dataset directory not found: " + dir);
    Dataset ds;
    ds.schema = DatasetSchema::from_text(read_file(dir + "/schema.txt"), dir + "/schema.txt");

    std::vector<std::string> obs_dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && entry.path().filename().string().starts_with("obs_")) {
            obs_dirs.push_back(entry.path().filename().string());
        }
    }
    std::sort(obs_dirs.begin(), obs_dirs.end());

    ParseReport rep;
    rep.t_min = std::numeric_limits<double>::infinity();
    rep.t_max = -std::numeric_limits<double>::infinity();
    for (const auto& name : obs_dirs) {
        Observation obs;
        obs.id = name.substr(4);
        std::string obs_dir = dir + "/" + name;
        for (int m = 0; m < ds.schema.n_modalities(); ++m) {
            std::string path = obs_dir + "/" + ds.schema.modality_names[m] + ".tsv";
            if (!fs::exists(path)) {
                throw data_error(path + ": missing modality file required by schema");
            }
            size_t dim = static_cast<size_t>(ds.schema.modality_dims[m]);
            TsvTable t = read_tsv(path, dim, "modality");
            ModalitySeries series;
            series.name = ds.schema.modality_names[m];
            series.times = std::move(t.times);
            series.values = Tensor({static_cast<int>(series.times.size()),
                                    ds.schema.modality_dims[m]},
                                   std::move(t.values));
            for (size_t i = 1; i < series.times.size(); ++i) {
                if (series.times[i] == series.times[i - 1]) ++rep.n_duplicate_times;
            }
            rep.n_samples += series.times.size();
            if (!series.times.empty()) {
                rep.t_min = std::min(rep.t_min, series.times.front());
                rep.t_max = std::max(rep.t_max, series.times.back());
            }
            obs.modalities.push_back(std::move(series));
        }
        std::string target_path = obs_dir + "/target.tsv";
        if (fs::exists(target_path)) {
            TsvTable t = read_tsv(target_path, 1, "target");
            TargetSeries target;
            target.times = std::move(t.times);
            for (size_t i = 0; i < t.values.size(); ++i) {
                double v = t.values[i];
                if (v != std::floor(v) || v < 0 || v >= ds.schema.n_classes) {
                    throw data_error(target_path + ": row " + std::to_string(i + 1) +
                                     ": class id " + format_double(v) + " invalid for " +
                                     std::to_string(ds.schema.n_classes) + " classes");
                }
                target.labels.push_back(static_cast<int>(v));
            }
            rep.n_target_rows += target.labels.size();
            obs.target = std::move(target);
        }
        ds.observations.push_back(std::move(obs));
    }
    rep.n_observations = ds.observations.size();
    if (rep.n_samples == 0) {
        rep.t_min = 0;
        rep.t_max = 0;
    }
    if (report) *report = rep;
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    ds.schema.validate();
    fs::create_directories(dir);
    write_file(dir + "/schema.txt", ds.schema.to_text());
    for (const auto& obs : ds.observations) {
        std::string obs_dir = dir + "/obs_" + obs.id;
        fs::create_directories(obs_dir);
        if (static_cast<int>(obs.modalities.size()) != ds.schema.n_modalities()) {
            throw data_error("observation " + obs.id + " has " +
                             std::to_string(obs.modalities.size()) + " modalities, schema wants " +
                             std::to_string(ds.schema.n_modalities()));
        }
        for (const auto& m : obs.modalities) {
            write_tsv(obs_dir + "/" + m.name + ".tsv", m.times, m.values);
        }
        if (obs.target) {
            std::string out;
            for (size_t i = 0; i < obs.target->times.size(); ++i) {
                out += format_double(obs.target->times[i]);
                out += '\t';
                out += std::to_string(obs.target->labels[i]);
                out += '\n';
            }
            write_file(obs_dir + "/target.tsv", out);
        }
    }
}

uint64_t dataset_fingerprint(const std::string& dir) {
    if (!fs::is_directory(dir)) throw data_error("dataset directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            files.push_back(fs::relative(entry.path(), dir).string());
        }
    }
    std::sort(files.begin(), files.end());
    Fnv1a hash;
    for (const auto& f : files) {
        hash.update(f);
        hash.update("\0", 1);
        hash.update(read_file(dir + "/" + f));
    }
    return hash.digest();
}

Tensor log_normalize(const Tensor& values) {
    Tensor out(values.shape());
    for (size_t i = 0; i < values.numel(); ++i) {
        double v = values.data()[i];
        if (v < 0) {
            throw data_error("log_normalize: negative value " + format_double(v) + " at index " +
                             std::to_string(i));
        }
        out.data()[i] = std::log1p(v);
    }
    return out;
}

void log_normalize_dataset(Dataset& ds) {
    for (auto& obs : ds.observations) {
        for (auto& m : obs.modalities) {
            try {
                m.values = log_normalize(m.values);
            } catch (const data_error& e) {
                throw data_error("observation " + obs.id + ", modality " + m.name + ": " +
                                 e.what());
            }
        }
    }
}

std::vector<double> time_deltas(std::span<const double> times) {
    std::vector<double> out(times.size(), 0.0);
    for (size_t i = 1; i < times.size(); ++i) out[i] = times[i] - times[i - 1];
    return out;
}

Dataset subset(const Dataset& ds, std::span<const size_t> indices) {
    Dataset out;
    out.schema = ds.schema;
    for (size_t i : indices) out.observations.push_back(ds.observations.at(i));
    return out;
}

std::vector<std::vector<size_t>> split_kfold(size_t n, int k, uint64_t seed) {
    if (k < 2) throw std::invalid_argument("split_kfold: k must be >= 2");
    if (n < static_cast<size_t>(k)) {
        throw data_error("split_kfold: " + std::to_string(n) + " observations < " +
                         std::to_string(k) + " folds");
    }
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(Rng::derive(seed, 0x5f01d));
    rng.shuffle(order);
    std::vector<std::vector<size_t>> folds(static_cast<size_t>(k));
    for (size_t i = 0; i < n; ++i) folds[i % static_cast<size_t>(k)].push_back(order[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::pair<Dataset, Dataset> split_timeseries(const Dataset& ds, double train_frac,
                                             std::vector<std::string>* warnings) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw std::invalid_argument("split_timeseries: train_frac must be in (0,1)");
    }
    Dataset train, valid;
    train.schema = ds.schema;
    valid.schema = ds.schema;
    for (const auto& obs : ds.observations) {
        if (obs.empty()) {
            if (warnings) warnings->push_back("observation " + obs.id + " empty, dropped");
            continue;
        }
        auto [lo, hi] = obs.span();
        double cut = lo + train_frac * (hi - lo);
        Observation head, tail;
        head.id = obs.id;
        tail.id = obs.id;
        size_t head_n = 0, tail_n = 0;
        for (const auto& m : obs.modalities) {
            ModalitySeries hm, tm;
            hm.name = tm.name = m.name;
            std::vector<double> hv, tv;
            for (size_t i = 0; i < m.times.size(); ++i) {
                bool in_head = m.times[i] < cut;
                auto& dst_t = in_head ? hm.times : tm.times;
                auto& dst_v = in_head ? hv : tv;
                dst_t.push_back(m.times[i]);
                for (int c = 0; c < m.values.extent(1); ++c) {
                    dst_v.push_back(m.values.at(static_cast<int>(i), c));
                }
            }
            hm.values = Tensor({static_cast<int>(hm.times.size()), m.values.extent(1)}, std::move(hv));
            tm.values = Tensor({static_cast<int>(tm.times.size()), m.values.extent(1)}, std::move(tv));
            head_n += hm.times.size();
            tail_n += tm.times.size();
            head.modalities.push_back(std::move(hm));
            tail.modalities.push_back(std::move(tm));
        }
        if (obs.target) {
            TargetSeries ht, tt;
            for (size_t i = 0; i < obs.target->times.size(); ++i) {
                bool in_head = obs.target->times[i] < cut;
                (in_head ? ht : tt).times.push_back(obs.target->times[i]);
                (in_head ? ht : tt).labels.push_back(obs.target->labels[i]);
            }
            if (!ht.times.empty()) head.target = std::move(ht);
            if (!tt.times.empty()) tail.target = std::move(tt);
        }
        if (head_n > 0) {
            train.observations.push_back(std::move(head));
        } else if (warnings) {
            warnings->push_back("observation " + obs.id + " has no samples before its cut, dropped from train");
        }
        if (tail_n > 0) {
            valid.observations.push_back(std::move(tail));
        } else if (warnings) {
            warnings->push_back("observation " + obs.id + " has no samples after its cut, dropped from valid");
        }
    }
    return {train, valid};
}

}  // namespace itgpt
