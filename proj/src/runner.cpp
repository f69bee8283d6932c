#include "safl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace safl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string format_double(double x) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

[[noreturn]] void config_fail(const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); }

std::string unquote(const std::string& key, const std::string& raw) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
    if (raw.find('"') != std::string::npos) config_fail(key, "unbalanced quotes");
    return raw;
}

double as_double(const std::string& key, const std::string& raw) {
    const std::string v = unquote(key, raw);
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        config_fail(key, "expected a number, got '" + raw + "'");
    }
    if (used != v.size() || !std::isfinite(x)) config_fail(key, "expected a number, got '" + raw + "'");
    return x;
}

std::uint64_t as_uint(const std::string& key, const std::string& raw) {
    const std::string v = unquote(key, raw);
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); }))
        config_fail(key, "expected a non-negative integer, got '" + raw + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        config_fail(key, "integer out of range: '" + raw + "'");
    }
}

bool as_bool(const std::string& key, const std::string& raw) {
    const std::string v = unquote(key, raw);
    if (v == "true") return true;
    if (v == "false") return false;
    config_fail(key, "expected true or false, got '" + raw + "'");
}

std::vector<std::string> as_list(const std::string& key, const std::string& raw) {
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') config_fail(key, "expected a [list], got '" + raw + "'");
    std::vector<std::string> items;
    const std::string body = trim(raw.substr(1, raw.size() - 2));
    if (body.empty()) return items;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) config_fail(key, "empty list element");
        items.push_back(item);
    }
    return items;
}

template <class F>
auto named(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        config_fail(key, e.what());
    }
}

std::string task_name(TaskKind t) { return t == TaskKind::classification ? "classification" : "regression"; }

TaskKind task_from(const std::string& key, const std::string& v) {
    if (v == "classification") return TaskKind::classification;
    if (v == "regression") return TaskKind::regression;
    config_fail(key, "unknown task '" + v + "'");
}

std::string anchoring_name(DiffAnchoring a) { return a == DiffAnchoring::per_client ? "per_client" : "shared_global"; }

DiffAnchoring anchoring_from(const std::string& key, const std::string& v) {
    if (v == "per_client") return DiffAnchoring::per_client;
    if (v == "shared_global") return DiffAnchoring::shared_global;
    config_fail(key, "unknown anchoring '" + v + "'");
}

struct Field {
    const char* key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field uint_field(const char* key, T ExperimentConfig::*m) {
    return {key, [=](ExperimentConfig& c, const std::string& v) { c.*m = static_cast<T>(as_uint(key, v)); },
            [=](const ExperimentConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(const char* key, double ExperimentConfig::*m) {
    return {key, [=](ExperimentConfig& c, const std::string& v) { c.*m = as_double(key, v); },
            [=](const ExperimentConfig& c) { return format_double(c.*m); }};
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"task", [](ExperimentConfig& c, const std::string& v) { c.task = task_from("task", unquote("task", v)); },
         [](const ExperimentConfig& c) { return task_name(c.task); }},
        {"defense",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.kind = named("defense", [&] { return defense_from_string(unquote("defense", v)); });
         },
         [](const ExperimentConfig& c) { return to_string(c.defense.kind); }},
        {"variant",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.variant = named("variant", [&] { return variant_from_string(unquote("variant", v)); });
         },
         [](const ExperimentConfig& c) { return to_string(c.defense.secureafl.variant); }},
        {"attack",
         [](ExperimentConfig& c, const std::string& v) {
             c.attack = named("attack", [&] { return attack_from_string(unquote("attack", v)); });
         },
         [](const ExperimentConfig& c) { return to_string(c.attack); }},
        uint_field("seed", &ExperimentConfig::seed),
        uint_field("classes", &ExperimentConfig::classes),
        uint_field("features", &ExperimentConfig::features),
        uint_field("train_samples", &ExperimentConfig::train_samples),
        uint_field("test_samples", &ExperimentConfig::test_samples),
        double_field("separation", &ExperimentConfig::separation),
        double_field("noise_std", &ExperimentConfig::noise_std),
        uint_field("n_clients", &ExperimentConfig::n_clients),
        double_field("malicious_fraction", &ExperimentConfig::malicious_fraction),
        uint_field("tau_max", &ExperimentConfig::tau_max),
        uint_field("rounds", &ExperimentConfig::rounds),
        uint_field("batch_size", &ExperimentConfig::batch_size),
        double_field("noniid_x", &ExperimentConfig::noniid_x),
        {"eta", [](ExperimentConfig& c, const std::string& v) { c.defense.secureafl.eta = as_double("eta", v); },
         [](const ExperimentConfig& c) { return format_double(c.defense.secureafl.eta); }},
        {"alpha", [](ExperimentConfig& c, const std::string& v) { c.defense.secureafl.alpha = as_double("alpha", v); },
         [](const ExperimentConfig& c) { return format_double(c.defense.secureafl.alpha); }},
        {"epsilon",
         [](ExperimentConfig& c, const std::string& v) { c.defense.secureafl.epsilon = as_uint("epsilon", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.defense.secureafl.epsilon); }},
        {"clip_threshold",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.clip_threshold = as_double("clip_threshold", v);
         },
         [](const ExperimentConfig& c) { return format_double(c.defense.secureafl.clip_threshold); }},
        {"curvature_bound",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.curvature_bound = as_double("curvature_bound", v);
         },
         [](const ExperimentConfig& c) { return format_double(c.defense.secureafl.curvature_bound); }},
        {"append_only_on_accept",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.append_only_on_accept = as_bool("append_only_on_accept", v);
         },
         [](const ExperimentConfig& c) { return bool_text(c.defense.secureafl.append_only_on_accept); }},
        {"secant_on_receipt",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.secant_on_receipt = as_bool("secant_on_receipt", v);
         },
         [](const ExperimentConfig& c) { return bool_text(c.defense.secureafl.secant_on_receipt); }},
        {"recursive_pairs",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.recursive_pairs = as_bool("recursive_pairs", v);
         },
         [](const ExperimentConfig& c) { return bool_text(c.defense.secureafl.recursive_pairs); }},
        {"anchoring",
         [](ExperimentConfig& c, const std::string& v) {
             c.defense.secureafl.anchoring = anchoring_from("anchoring", unquote("anchoring", v));
         },
         [](const ExperimentConfig& c) { return anchoring_name(c.defense.secureafl.anchoring); }},
        {"basgd_buckets",
         [](ExperimentConfig& c, const std::string& v) { c.defense.basgd_buckets = as_uint("basgd_buckets", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.defense.basgd_buckets); }},
        double_field("scaling_factor", &ExperimentConfig::scaling_factor),
        {"trigger_indices",
         [](ExperimentConfig& c, const std::string& v) {
             c.trigger.indices.clear();
             for (const auto& item : as_list("trigger_indices", v)) c.trigger.indices.push_back(as_uint("trigger_indices", item));
         },
         [](const ExperimentConfig& c) {
             std::string out = "[";
             for (std::size_t k = 0; k < c.trigger.indices.size(); ++k)
                 out += (k ? ", " : "") + std::to_string(c.trigger.indices[k]);
             return out + "]";
         }},
        {"trigger_values",
         [](ExperimentConfig& c, const std::string& v) {
             c.trigger.values.clear();
             for (const auto& item : as_list("trigger_values", v)) c.trigger.values.push_back(as_double("trigger_values", item));
         },
         [](const ExperimentConfig& c) {
             std::string out = "[";
             for (std::size_t k = 0; k < c.trigger.values.size(); ++k)
                 out += (k ? ", " : "") + format_double(c.trigger.values[k]);
             return out + "]";
         }},
        {"trigger_target",
         [](ExperimentConfig& c, const std::string& v) {
             c.trigger.target_label = static_cast<int>(as_uint("trigger_target", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.trigger.target_label); }},
        uint_field("eval_interval", &ExperimentConfig::eval_interval),
        {"probes", [](ExperimentConfig& c, const std::string& v) { c.probes = as_bool("probes", v); },
         [](const ExperimentConfig& c) { return bool_text(c.probes); }},
    };
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (key == f.key) return &f;
    return nullptr;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // '#' inside quotes is kept.
        bool quoted = false;
        for (std::size_t k = 0; k < line.size(); ++k) {
            if (line[k] == '"') quoted = !quoted;
            if (line[k] == '#' && !quoted) {
                line.resize(k);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
        const Field* f = find_field(key);
        if (f == nullptr) config_fail(key, "unknown key");
        if (!seen.insert(key).second) config_fail(key, "given more than once");
        if (value.empty()) config_fail(key, "missing value");
        f->set(cfg, value);
    }
    for (const char* required : {"task", "defense"})
        if (!seen.count(required)) config_fail(required, "required key missing");

    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

ExperimentConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
    return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.seed = 0;
    // FNV-1a, 64 bit.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : serialize_config(c)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

using Member = std::optional<double> MetricsRecord::*;

const std::map<std::string, Member>& optional_columns() {
    static const std::map<std::string, Member> m = {
        {"accepted", &MetricsRecord::accepted},       {"asr", &MetricsRecord::asr},
        {"grad_norm_sq", &MetricsRecord::grad_norm_sq}, {"lambda", &MetricsRecord::lambda},
        {"rel_est_error", &MetricsRecord::rel_est_error}, {"rmse", &MetricsRecord::rmse},
        {"ter", &MetricsRecord::ter},                 {"track_err", &MetricsRecord::track_err},
    };
    return m;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const MetricsLog& log) {
    const auto cols = log.columns();
    os << "round";
    for (const auto& c : cols) os << ',' << c;
    os << '\n';
    for (const auto& r : log.records) {
        os << r.round;
        for (const auto& c : cols) {
            os << ',';
            if (c == "max_staleness") {
                os << r.max_staleness;
                continue;
            }
            const auto& v = r.*(optional_columns().at(c));
            if (v) os << format_double(*v);
        }
        os << '\n';
    }
}

MetricsLog read_metrics_csv(std::istream& is, std::size_t tau_max) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };
    std::string line;
    if (!std::getline(is, line)) throw Error("metrics csv: missing header");
    const auto header = split(trim(line));
    if (header.empty() || header[0] != "round") throw Error("metrics csv: first column must be round");
    for (std::size_t k = 1; k < header.size(); ++k)
        if (header[k] != "max_staleness" && !optional_columns().count(header[k]))
            throw Error("metrics csv: unknown column " + header[k]);

    MetricsLog log;
    log.tau_max = tau_max;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw Error("metrics csv: row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
        MetricsRecord r;
        r.round = std::stoull(cells[0]);
        for (std::size_t k = 1; k < header.size(); ++k) {
            if (header[k] == "max_staleness") {
                r.max_staleness = std::stoull(cells[k]);
            } else if (!cells[k].empty()) {
                r.*(optional_columns().at(header[k])) = std::stod(cells[k]);
            }
        }
        log.records.push_back(r);
    }
    return log;
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::pending: return "pending";
        case RunStatus::done: return "done";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

RunManifest RunManifest::make(const ExperimentConfig& cfg, std::vector<std::uint64_t> seeds, const fs::path& root) {
    if (seeds.empty()) throw ConfigError("seeds: empty seed list");
    RunManifest m;
    m.config_hash = safl::config_hash(cfg);
    m.seeds = std::move(seeds);
    m.output_dir = root / m.config_hash;
    m.status.assign(m.seeds.size(), RunStatus::pending);
    m.errors.assign(m.seeds.size(), "");
    return m;
}

fs::path RunManifest::run_dir(std::size_t k) const { return output_dir / ("seed_" + std::to_string(seeds.at(k))); }

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

json manifest_json(const RunManifest& m) {
    json runs = json::array();
    for (std::size_t k = 0; k < m.seeds.size(); ++k) {
        json r = {{"seed", m.seeds[k]}, {"status", to_string(m.status[k])}};
        if (!m.errors[k].empty()) r["error"] = m.errors[k];
        runs.push_back(r);
    }
    return {{"config_hash", m.config_hash}, {"runs", runs}};
}

}  // namespace

int run_sweep(const ExperimentConfig& cfg, RunManifest& manifest, const SweepOptions& opts, std::ostream& log) {
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (fs::exists(manifest.output_dir) && !opts.force)
        throw ConfigError("out: " + manifest.output_dir.string() + " already exists (use --force to overwrite)");
    fs::create_directories(manifest.output_dir);
    write_text(manifest.output_dir / "config.toml", serialize_config(cfg));

    std::vector<MetricsLog> logs(manifest.seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t k = next++; k < manifest.seeds.size(); k = next++) {
            ExperimentConfig c = cfg;
            c.seed = manifest.seeds[k];
            RunStatus status = RunStatus::done;
            std::string error;
            try {
                logs[k] = run_experiment(c);
                const fs::path dir = manifest.run_dir(k);
                fs::create_directories(dir);
                std::ostringstream csv;
                write_metrics_csv(csv, logs[k]);
                write_text(dir / "metrics.csv", csv.str());
            } catch (const std::exception& e) {
                status = RunStatus::failed;
                error = e.what();
            }
            std::lock_guard lock(mu);
            manifest.status[k] = status;
            manifest.errors[k] = error;
            log << "seed " << c.seed << ": " << to_string(status) << (error.empty() ? "" : " (" + error + ")") << '\n';
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, manifest.seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::map<std::string, std::vector<double>> finals;
    json seeds_done = json::array();
    for (std::size_t k = 0; k < manifest.seeds.size(); ++k) {
        if (manifest.status[k] != RunStatus::done) continue;
        seeds_done.push_back(manifest.seeds[k]);
        const auto& last = logs[k].final();
        finals["max_staleness"].push_back(static_cast<double>(last.max_staleness));
        for (const auto& [name, member] : optional_columns())
            if (last.*member) finals[name].push_back(*(last.*member));
    }
    json metrics = json::object();
    for (const auto& [name, xs] : finals) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        metrics[name] = {{"mean", mean}, {"std", std::sqrt(var / static_cast<double>(xs.size()))}, {"count", xs.size()}};
    }
    json summary = {
        {"schema_version", 1},
        {"config_hash", manifest.config_hash},
        {"task", task_name(cfg.task)},
        {"defense", to_string(cfg.defense.kind)},
        {"variant", to_string(cfg.defense.secureafl.variant)},
        {"attack", to_string(cfg.attack)},
        {"targeted", is_targeted(cfg.attack)},
        {"seeds", seeds_done},
        {"metrics", metrics},
    };
    write_text(manifest.output_dir / "summary.json", summary.dump(2) + "\n");
    write_text(manifest.output_dir / "manifest.json", manifest_json(manifest).dump(2) + "\n");

    const bool all_done = std::all_of(manifest.status.begin(), manifest.status.end(),
                                      [](RunStatus s) { return s == RunStatus::done; });
    if (!all_done) {
        log << "failed runs:";
        for (std::size_t k = 0; k < manifest.seeds.size(); ++k)
            if (manifest.status[k] == RunStatus::failed) log << ' ' << manifest.seeds[k];
        log << '\n';
    }
    return all_done ? kExitOk : kExitRunFailure;
}

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(p.string() + ": " + e.what());
    }
}

double metric_mean(const json& summary, const std::string& metric, const fs::path& dir) {
    const auto& m = summary.at("metrics");
    if (!m.contains(metric)) throw Error("metric '" + metric + "' absent from run " + dir.string());
    return m.at(metric).at("mean").get<double>();
}

std::string cell_text(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

}  // namespace

std::string compare_table(const std::vector<fs::path>& dirs, const std::string& metric) {
    if (metric != "ter" && metric != "asr" && metric != "rmse") throw Error("unknown metric '" + metric + "'");
    if (dirs.size() < 2) throw Error("compare needs at least two run directories");

    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::map<std::pair<std::string, std::string>, std::string> cells;
    for (const auto& dir : dirs) {
        const json s = read_json(dir / "summary.json");
        std::string defense = s.at("defense").get<std::string>();
        const std::string variant = s.value("variant", "full");
        if (defense == "secureafl" && variant != "full") defense += "-" + variant;
        const std::string attack = s.at("attack").get<std::string>();
        std::string cell = cell_text(metric_mean(s, metric, dir));
        if (metric == "ter" && s.value("targeted", false) && s.at("metrics").contains("asr"))
            cell += "/" + cell_text(metric_mean(s, "asr", dir));
        if (std::find(rows.begin(), rows.end(), defense) == rows.end()) rows.push_back(defense);
        if (std::find(cols.begin(), cols.end(), attack) == cols.end()) cols.push_back(attack);
        cells[{defense, attack}] = cell;
    }
    std::string out = "defense";
    for (const auto& c : cols) out += "," + c;
    out += "\n";
    for (const auto& r : rows) {
        out += r;
        for (const auto& c : cols) {
            auto it = cells.find({r, c});
            out += "," + (it == cells.end() ? std::string() : it->second);
        }
        out += "\n";
    }
    return out;
}

std::string probe_directory(const fs::path& dir) {
    std::vector<fs::path> csvs;
    if (fs::exists(dir / "metrics.csv")) {
        csvs.push_back(dir / "metrics.csv");
    } else if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_directory() && fs::exists(e.path() / "metrics.csv")) csvs.push_back(e.path() / "metrics.csv");
        std::sort(csvs.begin(), csvs.end());
    }
    if (csvs.empty()) throw Error("no metrics.csv under " + dir.string());

    fs::path cfg_path = dir / "config.toml";
    if (!fs::exists(cfg_path)) cfg_path = dir.parent_path() / "config.toml";
    const ExperimentConfig cfg = parse_config(cfg_path);

    json runs = json::array();
    for (const auto& p : csvs) {
        std::ifstream in(p);
        const MetricsLog log = read_metrics_csv(in, cfg.tau_max);
        const ProbeReport r = theory_probe(log);
        runs.push_back({
            {"path", fs::relative(p, dir).string()},
            {"max_staleness", r.max_staleness},
            {"tau_max", r.tau_max},
            {"staleness_within_bound", r.staleness_within_bound},
            {"tracking_floor", r.tracking_floor},
            {"plateau_grad_norm_sq", r.plateau_grad_norm_sq},
            {"plateau_below_floor", r.plateau_below_floor},
            {"gradient_decreased", r.gradient_decreased},
            {"tracking_bounded", r.tracking_bounded},
            {"rel_est_non_increasing", r.rel_est_non_increasing},
            {"grad_norm_sq", r.grad_norm_sq},
            {"track_err", r.track_err},
            {"rel_est_error", r.rel_est_error},
        });
    }
    const std::string text = json{{"schema_version", 1}, {"runs", runs}}.dump(2) + "\n";
    write_text(dir / "theory.json", text);
    return text;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(as_uint("seeds", trim(item)));
    if (seeds.empty()) throw ConfigError("seeds: empty seed list");
    return seeds;
}

}  // namespace safl
