#pragma once

// Batch experiments described in a key = value file:
//
//   [batch]
//   out = results          ; relative to the spec file
//   model = pendulum       ; any scenario key given here is a default
//
//   [scenario zoh]
//   prediction = zoh
//   ...
//
// Scenarios run in a worker pool. Every output lands under the output
// directory; the summary lists scenarios sorted by name.

#include "mbpetc/analysis.hpp"
#include "mbpetc/trace_io.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace mbpetc {

enum class TriggerKind { ModelBased, Periodic };

struct ScenarioSpec {
    std::string name;
    std::string model = "pendulum";
    double c = 0.258;
    double sigma = 0.35;
    std::size_t grid = 200;
    GammaMethod gamma_method = GammaMethod::NormComparison;
    // Constants manifest; certified on the fly when empty.
    std::string constants_path;
    PredictionSettings prediction;
    TriggerKind trigger = TriggerKind::ModelBased;
    std::optional<double> h;
    double horizon = 10.0;
    Vector x0;
    std::optional<std::int64_t> nu;
    std::size_t substeps = 20;
    std::size_t record_stride = 20;
    std::size_t csv_decimation = 1;
    std::vector<std::string> checks;
    bool unsafe_h_override = false;
};

struct ExperimentSpec {
    std::filesystem::path out_dir;
    bool compare = true;
    std::vector<ScenarioSpec> scenarios;
};

inline const std::vector<std::string>& known_checks() {
    static const std::vector<std::string> names{"convergence", "nonmonotone", "level_set", "dds"};
    return names;
}

namespace detail {

inline const std::set<std::string>& scenario_keys() {
    static const std::set<std::string> keys{
        "model", "c", "sigma", "grid", "gamma_method", "constants", "prediction", "euler_scale",
        "reference_substeps", "table_points", "table", "trigger", "h", "horizon", "x0", "nu", "substeps",
        "record_stride", "csv_decimation", "checks", "unsafe_h_override"};
    return keys;
}

inline const std::string* lookup(const KeyValueSection& s, const KeyValueSection* defaults, const std::string& key) {
    if (const auto* v = s.find(key)) return v;
    if (defaults) return defaults->find(key);
    return nullptr;
}

inline ScenarioSpec parse_scenario(const KeyValueSection& sec, const KeyValueSection* defaults,
                                   const std::filesystem::path& base) {
    const auto& allowed = scenario_keys();
    for (const auto& [key, value] : sec.entries) {
        if (!allowed.count(key)) {
            throw ParseError("[" + sec.name + "]", sec.entry_lines.at(key), "unknown key '" + key + "'");
        }
    }
    // merged view: scenario keys over batch defaults
    KeyValueSection m;
    m.name = sec.name;
    for (const auto& key : allowed) {
        if (const auto* v = lookup(sec, defaults, key)) {
            m.entries.emplace_back(key, *v);
            const bool own = sec.has(key);
            m.entry_lines[key] = own ? sec.entry_lines.at(key) : defaults->entry_lines.at(key);
        }
    }

    ScenarioSpec s;
    s.name = sec.name.substr(std::string("scenario ").size());
    s.model = m.get_or("model", s.model);
    s.c = m.get_double_or("c", s.c);
    s.sigma = m.get_double_or("sigma", s.sigma);
    s.grid = static_cast<std::size_t>(m.get_int_or("grid", static_cast<long long>(s.grid)));
    if (m.has("gamma_method")) s.gamma_method = parse_gamma_method(m.get("gamma_method"));
    if (m.has("constants")) s.constants_path = (base / m.get("constants")).string();
    if (m.has("prediction")) s.prediction.kind = parse_prediction_kind(m.get("prediction"));
    s.prediction.euler_scale = m.get_double_or("euler_scale", s.prediction.euler_scale);
    s.prediction.reference_substeps = static_cast<std::size_t>(
        m.get_int_or("reference_substeps", static_cast<long long>(s.prediction.reference_substeps)));
    s.prediction.table_points =
        static_cast<std::size_t>(m.get_int_or("table_points", static_cast<long long>(s.prediction.table_points)));
    if (m.has("table")) s.prediction.table_path = (base / m.get("table")).string();
    const std::string trig = m.get_or("trigger", "mbpetc");
    if (trig == "mbpetc") {
        s.trigger = TriggerKind::ModelBased;
    } else if (trig == "periodic") {
        s.trigger = TriggerKind::Periodic;
    } else {
        throw ParseError("[" + sec.name + "]", m.entry_lines.at("trigger"), "trigger must be mbpetc or periodic");
    }
    if (m.has("h")) s.h = m.get_double("h");
    s.horizon = m.get_double_or("horizon", s.horizon);
    if (!m.has("x0")) throw InputError("[" + sec.name + "]: missing key 'x0'");
    s.x0 = m.get_vector("x0");
    if (m.has("nu")) s.nu = m.get_int_or("nu", 0);
    s.substeps = static_cast<std::size_t>(m.get_int_or("substeps", static_cast<long long>(s.substeps)));
    s.record_stride = static_cast<std::size_t>(m.get_int_or("record_stride", static_cast<long long>(s.substeps)));
    s.csv_decimation = static_cast<std::size_t>(m.get_int_or("csv_decimation", 1));
    if (m.has("checks")) s.checks = m.get_list("checks");
    for (const auto& c : s.checks) {
        if (std::find(known_checks().begin(), known_checks().end(), c) == known_checks().end()) {
            throw ParseError("[" + sec.name + "]", m.entry_lines.at("checks"), "unknown check '" + c + "'");
        }
    }
    s.unsafe_h_override = m.get_bool_or("unsafe_h_override", false);
    if (s.grid < 8) throw InputError("[" + sec.name + "]: grid must be at least 8");
    if (s.csv_decimation == 0) throw InputError("[" + sec.name + "]: csv_decimation must be positive");
    return s;
}

}  // namespace detail

inline ExperimentSpec parse_experiment(const KeyValueFile& file, const std::filesystem::path& base = ".",
                                       const std::string& source = "<spec>") {
    ExperimentSpec spec;
    const KeyValueSection* batch = file.section("batch");
    for (const auto& [key, value] : file.root().entries) {
        throw ParseError(source, file.root().entry_lines.at(key), "key '" + key + "' outside any section");
    }
    spec.out_dir = base / (batch ? batch->get_or("out", "out") : std::string("out"));
    if (batch) spec.compare = batch->get_bool_or("compare", true);
    std::set<std::string> names;
    for (const auto& sec : file.sections) {
        if (sec.name.empty() || sec.name == "batch") continue;
        if (sec.name.rfind("scenario ", 0) != 0) {
            throw ParseError(source, sec.line, "unknown section [" + sec.name + "]");
        }
        // the batch section contributes defaults only; strip its own keys
        KeyValueSection defaults;
        if (batch) {
            for (const auto& [key, value] : batch->entries) {
                if (key == "out" || key == "compare") continue;
                if (!detail::scenario_keys().count(key)) {
                    throw ParseError(source, batch->entry_lines.at(key), "unknown key '" + key + "'");
                }
                defaults.entries.emplace_back(key, value);
                defaults.entry_lines[key] = batch->entry_lines.at(key);
            }
        }
        ScenarioSpec s = detail::parse_scenario(sec, batch ? &defaults : nullptr, base);
        if (s.name.empty()) throw ParseError(source, sec.line, "scenario needs a name");
        if (!names.insert(s.name).second) throw ParseError(source, sec.line, "duplicate scenario '" + s.name + "'");
        spec.scenarios.push_back(std::move(s));
    }
    std::sort(spec.scenarios.begin(), spec.scenarios.end(),
              [](const ScenarioSpec& a, const ScenarioSpec& b) { return a.name < b.name; });
    return spec;
}

inline ExperimentSpec read_experiment_file(const std::string& path) {
    const std::filesystem::path p(path);
    return parse_experiment(read_key_value_file(path), p.has_parent_path() ? p.parent_path() : ".", path);
}

struct ScenarioResult {
    std::string name;
    CertifiedConstants constants;
    SimTrace trace;
    std::vector<CheckReport> checks;
    std::filesystem::path csv_path;

    bool passed() const {
        for (const auto& c : checks) {
            if (!c.passed()) return false;
        }
        return true;
    }
};

struct BatchResult {
    std::vector<ScenarioResult> scenarios;  // sorted by name
    std::vector<std::string> warnings;
    std::optional<ComparisonReport> comparison;

    bool passed() const {
        for (const auto& s : scenarios) {
            if (!s.passed()) return false;
        }
        return true;
    }
};

/// Certifies once per distinct (model, c, sigma, grid, gamma method) or reads
/// the named manifest.
class ConstantsCache {
public:
    CertifiedConstants get(const ScenarioSpec& s) {
        const std::string key = s.constants_path.empty()
                                    ? s.model + "|" + format_double(s.c) + "|" + format_double(s.sigma) + "|" +
                                          std::to_string(s.grid) + "|" + to_string(s.gamma_method)
                                    : "file:" + s.constants_path;
        std::lock_guard lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        CertifiedConstants k;
        if (!s.constants_path.empty()) {
            k = read_constants_file(s.constants_path);
        } else {
            const SystemModel model = make_model(s.model);
            EstimationOptions opts;
            opts.grid_resolution = s.grid;
            k = certify(model, make_level_set(model, s.c), s.sigma, opts, s.gamma_method);
        }
        if (k.model != s.model) throw InputError("constants were certified for model '" + k.model + "'");
        cache_.emplace(key, k);
        return k;
    }

private:
    std::mutex mu_;
    std::map<std::string, CertifiedConstants> cache_;
};

inline SimConfig to_sim_config(const ScenarioSpec& s, const CertifiedConstants& k) {
    SimConfig cfg;
    cfg.label = s.name;
    cfg.model = s.model;
    cfg.prediction = s.prediction;
    cfg.h = s.h.value_or(k.h_sigma_masp);
    cfg.horizon = s.horizon;
    cfg.x0 = s.x0;
    cfg.sigma = s.sigma;
    cfg.c = s.c;
    cfg.nu = s.nu;
    cfg.substeps = s.substeps;
    cfg.record_stride = s.record_stride;
    cfg.unsafe_h_override = s.unsafe_h_override;
    return cfg;
}

inline ScenarioResult run_scenario(const ScenarioSpec& s, ConstantsCache& cache, bool force_unsafe_override = false) {
    ScenarioResult r;
    r.name = s.name;
    r.constants = cache.get(s);
    SimConfig cfg = to_sim_config(s, r.constants);
    cfg.unsafe_h_override = cfg.unsafe_h_override || force_unsafe_override;
    auto model = std::make_shared<const SystemModel>(make_model(s.model));
    std::optional<PredictionModel> pm;
    if (s.trigger == TriggerKind::Periodic) {
        r.trace = run_time_triggered(model, cfg, r.constants);
    } else {
        pm = make_prediction(cfg.prediction, model, cfg.h, r.constants);
        r.trace = run(*pm, cfg, r.constants);
    }
    for (const auto& c : s.checks) {
        if (c == "convergence") {
            r.checks.push_back(check_convergence_criterion(r.trace, reference_decay(r.trace, *model, r.constants)));
        } else if (c == "nonmonotone") {
            r.checks.push_back(check_nonmonotone_conditions(r.trace, *model, r.constants));
        } else if (c == "level_set") {
            r.checks.push_back(check_level_set(r.trace));
        } else if (c == "dds") {
            r.checks.push_back(check_dds_conformance(r.trace, pm ? *pm : PredictionModel::zoh(model, cfg.h)));
        }
    }
    return r;
}

/// Runs every scenario and writes NAME.csv, summary.manifest and, for
/// comparable traces, comparison.csv under spec.out_dir.
inline BatchResult run_batch(const ExperimentSpec& spec, bool force_unsafe_override = false) {
    BatchResult out;
    if (spec.scenarios.empty()) {
        out.warnings.push_back("experiment lists no scenarios");
        return out;
    }
    std::filesystem::create_directories(spec.out_dir);
    ConstantsCache cache;
    const std::size_t n = spec.scenarios.size();
    std::vector<std::optional<ScenarioResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                ScenarioResult r = run_scenario(spec.scenarios[i], cache, force_unsafe_override);
                const auto model = make_model(spec.scenarios[i].model);
                r.csv_path = spec.out_dir / (r.name + ".csv");
                std::ofstream csv(r.csv_path);
                if (!csv) throw InputError("cannot write '" + r.csv_path.string() + "'");
                write_trace_csv(csv, r.trace, reference_decay(model, r.constants, r.trace.sigma, r.trace.x0),
                                CsvOptions{spec.scenarios[i].csv_decimation});
                results[i] = std::move(r);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        // each run holds a full trace in memory, so the pool stays small
        const unsigned workers = std::min<unsigned>(std::min<unsigned>(worker_count(), 2u), static_cast<unsigned>(n));
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    for (auto& r : results) out.scenarios.push_back(std::move(*r));

    KeyValueFile summary;
    for (const auto& r : out.scenarios) {
        KeyValueSection s = summary_section(r.trace, "scenario " + r.name);
        s.set("csv", r.csv_path.filename().string());
        s.set("h_sigma_masp", r.constants.h_sigma_masp);
        for (const auto& rep : r.checks) {
            for (const auto& item : rep.items) {
                s.set("check." + item.name, item.skipped ? "skip" : item.passed ? "pass" : "fail");
                if (std::isfinite(item.worst_margin)) s.set("check." + item.name + ".worst_margin", item.worst_margin);
            }
        }
        summary.sections.push_back(std::move(s));
    }
    if (spec.compare && out.scenarios.size() >= 2) {
        std::vector<const SimTrace*> traces;
        for (const auto& r : out.scenarios) traces.push_back(&r.trace);
        try {
            out.comparison = compare(traces);
            std::ofstream cmp(spec.out_dir / "comparison.csv");
            cmp << out.comparison->to_table();
        } catch (const InputError& e) {
            out.warnings.push_back(std::string("comparison skipped: ") + e.what());
        }
    }
    std::ofstream sm(spec.out_dir / "summary.manifest");
    write_key_value(sm, summary);
    return out;
}

}  // namespace mbpetc
