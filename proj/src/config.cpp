#include "battsynth/config.hpp"

#include <algorithm>
#include <concepts>
#include <fstream>
#include <set>
#include <utility>

namespace battsynth::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError(path, message);
}

std::string join(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

/// One JSON object being picked apart: typed getters tag errors with the
/// full field path, and finish() rejects any key nobody consumed (typos
/// should fail loudly, not silently fall back to defaults).
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json& at(const char* key) {
        consumed_.insert(key);
        return j_.at(key);
    }

    void get(const char* key, std::string& out) {
        if (!has(key)) return;
        const json& v = at(key);
        if (!v.is_string()) fail(join(path_, key), "expected a string");
        out = v.get<std::string>();
    }

    void get(const char* key, double& out) {
        if (!has(key)) return;
        const json& v = at(key);
        if (!v.is_number()) fail(join(path_, key), "expected a number");
        out = v.get<double>();
    }

    template <std::unsigned_integral T>
    void get(const char* key, T& out) {
        get_unsigned(key, out);
    }

    void get(const char* key, std::vector<double>& out) {
        if (!has(key)) return;
        const json& v = at(key);
        if (!v.is_array()) fail(join(path_, key), "expected an array of numbers");
        out.clear();
        for (const json& e : v) {
            if (!e.is_number()) fail(join(path_, key), "expected an array of numbers");
            out.push_back(e.get<double>());
        }
    }

    void get(const char* key, std::vector<std::size_t>& out) {
        if (!has(key)) return;
        const json& v = at(key);
        if (!v.is_array()) fail(join(path_, key), "expected an array of integers");
        out.clear();
        for (const json& e : v) {
            if (!e.is_number_integer() || (e.is_number_integer() && e.get<long long>() < 0))
                fail(join(path_, key), "expected an array of non-negative integers");
            out.push_back(e.get<std::size_t>());
        }
    }

    void get(const char* key, std::vector<std::string>& out) {
        if (!has(key)) return;
        const json& v = at(key);
        if (!v.is_array()) fail(join(path_, key), "expected an array of strings");
        out.clear();
        for (const json& e : v) {
            if (!e.is_string()) fail(join(path_, key), "expected an array of strings");
            out.push_back(e.get<std::string>());
        }
    }

    /// Enum field: parse via the module's from-string helper so config and
    /// library accept the exact same spellings.
    template <typename Enum, typename Parser>
    void get_enum(const char* key, Enum& out, Parser parse) {
        if (!has(key)) return;
        std::string s;
        get(key, s);
        try {
            out = parse(s);
        } catch (const std::exception& e) {
            fail(join(path_, key), e.what());
        }
    }

    std::string field(const char* key) const { return join(path_, key); }

    void require(const char* key) const {
        if (!j_.contains(key)) fail(join(path_, key), "required");
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!consumed_.count(it.key())) fail(join(path_, it.key()), "unknown field");
    }

private:
    template <typename T>
    void get_unsigned(const char* key, T& out) {
        if (!has(key)) return;
        const json& v = at(key);
        if (v.is_number_unsigned()) {
            out = v.get<T>();
            return;
        }
        if (v.is_number_integer() && v.get<long long>() < 0)
            fail(join(path_, key), "must be non-negative");
        fail(join(path_, key), "expected a non-negative integer");
    }

    const json& j_;
    std::string path_;
    std::set<std::string> consumed_;
};

DatasetConfig parse_dataset(const json& j, const std::string& path) {
    DatasetConfig d;
    Section s(j, path);
    s.get("path", d.path);
    s.get("target", d.target);
    if (s.has("delimiter")) {
        std::string delim;
        s.get("delimiter", delim);
        if (delim.size() != 1) fail(s.field("delimiter"), "expected a single character");
        d.delimiter = delim[0];
    }
    s.get_enum("normalization", d.normalization, data::normalization_kind_from_string);
    s.get("quantize_voltage", d.quantize_voltage);
    if (d.quantize_voltage < 0.0) fail(s.field("quantize_voltage"), "must be >= 0 (0 disables)");
    if (s.has("schema")) {
        const json& m = s.at("schema");
        if (!m.is_object()) fail(s.field("schema"), "expected an object of column mappings");
        std::set<std::string> known(data::canonical_columns().begin(),
                                    data::canonical_columns().end());
        known.insert("cycle");
        d.schema.clear();
        for (auto it = m.begin(); it != m.end(); ++it) {
            if (!known.count(it.key()))
                fail(join(s.field("schema"), it.key()), "not a canonical column");
            if (!it.value().is_string())
                fail(join(s.field("schema"), it.key()), "expected a string header name");
            d.schema[it.key()] = it.value().get<std::string>();
        }
        if (!d.schema.count("time_s")) fail(s.field("schema"), "must map time_s");
    }
    const auto& cols = data::canonical_columns();
    if (d.target == "time_s" || std::find(cols.begin(), cols.end(), d.target) == cols.end())
        fail(s.field("target"), "expected one of voltage_V, current_A, temperature_C, capacity_Ah");
    if (!d.schema.count(d.target)) fail(s.field("target"), "not covered by dataset.schema");
    s.finish();
    return d;
}

WindowConfig parse_windows(const json& j, const std::string& path) {
    WindowConfig w;
    Section s(j, path);
    s.get("conditioning", w.conditioning);
    s.get("horizon", w.horizon);
    s.get("stride", w.stride);
    s.get("train_frac", w.train_frac);
    if (w.conditioning < 1) fail(s.field("conditioning"), "must be >= 1");
    if (w.horizon < 1) fail(s.field("horizon"), "must be >= 1");
    if (w.stride < 1) fail(s.field("stride"), "must be >= 1");
    if (!(w.train_frac > 0.0 && w.train_frac < 1.0))
        fail(s.field("train_frac"), "must lie strictly between 0 and 1");
    s.finish();
    return w;
}

ModelConfig parse_model(const json& j, const std::string& path) {
    ModelConfig m;
    Section s(j, path);
    s.require("kind");
    s.get("kind", m.kind);
    if (m.kind != "deepar" && m.kind != "nbeats" && m.kind != "deeptcn")
        fail(s.field("kind"), "expected deepar, nbeats or deeptcn");
    m.name = m.kind;
    s.get("name", m.name);
    if (m.name.empty()) fail(s.field("name"), "must be non-empty");
    s.get("init_seed", m.init_seed);

    s.get("hidden", m.hidden);
    s.get_enum("likelihood", m.likelihood, model::likelihood_from_string);
    if (m.likelihood == model::Likelihood::NegBin)
        fail(s.field("likelihood"),
             "negbin needs integer targets, but the pipeline normalizes every column to "
             "fractional values; use gaussian");

    s.get("stacks", m.stacks);
    s.get("blocks_per_stack", m.blocks_per_stack);
    s.get("width", m.width);
    s.get("lookback_multiple", m.lookback_multiple);

    s.get("channels", m.channels);
    s.get("kernel", m.kernel);
    s.get("decoder_hidden", m.decoder_hidden);
    s.get("depth", m.depth);
    s.get_enum("head", m.head, model::tcn_head_from_string);
    s.get("quantiles", m.quantiles);

    if (m.hidden < 1) fail(s.field("hidden"), "must be >= 1");
    if (m.stacks < 1) fail(s.field("stacks"), "must be >= 1");
    if (m.blocks_per_stack < 1) fail(s.field("blocks_per_stack"), "must be >= 1");
    if (m.width < 1) fail(s.field("width"), "must be >= 1");
    if (m.lookback_multiple < 1) fail(s.field("lookback_multiple"), "must be >= 1");
    if (m.channels < 1) fail(s.field("channels"), "must be >= 1");
    if (m.kernel < 2) fail(s.field("kernel"), "must be >= 2");
    if (m.decoder_hidden < 1) fail(s.field("decoder_hidden"), "must be >= 1");
    if (m.depth % 2 != 0) fail(s.field("depth"), "must be even (two convs per residual block)");
    if (m.quantiles.empty() || !std::is_sorted(m.quantiles.begin(), m.quantiles.end()))
        fail(s.field("quantiles"), "must be ascending");
    for (double q : m.quantiles)
        if (!(q > 0.0 && q < 1.0)) fail(s.field("quantiles"), "levels must lie in (0,1)");
    s.finish();
    return m;
}

train::OptimizerConfig parse_training(const json& j, const std::string& path) {
    train::OptimizerConfig t;
    Section s(j, path);
    s.get_enum("optimizer", t.kind, train::optimizer_from_string);
    s.get("learning_rate", t.learning_rate);
    s.get("batch_size", t.batch_size);
    s.get("max_epochs", t.max_epochs);
    s.get("patience", t.early_stop_patience);
    s.get("seed", t.seed);
    if (!(t.learning_rate > 0.0)) fail(s.field("learning_rate"), "must be > 0");
    if (t.batch_size < 1) fail(s.field("batch_size"), "must be >= 1");
    s.finish();
    return t;
}

EvaluationConfig parse_evaluation(const json& j, const std::string& path) {
    EvaluationConfig e;
    Section s(j, path);
    s.get("horizons", e.horizons);
    s.get("variables", e.variables);
    s.get("n_samples", e.n_samples);
    s.get("checkpoint", e.checkpoint);
    if (e.horizons.empty()) fail(s.field("horizons"), "must be non-empty");
    for (std::size_t h : e.horizons)
        if (h < 1) fail(s.field("horizons"), "horizons must be >= 1");
    for (std::size_t i = 1; i < e.horizons.size(); ++i)
        if (e.horizons[i] <= e.horizons[i - 1])
            fail(s.field("horizons"), "must ascend strictly");
    if (e.variables.empty()) fail(s.field("variables"), "must be non-empty");
    const auto& cols = data::canonical_columns();
    std::set<std::string> seen;
    for (const auto& v : e.variables) {
        if (v == "time_s" || std::find(cols.begin(), cols.end(), v) == cols.end())
            fail(s.field("variables"),
                 "\"" + v + "\" is not a forecastable column (voltage_V, current_A, "
                 "temperature_C, capacity_Ah)");
        if (!seen.insert(v).second) fail(s.field("variables"), "\"" + v + "\" repeats");
    }
    if (e.n_samples < 1) fail(s.field("n_samples"), "must be >= 1");
    s.finish();
    return e;
}

SynthesisConfig parse_synthesis(const json& j, const std::string& path) {
    SynthesisConfig y;
    Section s(j, path);
    s.get("checkpoint", y.checkpoint);
    s.get("n_variants", y.n_variants);
    s.get("noise_seed", y.noise_seed);
    s.get("residual_samples", y.residual_samples);
    if (y.n_variants < 1) fail(s.field("n_variants"), "must be >= 1");
    if (y.residual_samples < 1) fail(s.field("residual_samples"), "must be >= 1");
    s.finish();
    return y;
}

json model_to_json(const ModelConfig& m) {
    json j;
    j["kind"] = m.kind;
    j["name"] = m.name;
    j["init_seed"] = m.init_seed;
    j["hidden"] = m.hidden;
    j["likelihood"] = model::to_string(m.likelihood);
    j["stacks"] = m.stacks;
    j["blocks_per_stack"] = m.blocks_per_stack;
    j["width"] = m.width;
    j["lookback_multiple"] = m.lookback_multiple;
    j["channels"] = m.channels;
    j["kernel"] = m.kernel;
    j["decoder_hidden"] = m.decoder_hidden;
    j["depth"] = m.depth;
    j["head"] = model::to_string(m.head);
    j["quantiles"] = m.quantiles;
    return j;
}

}  // namespace

ConfigError::ConfigError(std::string field_path, const std::string& message)
    : std::runtime_error(field_path + ": " + message), field(std::move(field_path)) {}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    Section top(j, "");
    if (top.has("dataset")) cfg.dataset = parse_dataset(top.at("dataset"), "dataset");
    if (top.has("windows")) cfg.windows = parse_windows(top.at("windows"), "windows");
    if (top.has("model")) cfg.model = parse_model(top.at("model"), "model");
    if (top.has("compare")) {
        Section c(top.at("compare"), "compare");
        if (c.has("models")) {
            const json& arr = c.at("models");
            if (!arr.is_array()) fail("compare.models", "expected an array of model objects");
            std::set<std::string> names;
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string path = "compare.models[" + std::to_string(i) + "]";
                cfg.compare_models.push_back(parse_model(arr[i], path));
                if (!names.insert(cfg.compare_models.back().name).second)
                    fail(path + ".name",
                         "duplicate model name \"" + cfg.compare_models.back().name + "\"");
            }
        }
        c.finish();
    }
    if (top.has("training")) cfg.training = parse_training(top.at("training"), "training");
    if (top.has("evaluation"))
        cfg.evaluation = parse_evaluation(top.at("evaluation"), "evaluation");
    if (top.has("synthesis")) cfg.synthesis = parse_synthesis(top.at("synthesis"), "synthesis");
    if (top.has("out_dir")) {
        std::string dir;
        top.get("out_dir", dir);
        if (dir.empty()) fail("out_dir", "must be non-empty");
        cfg.out_dir = dir;
    }
    top.finish();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("config", "cannot open \"" + path + "\"");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail("config", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    json j;
    json& d = j["dataset"];
    d["path"] = dataset.path;
    d["target"] = dataset.target;
    d["delimiter"] = std::string(1, dataset.delimiter);
    d["normalization"] = data::to_string(dataset.normalization);
    d["quantize_voltage"] = dataset.quantize_voltage;
    d["schema"] = json(dataset.schema);

    json& w = j["windows"];
    w["conditioning"] = windows.conditioning;
    w["horizon"] = windows.horizon;
    w["stride"] = windows.stride;
    w["train_frac"] = windows.train_frac;

    if (!model.kind.empty()) j["model"] = model_to_json(model);
    if (!compare_models.empty()) {
        json arr = json::array();
        for (const auto& m : compare_models) arr.push_back(model_to_json(m));
        j["compare"]["models"] = arr;
    }

    json& t = j["training"];
    t["optimizer"] = train::to_string(training.kind);
    t["learning_rate"] = training.learning_rate;
    t["batch_size"] = training.batch_size;
    t["max_epochs"] = training.max_epochs;
    t["patience"] = training.early_stop_patience;
    t["seed"] = training.seed;

    json& e = j["evaluation"];
    e["horizons"] = evaluation.horizons;
    e["variables"] = evaluation.variables;
    e["n_samples"] = evaluation.n_samples;
    e["checkpoint"] = evaluation.checkpoint;

    json& y = j["synthesis"];
    y["checkpoint"] = synthesis.checkpoint;
    y["n_variants"] = synthesis.n_variants;
    y["noise_seed"] = synthesis.noise_seed;
    y["residual_samples"] = synthesis.residual_samples;

    j["out_dir"] = out_dir;
    return j;
}

void save_config_snapshot(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_config_snapshot: cannot write \"" + path + "\"");
    out << cfg.to_json().dump(2) << "\n";
}

}  // namespace battsynth::config
