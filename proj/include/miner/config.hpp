#pragma once

// TOML run configs, dotted-key overrides and fixture files.

#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

#include "miner/training.hpp"

namespace miner {

/// A bad config value; `field` is the dotted key and `line` the source line
/// when known (0 otherwise).
struct ConfigError : Error {
    std::string field;
    std::size_t line = 0;
    ConfigError(std::string source, std::size_t l, std::string f, const std::string& msg)
        : Error(source + (l ? ":" + std::to_string(l) : std::string()) + (f.empty() ? "" : ": " + f) + ": " + msg),
          field(std::move(f)),
          line(l) {}
};

namespace detail {

class ConfigReader {
public:
    ConfigReader(const toml::table& t, std::string source, std::string prefix = {})
        : table_(t), source_(std::move(source)), prefix_(std::move(prefix)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        std::size_t line = 0;
        if (const toml::node* n = table_.get(key)) line = n->source().begin.line;
        throw ConfigError(source_, line, prefix_ + key, msg);
    }

    template <class T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        const toml::node* n = table_.get(key);
        if (!n) return;
        if constexpr (std::is_same_v<T, bool>) {
            auto v = n->value<bool>();
            if (!v) fail(key, "expected a boolean");
            out = *v;
        } else if constexpr (std::is_same_v<T, double>) {
            auto v = n->value<double>();
            if (!v) fail(key, "expected a number");
            out = *v;
        } else if constexpr (std::is_integral_v<T>) {
            auto v = n->value<std::int64_t>();
            if (!v || !n->is_integer()) fail(key, "expected an integer");
            if (*v < 0) fail(key, "must be non-negative");
            out = static_cast<T>(*v);
        } else if constexpr (std::is_same_v<T, std::string>) {
            auto v = n->value<std::string>();
            if (!v) fail(key, "expected a string");
            out = *v;
        }
    }

    /// Reads a string key and converts it with `parse`.
    template <class T, class F>
    void read_enum(const std::string& key, T& out, F parse) {
        std::string s;
        if (!table_.get(key)) {
            seen_.insert(key);
            return;
        }
        read(key, s);
        try {
            out = parse(s);
        } catch (const Error& e) {
            fail(key, e.what());
        }
    }

    std::optional<ConfigReader> sub(const std::string& key) {
        seen_.insert(key);
        const toml::node* n = table_.get(key);
        if (!n) return std::nullopt;
        if (!n->is_table()) fail(key, "expected a table");
        return ConfigReader(*n->as_table(), source_, prefix_ + key + ".");
    }

    bool has(const std::string& key) const { return table_.get(key) != nullptr; }

    void reject_unknown() const {
        for (const auto& [k, v] : table_) {
            const std::string key(k.str());
            if (!seen_.count(key)) {
                throw ConfigError(source_, v.source().begin.line, prefix_ + key, "unknown key");
            }
        }
    }

private:
    const toml::table& table_;
    std::string source_, prefix_;
    std::set<std::string> seen_;
};

inline ReconstructionDensity read_density(ConfigReader& r, ReconstructionDensity d) {
    r.read_enum("family", d.family, family_from_string);
    r.read("scale", d.scale);
    r.read("beta", d.beta);
    r.read_enum("support", d.support, support_from_string);
    r.reject_unknown();
    return d;
}

}  // namespace detail

/// Builds a RunConfig from a table. Method-derived flags are filled in first
/// and may then be overridden explicitly.
inline RunConfig run_config_from_table(const toml::table& t, const std::string& source = "config") {
    detail::ConfigReader r(t, source);
    Method method = Method::simclr;
    bool er = false;
    r.read_enum("method", method, method_from_string);
    r.read("er", er);
    RunConfig c = RunConfig::for_method(method, er);
    r.read("name", c.name);
    r.read("is_discrete", c.is_discrete);
    r.read("is_joe", c.is_joe);
    r.read("is_distillation", c.is_distillation);
    r.read("batch", c.batch);
    r.read("steps", c.steps);
    r.read("seed", c.seed);
    r.read("lr", c.lr);
    r.read("ema", c.ema);
    r.read("rec_weight", c.rec_weight);
    r.read("bandwidth", c.bandwidth);
    r.read("tau", c.tau);
    r.read("tau_student", c.tau_student);
    r.read("tau_teacher", c.tau_teacher);
    r.read("tau_teacher_final", c.tau_teacher_final);
    r.read("tau_teacher_warmup", c.tau_teacher_warmup);
    r.read("center_momentum", c.center_momentum);
    r.read("centering", c.centering);
    r.read("teacher_half", c.teacher_half);
    r.read("plugin_normalized", c.plugin_normalized);
    r.read("prototypes", c.prototypes);
    r.read("sinkhorn_eps", c.sinkhorn_eps);
    r.read("sinkhorn_iters", c.sinkhorn_iters);
    r.read("kmeans_iters", c.kmeans_iters);
    r.read("replicas", c.replicas);
    r.read("log_every", c.log_every);
    r.read("eval_every", c.eval_every);
    r.read("eval_pairs", c.eval_pairs);
    r.read("spearman", c.spearman);
    r.read("timing", c.timing);
    if (auto d = r.sub("data")) {
        d->read_enum("space", c.data.space, support_from_string);
        d->read("dim", c.data.dim);
        d->read_enum("marginal", c.data.marginal, marginal_from_string);
        d->read("marginal_scale", c.data.marginal_scale);
        c.data.conditional.support = c.data.space;
        if (auto q = d->sub("conditional")) c.data.conditional = detail::read_density(*q, c.data.conditional);
        d->read("mixing_layers", c.data.mixing_layers);
        d->read("mixing_seed", c.data.mixing_seed);
        d->reject_unknown();
    }
    if (auto m = r.sub("model")) {
        m->read_enum("space", c.model.space, support_from_string);
        m->read_enum("family", c.model.family, family_from_string);
        m->read("scale", c.model.scale);
        m->read("beta", c.model.beta);
        m->read("hidden", c.model.hidden);
        m->read("layers", c.model.layers);
        m->read("out_dim", c.model.out_dim);
        m->read("slope", c.model.slope);
        m->reject_unknown();
    }
    r.reject_unknown();
    try {
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(source, 0, "", e.what());
    }
    return c;
}

inline toml::table parse_toml(const std::string& text, const std::string& source) {
    try {
        return toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        throw ConfigError(source, e.source().begin.line, "", std::string(e.description()));
    }
}

inline toml::table parse_toml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "", "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_toml(ss.str(), path);
}

/// Applies `a.b.c=value`. The value is read as a TOML value, falling back to
/// a bare string.
inline void apply_override(toml::table& t, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set", 0, assignment, "expected key=value");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    toml::table parsed;
    try {
        parsed = toml::parse("v = " + raw);
    } catch (const toml::parse_error&) {
        parsed = toml::table{{"v", raw}};
    }
    toml::table* cur = &t;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set", 0, key, "empty key segment");
        if (dot == std::string::npos) {
            cur->insert_or_assign(part, *parsed.get("v"));
            return;
        }
        toml::node* n = cur->get(part);
        if (!n) {
            cur->insert_or_assign(part, toml::table{});
            n = cur->get(part);
        }
        if (!n->is_table()) throw ConfigError("--set", 0, key, "'" + part + "' is not a table");
        cur = n->as_table();
        start = dot + 1;
    }
}

namespace detail {

/// Recursive merge: entries of `over` replace or extend those of `base`.
inline void merge_into(toml::table& base, const toml::table& over) {
    for (const auto& [k, v] : over) {
        toml::node* existing = base.get(k.str());
        if (existing && existing->is_table() && v.is_table())
            merge_into(*existing->as_table(), *v.as_table());
        else
            base.insert_or_assign(k.str(), v);
    }
}

}  // namespace detail

/// A single run: every top-level key configures the run.
inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    toml::table t = parse_toml_file(path);
    if (t.contains("run")) throw ConfigError(path, 0, "run", "fixture file given where a single config is expected");
    for (const auto& o : overrides) apply_override(t, o);
    return run_config_from_table(t, path);
}

/// Fixture files: top-level keys are shared defaults and each [[run]] entry
/// is merged over them. Overrides apply to every run.
inline std::vector<RunConfig> load_fixture(const std::string& path, const std::vector<std::string>& overrides = {}) {
    toml::table t = parse_toml_file(path);
    const toml::node* runs = t.get("run");
    if (!runs || !runs->is_array_of_tables()) throw ConfigError(path, 0, "run", "expected an array of [[run]] tables");
    toml::table defaults = t;
    defaults.erase("run");
    std::vector<RunConfig> out;
    std::size_t index = 0;
    for (const auto& node : *runs->as_array()) {
        toml::table merged = defaults;
        detail::merge_into(merged, *node.as_table());
        for (const auto& o : overrides) apply_override(merged, o);
        if (!merged.contains("name")) merged.insert_or_assign("name", "run" + std::to_string(index));
        out.push_back(run_config_from_table(merged, path + "[run " + std::to_string(index) + "]"));
        ++index;
    }
    return out;
}

}  // namespace miner
