#pragma once

// Run artifacts: metrics.csv, summary.json and crash records.

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "miner/io.hpp"
#include "miner/training.hpp"

namespace miner {

inline const char* metrics_header() { return "step,loss,entropy,reconstruction,norm_entropy,r2,mcc,wall_ms"; }

namespace detail {
inline std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }
inline double uncell(const std::string& s) {
    return s.empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(s);
}
}  // namespace detail

/// NaN cells are left empty.
inline void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
    out << metrics_header() << '\n';
    for (const auto& r : log.rows) {
        out << r.step << ',' << detail::cell(r.loss) << ',' << detail::cell(r.entropy) << ','
            << detail::cell(r.reconstruction) << ',' << detail::cell(r.norm_entropy) << ',' << detail::cell(r.r2)
            << ',' << detail::cell(r.mcc) << ',' << detail::cell(r.wall_ms) << '\n';
    }
}

inline MetricsLog read_metrics_csv(std::istream& in) {
    MetricsLog log;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == metrics_header(), "metrics.csv: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c = split(line);
        require(c.size() == 8, "metrics.csv: expected 8 columns");
        MetricsRow r;
        r.step = static_cast<std::size_t>(std::stoull(c[0]));
        r.loss = detail::uncell(c[1]);
        r.entropy = detail::uncell(c[2]);
        r.reconstruction = detail::uncell(c[3]);
        r.norm_entropy = detail::uncell(c[4]);
        r.r2 = detail::uncell(c[5]);
        r.mcc = detail::uncell(c[6]);
        r.wall_ms = detail::uncell(c[7]);
        log.rows.push_back(r);
    }
    return log;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline nlohmann::ordered_json json_number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

#ifndef MINER_BUILD_ID
#define MINER_BUILD_ID "unknown"
#endif

/// Source revision the binary was configured from.
inline const char* build_id() { return MINER_BUILD_ID; }

inline nlohmann::ordered_json config_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["method"] = to_string(c.method);
    j["er"] = c.er;
    j["is_discrete"] = c.is_discrete;
    j["is_joe"] = c.is_joe;
    j["is_distillation"] = c.is_distillation;
    j["batch"] = c.batch;
    j["steps"] = c.steps;
    j["seed"] = c.seed;
    j["lr"] = c.lr;
    j["ema"] = c.ema;
    j["rec_weight"] = c.rec_weight;
    j["bandwidth"] = c.bandwidth;
    j["tau"] = c.tau;
    j["tau_student"] = c.tau_student;
    j["tau_teacher"] = c.tau_teacher;
    j["tau_teacher_final"] = c.tau_teacher_final;
    j["tau_teacher_warmup"] = c.tau_teacher_warmup;
    j["center_momentum"] = c.center_momentum;
    j["centering"] = c.centering;
    j["teacher_half"] = c.teacher_half;
    j["plugin_normalized"] = c.plugin_normalized;
    j["prototypes"] = c.prototypes;
    j["sinkhorn_eps"] = c.sinkhorn_eps;
    j["sinkhorn_iters"] = c.sinkhorn_iters;
    j["kmeans_iters"] = c.kmeans_iters;
    j["replicas"] = c.replicas;
    j["log_every"] = c.log_every;
    j["eval_every"] = c.eval_every;
    j["eval_pairs"] = c.eval_pairs;
    j["spearman"] = c.spearman;
    j["data"] = {{"space", to_string(c.data.space)},
                 {"dim", c.data.dim},
                 {"marginal", to_string(c.data.marginal)},
                 {"marginal_scale", c.data.marginal_scale},
                 {"conditional",
                  {{"family", to_string(c.data.conditional.family)},
                   {"scale", c.data.conditional.scale},
                   {"beta", c.data.conditional.beta},
                   {"support", to_string(c.data.conditional.support)}}},
                 {"mixing_layers", c.data.mixing_layers},
                 {"mixing_seed", c.data.mixing_seed}};
    j["model"] = {{"space", to_string(c.model.space)}, {"family", to_string(c.model.family)},
                  {"scale", c.model.scale},            {"beta", c.model.beta},
                  {"hidden", c.model.hidden},          {"layers", c.model.layers},
                  {"out_dim", c.out_dim()},            {"slope", c.model.slope}};
    return j;
}

/// Everything except `wall_ms` is a pure function of the config.
inline nlohmann::ordered_json summary_json(const RunConfig& c, const RunResult& r) {
    nlohmann::ordered_json j;
    j["run_id"] = c.name;
    j["status"] = "ok";
    j["build"] = build_id();
    j["config"] = config_json(c);
    j["init_hash"] = hex64(r.init_hash);
    j["final_hash"] = hex64(r.state.hash());
    j["steps_completed"] = r.state.iter;
    j["r2"] = json_number(r.final_scores.r2);
    j["mcc"] = json_number(r.final_scores.mcc);
    if (!r.log.rows.empty()) {
        const auto& last = r.log.rows.back();
        j["final_loss"] = json_number(last.loss);
        j["final_entropy"] = json_number(last.entropy);
        j["final_reconstruction"] = json_number(last.reconstruction);
        j["final_norm_entropy"] = json_number(last.norm_entropy);
    }
    j["teacher_grad_max"] = r.state.teacher_grad_max;
    j["wall_ms"] = r.wall_ms;
    return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    require(out.good(), "cannot write '" + p.string() + "'");
    out << text;
}

inline void write_run_artifacts(const std::filesystem::path& outdir, const RunConfig& c, const RunResult& r) {
    std::ostringstream csv;
    write_metrics_csv(csv, r.log);
    write_text(outdir / c.name / "metrics.csv", csv.str());
    write_text(outdir / c.name / "summary.json", summary_json(c, r).dump(2) + "\n");
}

/// Writes `<outdir>/<run-id>/crash.json` and returns its path.
inline std::filesystem::path write_crash_record(const std::filesystem::path& outdir, const std::string& run_id,
                                                const std::string& what, std::optional<std::size_t> step,
                                                const MetricsLog* partial = nullptr) {
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["status"] = "crashed";
    j["build"] = build_id();
    j["error"] = what;
    j["step"] = step ? nlohmann::ordered_json(*step) : nlohmann::ordered_json(nullptr);
    const auto path = outdir / run_id / "crash.json";
    write_text(path, j.dump(2) + "\n");
    if (partial) {
        std::ostringstream csv;
        write_metrics_csv(csv, *partial);
        write_text(outdir / run_id / "metrics.csv", csv.str());
    }
    return path;
}

}  // namespace miner
