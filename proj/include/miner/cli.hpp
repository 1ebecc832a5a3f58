#pragma once

// The `miner` command line: estimate, train, ident-exp, sweep and verify.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "miner/artifacts.hpp"
#include "miner/config.hpp"
#include "miner/verify.hpp"

namespace miner {

namespace cli_detail {

inline nlohmann::ordered_json try_value(nlohmann::ordered_json& errors, const std::string& name,
                                        const std::function<double()>& f) {
    try {
        return json_number(f());
    } catch (const std::exception& e) {
        errors[name] = e.what();
        return nullptr;
    }
}

inline std::size_t worker_count(std::size_t requested) {
    if (const char* env = std::getenv("MINER_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    if (requested) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

struct Options {
    std::string config, outdir = "runs", z1, z2, family = "vmf", geometry;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::size_t threads = 0;
    std::size_t replicas = 1;
    double tau = 0.1, bandwidth = 0.0, beta = 2.0;
    bool discrete = false, list = false;
    std::string filter;
};

inline std::vector<std::string> overrides(const Options& o) {
    std::vector<std::string> out = o.sets;
    if (o.seed) out.push_back("seed=" + std::to_string(*o.seed));
    if (o.steps) out.push_back("steps=" + std::to_string(*o.steps));
    return out;
}

inline int estimate(const Options& o, std::ostream& out) {
    const Matrix a = read_matrix_csv(o.z1);
    const Matrix b = o.z2.empty() ? a : read_matrix_csv(o.z2);
    require(a.same_shape(b), "estimate: the two views must have the same shape");
    nlohmann::ordered_json j, errors = nlohmann::ordered_json::object();
    j["k"] = a.rows();
    j["d"] = a.cols();
    if (o.discrete) {
        const DiscretePosterior p1{a}, p2{b};
        j["entropy_plugin_disc"] = try_value(errors, "entropy_plugin_disc", [&] {
            p1.validate();
            return entropy_plugin_disc(p1, o.replicas);
        });
        j["reconstruction_disc"] = try_value(errors, "reconstruction_disc", [&] {
            p1.validate();
            p2.validate();
            ad::Tape t;
            Matrix logq = a;
            for (auto& v : logq.values()) v = std::log(v);
            return ad::reconstruction_disc_soft(t.constant(logq), t.constant(b)).value().item();
        });
        j["normalized_entropy"] = try_value(errors, "normalized_entropy", [&] { return normalized_entropy(p1); });
    } else {
        const Family fam = family_from_string(o.family);
        const Support geo = o.geometry.empty() ? (fam == Family::vmf ? Support::sphere : Support::unbounded)
                                               : support_from_string(o.geometry);
        const ProjectionBatch z1{a, geo}, z2{b, geo};
        const double h = o.bandwidth > 0.0 ? o.bandwidth : o.tau;
        const KernelSpec ks{fam, h, a.cols(), o.beta};
        const Similarity f = fam == Family::vmf ? Similarity::cosine(o.tau)
                                                : Similarity::from_kernel(KernelSpec{fam, o.tau, a.cols(), o.beta});
        auto checked = [&](auto fn) {
            return [&, fn] {
                z1.validate();
                z2.validate();
                return fn();
            };
        };
        j["reconstruction_cont"] =
            try_value(errors, "reconstruction_cont", checked([&] { return reconstruction_cont(z1, z2, f); }));
        j["entropy_joe"] = try_value(errors, "entropy_joe", checked([&] { return entropy_joe(z1, ks); }));
        j["entropy_plugin_kde"] =
            try_value(errors, "entropy_plugin_kde", checked([&] { return entropy_plugin_kde(z1, ks); }));
        j["entropy_plugin_kde_normalized"] = try_value(
            errors, "entropy_plugin_kde_normalized", checked([&] { return entropy_plugin_kde(z1, ks, true); }));
        j["infonce"] = try_value(errors, "infonce", checked([&] { return infonce(z1, z2, f); }));
        nlohmann::ordered_json c;
        for (auto [name, mode] : {std::pair{"cmc", NegativeSet::cmc}, std::pair{"simclr", NegativeSet::simclr},
                                  std::pair{"self_inclusive", NegativeSet::self_inclusive},
                                  std::pair{"self_excluding", NegativeSet::self_excluding}}) {
            if (mode == NegativeSet::self_excluding && z1.values.rows() < 2) {
                c[name] = nullptr;
                continue;
            }
            c[name] = try_value(errors, std::string("contrastive_") + name,
                                checked([&, mode] { return contrastive_loss(z1, z2, f, mode); }));
        }
        j["contrastive"] = c;
        if (!j["entropy_joe"].is_null() && !j["reconstruction_cont"].is_null())
            j["er_bound"] = er_bound(j["entropy_joe"].get<double>(), j["reconstruction_cont"].get<double>()).total();
    }
    j["errors"] = errors;
    out << j.dump(2) << '\n';
    return errors.empty() ? 0 : 1;
}

/// Runs one config and writes its artifacts; a crash record on failure.
inline int train_one(const RunConfig& c, const std::filesystem::path& outdir, std::ostream& out, std::ostream& err,
                     bool identifiability) {
    try {
        RunResult r = run_mvssl(c);
        write_run_artifacts(outdir, c, r);
        nlohmann::ordered_json j;
        j["run_id"] = c.name;
        j["r2"] = json_number(r.final_scores.r2);
        if (identifiability || !std::isnan(r.final_scores.mcc)) j["mcc"] = json_number(r.final_scores.mcc);
        j["final_hash"] = hex64(r.state.hash());
        j["artifacts"] = (outdir / c.name).string();
        out << j.dump() << '\n';
        return 0;
    } catch (const RunAborted& e) {
        const auto path = write_crash_record(outdir, c.name, e.what(), e.step, &e.log);
        err << "error: " << e.what() << "\ncrash record: " << path.string() << '\n';
        return 1;
    } catch (const std::exception& e) {
        const auto path = write_crash_record(outdir, c.name, e.what(), std::nullopt);
        err << "error: " << e.what() << "\ncrash record: " << path.string() << '\n';
        return 1;
    }
}

inline int sweep(const Options& o, std::ostream& out, std::ostream& err) {
    const auto runs = load_fixture(o.config, overrides(o));
    const std::filesystem::path outdir(o.outdir);
    std::vector<nlohmann::ordered_json> results(runs.size());
    std::vector<std::string> errors(runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < runs.size();) {
            try {
                RunResult r = run_mvssl(runs[i]);
                write_run_artifacts(outdir, runs[i], r);
                results[i] = summary_json(runs[i], r);
            } catch (const RunAborted& e) {
                write_crash_record(outdir, runs[i].name, e.what(), e.step, &e.log);
                errors[i] = e.what();
            } catch (const std::exception& e) {
                write_crash_record(outdir, runs[i].name, e.what(), std::nullopt);
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n = std::min(worker_count(o.threads), runs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    nlohmann::ordered_json index;
    index["fixture"] = o.config;
    index["runs"] = nlohmann::ordered_json::array();
    int status = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (errors[i].empty()) {
            index["runs"].push_back(results[i]);
        } else {
            status = 1;
            index["runs"].push_back({{"run_id", runs[i].name},
                                     {"status", "crashed"},
                                     {"error", errors[i]},
                                     {"crash_record", (outdir / runs[i].name / "crash.json").string()}});
            err << "error: " << runs[i].name << ": " << errors[i] << '\n';
        }
    }
    write_text(outdir / "sweep.json", index.dump(2) + "\n");
    out << (outdir / "sweep.json").string() << '\n';
    return status;
}

inline int verify(const Options& o, std::ostream& out) {
    const auto checks = property_checks();
    if (o.list) {
        for (const auto& c : checks) out << c.name << '\n';
        return 0;
    }
    std::size_t failed = 0, ran = 0;
    for (const auto& c : checks) {
        if (!o.filter.empty() && c.name.find(o.filter) == std::string::npos) continue;
        ++ran;
        CheckOutcome r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("threw: ") + e.what()};
        }
        if (!r.pass) ++failed;
        out << (r.pass ? "PASS  " : "FAIL  ") << c.name << "  " << r.detail << '\n';
    }
    out << ran - failed << "/" << ran << " checks passed\n";
    return failed ? 1 : 0;
}

}  // namespace cli_detail

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 1 runtime failure, 2 config or usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using cli_detail::Options;
    Options o;
    CLI::App app{"Mutual-information estimators and multi-view SSL training"};
    app.require_subcommand(1);

    auto* est = app.add_subcommand("estimate", "Evaluate every estimator on CSV batches");
    est->add_option("z1", o.z1, "First view (k rows, d columns)")->required();
    est->add_option("z2", o.z2, "Second view; defaults to the first");
    est->add_option("--tau", o.tau, "Similarity temperature");
    est->add_option("--bandwidth", o.bandwidth, "KDE bandwidth; defaults to tau");
    est->add_option("--family", o.family, "Kernel family: vmf, gaussian, laplace, gennorm");
    est->add_option("--beta", o.beta, "GenNorm shape");
    est->add_option("--geometry", o.geometry, "sphere, box or unbounded");
    est->add_flag("--discrete", o.discrete, "Rows are posteriors over prototypes");
    est->add_option("--replicas", o.replicas, "Replica count for the discrete plug-in");

    auto add_run_options = [&](CLI::App* sub, bool fixture) {
        sub->add_option(fixture ? "fixture" : "--config", o.config, fixture ? "Fixture file" : "Run config")
            ->required();
        sub->add_option("--set", o.sets, "Dotted-key override, e.g. model.hidden=128");
        sub->add_option("--seed", o.seed, "Seed for every run");
        sub->add_option("--steps", o.steps, "Step count for every run");
        sub->add_option("--out", o.outdir, "Output directory");
    };
    auto* train = app.add_subcommand("train", "Train one config");
    add_run_options(train, false);
    auto* ident = app.add_subcommand("ident-exp", "Train one config and report R2 and MCC");
    add_run_options(ident, false);
    auto* sw = app.add_subcommand("sweep", "Run every entry of a fixture file");
    add_run_options(sw, true);
    sw->add_option("--threads", o.threads, "Worker count (MINER_THREADS overrides)");
    auto* ver = app.add_subcommand("verify", "Run the property checks");
    ver->add_flag("--list", o.list, "List check names");
    ver->add_option("--filter", o.filter, "Only checks whose name contains this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (est->parsed()) return cli_detail::estimate(o, out);
        if (train->parsed() || ident->parsed()) {
            const RunConfig c = load_run_config(o.config, cli_detail::overrides(o));
            if (ident->parsed()) require(c.out_dim() == c.data.dim, "ident-exp: model.out_dim must equal data.dim");
            return cli_detail::train_one(c, o.outdir, out, err, ident->parsed());
        }
        if (sw->parsed()) return cli_detail::sweep(o, out, err);
        if (ver->parsed()) return cli_detail::verify(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace miner
