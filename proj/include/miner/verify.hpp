#pragma once

// Quick property checks behind `miner verify`.

#include <functional>
#include <string>
#include <vector>

#include "miner/artifacts.hpp"
#include "miner/training.hpp"

namespace miner {

struct CheckOutcome {
    bool pass = false;
    std::string detail;
};

struct PropertyCheck {
    std::string name;
    std::function<CheckOutcome()> run;
};

namespace verify_detail {

inline Matrix sphere_rows(std::size_t k, std::size_t d, Rng& rng) {
    Matrix m(k, d);
    for (std::size_t i = 0; i < k; ++i) {
        auto r = m.row(i);
        for (auto& v : r) v = rng.normal();
        const double n = norm2(r);
        for (auto& v : r) v /= n;
    }
    return m;
}

inline Matrix gaussian(std::size_t k, std::size_t d, Rng& rng, double s = 1.0) {
    Matrix m(k, d);
    for (auto& v : m.values()) v = s * rng.normal();
    return m;
}

inline Matrix random_pmfs(std::size_t k, std::size_t m, Rng& rng) {
    Matrix p(k, m);
    for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (auto& v : p.row(i)) s += (v = rng.uniform() + 1e-3);
        for (auto& v : p.row(i)) v /= s;
    }
    return p;
}

inline CheckOutcome within(double got, double want, double tol) {
    return {std::abs(got - want) <= tol, "got " + format_double(got) + ", want " + format_double(want) + " ± " +
                                             format_double(tol)};
}

inline CheckOutcome at_most(double got, double bound) {
    return {got <= bound, "value " + format_double(got) + ", bound " + format_double(bound)};
}

inline RunConfig tiny_run(Method m, bool er) {
    RunConfig c = RunConfig::for_method(m, er);
    c.name = "verify";
    c.batch = 32;
    c.steps = 6;
    c.log_every = 2;
    c.eval_every = 3;
    c.eval_pairs = 64;
    c.lr = 1e-3;
    c.seed = 3;
    c.prototypes = 4;
    c.model.hidden = 16;
    return c;
}

}  // namespace verify_detail

inline std::vector<PropertyCheck> property_checks() {
    using namespace verify_detail;
    std::vector<PropertyCheck> v;

    v.push_back({"densities.vmf_log_density_is_kappa_cos", [] {
                     Rng rng(1);
                     const Matrix z = sphere_rows(2, 4, rng);
                     const double got = log_density(ReconstructionDensity::vmf(10.0), z.row(0), z.row(1));
                     return within(got, 10.0 * dot(z.row(0), z.row(1)), 1e-12);
                 }});
    v.push_back({"densities.vmf_sampler_mean_resultant", [] {
                     Rng rng(2);
                     std::vector<double> mu{1, 0, 0, 0, 0};
                     double s = 0.0;
                     const int n = 4000;
                     for (int i = 0; i < n; ++i) s += sample_vmf(mu, 10.0, rng)[0];
                     const double want = vmf_mean_resultant(5, 10.0);
                     return within(s / n, want, 0.1 * want);
                 }});
    v.push_back({"estimators.reconstruction_of_identical_views", [] {
                     Rng rng(3);
                     const Matrix z = sphere_rows(8, 3, rng);
                     const ProjectionBatch b{z, Support::sphere};
                     return within(reconstruction_cont(b, b, Similarity::cosine(0.1)), 10.0, 1e-12);
                 }});
    v.push_back({"estimators.joe_entropy_standard_normal", [] {
                     Rng rng(4);
                     const std::size_t k = 2048;
                     const Matrix z = gaussian(k, 1, rng);
                     const KernelSpec ks{Family::gaussian, std::pow(static_cast<double>(k), -0.2), 1};
                     return within(entropy_joe(ProjectionBatch{z}, ks), 0.5 * std::log(2 * M_PI * M_E), 0.15);
                 }});
    v.push_back({"estimators.infonce_at_most_log_k", [] {
                     Rng rng(5);
                     const ProjectionBatch a{sphere_rows(16, 4, rng), Support::sphere};
                     const ProjectionBatch b{sphere_rows(16, 4, rng), Support::sphere};
                     return at_most(infonce(a, b, Similarity::cosine(0.05)), std::log(16.0) + 1e-12);
                 }});
    v.push_back({"estimators.cmc_infonce_identity", [] {
                     Rng rng(6);
                     const ProjectionBatch a{sphere_rows(12, 4, rng), Support::sphere};
                     const ProjectionBatch b{sphere_rows(12, 4, rng), Support::sphere};
                     const auto f = Similarity::cosine(0.2);
                     return within(infonce(a, b, f), -contrastive_branch(a, b, f, NegativeSet::cmc) + std::log(12.0),
                                   1e-9);
                 }});
    v.push_back({"estimators.self_inclusive_er_identity", [] {
                     Rng rng(7);
                     const std::size_t k = 10, d = 3;
                     const KernelSpec ks{Family::vmf, 0.3, d};
                     const auto f = Similarity::from_kernel(ks);
                     const ProjectionBatch z1{sphere_rows(k, d, rng), Support::sphere};
                     const ProjectionBatch z2{sphere_rows(k, d, rng), Support::sphere};
                     const double lhs = entropy_joe(z2, ks) + reconstruction_cont(z2, z1, f);
                     const double rhs = -contrastive_branch(z2, z1, f, NegativeSet::self_inclusive) +
                                        std::log(static_cast<double>(k));
                     return within(lhs, rhs, 1e-9);
                 }});
    v.push_back({"estimators.plugin_disc_uniform_is_log_m", [] {
                     Matrix p(6, 3, 1.0 / 3.0);
                     return within(entropy_plugin_disc(DiscretePosterior{p}), std::log(3.0), 1e-12);
                 }});
    v.push_back({"methods.byol_cosine_identity", [] {
                     Rng rng(8);
                     const Matrix a = gaussian(9, 4, rng), b = gaussian(9, 4, rng);
                     double cos_sum = 0.0;
                     for (std::size_t i = 0; i < 9; ++i)
                         cos_sum += dot(a.row(i), b.row(i)) / (norm2(a.row(i)) * norm2(b.row(i)));
                     return within(byol_loss(ProjectionBatch{a}, ProjectionBatch{b}), 2.0 * (1.0 - cos_sum / 9.0),
                                   1e-12);
                 }});
    v.push_back({"methods.sinkhorn_marginals", [] {
                     Rng rng(9);
                     const Matrix s = matmul_nt(sphere_rows(8, 3, rng), sphere_rows(4, 3, rng));
                     return at_most(sinkhorn_plan(s, 0.5, 500).max_marginal_violation(), 1e-6);
                 }});
    v.push_back({"methods.kmeans_objective_monotone", [] {
                     Rng rng(10);
                     const ProjectionBatch z{sphere_rows(64, 3, rng), Support::sphere};
                     auto r = kmeans_assign(z, 5, 10, rng);
                     for (std::size_t i = 1; i < r.objective.size(); ++i)
                         if (r.objective[i] > r.objective[i - 1] + 1e-12) return CheckOutcome{false, "objective rose"};
                     return CheckOutcome{true, "non-increasing over " + std::to_string(r.objective.size()) + " values"};
                 }});
    v.push_back({"autodiff.grad_check_er_joe", [] {
                     Rng rng(11);
                     const KernelSpec ks{Family::gaussian, 0.7, 3};
                     const auto f = Similarity::from_kernel(ks);
                     auto loss = [&](ad::Tape&, std::span<const ad::Var> p) {
                         return ad::neg(ad::add(ad::entropy_joe(p[0], ks), ad::reconstruction_cont(p[0], p[1], f)));
                     };
                     auto r = grad_check(loss, {gaussian(6, 3, rng), gaussian(6, 3, rng)}, 1e-5);
                     return at_most(r.max_relative_error, 1e-4);
                 }});
    v.push_back({"autodiff.stop_gradient_is_zero", [] {
                     Rng rng(12);
                     ad::Tape t;
                     ad::Var a = t.parameter(gaussian(4, 3, rng)), b = t.parameter(gaussian(4, 3, rng));
                     ad::Var l = ad::byol_loss(a, ad::stop_gradient(b));
                     t.backward(l);
                     double m = 0.0;
                     const Matrix gb = t.grad(b);
                     for (double g : gb.values()) m = std::max(m, std::abs(g));
                     return CheckOutcome{m == 0.0, "max |grad| " + format_double(m)};
                 }});
    v.push_back({"synthetic.zero_layer_mixing_is_identity", [] {
                     Rng rng(13);
                     const Matrix z = gaussian(5, 4, rng);
                     return at_most(max_abs_diff(mix(make_mixing(4, 0, 1), z), z), 0.0);
                 }});
    v.push_back({"synthetic.mixing_is_deterministic_and_well_conditioned", [] {
                     const auto a = make_mixing(5, 3, 42), b = make_mixing(5, 3, 42);
                     double worst = 0.0;
                     for (std::size_t l = 0; l < a.layers.size(); ++l)
                         if (max_abs_diff(a.layers[l].weight, b.layers[l].weight) != 0.0)
                             return CheckOutcome{false, "weights differ"};
                     for (double c : a.condition_numbers) worst = std::max(worst, c);
                     return at_most(worst, 100.0);
                 }});
    v.push_back({"evaluation.r2_affine_closure", [] {
                     Rng rng(14);
                     const Matrix z = gaussian(200, 3, rng), a = gaussian(3, 3, rng);
                     Matrix l = matmul(z, a);
                     for (auto& x : l.values()) x += 0.5;
                     return within(r2_score(l, z), 100.0, 1e-6);
                 }});
    v.push_back({"evaluation.mcc_signed_permutation", [] {
                     Rng rng(15);
                     const Matrix z = gaussian(200, 4, rng);
                     Matrix l(200, 4);
                     const std::size_t perm[4] = {2, 0, 3, 1};
                     for (std::size_t i = 0; i < 200; ++i)
                         for (std::size_t j = 0; j < 4; ++j) l(i, perm[j]) = (j % 2 ? -3.0 : 2.0) * z(i, j) + 1.0;
                     return within(mcc_score(l, z), 100.0, 1e-9);
                 }});
    v.push_back({"evaluation.er_gap_equals_expected_kl", [] {
                     Rng rng(16);
                     Matrix joint = random_pmfs(1, 20, rng);
                     Matrix j(4, 5);
                     std::copy(joint.values().begin(), joint.values().end(), j.values().begin());
                     const auto r = er_gap_report(j, random_pmfs(4, 5, rng));
                     if (r.gap < -1e-12) return CheckOutcome{false, "negative gap " + format_double(r.gap)};
                     return within(r.gap, r.expected_kl, 1e-12);
                 }});
    v.push_back({"training.zero_steps_keeps_init_hash", [] {
                     auto c = tiny_run(Method::simclr, true);
                     c.steps = 0;
                     const auto r = run_mvssl(c);
                     return CheckOutcome{r.state.hash() == r.init_hash, hex64(r.state.hash())};
                 }});
    for (Method m : {Method::simclr, Method::cmc, Method::byol, Method::dino, Method::swav, Method::deepcluster}) {
        for (bool er : {false, true}) {
            v.push_back({"training.deterministic_" + to_string(m) + (er ? "_er" : ""), [m, er] {
                             const auto c = tiny_run(m, er);
                             std::ostringstream a, b;
                             write_metrics_csv(a, run_mvssl(c).log);
                             write_metrics_csv(b, run_mvssl(c).log);
                             return CheckOutcome{a.str() == b.str(), "metrics.csv compared byte for byte"};
                         }});
        }
    }
    v.push_back({"training.teacher_receives_no_gradient", [] {
                     auto c = tiny_run(Method::dino, true);
                     c.is_distillation = true;
                     const auto r = run_mvssl(c);
                     return CheckOutcome{r.state.teacher_grad_max == 0.0,
                                         "max teacher |grad| " + format_double(r.state.teacher_grad_max)};
                 }});
    v.push_back({"artifacts.metrics_csv_round_trip", [] {
                     const auto r = run_mvssl(tiny_run(Method::swav, true));
                     std::ostringstream a;
                     write_metrics_csv(a, r.log);
                     std::istringstream in(a.str());
                     std::ostringstream b;
                     write_metrics_csv(b, read_metrics_csv(in));
                     return CheckOutcome{a.str() == b.str(), std::to_string(r.log.rows.size()) + " rows"};
                 }});
    return v;
}

}  // namespace miner
