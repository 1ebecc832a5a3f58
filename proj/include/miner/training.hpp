#pragma once

// The multi-view training loop (native objectives and their ER variants) and
// the identifiability-experiment driver.

#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "miner/estimators.hpp"
#include "miner/evaluation.hpp"
#include "miner/methods.hpp"
#include "miner/mlp.hpp"
#include "miner/synthetic.hpp"

namespace miner {

enum class Method { simclr, cmc, byol, dino, swav, deepcluster };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::simclr: return "simclr";
        case Method::cmc: return "cmc";
        case Method::byol: return "byol";
        case Method::dino: return "dino";
        case Method::swav: return "swav";
        case Method::deepcluster: return "deepcluster";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "simclr") return Method::simclr;
    if (s == "cmc") return Method::cmc;
    if (s == "byol") return Method::byol;
    if (s == "dino") return Method::dino;
    if (s == "swav") return Method::swav;
    if (s == "deepcluster") return Method::deepcluster;
    throw Error("unknown method '" + s + "'");
}

inline bool is_discrete_method(Method m) { return m == Method::dino || m == Method::swav || m == Method::deepcluster; }
inline bool is_distillation_method(Method m) { return m == Method::byol || m == Method::dino; }

/// Encoder and model-density choices.
struct ModelSpec {
    Support space = Support::sphere;  // output head
    Family family = Family::vmf;      // KDE kernel and reconstruction family
    double scale = 0.0;               // reconstruction scale; 0 ties it to the bandwidth
    double beta = 2.0;                // GenNorm shape
    std::size_t hidden = 64;
    std::size_t layers = 3;
    std::size_t out_dim = 0;  // 0 means the latent dimension
    double slope = 0.2;
};

struct RunConfig {
    std::string name = "run";
    Method method = Method::simclr;
    bool er = false;
    bool is_discrete = false;
    bool is_joe = true;
    bool is_distillation = false;

    std::size_t batch = 256;
    std::size_t steps = 2000;
    std::uint64_t seed = 0;
    double lr = 1e-4;
    double ema = 0.99;
    double rec_weight = 1.0;
    double bandwidth = 1.0;
    double tau = 0.1;  // contrastive / prototype temperature
    double tau_student = 0.1;
    double tau_teacher = 0.04;
    double tau_teacher_final = 0.0;  // 0 keeps tau_teacher fixed
    std::size_t tau_teacher_warmup = 0;
    double center_momentum = 0.9;
    bool centering = true;
    bool teacher_half = true;
    bool plugin_normalized = false;
    std::size_t prototypes = 16;
    double sinkhorn_eps = 0.05;
    std::size_t sinkhorn_iters = 3;
    std::size_t kmeans_iters = 10;
    std::size_t replicas = 1;

    std::size_t log_every = 50;
    std::size_t eval_every = 500;
    std::size_t eval_pairs = 4096;
    bool spearman = false;
    bool timing = false;

    GenerativeSpec data;
    ModelSpec model;

    /// Flags that follow from the method: discreteness and distillation.
    static RunConfig for_method(Method m, bool er) {
        RunConfig c;
        c.method = m;
        c.er = er;
        c.is_discrete = is_discrete_method(m);
        c.is_distillation = is_distillation_method(m);
        if (c.is_discrete && m == Method::dino) c.model.space = Support::unbounded;
        return c;
    }

    std::size_t out_dim() const { return model.out_dim ? model.out_dim : data.dim; }

    KernelSpec kernel() const { return KernelSpec{model.family, bandwidth, out_dim(), model.beta}; }

    /// Similarity used as the reconstruction log-density.
    Similarity reconstruction_similarity() const {
        if (model.scale == 0.0) return Similarity::from_kernel(kernel());
        return Similarity::from_density(ReconstructionDensity{model.family, model.scale, model.beta, model.space});
    }

    /// Similarity used by the native contrastive objectives.
    Similarity contrastive_similarity() const {
        return Similarity::from_kernel(KernelSpec{model.family, tau, out_dim(), model.beta});
    }

    /// Teacher temperature at step `iter`: linear from tau_teacher to
    /// tau_teacher_final over the warm-up, then constant.
    double teacher_temperature(std::size_t iter) const {
        if (tau_teacher_final <= 0.0) return tau_teacher;
        if (iter >= tau_teacher_warmup) return tau_teacher_final;
        const double t = static_cast<double>(iter) / static_cast<double>(tau_teacher_warmup);
        return tau_teacher + t * (tau_teacher_final - tau_teacher);
    }

    NegativeSet negatives() const { return method == Method::cmc ? NegativeSet::cmc : NegativeSet::simclr; }

    void validate() const {
        require(batch >= 2, "config: batch must be at least 2");
        require(lr > 0.0, "config: lr must be positive");
        require(ema >= 0.0 && ema <= 1.0, "config: ema must lie in [0, 1]");
        require(rec_weight >= 0.0, "config: rec_weight must be non-negative");
        require(bandwidth > 0.0, "config: bandwidth must be positive");
        require(tau > 0.0 && tau_student > 0.0 && tau_teacher > 0.0, "config: temperatures must be positive");
        require(tau_teacher_final >= 0.0, "config: tau_teacher_final must be non-negative");
        require(center_momentum >= 0.0 && center_momentum <= 1.0, "config: center_momentum must lie in [0, 1]");
        require(log_every >= 1 && eval_every >= 1, "config: intervals must be positive");
        require(eval_pairs > out_dim() + 1, "config: eval_pairs must exceed out_dim + 1");
        require(model.layers >= 1 && model.hidden >= 1, "config: encoder needs at least one layer");
        require(model.scale >= 0.0, "config: model.scale must be non-negative");
        require(is_discrete == is_discrete_method(method),
                "config: is_discrete must be set exactly for dino, swav and deepcluster");
        require(!is_distillation || is_distillation_method(method),
                "config: is_distillation is only available for byol and dino");
        require(method != Method::byol || is_distillation || er, "config: native byol needs is_distillation");
        require(!(model.family == Family::vmf) || model.space == Support::sphere || is_discrete,
                "config: the vMF model family needs a sphere head");
        require(!(method == Method::swav || method == Method::deepcluster) || model.space == Support::sphere,
                "config: swav and deepcluster need a sphere head");
        require(!(method == Method::deepcluster) || batch >= prototypes, "config: deepcluster needs batch >= prototypes");
        require(replicas >= 1 && batch % replicas == 0, "config: batch must be divisible by replicas");
        require(prototypes >= 2, "config: need at least two prototypes");
        data.validate();
    }
};

struct TrainState {
    MlpParams student;
    std::optional<MlpParams> teacher;
    std::optional<MlpParams> predictor;
    std::optional<CenterState> center;
    std::optional<PrototypeBank> prototypes;
    AdamState optimizer;
    std::size_t iter = 0;
    double teacher_grad_max = 0.0;  // largest |gradient| ever seen on a teacher parameter

    std::vector<const Matrix*> tensors() const {
        std::vector<const Matrix*> out = student.tensors();
        if (teacher)
            for (auto* t : teacher->tensors()) out.push_back(t);
        if (predictor)
            for (auto* t : predictor->tensors()) out.push_back(t);
        if (center) out.push_back(&center->center);
        if (prototypes) out.push_back(&prototypes->prototypes);
        return out;
    }

    /// Hash over the bit patterns of every parameter.
    std::uint64_t hash() const {
        std::uint64_t h = 0x5EEDull;
        for (const Matrix* m : tensors()) {
            h = hash_combine(h, (m->rows() << 32) ^ m->cols());
            for (double v : m->values()) h = hash_combine(h, std::bit_cast<std::uint64_t>(v));
        }
        return h;
    }
};

struct MetricsRow {
    std::size_t step = 0;
    double loss = 0.0;
    double entropy = 0.0;
    double reconstruction = 0.0;
    double norm_entropy = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double mcc = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsLog {
    std::vector<MetricsRow> rows;
};

struct RunResult {
    TrainState state;
    MetricsLog log;
    ScoreReport final_scores;
    std::uint64_t init_hash = 0;
    double wall_ms = 0.0;
};

/// Thrown when the loss turns non-finite; carries the log up to that point.
struct RunAborted : Error {
    std::size_t step;
    MetricsLog log;
    RunAborted(std::size_t s, MetricsLog l, const std::string& why)
        : Error("run aborted at step " + std::to_string(s) + ": " + why), step(s), log(std::move(l)) {}
};

// ---------------------------------------------------------------------------

namespace detail {

inline OutputHead head_for(Support s) {
    switch (s) {
        case Support::sphere: return OutputHead::sphere;
        case Support::box: return OutputHead::box;
        case Support::unbounded: return OutputHead::none;
    }
    return OutputHead::none;
}

inline MlpParams make_encoder(const RunConfig& c, Rng& rng) {
    std::vector<std::size_t> dims{c.data.dim};
    for (std::size_t l = 0; l + 1 < c.model.layers; ++l) dims.push_back(c.model.hidden);
    dims.push_back(c.out_dim());
    return make_mlp(std::span<const std::size_t>(dims), head_for(c.model.space), rng, c.model.slope);
}

struct StepTerms {
    ad::Var loss;  // only valid while the step's tape is alive
    double loss_value = 0.0;
    double entropy = 0.0;
    double reconstruction = 0.0;
    double norm_entropy = std::numeric_limits<double>::quiet_NaN();
};

/// Entropy estimate of a continuous batch on the tape.
inline ad::Var continuous_entropy(const RunConfig& c, ad::Var z) {
    return c.is_joe ? ad::entropy_joe(z, c.kernel()) : ad::entropy_plugin_kde(z, c.kernel(), c.plugin_normalized);
}

/// −(½(H1 + H2) + w·½(Rec1 + Rec2)), or the student half only.
inline StepTerms er_loss(const RunConfig& c, ad::Var h1, ad::Var rec1, ad::Var h2, ad::Var rec2) {
    StepTerms t;
    ad::Var h = c.teacher_half ? ad::scale(ad::add(h1, h2), 0.5) : h1;
    ad::Var r = c.teacher_half ? ad::scale(ad::add(rec1, rec2), 0.5) : rec1;
    t.entropy = h.value().item();
    t.reconstruction = r.value().item();
    t.loss = ad::neg(ad::add(h, ad::scale(r, c.rec_weight)));
    return t;
}

inline double batch_mean_normalized_entropy(const Matrix& pmfs) { return normalized_entropy(DiscretePosterior{pmfs}); }

}  // namespace detail

inline TrainState init_state(const RunConfig& c) {
    Rng init = Rng(c.seed).derive("init");
    TrainState s;
    s.student = detail::make_encoder(c, init);
    if (c.is_distillation) s.teacher = s.student;
    if (c.method == Method::byol) {
        const std::size_t o = c.out_dim();
        s.predictor = make_mlp({o, 2 * o, o}, detail::head_for(c.model.space), init, c.model.slope);
    }
    if (c.method == Method::dino) s.center = CenterState{Matrix(1, c.out_dim()), c.center_momentum};
    if (c.method == Method::swav) s.prototypes = random_prototypes(c.prototypes, c.out_dim(), init);
    if (c.method == Method::deepcluster)
        s.predictor = make_mlp({c.out_dim(), c.prototypes}, OutputHead::none, init, c.model.slope);
    s.optimizer.lr = c.lr;
    return s;
}

struct TrainHooks {
    std::function<void(const TrainState&)> after_step;
};

/// One optimization step on a batch of observations for both views.
inline miner::detail::StepTerms train_step(const RunConfig& c, TrainState& s, const Matrix& x1, const Matrix& x2,
                                    Rng& step_rng) {
    using namespace ad;
    Tape tape;
    BoundMlp student = bind(tape, s.student);
    std::optional<BoundMlp> teacher, predictor;
    if (s.teacher) teacher = bind(tape, *s.teacher);
    if (s.predictor) predictor = bind(tape, *s.predictor);
    std::optional<Var> protos;
    if (s.prototypes) protos = tape.parameter(s.prototypes->prototypes);

    Var in1 = tape.constant(x1), in2 = tape.constant(x2);
    auto teach = [&](Var in) { return stop_gradient(forward(teacher ? *teacher : student, in)); };

    miner::detail::StepTerms t;
    std::vector<Matrix> teacher_targets;  // batches used to update the center
    switch (c.method) {
        case Method::simclr:
        case Method::cmc: {
            Var z1 = forward(student, in1), z2 = forward(student, in2);
            if (c.er) {
                auto f = c.reconstruction_similarity();
                t = miner::detail::er_loss(c, miner::detail::continuous_entropy(c, z1), reconstruction_cont(z1, z2, f),
                                    miner::detail::continuous_entropy(c, z2), reconstruction_cont(z2, z1, f));
            } else {
                t.loss = contrastive_loss(z1, z2, c.contrastive_similarity(), c.negatives());
                t.entropy = ad::entropy_joe(stop_gradient(z1), c.kernel()).value().item();
                t.reconstruction = reconstruction_cont(z1, z2, c.reconstruction_similarity()).value().item();
            }
            break;
        }
        case Method::byol: {
            if (c.er) {
                Var z1 = forward(*predictor, forward(student, in1));
                Var z2 = c.is_distillation ? teach(in2) : forward(student, in2);
                auto f = c.reconstruction_similarity();
                t = miner::detail::er_loss(c, miner::detail::continuous_entropy(c, z1), reconstruction_cont(z1, z2, f),
                                    miner::detail::continuous_entropy(c, z2), reconstruction_cont(z2, z1, f));
            } else {
                Var p1 = forward(*predictor, forward(student, in1));
                Var p2 = forward(*predictor, forward(student, in2));
                Var t1 = teach(in1), t2 = teach(in2);
                t.loss = scale(add(byol_loss(p1, t2), byol_loss(p2, t1)), 0.5);
                t.entropy = ad::entropy_joe(stop_gradient(p1), c.kernel()).value().item();
                t.reconstruction = reconstruction_cont(p1, t2, c.reconstruction_similarity()).value().item();
            }
            break;
        }
        case Method::dino: {
            const double tau_t = c.teacher_temperature(s.iter);
            const Matrix center = c.centering ? s.center->center : Matrix(1, c.out_dim());
            auto targets = [&](Var zt) {
                return softmax_rows(scale(add_row(zt, tape.constant(center * -1.0)), 1.0 / tau_t));
            };
            Var s1 = forward(student, in1);
            Var z2 = c.is_distillation ? teach(in2) : forward(student, in2);
            if (c.er) {
                Var p1 = softmax_rows(scale(s1, 1.0 / c.tau_student));
                Var logp1 = log_softmax_rows(scale(s1, 1.0 / c.tau_student));
                Var p2 = targets(z2);
                Var logp2 = log_softmax_rows(scale(add_row(z2, tape.constant(center * -1.0)), 1.0 / tau_t));
                t = miner::detail::er_loss(c, entropy_plugin_disc(p1, c.replicas),
                                           reconstruction_disc_soft(logp1, stop_gradient(p2)),
                                           entropy_plugin_disc(p2, c.replicas),
                                           reconstruction_disc_soft(logp2, stop_gradient(p1)));
                t.norm_entropy = miner::detail::batch_mean_normalized_entropy(p2.value());
                teacher_targets.push_back(z2.value());
            } else {
                Var s2 = forward(student, in2);
                Var z1 = c.is_distillation ? teach(in1) : forward(student, in1);
                t.loss = scale(add(dino_loss(s1, z2, center, c.tau_student, tau_t),
                                   dino_loss(s2, z1, center, c.tau_student, tau_t)),
                               0.5);
                Var p2 = targets(z2);
                t.entropy = entropy_plugin_disc(p2).value().item();
                t.reconstruction = reconstruction_disc_soft(log_softmax_rows(scale(s1, 1.0 / c.tau_student)), p2)
                                       .value()
                                       .item();
                t.norm_entropy = miner::detail::batch_mean_normalized_entropy(p2.value());
                teacher_targets.push_back(z1.value());
                teacher_targets.push_back(z2.value());
            }
            break;
        }
        case Method::swav: {
            Var z1 = forward(student, in1), z2 = forward(student, in2);
            Var l1 = scale(matmul_nt(z1, *protos), 1.0 / c.tau), l2 = scale(matmul_nt(z2, *protos), 1.0 / c.tau);
            const Matrix q1 = sinkhorn_plan(matmul_nt(z1.value(), protos->value()), c.sinkhorn_eps, c.sinkhorn_iters)
                                  .row_pmfs();
            const Matrix q2 = sinkhorn_plan(matmul_nt(z2.value(), protos->value()), c.sinkhorn_eps, c.sinkhorn_iters)
                                  .row_pmfs();
            Var logp1 = log_softmax_rows(l1), logp2 = log_softmax_rows(l2);
            Var rec1 = reconstruction_disc_soft(logp1, tape.constant(q2));
            Var rec2 = reconstruction_disc_soft(logp2, tape.constant(q1));
            Var p1 = softmax_rows(l1), p2 = softmax_rows(l2);
            if (c.er) {
                t = miner::detail::er_loss(c, entropy_plugin_disc(p1, c.replicas), rec1, entropy_plugin_disc(p2, c.replicas),
                                    rec2);
            } else {
                t.loss = neg(scale(add(rec1, rec2), 0.5));
                t.entropy = 0.5 * (entropy_plugin_disc(p1).value().item() + entropy_plugin_disc(p2).value().item());
                t.reconstruction = 0.5 * (rec1.value().item() + rec2.value().item());
            }
            t.norm_entropy = miner::detail::batch_mean_normalized_entropy(p1.value());
            break;
        }
        case Method::deepcluster: {
            Var z1 = forward(student, in1), z2 = forward(student, in2);
            auto km1 = kmeans_assign(ProjectionBatch{z1.value(), Support::sphere}, c.prototypes, c.kmeans_iters, step_rng);
            auto km2 = kmeans_assign(ProjectionBatch{z2.value(), Support::sphere}, c.prototypes, c.kmeans_iters, step_rng);
            Var g1 = forward(*predictor, z1), g2 = forward(*predictor, z2);
            Var logp1 = log_softmax_rows(g1), logp2 = log_softmax_rows(g2);
            Var p1 = softmax_rows(g1), p2 = softmax_rows(g2);
            if (c.er) {
                t = miner::detail::er_loss(c, entropy_plugin_disc(p1, c.replicas),
                                    reconstruction_disc_soft(logp1, tape.constant(km2.posteriors.values)),
                                    entropy_plugin_disc(p2, c.replicas),
                                    reconstruction_disc_soft(logp2, tape.constant(km1.posteriors.values)));
            } else {
                const auto w2 = uniform_resample_weights(km2.posteriors);
                const auto w1 = uniform_resample_weights(km1.posteriors);
                t.loss = scale(add(deepcluster_loss(km2.posteriors.values, g1, w2),
                                   deepcluster_loss(km1.posteriors.values, g2, w1)),
                               0.5);
                t.entropy = 0.5 * (entropy_plugin_disc(p1).value().item() + entropy_plugin_disc(p2).value().item());
                t.reconstruction =
                    0.5 * (reconstruction_disc_soft(logp1, tape.constant(km2.posteriors.values)).value().item() +
                           reconstruction_disc_soft(logp2, tape.constant(km1.posteriors.values)).value().item());
            }
            t.norm_entropy = miner::detail::batch_mean_normalized_entropy(p1.value());
            break;
        }
    }

    t.loss_value = t.loss.value().item();
    if (!std::isfinite(t.loss_value)) throw Error("non-finite loss");
    tape.backward(t.loss);

    std::vector<Matrix*> params;
    std::vector<Matrix> grads;
    for (std::size_t i = 0; i < student.vars.size(); ++i) {
        params.push_back(s.student.tensors()[i]);
        grads.push_back(tape.grad(student.vars[i]));
    }
    if (predictor)
        for (std::size_t i = 0; i < predictor->vars.size(); ++i) {
            params.push_back(s.predictor->tensors()[i]);
            grads.push_back(tape.grad(predictor->vars[i]));
        }
    if (protos) {
        params.push_back(&s.prototypes->prototypes);
        grads.push_back(tape.grad(*protos));
    }
    for (const auto& g : grads) require(g.all_finite(), "non-finite gradient");
    if (teacher)
        for (const auto& v : teacher->vars) {
            const Matrix g_v = tape.grad(v);
            for (double g : g_v.values()) s.teacher_grad_max = std::max(s.teacher_grad_max, std::abs(g));
        }

    adam_step(params, grads, s.optimizer);
    if (s.prototypes) renormalize(*s.prototypes);
    if (s.teacher) ema_update(*s.teacher, s.student, c.ema);
    if (s.center && c.centering)
        for (const auto& b : teacher_targets) *s.center = center_update(*s.center, ProjectionBatch{b});
    ++s.iter;
    return t;
}

/// Encoder outputs (student, no predictor) for a batch of observations.
inline Matrix encode(const TrainState& s, const Matrix& x) { return forward(s.student, x); }

struct EvalSet {
    Matrix latents;
    Matrix observations;
};

inline EvalSet make_eval_set(const RunConfig& c, const MixingNet& mixing) {
    Rng rng = Rng(c.seed).derive("eval");
    EvalSet e;
    e.latents = Matrix(c.eval_pairs, c.data.dim);
    for (std::size_t i = 0; i < c.eval_pairs; ++i) {
        auto z = sample_marginal(c.data, rng);
        std::copy(z.begin(), z.end(), e.latents.row(i).begin());
    }
    e.observations = mix(mixing, e.latents);
    return e;
}

inline ScoreReport evaluate(const RunConfig& c, const TrainState& s, const EvalSet& e) {
    const Matrix learned = encode(s, e.observations);
    ScoreReport r;
    if (!learned.all_finite()) return r;
    r2_score(learned, e.latents, &r);
    if (learned.cols() == e.latents.cols()) mcc_score(learned, e.latents, c.spearman, &r);
    return r;
}

inline MixingNet make_run_mixing(const RunConfig& c) {
    const std::uint64_t seed = c.data.mixing_seed ? c.data.mixing_seed : c.seed;
    return make_mixing(c.data.dim, c.data.mixing_layers, seed);
}

/// Algorithm 1 on the synthetic generative process of `c.data`.
inline RunResult run_mvssl(const RunConfig& c, const TrainHooks& hooks = {}) {
    c.validate();
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    RunResult res;
    res.state = init_state(c);
    res.init_hash = res.state.hash();
    const MixingNet mixing = make_run_mixing(c);
    const EvalSet eval = make_eval_set(c, mixing);
    Rng root(c.seed);
    Rng data = root.derive("data");
    Rng algo = root.derive("algorithm");

    for (std::size_t step = 0; step < c.steps; ++step) {
        const bool log_now = step % c.log_every == 0 || step + 1 == c.steps;
        const bool eval_now = step % c.eval_every == 0 || step + 1 == c.steps;
        MetricsRow row;
        row.step = step;
        if (eval_now) {
            const auto sc = evaluate(c, res.state, eval);
            row.r2 = sc.r2;
            row.mcc = sc.mcc;
        }
        const LatentBatch b = sample_latent_batch(c.data, c.batch, data);
        detail::StepTerms t;
        try {
            t = train_step(c, res.state, mix(mixing, b.z1), mix(mixing, b.z2), algo);
        } catch (const Error& e) {
            throw RunAborted(step, res.log, e.what());
        }
        if (log_now) {
            row.loss = t.loss_value;
            row.entropy = t.entropy;
            row.reconstruction = t.reconstruction;
            row.norm_entropy = t.norm_entropy;
            if (c.timing) row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
            res.log.rows.push_back(row);
        }
        if (hooks.after_step) hooks.after_step(res.state);
    }
    res.final_scores = evaluate(c, res.state, eval);
    res.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    return res;
}

struct IdentifiabilityScores {
    double r2 = 0.0;
    double mcc = 0.0;
    ScoreReport report;
    RunResult run;
};

/// Trains with run_mvssl, then scores encoder outputs against the true
/// latents of `eval_pairs` held-out samples.
inline IdentifiabilityScores run_identifiability_experiment(RunConfig c, std::size_t eval_pairs) {
    require(c.out_dim() == c.data.dim, "identifiability: encoder output dim must equal the latent dim");
    c.eval_pairs = eval_pairs;
    IdentifiabilityScores out;
    out.run = run_mvssl(c);
    out.report = out.run.final_scores;
    out.r2 = out.report.r2;
    out.mcc = out.report.mcc;
    return out;
}

}  // namespace miner
