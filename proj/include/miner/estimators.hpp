#pragma once

// Entropy, reconstruction and mutual-information estimators. Every estimator
// has a tape form (for training and gradient checks) and a value form over
// ProjectionBatch / DiscretePosterior.

#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "miner/autodiff.hpp"
#include "miner/densities.hpp"

namespace miner {

struct ProjectionBatch {
    Matrix values;  // k × d
    Support geometry = Support::unbounded;

    std::size_t k() const { return values.rows(); }
    std::size_t d() const { return values.cols(); }

    void validate() const {
        require(values.all_finite(), "ProjectionBatch: non-finite entry");
        for (std::size_t i = 0; i < values.rows(); ++i) {
            auto r = values.row(i);
            if (geometry == Support::sphere)
                require(std::abs(norm2(r) - 1.0) <= 1e-9, "ProjectionBatch: sphere row is not unit norm");
            if (geometry == Support::box)
                for (double v : r) require(v >= -1.0 && v <= 1.0, "ProjectionBatch: box entry outside [-1, 1]");
        }
    }
};

struct DiscretePosterior {
    Matrix values;  // k × m, row-stochastic

    std::size_t k() const { return values.rows(); }
    std::size_t m() const { return values.cols(); }

    void validate() const {
        for (std::size_t i = 0; i < values.rows(); ++i) {
            double s = 0.0;
            for (double v : values.row(i)) {
                require(v >= 0.0 && std::isfinite(v), "DiscretePosterior: negative or non-finite entry");
                s += v;
            }
            require(std::abs(s - 1.0) <= 1e-9, "DiscretePosterior: row does not sum to 1");
        }
    }
};

struct ERValue {
    double entropy_part = 0.0;
    double reconstruction_part = 0.0;
    double weight = 1.0;

    double total() const { return entropy_part + weight * reconstruction_part; }
};

inline ERValue er_bound(double entropy_part, double reconstruction_part, double weight = 1.0) {
    require(weight >= 0.0, "er_bound: weight must be non-negative");
    return {entropy_part, reconstruction_part, weight};
}

enum class NegativeSet { cmc, simclr, self_inclusive, self_excluding, memory_bank };

inline NegativeSet negative_set_from_string(const std::string& s) {
    if (s == "cmc") return NegativeSet::cmc;
    if (s == "simclr") return NegativeSet::simclr;
    if (s == "self_inclusive") return NegativeSet::self_inclusive;
    if (s == "self_excluding") return NegativeSet::self_excluding;
    if (s == "memory_bank") return NegativeSet::memory_bank;
    throw Error("unknown negative set '" + s + "'");
}

namespace ad {

/// S(i, j) = f(a_i, b_j)
inline Var similarity_matrix(const Similarity& f, Var a, Var b) {
    require(a.cols() == b.cols(), "similarity_matrix: dimension mismatch");
    const std::size_t d = a.cols();
    if (f.kind == Similarity::Kind::cosine)
        return scale(matmul_nt(normalize_rows(a), normalize_rows(b)), f.coefficient());
    Var s = f.inner_product_form() ? scale(matmul_nt(a, b), f.coefficient())
                                   : scale(pairwise_pow_distance(a, b, f.power()), -f.coefficient());
    const double c = f.constant(d);
    return c == 0.0 ? s : add_scalar(s, c);
}

/// out(i) = f(a_i, b_i)
inline Var similarity_pairs(const Similarity& f, Var a, Var b) {
    require(a.value().same_shape(b.value()), "similarity_pairs: shape mismatch");
    const std::size_t d = a.cols();
    if (f.kind == Similarity::Kind::cosine) return scale(row_dot(normalize_rows(a), normalize_rows(b)), f.coefficient());
    Var s = f.inner_product_form() ? scale(row_dot(a, b), f.coefficient())
                                   : scale(row_sum(abs_pow(sub(a, b), f.power())), -f.coefficient());
    const double c = f.constant(d);
    return c == 0.0 ? s : add_scalar(s, c);
}

/// (1/k) Σ_i f(z2_i, z1_i)
inline Var reconstruction_cont(Var z1, Var z2, const Similarity& f) {
    require(z1.rows() > 0, "reconstruction_cont: empty batch");
    return mean(similarity_pairs(f, z2, z1));
}

/// log p̂(z_i) for the KDE built from the same samples, k × 1.
inline Var log_kde_at_samples(Var z, const KernelSpec& spec) {
    spec.validate();
    require(z.rows() >= 1, "kde: empty batch");
    require(z.cols() == spec.dim, "kde: dimension mismatch");
    Var logq = similarity_matrix(Similarity::from_kernel(spec), z, z);
    double shift = std::log(static_cast<double>(z.rows()));
    if (spec.scales_with_bandwidth()) shift += static_cast<double>(spec.dim) * std::log(spec.bandwidth);
    return add_scalar(row_logsumexp(logq), -shift);
}

/// −(1/k) Σ log p̂(z_i)
inline Var entropy_joe(Var z, const KernelSpec& spec) { return neg(mean(log_kde_at_samples(z, spec))); }

/// −Σ p̂(z_i) log p̂(z_i); divided by k when `normalized_variant` is set.
inline Var entropy_plugin_kde(Var z, const KernelSpec& spec, bool normalized_variant = false) {
    Var lp = log_kde_at_samples(z, spec);
    Var h = neg(sum(mul(exp(lp), lp)));
    return normalized_variant ? scale(h, 1.0 / static_cast<double>(z.rows())) : h;
}

/// Mean over r equal chunks of −Σ_w p̂(w) log p̂(w), p̂ the chunk's mean row.
inline Var entropy_plugin_disc(Var posteriors, std::size_t replicas = 1) {
    const std::size_t k = posteriors.rows();
    require(replicas >= 1 && k % replicas == 0, "entropy_plugin_disc: batch size not divisible by replicas");
    const std::size_t chunk = k / replicas;
    Matrix avg(replicas, k);
    for (std::size_t i = 0; i < k; ++i) avg(i / chunk, i) = 1.0 / static_cast<double>(chunk);
    Var marg = matmul(posteriors.tape->constant(std::move(avg)), posteriors);
    return scale(sum(mul(marg, log(marg))), -1.0 / static_cast<double>(replicas));
}

/// (1/k) Σ_i log q(w_i | z1_i) from a k × m matrix of log-probabilities.
inline Var reconstruction_disc(Var log_q, std::vector<std::size_t> labels) {
    require(log_q.rows() > 0, "reconstruction_disc: empty batch");
    return mean(pick(log_q, std::move(labels)));
}

/// (1/k) Σ_i Σ_w p_i(w) log q_i(w): reconstruction_disc averaged over soft labels.
inline Var reconstruction_disc_soft(Var log_q, Var target_pmf) {
    require(log_q.value().same_shape(target_pmf.value()), "reconstruction_disc_soft: shape mismatch");
    return scale(sum(mul(target_pmf, log_q)), 1.0 / static_cast<double>(log_q.rows()));
}

inline Var infonce(Var z1, Var z2, const Similarity& f) {
    const std::size_t k = z1.rows();
    require(k > 0, "infonce: empty batch");
    require(z2.rows() == k, "infonce: unpaired batches");
    Var s = similarity_matrix(f, z1, z2);
    return add_scalar(mean(sub(diag(s), row_logsumexp(s))), std::log(static_cast<double>(k)));
}

namespace detail_contrastive {
inline std::shared_ptr<const std::vector<std::uint8_t>> off_diagonal_mask(std::size_t k, std::size_t extra_cols) {
    auto m = std::make_shared<std::vector<std::uint8_t>>(k * (k + extra_cols), 1);
    for (std::size_t i = 0; i < k; ++i) (*m)[i * (k + extra_cols) + i] = 0;
    return m;
}
}  // namespace detail_contrastive

/// Loss for the branch whose anchors are `anchor` and positives `other`:
/// −(1/k) Σ_i log e^{f(a_i, o_i)} / Σ_{s ∈ S(a_i)} e^{f(a_i, s)}.
inline Var contrastive_branch(Var anchor, Var other, const Similarity& f, NegativeSet mode,
                              const Matrix* bank = nullptr) {
    const std::size_t k = anchor.rows();
    require(k > 0, "contrastive_loss: empty batch");
    require(other.rows() == k, "contrastive_loss: unpaired batches");
    Var pos = similarity_pairs(f, anchor, other);
    Var lse;
    switch (mode) {
        case NegativeSet::cmc: lse = row_logsumexp(similarity_matrix(f, anchor, other)); break;
        case NegativeSet::self_inclusive: lse = row_logsumexp(similarity_matrix(f, anchor, anchor)); break;
        case NegativeSet::self_excluding:
            require(k > 1, "contrastive_loss: empty negative set");
            lse = row_logsumexp(similarity_matrix(f, anchor, anchor), detail_contrastive::off_diagonal_mask(k, 0));
            break;
        case NegativeSet::simclr: {
            Var s = concat_cols(similarity_matrix(f, anchor, anchor), similarity_matrix(f, anchor, other));
            lse = row_logsumexp(s, detail_contrastive::off_diagonal_mask(k, k));
            break;
        }
        case NegativeSet::memory_bank:
            require(bank != nullptr && bank->rows() > 0, "contrastive_loss: empty negative set");
            lse = row_logsumexp(similarity_matrix(f, anchor, anchor.tape->constant(*bank)));
            break;
    }
    return neg(mean(sub(pos, lse)));
}

/// Symmetric loss: mean of the two branch losses.
inline Var contrastive_loss(Var z1, Var z2, const Similarity& f, NegativeSet mode, const Matrix* bank = nullptr) {
    return scale(add(contrastive_branch(z1, z2, f, mode, bank), contrastive_branch(z2, z1, f, mode, bank)), 0.5);
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Value forms

namespace detail {
template <class F>
double eval_scalar(F&& f) {
    ad::Tape tape;
    return f(tape).value().item();
}
}  // namespace detail

inline double reconstruction_cont(const ProjectionBatch& z1, const ProjectionBatch& z2, const Similarity& f) {
    require(z1.k() > 0, "reconstruction_cont: k == 0");
    require(z1.values.same_shape(z2.values), "reconstruction_cont: batches differ in shape");
    return detail::eval_scalar(
        [&](ad::Tape& t) { return ad::reconstruction_cont(t.constant(z1.values), t.constant(z2.values), f); });
}

/// q: k × m row-stochastic matrix of q(· | z1_i); labels: sampled w2_i.
inline double reconstruction_disc(const Matrix& q, std::span<const std::size_t> labels) {
    require(q.rows() > 0, "reconstruction_disc: empty batch");
    require(labels.size() == q.rows(), "reconstruction_disc: one label per row required");
    double s = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        require(labels[i] < q.cols(), "reconstruction_disc: label out of range");
        const double p = q(i, labels[i]);
        require(p > 0.0, "reconstruction_disc: zero-probability label");
        s += std::log(p);
    }
    return s / static_cast<double>(q.rows());
}

/// (1/(k h^d)) Σ_j q((z − z_j)/h)
inline double kde_density_at(std::span<const double> z, const ProjectionBatch& samples, const KernelSpec& spec) {
    require(spec.bandwidth > 0.0, "kde_density_at: bandwidth must be positive");
    spec.validate();
    require(samples.k() >= 1, "kde_density_at: no samples");
    require(z.size() == samples.d() && z.size() == spec.dim, "kde_density_at: dimension mismatch");
    std::vector<double> logs(samples.k());
    std::vector<double> u(z.size());
    for (std::size_t j = 0; j < samples.k(); ++j) {
        for (std::size_t c = 0; c < u.size(); ++c) u[c] = z[c] - samples.values(j, c);
        logs[j] = log_kernel_eval(spec, u);
    }
    double lp = logsumexp(logs) - std::log(static_cast<double>(samples.k()));
    if (spec.scales_with_bandwidth()) lp -= static_cast<double>(spec.dim) * std::log(spec.bandwidth);
    return std::exp(lp);
}

inline double entropy_joe(const ProjectionBatch& z, const KernelSpec& spec) {
    const double h = detail::eval_scalar([&](ad::Tape& t) { return ad::entropy_joe(t.constant(z.values), spec); });
    require(std::isfinite(h), "entropy_joe: non-finite estimate");
    return h;
}

inline double entropy_plugin_kde(const ProjectionBatch& z, const KernelSpec& spec, bool normalized_variant = false) {
    const double h = detail::eval_scalar(
        [&](ad::Tape& t) { return ad::entropy_plugin_kde(t.constant(z.values), spec, normalized_variant); });
    require(std::isfinite(h), "entropy_plugin_kde: non-finite estimate");
    return h;
}

inline double entropy_plugin_disc(const DiscretePosterior& p, std::size_t replicas = 1) {
    return detail::eval_scalar([&](ad::Tape& t) { return ad::entropy_plugin_disc(t.constant(p.values), replicas); });
}

inline double infonce(const ProjectionBatch& z1, const ProjectionBatch& z2, const Similarity& f) {
    require(z1.k() > 0, "infonce: k == 0");
    return detail::eval_scalar([&](ad::Tape& t) { return ad::infonce(t.constant(z1.values), t.constant(z2.values), f); });
}

inline double contrastive_loss(const ProjectionBatch& z1, const ProjectionBatch& z2, const Similarity& f,
                               NegativeSet mode, const Matrix* bank = nullptr) {
    return detail::eval_scalar([&](ad::Tape& t) {
        return ad::contrastive_loss(t.constant(z1.values), t.constant(z2.values), f, mode, bank);
    });
}

/// Single-branch loss with anchors z_anchor (e.g. the second view) and positives z_other.
inline double contrastive_branch(const ProjectionBatch& z_anchor, const ProjectionBatch& z_other, const Similarity& f,
                                 NegativeSet mode, const Matrix* bank = nullptr) {
    return detail::eval_scalar([&](ad::Tape& t) {
        return ad::contrastive_branch(t.constant(z_anchor.values), t.constant(z_other.values), f, mode, bank);
    });
}

}  // namespace miner
