#pragma once

// Losses of the multi-view SSL families: BYOL, DINO with centering, SwAV with
// Sinkhorn-Knopp assignments and DeepCluster with k-means assignments.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "miner/estimators.hpp"
#include "miner/mlp.hpp"

namespace miner {

struct PrototypeBank {
    Matrix prototypes;  // m × d
    bool trainable = true;

    std::size_t m() const { return prototypes.rows(); }

    void require_unit_rows() const {
        for (std::size_t i = 0; i < prototypes.rows(); ++i)
            require(std::abs(norm2(prototypes.row(i)) - 1.0) <= 1e-9, "PrototypeBank: prototype is not unit norm");
    }
};

inline PrototypeBank random_prototypes(std::size_t m, std::size_t d, Rng& rng) {
    PrototypeBank b{Matrix(m, d), true};
    for (std::size_t i = 0; i < m; ++i) {
        auto r = b.prototypes.row(i);
        for (auto& v : r) v = rng.normal();
        const double n = norm2(r);
        for (auto& v : r) v /= n;
    }
    return b;
}

inline void renormalize(PrototypeBank& b) {
    for (std::size_t i = 0; i < b.m(); ++i) {
        auto r = b.prototypes.row(i);
        const double n = norm2(r);
        if (n > 0.0)
            for (auto& v : r) v /= n;
    }
}

struct CenterState {
    Matrix center;  // 1 × d
    double momentum = 0.9;
};

struct TransportPlan {
    Matrix plan;  // k × m

    /// Largest deviation of row sums from 1/k and column sums from 1/m.
    double max_marginal_violation() const {
        const double k = static_cast<double>(plan.rows()), m = static_cast<double>(plan.cols());
        double worst = 0.0;
        std::vector<double> cols(plan.cols(), 0.0);
        for (std::size_t i = 0; i < plan.rows(); ++i) {
            double r = 0.0;
            for (std::size_t j = 0; j < plan.cols(); ++j) {
                r += plan(i, j);
                cols[j] += plan(i, j);
            }
            worst = std::max(worst, std::abs(r - 1.0 / k));
        }
        for (double c : cols) worst = std::max(worst, std::abs(c - 1.0 / m));
        return worst;
    }

    /// Rows rescaled to pmfs.
    Matrix row_pmfs() const {
        Matrix p = plan;
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double s = 0.0;
            for (double v : p.row(i)) s += v;
            require(s > 0.0, "TransportPlan: empty row");
            for (auto& v : p.row(i)) v /= s;
        }
        return p;
    }
};

// ---------------------------------------------------------------------------
// BYOL

namespace ad {

/// (1/k) Σ ‖pred_i/‖pred_i‖ − target_i/‖target_i‖‖²
inline Var byol_loss(Var predicted, Var target) {
    require(predicted.value().same_shape(target.value()), "byol_loss: shape mismatch");
    Var r = sub(normalize_rows(predicted), normalize_rows(target));
    return scale(sum(mul(r, r)), 1.0 / static_cast<double>(predicted.rows()));
}

/// −(1/k) Σ softmax((teacher_i − c)/τ2)ᵀ log softmax(student_i/τ1); the
/// teacher side is detached.
inline Var dino_loss(Var student, Var teacher, const Matrix& center, double tau_student, double tau_teacher) {
    require(tau_student > 0.0 && tau_teacher > 0.0, "dino_loss: temperatures must be positive");
    require(student.value().same_shape(teacher.value()), "dino_loss: shape mismatch");
    require(center.rows() == 1 && center.cols() == student.cols(), "dino_loss: center shape mismatch");
    Tape& t = *student.tape;
    Var centered = add_row(stop_gradient(teacher), t.constant(center * -1.0));
    Var target = stop_gradient(softmax_rows(scale(centered, 1.0 / tau_teacher)));
    Var logp = log_softmax_rows(scale(student, 1.0 / tau_student));
    return scale(sum(mul(target, logp)), -1.0 / static_cast<double>(student.rows()));
}

/// −(1/k) Σ p_iᵀ log softmax(C z_i / τ); p is detached.
inline Var swav_loss(const Matrix& plan_pmfs, Var other_branch, Var prototypes, double temperature = 1.0) {
    require(plan_pmfs.rows() == other_branch.rows() && plan_pmfs.cols() == prototypes.rows(),
            "swav_loss: shape mismatch");
    for (std::size_t i = 0; i < plan_pmfs.rows(); ++i) {
        double s = 0.0;
        for (double v : plan_pmfs.row(i)) s += v;
        require(std::abs(s - 1.0) <= 1e-9, "swav_loss: plan rows are not normalized");
    }
    Var logp = log_softmax_rows(scale(matmul_nt(other_branch, prototypes), 1.0 / temperature));
    Var target = other_branch.tape->constant(plan_pmfs);
    return scale(sum(mul(target, logp)), -1.0 / static_cast<double>(plan_pmfs.rows()));
}

/// −(1/k) Σ w_i p_iᵀ log softmax(g(z_i)); posteriors are detached. Empty
/// `weights` means all ones.
inline Var deepcluster_loss(const Matrix& posteriors, Var predictor_logits, const std::vector<double>& weights = {}) {
    require(posteriors.same_shape(predictor_logits.value()), "deepcluster_loss: dimension mismatch");
    Tape& t = *predictor_logits.tape;
    Var ce = row_sum(mul(t.constant(posteriors), log_softmax_rows(predictor_logits)));
    if (!weights.empty()) {
        require(weights.size() == posteriors.rows(), "deepcluster_loss: one weight per sample required");
        ce = mul(ce, t.constant(Matrix::column_vector(weights)));
    }
    return neg(mean(ce));
}

}  // namespace ad

inline double byol_loss(const ProjectionBatch& predicted, const ProjectionBatch& target) {
    return detail::eval_scalar(
        [&](ad::Tape& t) { return ad::byol_loss(t.constant(predicted.values), t.constant(target.values)); });
}

inline double dino_loss(const ProjectionBatch& student, const ProjectionBatch& teacher, const CenterState& center,
                        double tau_student, double tau_teacher) {
    return detail::eval_scalar([&](ad::Tape& t) {
        return ad::dino_loss(t.constant(student.values), t.constant(teacher.values), center.center, tau_student,
                             tau_teacher);
    });
}

/// c ← μc + (1 − μ)·mean(batch)
inline CenterState center_update(const CenterState& c, const ProjectionBatch& teacher_batch) {
    require(c.center.rows() == 1 && c.center.cols() == teacher_batch.d(), "center_update: shape mismatch");
    require(teacher_batch.k() > 0, "center_update: empty batch");
    CenterState out = c;
    const double k = static_cast<double>(teacher_batch.k());
    for (std::size_t j = 0; j < teacher_batch.d(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < teacher_batch.k(); ++i) s += teacher_batch.values(i, j);
        out.center(0, j) = c.momentum * c.center(0, j) + (1.0 - c.momentum) * s / k;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sinkhorn-Knopp

/// Entropic OT plan for max Tr(S Pᵀ) + εH(P) over the transportation polytope
/// (row sums 1/k, column sums 1/m). Each iteration rescales columns then rows,
/// in the log domain.
inline TransportPlan sinkhorn_plan(const Matrix& scores, double epsilon, std::size_t iters) {
    require(epsilon > 0.0, "sinkhorn: epsilon must be positive");
    require(scores.rows() > 0 && scores.cols() > 0, "sinkhorn: empty score matrix");
    const std::size_t k = scores.rows(), m = scores.cols();
    const double log_k = std::log(static_cast<double>(k)), log_m = std::log(static_cast<double>(m));
    Matrix logp(k, m);
    for (std::size_t i = 0; i < scores.size(); ++i) logp[i] = scores[i] / epsilon;
    std::vector<double> buf(std::max(k, m));
    auto normalize_rows = [&] {
        for (std::size_t i = 0; i < k; ++i) {
            const double lse = logsumexp(logp.row(i));
            for (auto& v : logp.row(i)) v -= lse + log_k;
        }
    };
    auto normalize_cols = [&] {
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < k; ++i) buf[i] = logp(i, j);
            const double lse = logsumexp(std::span<const double>(buf.data(), k));
            for (std::size_t i = 0; i < k; ++i) logp(i, j) -= lse + log_m;
        }
    };
    if (iters == 0) {
        // Joint normalization only.
        const double lse = logsumexp(logp.values());
        for (auto& v : logp.values()) v -= lse;
    }
    for (std::size_t it = 0; it < iters; ++it) {
        normalize_cols();
        normalize_rows();
    }
    TransportPlan out{Matrix(k, m)};
    for (std::size_t i = 0; i < logp.size(); ++i) out.plan[i] = std::exp(logp[i]);
    require(out.plan.all_finite(), "sinkhorn: non-finite plan");
    return out;
}

inline TransportPlan sinkhorn_assign(const ProjectionBatch& scores, const PrototypeBank& prototypes, double epsilon,
                                     std::size_t iters) {
    require(scores.geometry == Support::sphere, "sinkhorn_assign: projections must lie on the sphere");
    scores.validate();
    prototypes.require_unit_rows();
    return sinkhorn_plan(matmul_nt(scores.values, prototypes.prototypes), epsilon, iters);
}

/// Tr(S Pᵀ) + εH(P), H(P) = −Σ P log P.
inline double entropic_ot_objective(const Matrix& scores, const Matrix& plan, double epsilon) {
    require(scores.same_shape(plan), "entropic_ot_objective: shape mismatch");
    double v = 0.0;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        v += scores[i] * plan[i];
        if (plan[i] > 0.0) v -= epsilon * plan[i] * std::log(plan[i]);
    }
    return v;
}

inline double swav_loss(const TransportPlan& plan, const ProjectionBatch& other_branch, const PrototypeBank& prototypes,
                        double temperature = 1.0) {
    prototypes.require_unit_rows();
    const Matrix pmfs = plan.row_pmfs();
    return detail::eval_scalar([&](ad::Tape& t) {
        return ad::swav_loss(pmfs, t.constant(other_branch.values), t.constant(prototypes.prototypes), temperature);
    });
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
    PrototypeBank centroids;
    DiscretePosterior posteriors;
    std::vector<std::size_t> labels;
    std::vector<double> objective;  // after seeding, then after each Lloyd iteration
    std::size_t reseeded = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// Nearest centroid, ties to the lowest index.
inline std::size_t nearest(std::span<const double> x, const Matrix& c, double* dist = nullptr) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.rows(); ++j) {
        const double d = sq_dist(x, c.row(j));
        if (d < bd) {
            bd = d;
            best = j;
        }
    }
    if (dist) *dist = bd;
    return best;
}

inline double kmeans_objective(const Matrix& z, const Matrix& c, const std::vector<std::size_t>& labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) s += sq_dist(z.row(i), c.row(labels[i]));
    return s / static_cast<double>(z.rows());
}

}  // namespace detail

/// k-means++ seeding followed by `iters` Lloyd iterations. Empty clusters are
/// re-seeded from the point farthest from its centroid.
inline KMeansResult kmeans_assign(const ProjectionBatch& z, std::size_t m, std::size_t iters, Rng& rng) {
    const std::size_t k = z.k();
    require(m >= 1 && k >= m, "kmeans_assign: need k >= m >= 1");
    const Matrix& x = z.values;
    KMeansResult res;
    Matrix c(m, z.d());

    std::vector<double> d2(k, std::numeric_limits<double>::infinity());
    std::size_t first = rng.index(k);
    std::copy(x.row(first).begin(), x.row(first).end(), c.row(0).begin());
    for (std::size_t j = 1; j < m; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            d2[i] = std::min(d2[i], detail::sq_dist(x.row(i), c.row(j - 1)));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (pick = 0; pick + 1 < k; ++pick) {
                if (u < d2[pick]) break;
                u -= d2[pick];
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;
        } else {
            pick = rng.index(k);
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), c.row(j).begin());
    }

    std::vector<std::size_t> labels(k);
    auto assign = [&] {
        for (std::size_t i = 0; i < k; ++i) labels[i] = detail::nearest(x.row(i), c);
    };
    assign();
    res.objective.push_back(detail::kmeans_objective(x, c, labels));
    for (std::size_t it = 0; it < iters; ++it) {
        Matrix sums(m, z.d());
        std::vector<std::size_t> counts(m, 0);
        for (std::size_t i = 0; i < k; ++i) {
            ++counts[labels[i]];
            for (std::size_t c2 = 0; c2 < z.d(); ++c2) sums(labels[i], c2) += x(i, c2);
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (counts[j] == 0) continue;
            for (std::size_t c2 = 0; c2 < z.d(); ++c2) c(j, c2) = sums(j, c2) / static_cast<double>(counts[j]);
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (counts[j] != 0) continue;
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double dd = detail::sq_dist(x.row(i), c.row(labels[i]));
                if (dd > fd) {
                    fd = dd;
                    far = i;
                }
            }
            std::copy(x.row(far).begin(), x.row(far).end(), c.row(j).begin());
            labels[far] = j;
            ++res.reseeded;
        }
        assign();
        res.objective.push_back(detail::kmeans_objective(x, c, labels));
    }

    res.centroids = PrototypeBank{c, false};
    res.posteriors.values = Matrix(k, m);
    for (std::size_t i = 0; i < k; ++i) res.posteriors.values(i, labels[i]) = 1.0;
    res.labels = std::move(labels);
    return res;
}

inline double deepcluster_loss(const DiscretePosterior& posteriors, const ProjectionBatch& other_branch,
                               const MlpParams& predictor, const std::vector<double>& weights = {}) {
    require(predictor.input_dim() == other_branch.d(), "deepcluster_loss: predictor input dim mismatch");
    require(predictor.output_dim() == posteriors.m(), "deepcluster_loss: predictor output dim must equal m");
    return detail::eval_scalar([&](ad::Tape& t) {
        auto net = bind(t, predictor, false);
        return ad::deepcluster_loss(posteriors.values, forward(net, t.constant(other_branch.values)), weights);
    });
}

/// Importance weights w_i ∝ 1/count(cluster(i)), normalized to mean 1.
inline std::vector<double> uniform_resample_weights(const DiscretePosterior& posteriors) {
    const std::size_t k = posteriors.k();
    std::vector<std::size_t> label(k);
    std::vector<double> counts(posteriors.m(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        auto r = posteriors.values.row(i);
        label[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
        counts[label[i]] += 1.0;
    }
    std::vector<double> w(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += (w[i] = 1.0 / counts[label[i]]);
    for (auto& v : w) v *= static_cast<double>(k) / total;
    return w;
}

/// Plug-in entropy of the batch-mean posterior divided by log m.
inline double normalized_entropy(const DiscretePosterior& posteriors) {
    require(posteriors.m() >= 2, "normalized_entropy: need m >= 2");
    return entropy_plugin_disc(posteriors, 1) / std::log(static_cast<double>(posteriors.m()));
}

/// Softmax of each row of logits/τ.
inline DiscretePosterior softmax_posteriors(const Matrix& logits, double tau = 1.0) {
    DiscretePosterior p{logits};
    for (std::size_t i = 0; i < p.values.rows(); ++i) {
        auto r = p.values.row(i);
        for (auto& v : r) v /= tau;
        const double lse = logsumexp(r);
        for (auto& v : r) v = std::exp(v - lse);
    }
    return p;
}

}  // namespace miner
