#pragma once

// Identifiability scores (R², MCC) and the exact discrete MI oracle for the
// ER inequality.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "miner/matrix.hpp"

namespace miner {

struct ScoreReport {
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double mcc = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> correlations;       // matched |corr| per true dimension
    std::vector<std::size_t> permutation;   // true dimension j ↔ learned column permutation[j]
    bool rank_deficient = false;
    std::vector<std::size_t> zero_variance;  // learned columns with no variance
};

namespace detail {

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

inline void require_score_shapes(const Matrix& learned, const Matrix& truth) {
    require(learned.rows() == truth.rows(), "score: learned and true latents need the same number of rows");
    require(learned.rows() > learned.cols() + 1, "score: need n > d + 1 samples");
}

/// Average ranks (ties share their mean rank).
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j);
        for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace detail

/// Mean over true dimensions of 100·(1 − SSE/SST) for the least-squares
/// affine map from learned to true.
inline double r2_score(const Matrix& learned, const Matrix& truth, ScoreReport* report = nullptr) {
    detail::require_score_shapes(learned, truth);
    const Eigen::Index n = static_cast<Eigen::Index>(learned.rows());
    const Eigen::Index d = static_cast<Eigen::Index>(learned.cols());
    Eigen::MatrixXd x(n, d + 1);
    x.leftCols(d) = detail::to_eigen(learned);
    x.col(d).setOnes();
    const Eigen::MatrixXd y = detail::to_eigen(truth);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    const Eigen::MatrixXd coef = cod.solve(y);
    const Eigen::MatrixXd resid = y - x * coef;
    double total = 0.0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const double sst = (y.col(j).array() - y.col(j).mean()).square().sum();
        const double sse = resid.col(j).squaredNorm();
        total += sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
    }
    const double r2 = 100.0 * total / static_cast<double>(y.cols());
    if (report) {
        report->r2 = r2;
        report->rank_deficient = cod.rank() < d + 1;
    }
    return r2;
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method).
/// Returns assignment[row] = column.
inline std::vector<std::size_t> max_weight_assignment(const Matrix& w) {
    require(w.rows() == w.cols(), "max_weight_assignment: matrix must be square");
    const std::size_t n = w.rows();
    const double inf = std::numeric_limits<double>::infinity();
    // Minimize cost = −w with 1-based potentials.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -w(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
    return assignment;
}

/// |correlation| matrix between columns: entry (j, c) pairs true column j
/// with learned column c.
inline Matrix abs_correlations(const Matrix& learned, const Matrix& truth, bool spearman,
                               std::vector<std::size_t>* zero_variance = nullptr) {
    const std::size_t n = learned.rows(), d = learned.cols(), dt = truth.cols();
    auto standardized = [&](const Matrix& m, std::size_t c, bool& degenerate) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = m(i, c);
        if (spearman) x = detail::ranks(x);
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (auto& v : x) {
            v -= mean;
            ss += v * v;
        }
        degenerate = !(ss > 0.0);
        const double s = degenerate ? 1.0 : std::sqrt(ss);
        for (auto& v : x) v /= s;
        return x;
    };
    std::vector<std::vector<double>> a(d), b(dt);
    std::vector<bool> dead(d);
    for (std::size_t c = 0; c < d; ++c) {
        bool deg = false;
        a[c] = standardized(learned, c, deg);
        dead[c] = deg;
        if (deg && zero_variance) zero_variance->push_back(c);
    }
    for (std::size_t j = 0; j < dt; ++j) {
        bool deg = false;
        b[j] = standardized(truth, j, deg);
    }
    Matrix corr(dt, d);
    for (std::size_t j = 0; j < dt; ++j)
        for (std::size_t c = 0; c < d; ++c) corr(j, c) = dead[c] ? 0.0 : std::abs(dot(b[j], a[c]));
    return corr;
}

/// 100 · mean matched |correlation| under the optimal one-to-one assignment.
inline double mcc_score(const Matrix& learned, const Matrix& truth, bool spearman = false,
                        ScoreReport* report = nullptr) {
    detail::require_score_shapes(learned, truth);
    require(learned.cols() == truth.cols(), "mcc_score: learned and true latents need the same dimension");
    std::vector<std::size_t> zero_var;
    const Matrix corr = abs_correlations(learned, truth, spearman, &zero_var);
    const auto assignment = max_weight_assignment(corr);
    double s = 0.0;
    std::vector<double> matched(assignment.size());
    for (std::size_t j = 0; j < assignment.size(); ++j) s += (matched[j] = corr(j, assignment[j]));
    const double mcc = 100.0 * s / static_cast<double>(assignment.size());
    if (report) {
        report->mcc = mcc;
        report->correlations = matched;
        report->permutation = assignment;
        report->zero_variance = zero_var;
    }
    return mcc;
}

inline ScoreReport score(const Matrix& learned, const Matrix& truth, bool spearman = false) {
    ScoreReport r;
    r2_score(learned, truth, &r);
    mcc_score(learned, truth, spearman, &r);
    return r;
}

// ---------------------------------------------------------------------------
// Exact discrete oracle

inline void require_joint_pmf(const Matrix& joint) {
    require(joint.rows() > 0 && joint.cols() > 0, "joint pmf: empty matrix");
    double s = 0.0;
    for (double v : joint.values()) {
        require(v >= 0.0 && std::isfinite(v), "joint pmf: entries must be finite and non-negative");
        s += v;
    }
    require(std::abs(s - 1.0) <= 1e-12, "joint pmf: entries must sum to 1");
}

inline std::vector<double> row_marginal(const Matrix& joint) {
    std::vector<double> p(joint.rows(), 0.0);
    for (std::size_t i = 0; i < joint.rows(); ++i)
        for (double v : joint.row(i)) p[i] += v;
    return p;
}

inline std::vector<double> col_marginal(const Matrix& joint) {
    std::vector<double> p(joint.cols(), 0.0);
    for (std::size_t i = 0; i < joint.rows(); ++i)
        for (std::size_t j = 0; j < joint.cols(); ++j) p[j] += joint(i, j);
    return p;
}

/// Σ p(i,j) log(p(i,j) / (p(i) p(j))) with 0 log 0 = 0.
inline double exact_mi_discrete(const Matrix& joint) {
    require_joint_pmf(joint);
    const auto pr = row_marginal(joint), pc = col_marginal(joint);
    double mi = 0.0;
    for (std::size_t i = 0; i < joint.rows(); ++i)
        for (std::size_t j = 0; j < joint.cols(); ++j) {
            const double p = joint(i, j);
            if (p > 0.0) mi += p * (std::log(p) - std::log(pr[i]) - std::log(pc[j]));
        }
    return mi;
}

struct ErGapReport {
    double mi = 0.0;
    double er = 0.0;
    double gap = 0.0;
    double expected_kl = 0.0;  // Σ_i p(i) KL(p(·|i) ‖ q(·|i))
    bool support_mismatch = false;
};

/// ER = H(W2) + Σ p(i,j) log q(j|i) against the exact MI of `joint`.
inline ErGapReport er_gap_report(const Matrix& joint, const Matrix& recon) {
    require_joint_pmf(joint);
    require(joint.same_shape(recon), "er_gap_report: recon must have the joint's shape");
    for (std::size_t i = 0; i < recon.rows(); ++i) {
        double s = 0.0;
        for (double v : recon.row(i)) {
            require(v >= 0.0, "er_gap_report: recon entries must be non-negative");
            s += v;
        }
        require(std::abs(s - 1.0) <= 1e-9, "er_gap_report: recon rows must sum to 1");
    }
    ErGapReport r;
    r.mi = exact_mi_discrete(joint);
    const auto pr = row_marginal(joint), pc = col_marginal(joint);
    double h = 0.0;
    for (double v : pc)
        if (v > 0.0) h -= v * std::log(v);
    double rec = 0.0, kl = 0.0;
    for (std::size_t i = 0; i < joint.rows(); ++i)
        for (std::size_t j = 0; j < joint.cols(); ++j) {
            const double p = joint(i, j);
            if (p == 0.0) continue;
            if (recon(i, j) == 0.0) {
                r.support_mismatch = true;
                continue;
            }
            rec += p * std::log(recon(i, j));
            kl += p * (std::log(p / pr[i]) - std::log(recon(i, j)));
        }
    if (r.support_mismatch) {
        r.er = -std::numeric_limits<double>::infinity();
        r.gap = r.expected_kl = std::numeric_limits<double>::infinity();
        return r;
    }
    r.er = h + rec;
    r.gap = r.mi - r.er;
    r.expected_kl = kl;
    return r;
}

}  // namespace miner
