#pragma once

// Latent generative processes for the identifiability experiments and the
// fixed invertible mixing network that produces observations.

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "miner/densities.hpp"
#include "miner/matrix.hpp"
#include "miner/mlp.hpp"
#include "miner/rng.hpp"

namespace miner {

enum class Marginal { uniform, normal, laplace };

inline std::string to_string(Marginal m) {
    switch (m) {
        case Marginal::uniform: return "uniform";
        case Marginal::normal: return "normal";
        case Marginal::laplace: return "laplace";
    }
    return "?";
}

inline Marginal marginal_from_string(const std::string& s) {
    if (s == "uniform") return Marginal::uniform;
    if (s == "normal" || s == "gaussian") return Marginal::normal;
    if (s == "laplace") return Marginal::laplace;
    throw Error("unknown marginal '" + s + "'");
}

struct GenerativeSpec {
    Support space = Support::sphere;
    std::size_t dim = 5;
    Marginal marginal = Marginal::uniform;
    double marginal_scale = 1.0;  // σ for normal, λ for laplace
    ReconstructionDensity conditional = ReconstructionDensity::vmf(1.0);
    std::size_t mixing_layers = 3;
    std::uint64_t mixing_seed = 0;

    void validate() const {
        require(dim >= 2, "GenerativeSpec: latent dimension must be at least 2");
        require(marginal != Marginal::uniform || space != Support::unbounded,
                "GenerativeSpec: a uniform marginal needs a bounded space");
        require(marginal == Marginal::uniform || marginal_scale > 0.0, "GenerativeSpec: marginal scale must be positive");
        require(conditional.support == space, "GenerativeSpec: conditional support must match the latent space");
        conditional.validate();
    }
};

// ---------------------------------------------------------------------------
// Mixing

/// a(x) = s·x + (1 − s)·softplus(x); smooth with a'(x) ∈ (s, 1).
inline double leaky_softplus(double x, double slope) {
    const double sp = x > 30.0 ? x : std::log1p(std::exp(x));
    return slope * x + (1.0 - slope) * sp;
}

struct MixingNet {
    std::vector<DenseLayer> layers;  // square
    double slope = 0.2;
    std::vector<double> condition_numbers;
    std::size_t redraws = 0;

    std::size_t dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
};

inline Matrix mix(const MixingNet& net, const Matrix& z);

inline double condition_number(const Matrix& w) {
    Eigen::MatrixXd m(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) m(i, j) = w(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    return s(0) / s(s.size() - 1);
}

/// `layers` square layers; each weight is a random orthogonal matrix plus a
/// Gaussian perturbation, re-drawn until its condition number is below
/// `max_condition`. The last bias is chosen so that g(0) = 0. The same
/// (d, layers, seed) always gives the same net.
inline MixingNet make_mixing(std::size_t d, std::size_t layers, std::uint64_t seed, double max_condition = 100.0,
                             double slope = 0.2, double perturbation = 0.5) {
    require(d >= 1, "make_mixing: dimension must be positive");
    Rng rng = Rng(seed).derive("mixing");
    MixingNet net;
    net.slope = slope;
    const double sd = perturbation / std::sqrt(static_cast<double>(d));
    const auto n = static_cast<Eigen::Index>(d);
    for (std::size_t l = 0; l < layers; ++l) {
        DenseLayer layer{Matrix(d, d), Matrix(1, d)};
        for (int attempt = 0;; ++attempt) {
            require(attempt < 10000, "make_mixing: could not draw a well-conditioned layer");
            Eigen::MatrixXd g(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
            Eigen::MatrixXd q = qr.householderQ();
            for (Eigen::Index j = 0; j < n; ++j)
                if (qr.matrixQR()(j, j) < 0) q.col(j) *= -1.0;
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j) layer.weight(i, j) = q(i, j) + sd * rng.normal();
            const double c = condition_number(layer.weight);
            if (c < max_condition) {
                net.condition_numbers.push_back(c);
                break;
            }
            ++net.redraws;
        }
        for (auto& v : layer.bias.values()) v = 0.1 * rng.normal();
        net.layers.push_back(std::move(layer));
    }
    if (!net.layers.empty()) {
        const Matrix origin = mix(net, Matrix(1, d));
        for (std::size_t j = 0; j < d; ++j) net.layers.back().bias[j] -= origin(0, j);
    }
    return net;
}

/// Row-wise g(z): affine layers with the activation after every layer but the last.
inline Matrix mix(const MixingNet& net, const Matrix& z) {
    if (net.layers.empty()) return z;
    require(z.cols() == net.dim(), "mix: dimension mismatch");
    Matrix x = z;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        x = matmul(x, net.layers[l].weight);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += net.layers[l].bias[j];
        if (l + 1 < net.layers.size())
            for (auto& v : x.values()) v = leaky_softplus(v, net.slope);
    }
    return x;
}

inline std::vector<double> mix(const MixingNet& net, std::span<const double> z) {
    Matrix m(1, z.size());
    std::copy(z.begin(), z.end(), m.values().begin());
    Matrix out = mix(net, m);
    return {out.values().begin(), out.values().end()};
}

// ---------------------------------------------------------------------------
// Latent sampling

inline std::vector<double> sample_marginal(const GenerativeSpec& spec, Rng& rng, int box_retries = 100) {
    const std::size_t d = spec.dim;
    std::vector<double> z(d);
    auto draw = [&](double& v) {
        switch (spec.marginal) {
            case Marginal::uniform: v = rng.uniform(-1.0, 1.0); break;
            case Marginal::normal: v = spec.marginal_scale * rng.normal(); break;
            case Marginal::laplace: {
                const double u = rng.uniform() - 0.5;
                v = -spec.marginal_scale * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
                break;
            }
        }
    };
    switch (spec.space) {
        case Support::sphere: {
            // Uniform: normalized isotropic Gaussian. Otherwise: e1 plus noise, normalized.
            double n = 0.0;
            while (n < 1e-12) {
                if (spec.marginal == Marginal::uniform) {
                    for (auto& v : z) v = rng.normal();
                } else {
                    for (auto& v : z) draw(v);
                    z[0] += 1.0;
                }
                n = norm2(z);
            }
            for (auto& v : z) v /= n;
            return z;
        }
        case Support::box:
            for (int t = 0; t < box_retries; ++t) {
                bool inside = true;
                for (auto& v : z) {
                    draw(v);
                    inside = inside && v >= -1.0 && v <= 1.0;
                }
                if (inside) return z;
            }
            throw Error("sample_marginal: box rejection exceeded its retry budget");
        case Support::unbounded:
            for (auto& v : z) draw(v);
            return z;
    }
    return z;
}

inline std::pair<std::vector<double>, std::vector<double>> sample_latent_pair(const GenerativeSpec& spec, Rng& rng) {
    auto z1 = sample_marginal(spec, rng);
    auto z2 = sample(spec.conditional, z1, rng);
    return {std::move(z1), std::move(z2)};
}

struct LatentBatch {
    Matrix z1, z2;  // k × d
};

inline LatentBatch sample_latent_batch(const GenerativeSpec& spec, std::size_t k, Rng& rng) {
    LatentBatch b{Matrix(k, spec.dim), Matrix(k, spec.dim)};
    for (std::size_t i = 0; i < k; ++i) {
        auto [a, c] = sample_latent_pair(spec, rng);
        std::copy(a.begin(), a.end(), b.z1.row(i).begin());
        std::copy(c.begin(), c.end(), b.z2.row(i).begin());
    }
    return b;
}

}  // namespace miner
