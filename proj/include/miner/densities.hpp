#pragma once

// Reconstruction densities, KDE kernels and the similarity functions derived
// from them.

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "miner/matrix.hpp"
#include "miner/rng.hpp"

namespace miner {

enum class Support { sphere, box, unbounded };
enum class Family { vmf, gaussian, laplace, gennorm };

inline std::string to_string(Support s) {
    switch (s) {
        case Support::sphere: return "sphere";
        case Support::box: return "box";
        case Support::unbounded: return "unbounded";
    }
    return "?";
}

inline std::string to_string(Family f) {
    switch (f) {
        case Family::vmf: return "vmf";
        case Family::gaussian: return "gaussian";
        case Family::laplace: return "laplace";
        case Family::gennorm: return "gennorm";
    }
    return "?";
}

inline Support support_from_string(const std::string& s) {
    if (s == "sphere") return Support::sphere;
    if (s == "box") return Support::box;
    if (s == "unbounded") return Support::unbounded;
    throw Error("unknown support '" + s + "'");
}

inline Family family_from_string(const std::string& s) {
    if (s == "vmf") return Family::vmf;
    if (s == "gaussian" || s == "normal") return Family::gaussian;
    if (s == "laplace") return Family::laplace;
    if (s == "gennorm") return Family::gennorm;
    throw Error("unknown density family '" + s + "'");
}

/// log of the vMF normalizing constant C_d(κ) on S^{d-1}.
inline double vmf_log_normalizer(std::size_t d, double kappa) {
    require(d >= 2 && kappa > 0.0, "vmf_log_normalizer: need d >= 2 and kappa > 0");
    const double nu = static_cast<double>(d) / 2.0 - 1.0;
    double log_bessel;
    if (kappa < 500.0) {
        log_bessel = std::log(std::cyl_bessel_i(nu, kappa));
    } else {
        // Hankel expansion, first two terms.
        const double mu = 4.0 * nu * nu;
        log_bessel = kappa - 0.5 * std::log(2.0 * std::numbers::pi * kappa) + std::log1p(-(mu - 1.0) / (8.0 * kappa));
    }
    return nu * std::log(kappa) - (static_cast<double>(d) / 2.0) * std::log(2.0 * std::numbers::pi) - log_bessel;
}

/// Mean resultant length E[⟨x, μ⟩] of vMF(μ, κ) on S^{d-1}.
inline double vmf_mean_resultant(std::size_t d, double kappa) {
    const double nu = static_cast<double>(d) / 2.0;
    return std::cyl_bessel_i(nu, kappa) / std::cyl_bessel_i(nu - 1.0, kappa);
}

inline double gennorm_log_normalizer_1d(double beta, double scale) {
    return std::log(beta) - std::log(2.0 * scale) - std::lgamma(1.0 / beta);
}

/// Conditional density q(target | condition). `scale` is κ for vMF, σ for
/// Gaussian, λ for Laplace and the GenNorm scale; `beta` is the GenNorm shape.
struct ReconstructionDensity {
    Family family = Family::vmf;
    double scale = 1.0;
    double beta = 2.0;
    Support support = Support::sphere;

    static ReconstructionDensity vmf(double kappa) { return {Family::vmf, kappa, 2.0, Support::sphere}; }
    static ReconstructionDensity gaussian(double sigma, Support s = Support::unbounded) {
        return {Family::gaussian, sigma, 2.0, s};
    }
    static ReconstructionDensity laplace(double lambda, Support s = Support::unbounded) {
        return {Family::laplace, lambda, 1.0, s};
    }
    static ReconstructionDensity gennorm(double beta, double scale, Support s = Support::unbounded) {
        return {Family::gennorm, scale, beta, s};
    }

    void validate() const {
        require(scale > 0.0 && std::isfinite(scale), "ReconstructionDensity: scale parameter must be positive");
        if (family == Family::gennorm) require(beta > 0.0, "ReconstructionDensity: GenNorm shape must be positive");
        if (family == Family::vmf) require(support == Support::sphere, "ReconstructionDensity: vMF lives on the sphere");
    }

    /// Exponent p of the |·|^p distance for the translation-invariant families.
    double distance_power() const {
        switch (family) {
            case Family::gaussian: return 2.0;
            case Family::laplace: return 1.0;
            case Family::gennorm: return beta;
            case Family::vmf: return 0.0;
        }
        return 0.0;
    }

    /// Coefficient α in log q = c − α·Σ|u|^p (or c + α⟨x, μ⟩ for vMF).
    double coefficient() const {
        switch (family) {
            case Family::vmf: return scale;
            case Family::gaussian: return 1.0 / (2.0 * scale * scale);
            case Family::laplace: return 1.0 / scale;
            case Family::gennorm: return 1.0 / std::pow(scale, beta);
        }
        return 0.0;
    }

    /// Log normalizing constant of the untruncated family in dimension d.
    double log_normalizer(std::size_t d) const {
        const double dd = static_cast<double>(d);
        switch (family) {
            case Family::vmf: return vmf_log_normalizer(d, scale);
            case Family::gaussian: return -0.5 * dd * std::log(2.0 * std::numbers::pi * scale * scale);
            case Family::laplace: return -dd * std::log(2.0 * scale);
            case Family::gennorm: return dd * gennorm_log_normalizer_1d(beta, scale);
        }
        return 0.0;
    }
};

namespace detail {

inline void check_support(std::span<const double> x, Support s, const char* what) {
    switch (s) {
        case Support::sphere:
            require(std::abs(norm2(x) - 1.0) <= 1e-9, std::string(what) + ": vector is not on the unit sphere");
            break;
        case Support::box:
            for (double v : x) require(v >= -1.0 && v <= 1.0, std::string(what) + ": vector outside [-1, 1]^d");
            break;
        case Support::unbounded: break;
    }
}

inline double pow_distance(std::span<const double> a, std::span<const double> b, double p) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double u = std::abs(a[i] - b[i]);
        s += p == 2.0 ? u * u : (p == 1.0 ? u : std::pow(u, p));
    }
    return s;
}

}  // namespace detail

/// log q(target | condition); the normalizing constant is dropped unless
/// `normalized` is set.
inline double log_density(const ReconstructionDensity& q, std::span<const double> target,
                          std::span<const double> condition, bool normalized = false) {
    q.validate();
    require(target.size() == condition.size(), "log_density: dimension mismatch");
    detail::check_support(target, q.support, "log_density target");
    detail::check_support(condition, q.support, "log_density condition");
    double v;
    if (q.family == Family::vmf) {
        v = q.scale * dot(target, condition);
    } else {
        v = -q.coefficient() * detail::pow_distance(target, condition, q.distance_power());
    }
    return normalized ? v + q.log_normalizer(target.size()) : v;
}

// ---------------------------------------------------------------------------

/// KDE kernel. Translation-invariant families are evaluated in unit-scale form
/// at u/h; the vMF kernel is the sphere density with concentration 1/h.
struct KernelSpec {
    Family family = Family::gaussian;
    double bandwidth = 1.0;
    std::size_t dim = 1;
    double beta = 2.0;  // GenNorm shape

    void validate() const {
        require(bandwidth > 0.0 && std::isfinite(bandwidth), "KernelSpec: bandwidth must be positive");
        require(dim >= 1, "KernelSpec: dimension must be positive");
        if (family == Family::gennorm) require(beta > 0.0, "KernelSpec: GenNorm shape must be positive");
        if (family == Family::vmf) require(dim >= 2, "KernelSpec: vMF kernel needs d >= 2");
    }

    /// Whether the KDE divides by h^d (false for the sphere kernel).
    bool scales_with_bandwidth() const { return family != Family::vmf; }

    /// Unit-scale form as a ReconstructionDensity (scale 1).
    double distance_power() const {
        switch (family) {
            case Family::gaussian: return 2.0;
            case Family::laplace: return 1.0;
            case Family::gennorm: return beta;
            case Family::vmf: return 0.0;
        }
        return 0.0;
    }

    /// log q(u/h) = log_constant() − coefficient()·Σ|u|^p, or for vMF
    /// log_constant() + coefficient()·⟨z, z'⟩.
    double coefficient() const {
        switch (family) {
            case Family::vmf: return 1.0 / bandwidth;
            case Family::gaussian: return 1.0 / (2.0 * bandwidth * bandwidth);
            case Family::laplace: return 1.0 / bandwidth;
            case Family::gennorm: return 1.0 / std::pow(bandwidth, beta);
        }
        return 0.0;
    }

    double log_constant() const {
        const double d = static_cast<double>(dim);
        switch (family) {
            case Family::vmf: return vmf_log_normalizer(dim, 1.0 / bandwidth);
            case Family::gaussian: return -0.5 * d * std::log(2.0 * std::numbers::pi);
            case Family::laplace: return -d * std::log(2.0);
            case Family::gennorm: return d * gennorm_log_normalizer_1d(beta, 1.0);
        }
        return 0.0;
    }
};

inline double log_kernel_eval(const KernelSpec& spec, std::span<const double> u) {
    spec.validate();
    require(u.size() == spec.dim, "kernel_eval: dimension mismatch");
    if (spec.family == Family::vmf) {
        // For unit z, z': ⟨z, z'⟩ = 1 − ‖u‖²/2.
        double sq = 0.0;
        for (double v : u) sq += v * v;
        return spec.log_constant() + spec.coefficient() * (1.0 - 0.5 * sq);
    }
    std::vector<double> zero(u.size(), 0.0);
    return spec.log_constant() - spec.coefficient() * detail::pow_distance(u, zero, spec.distance_power());
}

/// q(u/h), without the 1/h^d factor.
inline double kernel_eval(const KernelSpec& spec, std::span<const double> u) {
    return std::exp(log_kernel_eval(spec, u));
}

// ---------------------------------------------------------------------------

/// Similarity f(a, b) used as an unnormalized log reconstruction density.
struct Similarity {
    enum class Kind { cosine, density, kernel };

    Kind kind = Kind::cosine;
    double tau = 0.1;
    ReconstructionDensity density{};
    KernelSpec kernel{};
    bool normalized = false;

    static Similarity cosine(double tau) {
        require(tau > 0.0, "Similarity: temperature must be positive");
        Similarity s;
        s.kind = Kind::cosine;
        s.tau = tau;
        return s;
    }
    static Similarity from_density(const ReconstructionDensity& q, bool normalized = false) {
        q.validate();
        Similarity s;
        s.kind = Kind::density;
        s.density = q;
        s.normalized = normalized;
        return s;
    }
    /// f(a, b) = log q((a − b)/h), matching a KDE kernel exactly.
    static Similarity from_kernel(const KernelSpec& k) {
        k.validate();
        Similarity s;
        s.kind = Kind::kernel;
        s.kernel = k;
        return s;
    }

    /// True when f = c + α⟨a, b⟩ (after row normalization for cosine).
    bool inner_product_form() const {
        switch (kind) {
            case Kind::cosine: return true;
            case Kind::density: return density.family == Family::vmf;
            case Kind::kernel: return kernel.family == Family::vmf;
        }
        return false;
    }
    double coefficient() const {
        switch (kind) {
            case Kind::cosine: return 1.0 / tau;
            case Kind::density: return density.coefficient();
            case Kind::kernel: return kernel.coefficient();
        }
        return 0.0;
    }
    double power() const {
        switch (kind) {
            case Kind::cosine: return 0.0;
            case Kind::density: return density.distance_power();
            case Kind::kernel: return kernel.distance_power();
        }
        return 0.0;
    }
    double constant(std::size_t d) const {
        switch (kind) {
            case Kind::cosine: return 0.0;
            case Kind::density: return normalized ? density.log_normalizer(d) : 0.0;
            case Kind::kernel: return kernel.log_constant();
        }
        return 0.0;
    }

    double operator()(std::span<const double> a, std::span<const double> b) const {
        require(a.size() == b.size(), "Similarity: dimension mismatch");
        if (kind == Kind::cosine) return dot(a, b) / (norm2(a) * norm2(b) * tau);
        if (inner_product_form()) return constant(a.size()) + coefficient() * dot(a, b);
        return constant(a.size()) - coefficient() * detail::pow_distance(a, b, power());
    }
};

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline double sample_gamma(double shape, Rng& rng) {
    std::gamma_distribution<double> g(shape, 1.0);
    return g(rng);
}

inline std::vector<double> sample_noise(const ReconstructionDensity& q, std::size_t d, Rng& rng) {
    std::vector<double> e(d);
    for (auto& v : e) {
        switch (q.family) {
            case Family::gaussian: v = q.scale * rng.normal(); break;
            case Family::laplace: {
                const double u = rng.uniform() - 0.5;
                v = -q.scale * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
                break;
            }
            case Family::gennorm: {
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                v = sign * std::pow(sample_gamma(1.0 / q.beta, rng), 1.0 / q.beta) * q.scale;
                break;
            }
            case Family::vmf: throw Error("sample_noise: vMF has no additive noise form");
        }
    }
    return e;
}

}  // namespace detail

/// Wood's rejection sampler for vMF(μ, κ) on S^{d-1}.
inline std::vector<double> sample_vmf(std::span<const double> mu, double kappa, Rng& rng, int max_tries = 10000) {
    const std::size_t d = mu.size();
    require(d >= 2, "sample_vmf: need d >= 2");
    require(kappa > 0.0, "sample_vmf: kappa must be positive");
    const double dm1 = static_cast<double>(d) - 1.0;
    const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);
    double w = 0.0;
    bool accepted = false;
    for (int t = 0; t < max_tries; ++t) {
        const double g1 = detail::sample_gamma(dm1 / 2.0, rng);
        const double g2 = detail::sample_gamma(dm1 / 2.0, rng);
        const double z = g1 / (g1 + g2);
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        const double u = rng.uniform();
        if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) {
            accepted = true;
            break;
        }
    }
    require(accepted, "sample_vmf: rejection sampler exceeded its retry budget");
    // Uniform direction orthogonal to μ.
    std::vector<double> v(d);
    double nv = 0.0;
    while (nv < 1e-12) {
        for (auto& x : v) x = rng.normal();
        const double proj = dot(v, mu);
        for (std::size_t i = 0; i < d; ++i) v[i] -= proj * mu[i];
        nv = norm2(v);
    }
    std::vector<double> out(d);
    const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    for (std::size_t i = 0; i < d; ++i) out[i] = w * mu[i] + s * v[i] / nv;
    return out;
}

/// One draw from q(· | condition), mapped onto the density's support: sphere
/// draws are re-normalized, box draws use rejection with `box_retries` tries.
inline std::vector<double> sample(const ReconstructionDensity& q, std::span<const double> condition, Rng& rng,
                                  int box_retries = 100) {
    q.validate();
    detail::check_support(condition, q.support, "sample condition");
    if (q.family == Family::vmf) return sample_vmf(condition, q.scale, rng);
    const std::size_t d = condition.size();
    for (int t = 0; t < box_retries; ++t) {
        auto e = detail::sample_noise(q, d, rng);
        std::vector<double> x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = condition[i] + e[i];
        switch (q.support) {
            case Support::unbounded: return x;
            case Support::sphere: {
                const double n = norm2(x);
                if (n == 0.0) continue;
                for (auto& v : x) v /= n;
                return x;
            }
            case Support::box: {
                bool inside = true;
                for (double v : x) inside = inside && v >= -1.0 && v <= 1.0;
                if (inside) return x;
                break;
            }
        }
    }
    throw Error("sample: box rejection exceeded " + std::to_string(box_retries) + " retries");
}

}  // namespace miner
