#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "miner/synthetic.hpp"

using namespace miner;

namespace {
double sq_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}
}  // namespace

TEST(SampleLatentPair, SphereUniformIsIsotropic) {
    GenerativeSpec spec;
    Rng rng(1);
    std::vector<double> mean(spec.dim, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto [z1, z2] = sample_latent_pair(spec, rng);
        EXPECT_NEAR(norm2(z1), 1.0, 1e-12);
        EXPECT_NEAR(norm2(z2), 1.0, 1e-12);
        for (std::size_t j = 0; j < spec.dim; ++j) mean[j] += z1[j] / n;
    }
    EXPECT_LT(norm2(mean), 0.05);
}

TEST(SampleLatentPair, VmfConditionalMeanCosine) {
    GenerativeSpec spec;
    spec.conditional = ReconstructionDensity::vmf(10.0);
    Rng rng(2);
    double s = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto [z1, z2] = sample_latent_pair(spec, rng);
        s += dot(z1, z2);
    }
    // A_d(κ) = I_{d/2}(κ) / I_{d/2-1}(κ), evaluated by the series of each Bessel function.
    auto bessel = [](double nu, double x) {
        double term = std::pow(x / 2, nu) / std::tgamma(nu + 1), sum = term;
        for (int m = 1; m < 200; ++m) {
            term *= (x / 2) * (x / 2) / (m * (m + nu));
            sum += term;
        }
        return sum;
    };
    const double d = static_cast<double>(spec.dim);
    const double want = bessel(d / 2, 10.0) / bessel(d / 2 - 1, 10.0);
    EXPECT_NEAR(s / n, want, 0.1 * want);
}

TEST(SampleLatentPair, DegenerateConditionalCopiesLatent) {
    Rng rng(3);
    GenerativeSpec sphere;
    sphere.conditional = ReconstructionDensity::vmf(1e6);
    auto [a, b] = sample_latent_pair(sphere, rng);
    EXPECT_GE(dot(a, b), 1.0 - 1e-4);

    GenerativeSpec box;
    box.space = Support::box;
    box.conditional = ReconstructionDensity::gaussian(1e-6, Support::box);
    auto [c, e] = sample_latent_pair(box, rng);
    for (std::size_t j = 0; j < c.size(); ++j) EXPECT_NEAR(c[j], e[j], 1e-4);

    GenerativeSpec open;
    open.space = Support::unbounded;
    open.marginal = Marginal::normal;
    open.conditional = ReconstructionDensity::gaussian(1e-6);
    auto [f, g] = sample_latent_pair(open, rng);
    for (std::size_t j = 0; j < f.size(); ++j) EXPECT_NEAR(f[j], g[j], 1e-4);
}

TEST(SampleLatentPair, BoxSamplesStayInBox) {
    GenerativeSpec spec;
    spec.space = Support::box;
    spec.conditional = ReconstructionDensity::laplace(0.05, Support::box);
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
        auto [z1, z2] = sample_latent_pair(spec, rng);
        for (double v : z1) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
        for (double v : z2) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
    }
}

TEST(SampleLatentPair, UnboundedMarginalVariances) {
    Rng rng(5);
    for (auto [m, scale, var] : {std::tuple{Marginal::normal, 1.5, 2.25}, std::tuple{Marginal::laplace, 1.0, 2.0}}) {
        GenerativeSpec spec;
        spec.space = Support::unbounded;
        spec.marginal = m;
        spec.marginal_scale = scale;
        spec.conditional = ReconstructionDensity::gaussian(1.0);
        double s = 0.0, s2 = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const double v = sample_marginal(spec, rng)[0];
            s += v;
            s2 += v * v;
        }
        EXPECT_NEAR(s2 / n - (s / n) * (s / n), var, 0.1 * var) << to_string(m);
    }
}

TEST(SampleLatentPair, RejectsBadSpecs) {
    GenerativeSpec spec;
    spec.space = Support::unbounded;
    spec.conditional = ReconstructionDensity::gaussian(1.0);
    EXPECT_THROW(spec.validate(), Error);  // uniform marginal on unbounded space
    GenerativeSpec mismatch;
    mismatch.conditional = ReconstructionDensity::gaussian(0.1, Support::box);
    EXPECT_THROW(mismatch.validate(), Error);
}

TEST(SampleLatentPair, BoxRejectionCapIsReported) {
    GenerativeSpec spec;
    spec.space = Support::box;
    spec.marginal = Marginal::normal;
    spec.marginal_scale = 100.0;
    spec.conditional = ReconstructionDensity::gaussian(0.1, Support::box);
    Rng rng(6);
    EXPECT_THROW(sample_marginal(spec, rng, 3), Error);
}

TEST(Mix, ZeroLayersIsIdentity) {
    const auto net = make_mixing(4, 0, 7);
    Rng rng(8);
    Matrix z(10, 4);
    for (auto& v : z.values()) v = rng.normal();
    EXPECT_EQ(max_abs_diff(mix(net, z), z), 0.0);
}

TEST(Mix, LayersAreWellConditionedAndSquare) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto net = make_mixing(5, 3, seed);
        ASSERT_EQ(net.layers.size(), 3u);
        ASSERT_EQ(net.condition_numbers.size(), 3u);
        for (std::size_t l = 0; l < 3; ++l) {
            EXPECT_EQ(net.layers[l].weight.rows(), 5u);
            EXPECT_EQ(net.layers[l].weight.cols(), 5u);
            EXPECT_LT(net.condition_numbers[l], 100.0);
            EXPECT_NEAR(condition_number(net.layers[l].weight), net.condition_numbers[l], 1e-9);
        }
    }
}

TEST(Mix, ConditionCapForcesRedraws) {
    const auto net = make_mixing(6, 4, 11, 3.0);
    EXPECT_GT(net.redraws, 0u);
    for (double c : net.condition_numbers) EXPECT_LT(c, 3.0);
}

TEST(Mix, OriginMapsToOrigin) {
    const auto net = make_mixing(5, 3, 12);
    const auto y = mix(net, std::vector<double>(5, 0.0));
    for (double v : y) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Mix, FixedSeedIsBitIdentical) {
    const auto a = make_mixing(5, 3, 99), b = make_mixing(5, 3, 99), c = make_mixing(5, 3, 100);
    for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_EQ(max_abs_diff(a.layers[l].weight, b.layers[l].weight), 0.0);
        EXPECT_EQ(max_abs_diff(a.layers[l].bias, b.layers[l].bias), 0.0);
    }
    EXPECT_GT(max_abs_diff(a.layers[0].weight, c.layers[0].weight), 0.0);
}

TEST(Mix, InjectivityScan) {
    const std::size_t n = 10000, d = 5;
    const auto net = make_mixing(d, 3, 13);
    Rng rng(14);
    Matrix z(n, d);
    for (auto& v : z.values()) v = rng.uniform(-1.0, 1.0);
    const Matrix x = mix(net, z);
    // Sort by the first output coordinate and scan neighbours in a window;
    // pairs with close inputs must have distinct outputs.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, 0) < x(b, 0); });
    double min_out = INFINITY;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < std::min(n, a + 50); ++b) {
            const auto i = order[a], j = order[b];
            if (std::sqrt(sq_distance(z.row(i), z.row(j))) <= 1e-3) continue;
            min_out = std::min(min_out, std::sqrt(sq_distance(x.row(i), x.row(j))));
        }
    EXPECT_GT(min_out, 0.0);

    // Each layer is a diffeomorphism, so the Jacobian determinant never vanishes.
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(d);
        for (auto& v : p) v = rng.uniform(-1.0, 1.0);
        Matrix jac(d, d);
        const double eps = 1e-6;
        for (std::size_t j = 0; j < d; ++j) {
            auto hi = p, lo = p;
            hi[j] += eps;
            lo[j] -= eps;
            auto a = mix(net, hi), b = mix(net, lo);
            for (std::size_t i = 0; i < d; ++i) jac(i, j) = (a[i] - b[i]) / (2 * eps);
        }
        EXPECT_LT(condition_number(jac), 1e6);
    }
}

TEST(Mix, DimensionMismatchThrows) {
    const auto net = make_mixing(3, 2, 1);
    EXPECT_THROW(mix(net, Matrix(2, 4)), Error);
}

TEST(LeakySoftplus, SlopeBounds) {
    for (double x : {-20.0, -1.0, 0.0, 0.5, 3.0, 40.0}) {
        const double h = 1e-6;
        const double g = (leaky_softplus(x + h, 0.2) - leaky_softplus(x - h, 0.2)) / (2 * h);
        EXPECT_GT(g, 0.2 - 1e-6);
        EXPECT_LT(g, 1.0 + 1e-6);
    }
}

TEST(SampleLatentBatch, DeterministicGivenSeed) {
    GenerativeSpec spec;
    Rng a(21), b(21);
    auto x = sample_latent_batch(spec, 16, a), y = sample_latent_batch(spec, 16, b);
    EXPECT_EQ(max_abs_diff(x.z1, y.z1), 0.0);
    EXPECT_EQ(max_abs_diff(x.z2, y.z2), 0.0);
}
