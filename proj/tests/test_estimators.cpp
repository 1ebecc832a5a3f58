#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "miner/estimators.hpp"

using namespace miner;

namespace {

ProjectionBatch sphere_batch(std::size_t k, std::size_t d, Rng& rng) {
    ProjectionBatch b{Matrix(k, d), Support::sphere};
    for (std::size_t i = 0; i < k; ++i) {
        auto r = b.values.row(i);
        for (auto& v : r) v = rng.normal();
        const double n = norm2(r);
        for (auto& v : r) v /= n;
    }
    return b;
}

ProjectionBatch normal_batch(std::size_t k, std::size_t d, Rng& rng, double s = 1.0) {
    ProjectionBatch b{Matrix(k, d), Support::unbounded};
    for (auto& v : b.values.values()) v = s * rng.normal();
    return b;
}

// Independent Gaussian-kernel Joe estimator written from the textbook formula.
double joe_oracle(const Matrix& z, double h) {
    const std::size_t k = z.rows(), d = z.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double p = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) sq += std::pow((z(i, c) - z(j, c)) / h, 2);
            p += std::exp(-0.5 * sq) / std::pow(2 * std::numbers::pi, d / 2.0);
        }
        acc += std::log(p / (k * std::pow(h, d)));
    }
    return -acc / k;
}

}  // namespace

TEST(ReconstructionCont, Examples) {
    Rng rng(1);
    auto z = sphere_batch(6, 3, rng);
    auto f = Similarity::cosine(0.1);
    EXPECT_NEAR(reconstruction_cont(z, z, f), 10.0, 1e-12);

    ProjectionBatch a{Matrix{{1, 0}, {0, 1}}, Support::sphere};
    ProjectionBatch b{Matrix{{0, 1}, {1, 0}}, Support::sphere};
    EXPECT_NEAR(reconstruction_cont(a, b, f), 0.0, 1e-12);

    ProjectionBatch c{Matrix{{1, 0}, {0.5, std::sqrt(0.75)}}, Support::sphere};
    ProjectionBatch e{Matrix{{1, 0}, {1, 0}}, Support::sphere};
    EXPECT_NEAR(reconstruction_cont(c, e, f), 7.5, 1e-12);

    EXPECT_THROW(reconstruction_cont(ProjectionBatch{Matrix(0, 2)}, ProjectionBatch{Matrix(0, 2)}, f), Error);
}

TEST(ReconstructionDisc, Examples) {
    Matrix uni(3, 4, 0.25);
    std::vector<std::size_t> labels{0, 3, 2};
    EXPECT_NEAR(reconstruction_disc(uni, labels), std::log(0.25), 1e-15);

    Matrix onehot{{0, 1}, {1, 0}};
    std::vector<std::size_t> l2{1, 0};
    EXPECT_EQ(reconstruction_disc(onehot, l2), 0.0);

    Matrix q{{0.5, 0.5}, {0.75, 0.25}};
    std::vector<std::size_t> l3{0, 1};
    EXPECT_NEAR(reconstruction_disc(q, l3), (std::log(0.5) + std::log(0.25)) / 2, 1e-15);

    std::vector<std::size_t> bad{0, 0};
    EXPECT_THROW(reconstruction_disc(onehot, bad), Error);
}

TEST(Kde, DensityExamples) {
    for (std::size_t d : {1u, 3u}) {
        const double h = 0.4;
        ProjectionBatch s{Matrix(1, d, 0.2)};
        std::vector<double> z(d, 0.2);
        EXPECT_NEAR(kde_density_at(z, s, KernelSpec{Family::gaussian, h, d}),
                    std::pow(2 * std::numbers::pi, -0.5 * d) * std::pow(h, -double(d)), 1e-12);
    }
    ProjectionBatch one{Matrix{{0.0}}};
    EXPECT_NEAR(kde_density_at(std::vector<double>{0.0}, one, KernelSpec{Family::gaussian, 1.0, 1}), 0.3989422804014327,
                1e-15);

    ProjectionBatch two{Matrix{{-0.3}, {0.3}}};
    ProjectionBatch single{Matrix{{0.3}}};
    KernelSpec k{Family::gaussian, 0.5, 1};
    EXPECT_NEAR(kde_density_at(std::vector<double>{0.0}, two, k), kde_density_at(std::vector<double>{0.0}, single, k),
                1e-15);
    EXPECT_THROW(kde_density_at(std::vector<double>{0.0}, two, KernelSpec{Family::gaussian, 0.0, 1}), Error);
}

TEST(EntropyJoe, MatchesBruteForceOracle) {
    Rng rng(2);
    auto z = normal_batch(50, 2, rng);
    EXPECT_NEAR(entropy_joe(z, KernelSpec{Family::gaussian, 0.6, 2}), joe_oracle(z.values, 0.6), 1e-12);
}

TEST(EntropyJoe, CollapseCase) {
    ProjectionBatch z{Matrix(16, 1, 0.7)};
    EXPECT_NEAR(entropy_joe(z, KernelSpec{Family::gaussian, 1.0, 1}), 0.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(EntropyJoe, StandardNormalWithinTolerance) {
    Rng rng(3);
    const std::size_t k = 8192;
    auto z = normal_batch(k, 1, rng);
    const double h = std::pow(double(k), -1.0 / 5.0);
    EXPECT_NEAR(entropy_joe(z, KernelSpec{Family::gaussian, h, 1}), 0.5 * std::log(2 * std::numbers::pi * std::numbers::e),
                0.15);
}

TEST(EntropyJoe, ChangeOfVariables) {
    Rng rng(4);
    auto z = normal_batch(40, 3, rng);
    const double c = 2.5;
    ProjectionBatch zc{z.values * c};
    for (auto fam : {Family::gaussian, Family::laplace, Family::gennorm}) {
        const double base = entropy_joe(z, KernelSpec{fam, 0.8, 3, 3.0});
        const double scaled = entropy_joe(zc, KernelSpec{fam, 0.8 * c, 3, 3.0});
        EXPECT_NEAR(scaled - base, 3 * std::log(c), 1e-12);
    }
}

TEST(EntropyPluginKde, VerbatimFormOnCollapsedSamples) {
    const std::size_t k = 10;
    ProjectionBatch z{Matrix(k, 2, 0.1)};
    KernelSpec spec{Family::gaussian, 0.5, 2};
    const double c = 1.0 / (2 * std::numbers::pi) / 0.25;
    EXPECT_NEAR(entropy_plugin_kde(z, spec), -double(k) * c * std::log(c), 1e-12);
    EXPECT_NEAR(entropy_plugin_kde(z, spec, true), -c * std::log(c), 1e-12);
}

TEST(EntropyPluginKde, PermutationInvariant) {
    Rng rng(5);
    auto z = normal_batch(12, 2, rng);
    ProjectionBatch p{Matrix(12, 2)};
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t c = 0; c < 2; ++c) p.values(i, c) = z.values(11 - i, c);
    KernelSpec spec{Family::gaussian, 0.5, 2};
    EXPECT_NEAR(entropy_plugin_kde(z, spec), entropy_plugin_kde(p, spec), 1e-12);
}

namespace {

double gradient_cosine(const ProjectionBatch& z, const KernelSpec& spec) {
    auto grad_of = [&](bool joe) {
        ad::Tape t;
        auto v = t.parameter(z.values);
        auto h = joe ? ad::entropy_joe(v, spec) : ad::entropy_plugin_kde(v, spec, true);
        t.backward(h);
        return t.grad(v);
    };
    Matrix a = grad_of(true), b = grad_of(false);
    return dot(a.values(), b.values()) / (norm2(a.values()) * norm2(b.values()));
}

double min_density(const ProjectionBatch& z, const KernelSpec& spec) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < z.values.rows(); ++i) m = std::min(m, kde_density_at(z.values.row(i), z, spec));
    return m;
}

}  // namespace

// d(-p log p)/dp and d(-log p)/dp share a sign only where p > 1/e.
TEST(EntropyPluginKde, GradientDirectionAgreesWithJoe) {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        auto z = sphere_batch(32, 4, rng);
        KernelSpec spec{Family::vmf, 0.01, 4};
        ASSERT_GT(min_density(z, spec), std::exp(-1.0));
        EXPECT_GT(gradient_cosine(z, spec), 0.9);
    }
}

TEST(EntropyPluginKde, GradientOpposesJoeAtLowDensity) {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        auto z = sphere_batch(32, 4, rng);
        KernelSpec spec{Family::vmf, 0.5, 4};
        ASSERT_LT(min_density(z, spec), std::exp(-1.0));
        EXPECT_LT(gradient_cosine(z, spec), -0.9);
    }
}

TEST(EntropyPluginDisc, Examples) {
    DiscretePosterior uni{Matrix(20, 10, 0.1)};
    for (std::size_t r : {1u, 2u, 4u, 5u}) EXPECT_NEAR(entropy_plugin_disc(uni, r), std::log(10.0), 1e-12);

    DiscretePosterior collapsed{Matrix(8, 3)};
    for (std::size_t i = 0; i < 8; ++i) collapsed.values(i, 1) = 1.0;
    EXPECT_EQ(entropy_plugin_disc(collapsed), 0.0);

    DiscretePosterior two{Matrix{{1, 0}, {0, 1}}};
    EXPECT_NEAR(entropy_plugin_disc(two), std::log(2.0), 1e-15);

    EXPECT_THROW(entropy_plugin_disc(uni, 3), Error);
}

TEST(EntropyPluginDisc, ExactOnFixedPmf) {
    std::vector<double> p{0.1, 0.2, 0.3, 0.4};
    DiscretePosterior rows{Matrix(6, 4)};
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) rows.values(i, j) = p[j];
    double h = 0.0;
    for (double v : p) h -= v * std::log(v);
    EXPECT_NEAR(entropy_plugin_disc(rows), h, 1e-14);
}

TEST(ErBound, Assembly) {
    EXPECT_DOUBLE_EQ(er_bound(2.0, -0.5, 1.0).total(), 1.5);
    EXPECT_DOUBLE_EQ(er_bound(2.0, -0.5, 0.0).total(), 2.0);
    for (double lam : {0.0, 0.5, 1.0, 3.0})
        EXPECT_NEAR(er_bound(1.3, -0.7, lam).total() - er_bound(1.3, -0.7, 0.0).total(), -0.7 * lam, 1e-15);
    EXPECT_THROW(er_bound(1.0, 1.0, -1.0), Error);
}

TEST(InfoNce, Examples) {
    Rng rng(7);
    ProjectionBatch same{Matrix(5, 3, 0.2)};
    EXPECT_NEAR(infonce(same, same, Similarity::from_density(ReconstructionDensity::gaussian(1.0))), 0.0, 1e-14);

    auto one = sphere_batch(1, 3, rng);
    auto two = sphere_batch(1, 3, rng);
    EXPECT_NEAR(infonce(one, two, Similarity::cosine(0.1)), 0.0, 1e-14);

    // f(pos) = 1, f(cross) = 0 via a vMF similarity with κ = 1 on orthonormal rows.
    ProjectionBatch a{Matrix{{1, 0}, {0, 1}}, Support::sphere};
    const double s = 1.0;
    const double expected = std::log(std::exp(s) / ((std::exp(s) + 1.0) / 2.0));
    EXPECT_NEAR(infonce(a, a, Similarity::from_density(ReconstructionDensity::vmf(1.0))), expected, 1e-14);
    EXPECT_NEAR(expected, 0.3799, 1e-4);
}

TEST(InfoNce, BoundedByLogK) {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        const std::size_t k = 2 + t % 10;
        auto a = sphere_batch(k, 3, rng);
        EXPECT_LE(infonce(a, a, Similarity::cosine(0.05)), std::log(double(k)) + 1e-12);
        auto b = sphere_batch(k, 3, rng);
        EXPECT_LE(infonce(a, b, Similarity::cosine(0.05)), std::log(double(k)) + 1e-12);
    }
}

TEST(Contrastive, CmcSingletonIsZero) {
    Rng rng(9);
    auto a = sphere_batch(1, 3, rng), b = sphere_batch(1, 3, rng);
    EXPECT_NEAR(contrastive_loss(a, b, Similarity::cosine(0.1), NegativeSet::cmc), 0.0, 1e-14);
}

TEST(Contrastive, CmcMatchesInfoNce) {
    Rng rng(10);
    for (int t = 0; t < 20; ++t) {
        auto a = sphere_batch(16, 4, rng), b = sphere_batch(16, 4, rng);
        auto f = Similarity::cosine(0.2);
        const double branch = contrastive_branch(a, b, f, NegativeSet::cmc);
        EXPECT_NEAR(-branch + std::log(16.0), infonce(a, b, f), 1e-9);
        const double sym = contrastive_loss(a, b, f, NegativeSet::cmc);
        EXPECT_NEAR(-sym + std::log(16.0), 0.5 * (infonce(a, b, f) + infonce(b, a, f)), 1e-9);
    }
}

TEST(Contrastive, SelfInclusiveEqualsErWithKernelSimilarity) {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const std::size_t k = 24, d = 3;
        const double h = 0.3 + 0.1 * t;
        auto z1 = normal_batch(k, d, rng), z2 = normal_batch(k, d, rng);
        KernelSpec spec{Family::gaussian, h, d};
        auto f = Similarity::from_kernel(spec);
        const double lhs = entropy_joe(z2, spec) + reconstruction_cont(z1, z2, f);
        const double loss = contrastive_branch(z2, z1, f, NegativeSet::self_inclusive);
        EXPECT_NEAR(lhs, -loss + std::log(double(k) * std::pow(h, double(d))), 1e-9);
    }
}

TEST(Contrastive, NegativeSetModes) {
    Rng rng(12);
    auto a = sphere_batch(6, 3, rng), b = sphere_batch(6, 3, rng);
    auto f = Similarity::cosine(0.5);
    // Brute-force SimCLR branch loss: S(a_i) = a_{≠i} ∪ b.
    double brute = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        double den = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            if (j != i) den += std::exp(f(a.values.row(i), a.values.row(j)));
            den += std::exp(f(a.values.row(i), b.values.row(j)));
        }
        brute -= f(a.values.row(i), b.values.row(i)) - std::log(den);
    }
    EXPECT_NEAR(contrastive_branch(a, b, f, NegativeSet::simclr), brute / 6, 1e-12);

    Matrix bank = sphere_batch(9, 3, rng).values;
    double bb = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        double den = 0.0;
        for (std::size_t j = 0; j < 9; ++j) den += std::exp(f(a.values.row(i), bank.row(j)));
        bb -= f(a.values.row(i), b.values.row(i)) - std::log(den);
    }
    EXPECT_NEAR(contrastive_branch(a, b, f, NegativeSet::memory_bank, &bank), bb / 6, 1e-12);
    EXPECT_THROW(contrastive_branch(a, b, f, NegativeSet::memory_bank, nullptr), Error);

    auto s1 = sphere_batch(1, 3, rng);
    EXPECT_THROW(contrastive_branch(s1, s1, f, NegativeSet::self_excluding), Error);
}

TEST(Estimators, PermutationInvariance) {
    Rng rng(13);
    auto a = sphere_batch(10, 3, rng), b = sphere_batch(10, 3, rng);
    ProjectionBatch pa{Matrix(10, 3), Support::sphere}, pb{Matrix(10, 3), Support::sphere};
    const std::size_t perm[10] = {3, 7, 1, 0, 9, 2, 8, 5, 4, 6};
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            pa.values(i, c) = a.values(perm[i], c);
            pb.values(i, c) = b.values(perm[i], c);
        }
    auto f = Similarity::cosine(0.1);
    KernelSpec spec{Family::vmf, 0.1, 3};
    EXPECT_NEAR(infonce(a, b, f), infonce(pa, pb, f), 1e-12);
    EXPECT_NEAR(reconstruction_cont(a, b, f), reconstruction_cont(pa, pb, f), 1e-12);
    EXPECT_NEAR(entropy_joe(a, spec), entropy_joe(pa, spec), 1e-12);
    for (auto mode : {NegativeSet::cmc, NegativeSet::simclr, NegativeSet::self_inclusive, NegativeSet::self_excluding})
        EXPECT_NEAR(contrastive_loss(a, b, f, mode), contrastive_loss(pa, pb, f, mode), 1e-12);
}
