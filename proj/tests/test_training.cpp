#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "miner/artifacts.hpp"
#include "miner/training.hpp"

using namespace miner;

namespace {

RunConfig small(Method m, bool er, std::size_t steps = 8) {
    RunConfig c = RunConfig::for_method(m, er);
    c.batch = 32;
    c.steps = steps;
    c.log_every = 1;
    c.eval_every = 4;
    c.eval_pairs = 128;
    c.lr = 1e-3;
    c.seed = 11;
    c.prototypes = 4;
    c.model.hidden = 16;
    return c;
}

std::string csv(const MetricsLog& log) {
    std::ostringstream out;
    write_metrics_csv(out, log);
    return out.str();
}

const Method kAll[] = {Method::simclr, Method::cmc, Method::byol, Method::dino, Method::swav, Method::deepcluster};

}  // namespace

TEST(RunMvssl, ZeroStepsReturnsInitialState) {
    for (Method m : kAll) {
        auto c = small(m, true, 0);
        const auto r = run_mvssl(c);
        EXPECT_EQ(r.state.hash(), r.init_hash) << to_string(m);
        EXPECT_EQ(r.state.hash(), init_state(c).hash());
        EXPECT_TRUE(r.log.rows.empty());
        EXPECT_EQ(r.state.iter, 0u);
    }
}

TEST(RunMvssl, DeterministicForEveryMethod) {
    for (Method m : kAll)
        for (bool er : {false, true}) {
            const auto c = small(m, er);
            const auto a = run_mvssl(c), b = run_mvssl(c);
            EXPECT_EQ(csv(a.log), csv(b.log)) << to_string(m) << (er ? "+er" : "");
            EXPECT_EQ(a.state.hash(), b.state.hash());
            EXPECT_NE(a.state.hash(), a.init_hash);
        }
}

TEST(RunMvssl, SeedChangesTheRun) {
    auto c = small(Method::simclr, true);
    const auto a = run_mvssl(c);
    c.seed = 12;
    EXPECT_NE(run_mvssl(c).state.hash(), a.state.hash());
}

TEST(RunMvssl, LogCadence) {
    auto c = small(Method::simclr, false, 23);
    c.log_every = 5;
    c.eval_every = 10;
    const auto r = run_mvssl(c);
    std::vector<std::size_t> steps;
    for (const auto& row : r.log.rows) steps.push_back(row.step);
    EXPECT_EQ(steps, (std::vector<std::size_t>{0, 5, 10, 15, 20, 22}));
    for (const auto& row : r.log.rows) {
        const bool eval = row.step % 10 == 0 || row.step == 22;
        EXPECT_EQ(std::isnan(row.r2), !eval) << row.step;
        EXPECT_EQ(std::isnan(row.mcc), !eval) << row.step;
        EXPECT_TRUE(std::isnan(row.wall_ms));
        EXPECT_TRUE(std::isfinite(row.loss));
    }
}

TEST(RunMvssl, TimingFillsWallColumn) {
    auto c = small(Method::simclr, false, 3);
    c.timing = true;
    for (const auto& row : run_mvssl(c).log.rows) EXPECT_GE(row.wall_ms, 0.0);
}

TEST(RunMvssl, ErLossIsMinusLoggedErValue) {
    for (Method m : kAll) {
        for (double w : {1.0, 0.5}) {
            auto c = small(m, true);
            c.rec_weight = w;
            for (const auto& row : run_mvssl(c).log.rows)
                EXPECT_NEAR(row.loss, -(row.entropy + w * row.reconstruction), 1e-9) << to_string(m);
        }
    }
}

TEST(RunMvssl, StudentOnlyHalf) {
    auto c = small(Method::simclr, true, 1);
    c.teacher_half = false;
    auto state = init_state(c);
    Rng data(5), algo(6);
    const auto mixing = make_run_mixing(c);
    const auto b = sample_latent_batch(c.data, c.batch, data);
    const Matrix x1 = mix(mixing, b.z1), x2 = mix(mixing, b.z2);
    const ProjectionBatch z1{encode(state, x1), Support::sphere}, z2{encode(state, x2), Support::sphere};
    const double h = entropy_joe(z1, c.kernel());
    const double rec = reconstruction_cont(z1, z2, c.reconstruction_similarity());
    const auto t = train_step(c, state, x1, x2, algo);
    EXPECT_NEAR(t.entropy, h, 1e-10);
    EXPECT_NEAR(t.reconstruction, rec, 1e-10);
    EXPECT_NEAR(t.loss_value, -(h + rec), 1e-10);
}

TEST(RunMvssl, TeacherIsExactEmaOfStudents) {
    for (Method m : {Method::byol, Method::dino}) {
        for (bool er : {false, true}) {
            auto c = small(m, er, 12);
            c.is_distillation = true;
            c.ema = 0.9;
            MlpParams teacher = init_state(c).teacher.value();
            std::vector<MlpParams> students;
            const auto r = run_mvssl(c, {[&](const TrainState& s) { students.push_back(s.student); }});
            ASSERT_EQ(students.size(), c.steps);
            for (const auto& st : students) ema_update(teacher, st, c.ema);
            const auto a = teacher.tensors();
            const auto b = r.state.teacher->tensors();
            double worst = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_abs_diff(*a[i], *b[i]));
            EXPECT_LE(worst, 1e-10) << to_string(m);
            EXPECT_EQ(r.state.teacher_grad_max, 0.0) << to_string(m);
        }
    }
}

TEST(RunMvssl, NoTeacherWithoutDistillation) {
    auto c = small(Method::dino, true);
    c.is_distillation = false;
    const auto s = init_state(c);
    EXPECT_FALSE(s.teacher.has_value());
    EXPECT_TRUE(s.center.has_value());
    auto sw = small(Method::swav, false);
    EXPECT_TRUE(init_state(sw).prototypes.has_value());
    EXPECT_FALSE(init_state(small(Method::simclr, false)).prototypes.has_value());
}

TEST(RunMvssl, SwavPrototypesStayOnSphere) {
    const auto r = run_mvssl(small(Method::swav, true));
    const Matrix& p = r.state.prototypes->prototypes;
    for (std::size_t i = 0; i < p.rows(); ++i) EXPECT_NEAR(norm2(p.row(i)), 1.0, 1e-12);
}

TEST(RunMvssl, DinoCenterTracksTeacherOutputs) {
    auto c = small(Method::dino, false, 5);
    const auto r = run_mvssl(c);
    double mag = 0.0;
    for (double v : r.state.center->center.values()) mag += std::abs(v);
    EXPECT_GT(mag, 0.0);
    c.centering = false;
    const auto off = run_mvssl(c);
    for (double v : off.state.center->center.values()) EXPECT_EQ(v, 0.0);
}

TEST(RunMvssl, DiscreteRunsLogNormalizedEntropy) {
    for (Method m : {Method::dino, Method::swav, Method::deepcluster})
        for (const auto& row : run_mvssl(small(m, true)).log.rows) {
            EXPECT_GE(row.norm_entropy, 0.0) << to_string(m);
            EXPECT_LE(row.norm_entropy, 1.0 + 1e-12) << to_string(m);
        }
    for (const auto& row : run_mvssl(small(Method::simclr, true)).log.rows) EXPECT_TRUE(std::isnan(row.norm_entropy));
}

TEST(RunMvssl, AbortsOnNonFiniteLoss) {
    auto c = small(Method::simclr, false, 50);
    c.lr = 1e300;
    c.model.space = Support::unbounded;
    c.model.family = Family::gaussian;
    try {
        run_mvssl(c);
        FAIL() << "expected the run to abort";
    } catch (const RunAborted& e) {
        EXPECT_GT(e.step, 0u);
        EXPECT_LT(e.step, 50u);
        EXPECT_NE(std::string(e.what()).find("step " + std::to_string(e.step)), std::string::npos);
        for (const auto& row : e.log.rows) EXPECT_LT(row.step, e.step);
    }
}

TEST(RunMvssl, InvalidFlagCombinationsThrow) {
    auto bad_discrete = small(Method::simclr, true);
    bad_discrete.is_discrete = true;
    EXPECT_THROW(run_mvssl(bad_discrete), Error);
    auto bad_distill = small(Method::swav, true);
    bad_distill.is_distillation = true;
    EXPECT_THROW(run_mvssl(bad_distill), Error);
    auto byol_native = small(Method::byol, false);
    byol_native.is_distillation = false;
    EXPECT_THROW(run_mvssl(byol_native), Error);
    auto vmf_box = small(Method::simclr, true);
    vmf_box.model.space = Support::box;
    EXPECT_THROW(run_mvssl(vmf_box), Error);
    auto odd_replicas = small(Method::dino, true);
    odd_replicas.replicas = 3;
    EXPECT_THROW(run_mvssl(odd_replicas), Error);
}

TEST(RunMvssl, PluginEstimatorOption) {
    auto c = small(Method::simclr, true);
    c.is_joe = false;
    const auto r = run_mvssl(c);
    EXPECT_TRUE(std::isfinite(r.log.rows.back().loss));
}

TEST(RunMvssl, ErMaintainsEntropyOnSphere) {
    RunConfig c = RunConfig::for_method(Method::simclr, true);
    c.steps = 2000;
    c.log_every = 100;
    c.eval_every = 1000;
    c.seed = 1;
    const auto r = run_mvssl(c);
    EXPECT_GE(r.log.rows.back().entropy, r.log.rows.front().entropy - 0.1);
}

TEST(Identifiability, UntrainedEncoderScoresWellBelowTrained) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        RunConfig c = RunConfig::for_method(Method::simclr, true);
        c.steps = 0;
        c.seed = seed;
        const auto s = run_identifiability_experiment(c, 4096);
        EXPECT_LT(s.r2, 65.0) << seed;
        total += s.r2;
    }
    EXPECT_LT(total / 4.0, 60.0);
}

TEST(Identifiability, AffineEncoderOfIdentityMixingScoresFull) {
    RunConfig c = RunConfig::for_method(Method::simclr, true);
    c.data.mixing_layers = 0;
    c.model.space = Support::unbounded;
    c.model.family = Family::gaussian;
    c.model.layers = 1;
    c.eval_pairs = 2000;
    const auto state = init_state(c);
    const auto eval = make_eval_set(c, make_run_mixing(c));
    const auto report = evaluate(c, state, eval);
    EXPECT_NEAR(report.r2, 100.0, 1e-6);
}

TEST(Identifiability, RequiresMatchingDimensions) {
    RunConfig c = RunConfig::for_method(Method::simclr, true);
    c.model.out_dim = 3;
    EXPECT_THROW(run_identifiability_experiment(c, 1000), Error);
}

TEST(RunMvssl, TeacherTemperatureSchedule) {
    RunConfig c = RunConfig::for_method(Method::dino, false);
    EXPECT_EQ(c.teacher_temperature(0), 0.04);
    EXPECT_EQ(c.teacher_temperature(100000), 0.04);
    c.tau_teacher_final = 0.07;
    c.tau_teacher_warmup = 100;
    EXPECT_EQ(c.teacher_temperature(0), 0.04);
    EXPECT_NEAR(c.teacher_temperature(50), 0.055, 1e-15);
    EXPECT_EQ(c.teacher_temperature(100), 0.07);
    EXPECT_EQ(c.teacher_temperature(5000), 0.07);
}

TEST(RunMvssl, DinoCenteringKeepsTargetEntropy) {
    RunConfig c = RunConfig::for_method(Method::dino, false);
    c.steps = 500;
    c.log_every = 25;
    c.eval_every = 500;
    c.seed = 1;
    double sum = 0.0;
    const auto on = run_mvssl(c);
    for (const auto& row : on.log.rows) sum += row.norm_entropy;
    EXPECT_GE(sum / static_cast<double>(on.log.rows.size()), 0.5);
    c.centering = false;
    EXPECT_LT(run_mvssl(c).log.rows.back().norm_entropy, 0.1);
}
