#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "miner/config.hpp"

using namespace miner;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
    const auto dir = fs::temp_directory_path() / "miner_test_config";
    fs::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

ConfigError expect_config_error(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "expected a ConfigError";
    return ConfigError("", 0, "", "");
}

}  // namespace

TEST(Fixtures, TableTwoRows) {
    const auto runs = load_fixture(std::string(MINER_FIXTURE_DIR) + "/table2.toml");
    ASSERT_EQ(runs.size(), 12u);
    std::set<std::string> names;
    for (const auto& r : runs) {
        names.insert(r.name);
        EXPECT_TRUE(r.er);
        EXPECT_EQ(r.method, Method::simclr);
        EXPECT_EQ(r.out_dim(), r.data.dim);
        EXPECT_EQ(r.data.conditional.support, r.data.space);
        EXPECT_EQ(r.bandwidth, 1.0);
    }
    EXPECT_EQ(names.size(), 12u);
    EXPECT_EQ(runs[0].data.space, Support::sphere);
    EXPECT_EQ(runs[0].data.conditional.family, Family::vmf);
    EXPECT_EQ(runs[0].data.conditional.scale, 1.0);
    EXPECT_EQ(runs[1].data.conditional.scale, 10.0);
    EXPECT_EQ(runs[6].model.family, Family::gennorm);
    EXPECT_EQ(runs[6].model.beta, 3.0);
    EXPECT_EQ(runs[8].data.marginal, Marginal::normal);
    EXPECT_EQ(runs[10].data.space, Support::unbounded);
    EXPECT_EQ(runs[10].data.marginal, Marginal::laplace);
}

TEST(Fixtures, TableThreeRows) {
    const auto runs = load_fixture(std::string(MINER_FIXTURE_DIR) + "/table3.toml");
    ASSERT_EQ(runs.size(), 10u);
    for (const auto& r : runs) {
        EXPECT_EQ(r.data.space, Support::box);
        EXPECT_EQ(r.data.marginal, Marginal::uniform);
        EXPECT_EQ(r.bandwidth, 0.1);
    }
    EXPECT_EQ(runs[0].model.space, Support::box);
    EXPECT_EQ(runs[0].model.family, Family::laplace);
    EXPECT_EQ(runs[0].data.conditional.family, Family::laplace);
    EXPECT_EQ(runs[0].data.conditional.scale, 0.05);
    EXPECT_EQ(runs[9].model.space, Support::unbounded);
}

TEST(Fixtures, OverridesApplyToEveryRun) {
    const auto runs = load_fixture(std::string(MINER_FIXTURE_DIR) + "/table3.toml", {"seed=7", "steps=10"});
    for (const auto& r : runs) {
        EXPECT_EQ(r.seed, 7u);
        EXPECT_EQ(r.steps, 10u);
    }
}

TEST(RunConfigFile, DefaultsFollowMethod) {
    const auto p = write_temp("dino.toml", "method = \"dino\"\ner = true\n");
    const auto c = load_run_config(p.string());
    EXPECT_TRUE(c.is_discrete);
    EXPECT_TRUE(c.is_distillation);
    EXPECT_TRUE(c.er);
}

TEST(RunConfigFile, DottedOverrides) {
    const auto p = write_temp("plain.toml", "method = \"simclr\"\n[model]\nhidden = 8\n");
    const auto c = load_run_config(p.string(), {"model.hidden=128", "data.conditional.scale=10", "name=custom",
                                                "lr=3e-4", "er=true", "data.marginal=uniform"});
    EXPECT_EQ(c.model.hidden, 128u);
    EXPECT_EQ(c.data.conditional.scale, 10.0);
    EXPECT_EQ(c.name, "custom");
    EXPECT_EQ(c.lr, 3e-4);
    EXPECT_TRUE(c.er);
}

TEST(RunConfigFile, UnknownKeyNamesFieldAndLine) {
    const auto p = write_temp("typo.toml", "method = \"simclr\"\n\n[model]\nhiden = 8\n");
    const auto e = expect_config_error([&] { load_run_config(p.string()); });
    EXPECT_EQ(e.field, "model.hiden");
    EXPECT_EQ(e.line, 4u);
    EXPECT_NE(std::string(e.what()).find(":4"), std::string::npos) << e.what();
}

TEST(RunConfigFile, UnknownOverrideKeyIsRejected) {
    const auto p = write_temp("ok.toml", "method = \"simclr\"\n");
    const auto e = expect_config_error([&] { load_run_config(p.string(), {"model.depth=3"}); });
    EXPECT_EQ(e.field, "model.depth");
}

TEST(RunConfigFile, WrongTypeNamesField) {
    const auto p = write_temp("type.toml", "method = \"simclr\"\nsteps = \"many\"\n");
    const auto e = expect_config_error([&] { load_run_config(p.string()); });
    EXPECT_EQ(e.field, "steps");
    EXPECT_EQ(e.line, 2u);
    const auto q = write_temp("neg.toml", "batch = -4\n");
    EXPECT_EQ(expect_config_error([&] { load_run_config(q.string()); }).field, "batch");
}

TEST(RunConfigFile, BadEnumNamesField) {
    const auto p = write_temp("enum.toml", "method = \"moco\"\n");
    EXPECT_EQ(expect_config_error([&] { load_run_config(p.string()); }).field, "method");
    const auto q = write_temp("enum2.toml", "[data]\nspace = \"torus\"\n");
    const auto e = expect_config_error([&] { load_run_config(q.string()); });
    EXPECT_EQ(e.field, "data.space");
    EXPECT_EQ(e.line, 2u);
}

TEST(RunConfigFile, SyntaxErrorReportsLine) {
    const auto p = write_temp("syntax.toml", "method = \"simclr\"\nsteps = = 3\n");
    const auto e = expect_config_error([&] { load_run_config(p.string()); });
    EXPECT_EQ(e.line, 2u);
}

TEST(RunConfigFile, InvalidCombinationIsConfigError) {
    const auto p = write_temp("combo.toml", "method = \"simclr\"\nis_discrete = true\n");
    expect_config_error([&] { load_run_config(p.string()); });
    const auto q = write_temp("combo2.toml", "method = \"swav\"\nis_distillation = true\n");
    expect_config_error([&] { load_run_config(q.string()); });
}

TEST(RunConfigFile, MissingFile) {
    expect_config_error([] { load_run_config("/nonexistent/miner.toml"); });
}

TEST(RunConfigFile, FixtureIsNotASingleConfig) {
    expect_config_error([] { load_run_config(std::string(MINER_FIXTURE_DIR) + "/table2.toml"); });
    const auto p = write_temp("single.toml", "method = \"simclr\"\n");
    expect_config_error([&] { load_fixture(p.string()); });
}

TEST(ApplyOverride, Forms) {
    toml::table t;
    apply_override(t, "a.b.c=1");
    apply_override(t, "flag=true");
    apply_override(t, "word=hello");
    apply_override(t, "quoted=\"x y\"");
    EXPECT_EQ(t.at_path("a.b.c").value<std::int64_t>(), 1);
    EXPECT_EQ(t.at_path("flag").value<bool>(), true);
    EXPECT_EQ(t.at_path("word").value<std::string>(), "hello");
    EXPECT_EQ(t.at_path("quoted").value<std::string>(), "x y");
    EXPECT_THROW(apply_override(t, "novalue"), ConfigError);
    EXPECT_THROW(apply_override(t, "flag.x=1"), ConfigError);
    EXPECT_THROW(apply_override(t, "a..b=1"), ConfigError);
}
