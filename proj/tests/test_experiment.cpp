#include <cmath>
#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

#include "rbfkan/experiment.hpp"

using namespace rbfkan;

namespace
{

std::filesystem::path temp_dir(const std::string &name)
{
    auto p = std::filesystem::temp_directory_path() / ("rbfkan_exp_" + name);
    std::filesystem::remove_all(p);
    return p;
}

/// A configuration small enough to train in well under a second.
ExperimentConfig quick_config(const std::filesystem::path &dir)
{
    ExperimentConfig c;
    c.samples = 200;
    c.seed = 3;
    c.train.epochs = 40;
    c.train.eval_every = 20;
    c.grid_resolution = 10;
    c.loocv.n_coarse = 10;
    c.loocv.n_fine = 5;
    c.output_dir = dir.string();
    return c;
}

} // namespace

TEST(ExperimentConfig, DefaultsAndNames)
{
    const ExperimentConfig c;
    EXPECT_EQ(c.effective_widths(), (std::vector<std::size_t>{2, 8, 1}));
    EXPECT_EQ(c.run_name(), "f1_rbf_kan_GA_s0");
    ExperimentConfig f3;
    f3.function = TargetFunction::F3;
    EXPECT_EQ(f3.effective_widths(), (std::vector<std::size_t>{2, 16, 1}));
    ExperimentConfig mlp;
    mlp.model = ModelKind::Mlp;
    EXPECT_EQ(mlp.effective_widths(), (std::vector<std::size_t>{2, 128, 128, 128, 1}));
    EXPECT_EQ(mlp.run_name(), "f1_mlp_s0");
    ExperimentConfig fixed;
    fixed.model = ModelKind::FastKanFixed;
    EXPECT_FALSE(fixed.rbf_config().learn_shape);
    for (auto k : all_model_kinds) {
        EXPECT_EQ(parse_model_kind(model_kind_name(k)), k);
    }
}

TEST(ExperimentConfig, JsonRoundTrip)
{
    ExperimentConfig c;
    c.function = TargetFunction::F4;
    c.kernel = KernelKind::W6;
    c.widths = std::vector<std::size_t>{2, 4, 4, 1};
    c.h_init = 0.3;
    c.train.epochs = 10;
    c.rbf.num_centers = 6;
    EXPECT_EQ(experiment_config_from_json(to_json(c)), c);
}

TEST(ExperimentConfig, ErrorsArePathQualified)
{
    Json j = to_json(ExperimentConfig{});
    j["train"]["learning_rte"] = 0.1;
    try {
        experiment_config_from_json(j);
        FAIL();
    } catch (const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("/train/learning_rte"), std::string::npos) << e.what();
    }
    j = to_json(ExperimentConfig{});
    j["widths"] = Json::array({3, 8, 1});
    EXPECT_THROW(experiment_config_from_json(j), ConfigError);
    j = to_json(ExperimentConfig{});
    j["model"] = "cnn";
    EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(ExperimentConfig, SetAssignments)
{
    Json j = to_json(ExperimentConfig{});
    set_config_json_path(j, "train.epochs=12");
    set_config_json_path(j, "kernel=M2");
    set_config_json_path(j, "widths=[2,3,1]");
    const auto c = experiment_config_from_json(j);
    EXPECT_EQ(c.train.epochs, 12);
    EXPECT_EQ(c.kernel, KernelKind::M2);
    EXPECT_EQ(c.effective_widths(), (std::vector<std::size_t>{2, 3, 1}));
    EXPECT_THROW(set_config_json_path(j, "novalue"), ConfigError);
    EXPECT_THROW(set_config_json_path(j, "kernel.x=1"), ConfigError);
}

TEST(CmdTrain, WritesArtifactsAndReport)
{
    const auto dir = temp_dir("train");
    const auto rep = cmd_train(quick_config(dir));
    EXPECT_EQ(rep.status, "ok");
    ASSERT_TRUE(rep.h_init.has_value());
    ASSERT_TRUE(rep.h_final.has_value());
    EXPECT_GT(*rep.h_final, 0.0);
    ASSERT_TRUE(rep.test_rel_l2.has_value());
    EXPECT_TRUE(std::isfinite(*rep.test_rel_l2));
    EXPECT_EQ(rep.train_samples, 160u);
    EXPECT_EQ(rep.test_samples, 40u);
    for (const char *f : {"report.json", "timing.json", "history.csv", "model.json", "surface.csv", "loocv_curve.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    const auto back = report_from_json(parse_json_text(read_text_file(dir / "report.json"), "report"));
    EXPECT_EQ(back, rep);
    std::filesystem::remove_all(dir);
}

TEST(CmdTrain, ExplicitInitSkipsLoocv)
{
    const auto dir = temp_dir("init");
    auto c = quick_config(dir);
    c.h_init = 0.4;
    const auto out = run_experiment(c);
    EXPECT_FALSE(out.loocv.has_value());
    EXPECT_EQ(out.report.h_init, 0.4);
    EXPECT_FALSE(out.report.loocv_curve_file.has_value());
}

TEST(CmdTrain, MlpReportHasNoShapeFields)
{
    const auto dir = temp_dir("mlp");
    auto c = quick_config(dir);
    c.model = ModelKind::Mlp;
    c.widths = std::vector<std::size_t>{2, 8, 1};
    const auto rep = cmd_train(c);
    EXPECT_FALSE(rep.h_init.has_value());
    EXPECT_FALSE(rep.h_final.has_value());
    EXPECT_FALSE(rep.kernel.has_value());
    const auto j = parse_json_text(read_text_file(dir / "report.json"), "r");
    EXPECT_TRUE(j.at("h_init").is_null());
    EXPECT_TRUE(j.at("kernel").is_null());
    std::filesystem::remove_all(dir);
}

TEST(CmdTrain, FixedBaselineKeepsH)
{
    auto c = quick_config(temp_dir("fixed"));
    c.model = ModelKind::FastKanFixed;
    const auto out = run_experiment(c);
    EXPECT_EQ(out.report.h_init, fastkan_fixed_h);
    ASSERT_TRUE(out.report.h_final.has_value());
    EXPECT_NEAR(*out.report.h_final, fastkan_fixed_h, 1e-15);
}

TEST(CmdTrain, ByteIdenticalReruns)
{
    const auto dir = temp_dir("det");
    const auto c = quick_config(dir);
    cmd_train(c);
    const auto report1 = read_text_file(dir / "report.json");
    const auto history1 = read_text_file(dir / "history.csv");
    cmd_train(c);
    EXPECT_EQ(read_text_file(dir / "report.json"), report1);
    EXPECT_EQ(read_text_file(dir / "history.csv"), history1);
    std::filesystem::remove_all(dir);
}

TEST(CmdTrain, DivergenceIsReportedNotThrown)
{
    const auto dir = temp_dir("diverge");
    auto c = quick_config(dir);
    c.h_init = 0.5;
    c.train.learning_rate = 1e300;
    const auto rep = cmd_train(c);
    EXPECT_EQ(rep.status, "diverged");
    EXPECT_TRUE(rep.error.has_value());
    EXPECT_TRUE(std::filesystem::exists(dir / "history.csv"));
    std::filesystem::remove_all(dir);
}

TEST(CmdLoocv, CurveCardinalityAndZeroTargets)
{
    const auto dir = temp_dir("loocv");
    ExperimentConfig c;
    c.samples = 300;
    c.output_dir = (dir / "a").string();
    const auto res = cmd_loocv(c);
    EXPECT_EQ(res.result.curve.size(), 70u);
    const auto csv = parse_csv(read_text_file(dir / "a" / "loocv_curve.csv"), true);
    EXPECT_EQ(csv.rows.size(), 70u);

    write_text_file(dir / "zeros.csv", "x,target\n0.0,0\n0.25,0\n0.5,0\n0.75,0\n1.0,0\n");
    c.points_file = (dir / "zeros.csv").string();
    c.output_dir = (dir / "b").string();
    const auto z = cmd_loocv(c);
    EXPECT_EQ(z.result.h_opt, c.loocv.h_min);
    EXPECT_EQ(z.result.err_min, 0.0);
    std::filesystem::remove_all(dir);
}

TEST(OutputRoot, EnvironmentOverridesDefault)
{
    const auto dir = temp_dir("root");
    ::setenv(output_root_env, dir.string().c_str(), 1);
    EXPECT_EQ(output_root(), dir);
    ExperimentConfig c;
    EXPECT_EQ(resolve_output_dir(c), dir / "f1_rbf_kan_GA_s0");
    ::unsetenv(output_root_env);
    EXPECT_EQ(output_root(), std::filesystem::path("runs"));
}

TEST(Matrix, EmptySpecIsDomainError)
{
    MatrixSpec spec;
    EXPECT_THROW(spec.validate(), DomainError);
    spec.functions = {TargetFunction::F1};
    EXPECT_THROW(spec.validate(), DomainError);
}

TEST(Matrix, CellCardinality)
{
    MatrixSpec spec;
    spec.functions = {all_functions[0], all_functions[1], all_functions[2], all_functions[3]};
    spec.kernels = {all_kernels[0], all_kernels[1], all_kernels[2], all_kernels[3],
                    all_kernels[4], all_kernels[5], all_kernels[6], all_kernels[7]};
    EXPECT_EQ(spec.cells().size(), 32u);
    spec.seeds = {1, 2, 3};
    spec.models = {ModelKind::Mlp};
    EXPECT_EQ(spec.cells().size(), 4u * (8u + 1u) * 3u);
}

TEST(Matrix, SpecFromJson)
{
    const auto j = parse_json_text(R"({"functions": ["f1", "f4"], "kernels": ["GA"], "models": ["mlp"],
                                      "seeds": [1, 2], "base": {"train": {"epochs": 5}}})",
                                   "m");
    const auto spec = matrix_spec_from_json(j);
    EXPECT_EQ(spec.cells().size(), 2u * 2u * 2u);
    EXPECT_EQ(spec.base.train.epochs, 5);
    EXPECT_THROW(matrix_spec_from_json(parse_json_text(R"({"functions": ["f9"]})", "m")), ConfigError);
    EXPECT_THROW(matrix_spec_from_json(parse_json_text(R"({"function": ["f1"]})", "m")), ConfigError);
}

TEST(Matrix, SmallRunWritesTables)
{
    const auto dir = temp_dir("matrix");
    MatrixSpec spec;
    spec.base = quick_config(dir);
    spec.base.output_dir.clear();
    spec.base.train.epochs = 20;
    spec.functions = {TargetFunction::F1, TargetFunction::F4};
    spec.kernels = {KernelKind::GA, KernelKind::W6};
    spec.models = {ModelKind::FastKanFixed, ModelKind::Mlp};
    spec.base.widths.reset();
    spec.output_dir = dir.string();
    const auto res = cmd_matrix(spec, 2);
    ASSERT_EQ(res.rows.size(), 8u);
    for (const auto &r : res.rows) {
        EXPECT_EQ(r.status, "ok") << r.run << " " << r.error.value_or("");
    }
    const auto kernel_table = parse_csv(read_text_file(dir / "kernel_table.csv"), true);
    EXPECT_EQ(kernel_table.rows.size(), 4u);
    const auto model_table = parse_csv(read_text_file(dir / "model_table.csv"), true);
    EXPECT_EQ(model_table.rows.size(), 2u);
    EXPECT_TRUE(std::filesystem::exists(dir / "matrix.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "cells" / "f4_rbf_kan_W6_s3" / "report.json"));
    // The same matrix on one thread gives the same rows.
    spec.output_dir = (dir / "serial").string();
    const auto serial = cmd_matrix(spec, 1);
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        ASSERT_TRUE(serial.rows[i].report.has_value());
        EXPECT_EQ(serial.rows[i].report->test_rel_l2, res.rows[i].report->test_rel_l2);
    }
    std::filesystem::remove_all(dir);
}
