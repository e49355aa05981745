// rbfkan: LOOCV searches, single trainings and experiment matrices for
// adaptive RBF-KAN and its baselines.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rbfkan/experiment.hpp"

namespace
{

enum ExitCode : int
{
    exit_ok = 0,
    exit_other = 1,
    exit_config = 2,
    exit_numerical = 3,
    exit_io = 4,
};

/// Config-file path plus the flag overrides shared by loocv and train.
struct ConfigFlags
{
    std::string config_file;
    std::optional<std::string> function;
    std::optional<std::string> model;
    std::optional<std::string> kernel;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<std::size_t> samples;
    std::optional<std::string> output;
    std::optional<std::string> points;
    std::vector<std::string> sets;
    bool print_config = false;

    void add_to(CLI::App &app, bool with_model)
    {
        app.add_option("-c,--config", config_file, "JSON experiment config (flags override it)")
            ->check(CLI::ExistingFile);
        app.add_option("-f,--function", function, "target function: f1, f2, f3, f4");
        if (with_model) {
            app.add_option("-m,--model", model, "model kind: " + rbfkan::model_kind_choices());
        }
        app.add_option("-k,--kernel", kernel, "RBF kernel: " + rbfkan::kernel_choices());
        app.add_option("-s,--seed", seed, "seed for sampling and initialization");
        if (with_model) {
            app.add_option("-e,--epochs", epochs, "training epochs");
        }
        app.add_option("-n,--samples", samples, "number of sampled points");
        app.add_option("-o,--output", output, "output directory");
        app.add_option("--set", sets, "override any config key, e.g. --set train.learning_rate=0.005")
            ->allow_extra_args(false);
        app.add_flag("--print-config", print_config, "print the effective config and exit");
    }

    rbfkan::ExperimentConfig resolve() const
    {
        rbfkan::Json j = rbfkan::Json::object();
        std::string source = "command line";
        if (!config_file.empty()) {
            source = config_file;
            j = rbfkan::parse_json_text(rbfkan::read_text_file(config_file), config_file);
            if (!j.is_object()) {
                throw rbfkan::ConfigError(config_file + ": top level must be an object");
            }
        }
        if (function) {
            j["function"] = *function;
        }
        if (model) {
            j["model"] = *model;
        }
        if (kernel) {
            j["kernel"] = *kernel;
        }
        if (seed) {
            j["seed"] = *seed;
        }
        if (epochs) {
            j["train"]["epochs"] = *epochs;
        }
        if (samples) {
            j["samples"] = *samples;
        }
        if (output) {
            j["output_dir"] = *output;
        }
        if (points) {
            j["points_file"] = *points;
        }
        for (const auto &s : sets) {
            rbfkan::set_config_json_path(j, s);
        }
        try {
            return rbfkan::experiment_config_from_json(j);
        } catch (const rbfkan::ConfigError &e) {
            throw rbfkan::ConfigError(source + ": " + e.what());
        }
    }
};

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string fmt(const std::optional<double> &v) { return v ? fmt(*v) : std::string("-"); }

int run_loocv(const ConfigFlags &flags)
{
    const auto cfg = flags.resolve();
    if (flags.print_config) {
        std::cout << rbfkan::dump_json(rbfkan::to_json(cfg));
        return exit_ok;
    }
    const auto res = rbfkan::cmd_loocv(cfg);
    std::cout << "h_opt " << fmt(res.result.h_opt) << "  err_min " << fmt(res.result.err_min) << "  ("
              << res.result.curve.size() << " candidates, " << fmt(res.seconds) << " s)\n"
              << "wrote " << (res.directory / "loocv.json").string() << "\n";
    return exit_ok;
}

int run_train(const ConfigFlags &flags)
{
    const auto cfg = flags.resolve();
    if (flags.print_config) {
        std::cout << rbfkan::dump_json(rbfkan::to_json(cfg));
        return exit_ok;
    }
    const auto rep = rbfkan::cmd_train(cfg);
    const auto dir = rbfkan::resolve_output_dir(cfg);
    std::cout << rep.run << ": " << rep.status << "  test_rel_l2 " << fmt(rep.test_rel_l2) << "  h " << fmt(rep.h_init)
              << " -> " << fmt(rep.h_final) << "  epochs " << rep.epochs << "  (loocv " << fmt(rep.loocv_seconds)
              << " s, train " << fmt(rep.train_seconds) << " s)\n"
              << "wrote " << (dir / "report.json").string() << "\n";
    if (!rep.ok()) {
        std::cerr << "error: " << rep.error.value_or("training diverged") << "\n";
        return exit_numerical;
    }
    return exit_ok;
}

int run_matrix(const std::string &spec_file, std::size_t jobs, const std::optional<std::string> &output)
{
    auto spec = rbfkan::load_matrix_spec(spec_file);
    if (output) {
        spec.output_dir = *output;
    }
    try {
        spec.validate();
    } catch (const rbfkan::DomainError &e) {
        throw rbfkan::ConfigError(spec_file + ": " + e.what());
    }
    const auto res = rbfkan::cmd_matrix(spec, jobs);
    std::size_t failed = 0;
    for (const auto &row : res.rows) {
        std::cout << row.run << ": " << row.status << "  test_rel_l2 "
                  << fmt(row.report ? row.report->test_rel_l2 : std::nullopt) << "\n";
        failed += row.status != "ok";
    }
    std::cout << res.rows.size() << " cells, " << failed << " failed; wrote " << (res.directory / "matrix.json").string()
              << "\n";
    return exit_ok;
}

int run_eval(const std::string &model_file, const std::string &points_file, const std::optional<std::string> &output)
{
    const auto model = rbfkan::load_model(model_file);
    const auto pts = rbfkan::parse_points_csv(rbfkan::read_text_file(points_file), rbfkan::input_width(model), points_file);
    const auto pred = rbfkan::predict(model, pts.inputs);
    const auto csv = rbfkan::predictions_to_csv(pts.inputs, pred, pts.targets);
    if (output) {
        rbfkan::write_text_file(*output, csv);
    } else {
        std::cout << csv;
    }
    if (pts.targets && output) {
        std::cout << "relative_l2 " << fmt(rbfkan::relative_l2(pred, *pts.targets)) << "\n";
    }
    return exit_ok;
}

int run_export_grid(const std::string &model_file, const std::string &function, std::size_t resolution,
                    const std::optional<std::string> &output)
{
    const auto f = rbfkan::parse_function(function);
    if (!f) {
        throw rbfkan::ConfigError("unknown function '" + function + "'; valid choices: f1, f2, f3, f4");
    }
    const auto model = rbfkan::load_model(model_file);
    const auto grid = rbfkan::reconstruct_surface(model, *f, resolution);
    const auto csv = rbfkan::surface_to_csv(grid);
    if (output) {
        rbfkan::write_text_file(*output, csv);
        std::cout << "grid_rel_l2 " << fmt(grid.relative_l2) << "  wrote " << *output << "\n";
    } else {
        std::cout << csv;
    }
    return exit_ok;
}

int run_dataset(const std::string &function, std::size_t samples, std::uint64_t seed,
                const std::optional<std::string> &output)
{
    const auto f = rbfkan::parse_function(function);
    if (!f) {
        throw rbfkan::ConfigError("unknown function '" + function + "'; valid choices: f1, f2, f3, f4");
    }
    const auto csv = rbfkan::dataset_to_csv(rbfkan::generate_dataset(*f, samples, seed));
    if (output) {
        rbfkan::write_text_file(*output, csv);
    } else {
        std::cout << csv;
    }
    return exit_ok;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Adaptive RBF-KAN experiments: LOOCV shape search, training, baselines and experiment matrices"};
    app.require_subcommand(1);

    ConfigFlags loocv_flags;
    auto *loocv = app.add_subcommand("loocv", "two-stage LOOCV search for the kernel shape parameter");
    loocv_flags.add_to(*loocv, false);
    loocv->add_option("--points", loocv_flags.points, "CSV of (coordinate, target) pairs to search on instead")
        ->check(CLI::ExistingFile);

    ConfigFlags train_flags;
    auto *train = app.add_subcommand("train", "LOOCV (adaptive models), training and surface export");
    train_flags.add_to(*train, true);

    std::string spec_file;
    std::size_t jobs = 1;
    std::optional<std::string> matrix_output;
    auto *matrix = app.add_subcommand("matrix", "run a functions x kernels/models matrix and aggregate tables");
    matrix->add_option("spec", spec_file, "JSON matrix spec")->required()->check(CLI::ExistingFile);
    matrix->add_option("-j,--jobs", jobs, "cells run concurrently")->check(CLI::PositiveNumber);
    matrix->add_option("-o,--output", matrix_output, "output directory");

    std::string model_file;
    std::string points_file;
    std::optional<std::string> eval_output;
    auto *eval = app.add_subcommand("eval", "evaluate a saved model on CSV points");
    eval->add_option("--model", model_file, "model.json")->required()->check(CLI::ExistingFile);
    eval->add_option("--points", points_file, "CSV with x,y columns (optional target column)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("-o,--output", eval_output, "output CSV (default stdout)");

    std::string grid_model;
    std::string grid_function;
    std::size_t resolution = 100;
    std::optional<std::string> grid_output;
    auto *grid = app.add_subcommand("export-grid", "evaluate a saved model on a uniform grid over [0,1]^2");
    grid->add_option("--model", grid_model, "model.json")->required()->check(CLI::ExistingFile);
    grid->add_option("-f,--function", grid_function, "target function for the z_true column")->required();
    grid->add_option("-r,--resolution", resolution, "points per axis")->check(CLI::Range(2, 100000));
    grid->add_option("-o,--output", grid_output, "output CSV (default stdout)");

    std::string ds_function;
    std::size_t ds_samples = 2000;
    std::uint64_t ds_seed = 0;
    std::optional<std::string> ds_output;
    auto *dataset = app.add_subcommand("dataset", "export the sampled dataset and its split as CSV");
    dataset->add_option("-f,--function", ds_function, "target function")->required();
    dataset->add_option("-n,--samples", ds_samples, "number of points");
    dataset->add_option("-s,--seed", ds_seed, "seed");
    dataset->add_option("-o,--output", ds_output, "output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*loocv) {
            return run_loocv(loocv_flags);
        }
        if (*train) {
            return run_train(train_flags);
        }
        if (*matrix) {
            return run_matrix(spec_file, jobs, matrix_output);
        }
        if (*eval) {
            return run_eval(model_file, points_file, eval_output);
        }
        if (*grid) {
            return run_export_grid(grid_model, grid_function, resolution, grid_output);
        }
        if (*dataset) {
            return run_dataset(ds_function, ds_samples, ds_seed, ds_output);
        }
    } catch (const rbfkan::ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const rbfkan::DomainError &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_config;
    } catch (const rbfkan::IoError &e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return exit_io;
    } catch (const rbfkan::SearchFailedError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const rbfkan::NumericalRankError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const rbfkan::DegenerateDataError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const rbfkan::NumericalDivergenceError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_other;
    }
    return exit_other;
}
