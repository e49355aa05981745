#ifndef RBFKAN_EXPERIMENT_HPP
#define RBFKAN_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rbfkan/baselines.hpp"
#include "rbfkan/benchmarks.hpp"
#include "rbfkan/errors.hpp"
#include "rbfkan/kan_core.hpp"
#include "rbfkan/kernels.hpp"
#include "rbfkan/loocv.hpp"
#include "rbfkan/serialization.hpp"
#include "rbfkan/training.hpp"

namespace rbfkan
{

inline constexpr std::string_view experiment_schema = "rbfkan.experiment/1";
inline constexpr std::string_view report_schema = "rbfkan.report/1";
inline constexpr std::string_view timing_schema = "rbfkan.timing/1";
inline constexpr std::string_view matrix_schema = "rbfkan.matrix/1";
inline constexpr std::string_view matrix_report_schema = "rbfkan.matrix_report/1";

/// Shape parameter of the original FastKAN, held fixed in the baseline.
inline constexpr double fastkan_fixed_h = 0.5714;

/// Environment variable naming the directory under which runs are written
/// when a config does not set `output_dir`.
inline constexpr const char *output_root_env = "RBFKAN_OUTPUT_ROOT";

enum class ModelKind
{
    RbfKan,       ///< adaptive RBF-KAN: h initialized by LOOCV, then trained
    FastKanFixed, ///< GA-style RBF-KAN with h frozen
    SplineKan,
    ChebKan,
    Mlp,
};

inline constexpr ModelKind all_model_kinds[] = {ModelKind::RbfKan, ModelKind::FastKanFixed, ModelKind::SplineKan,
                                                ModelKind::ChebKan, ModelKind::Mlp};

inline std::string model_kind_name(ModelKind k)
{
    switch (k) {
        case ModelKind::RbfKan: return "rbf_kan";
        case ModelKind::FastKanFixed: return "fastkan_fixed";
        case ModelKind::SplineKan: return "spline_kan";
        case ModelKind::ChebKan: return "cheb_kan";
        case ModelKind::Mlp: return "mlp";
    }
    return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s)
{
    for (auto k : all_model_kinds) {
        if (model_kind_name(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

inline std::string model_kind_choices() { return "rbf_kan, fastkan_fixed, spline_kan, cheb_kan, mlp"; }

inline bool uses_kernel(ModelKind k) { return k == ModelKind::RbfKan || k == ModelKind::FastKanFixed; }

/// Architecture used when a config leaves `widths` unset.
inline std::vector<std::size_t> default_widths(ModelKind model, TargetFunction f)
{
    switch (model) {
        case ModelKind::SplineKan: return {2, 5, 5, 1};
        case ModelKind::Mlp: return {2, 128, 128, 128, 1};
        default: return f == TargetFunction::F3 ? std::vector<std::size_t>{2, 16, 1} : std::vector<std::size_t>{2, 8, 1};
    }
}

/// Options of the RBF edge functions that are not fixed by the experiment
/// itself (kernel, widths, seed and learn_shape come from the top level).
struct RbfOptions
{
    std::size_t num_centers = 8;
    Range center_range{-2.0, 2.0};
    bool use_layernorm = true;
    bool use_residual = true;
    std::optional<Range> input_range = Range{0.0, 1.0};

    friend bool operator==(const RbfOptions &, const RbfOptions &) = default;
};

struct ExperimentConfig
{
    TargetFunction function = TargetFunction::F1;
    ModelKind model = ModelKind::RbfKan;
    KernelKind kernel = KernelKind::GA;
    std::size_t samples = 2000;
    std::uint64_t seed = 0;
    std::optional<std::vector<std::size_t>> widths;
    /// h of the fastkan_fixed baseline.
    double fixed_h = fastkan_fixed_h;
    /// Start the adaptive model from this h instead of running LOOCV.
    std::optional<double> h_init;
    std::size_t grid_resolution = 100;
    std::string output_dir;
    /// LOOCV only: read (coordinate, target) pairs from this CSV instead of
    /// sampling a dataset.
    std::optional<std::string> points_file;

    LoocvConfig loocv;
    RbfOptions rbf;
    SplineKanConfig spline;
    ChebKanConfig cheb;
    TrainConfig train;

    std::vector<std::size_t> effective_widths() const { return widths ? *widths : default_widths(model, function); }

    ModelConfig rbf_config() const
    {
        ModelConfig c;
        c.widths = effective_widths();
        c.kernel = kernel;
        c.num_centers = rbf.num_centers;
        c.center_range = rbf.center_range;
        c.use_layernorm = rbf.use_layernorm;
        c.use_residual = rbf.use_residual;
        c.input_range = rbf.input_range;
        c.learn_shape = model != ModelKind::FastKanFixed;
        c.seed = seed;
        return c;
    }

    SplineKanConfig spline_config() const
    {
        SplineKanConfig c = spline;
        c.widths = effective_widths();
        c.seed = seed;
        return c;
    }

    ChebKanConfig cheb_config() const
    {
        ChebKanConfig c = cheb;
        c.widths = effective_widths();
        c.seed = seed;
        return c;
    }

    MlpConfig mlp_config() const { return MlpConfig{effective_widths(), seed}; }

    /// Short directory-friendly identifier of the run.
    std::string run_name() const
    {
        std::string s = std::string(function_name(function)) + "_" + model_kind_name(model);
        if (uses_kernel(model)) {
            s += "_" + std::string(kernel_name(kernel));
        }
        return s + "_s" + std::to_string(seed);
    }

    /// Throws DomainError when any nested config is invalid.
    void validate() const
    {
        if (samples < 10) {
            throw DomainError("samples must be >= 10");
        }
        if (!(fixed_h > 0.0) || !std::isfinite(fixed_h)) {
            throw DomainError("fixed_h must be positive and finite");
        }
        if (h_init && (!(*h_init > 0.0) || !std::isfinite(*h_init))) {
            throw DomainError("h_init must be positive and finite");
        }
        if (grid_resolution < 2) {
            throw DomainError("grid_resolution must be >= 2");
        }
        const auto w = effective_widths();
        if (w.size() < 2 || w.front() != 2 || w.back() != 1) {
            throw DomainError("widths must start with 2 inputs and end with 1 output");
        }
        loocv.validate();
        train.validate();
        switch (model) {
            case ModelKind::RbfKan:
            case ModelKind::FastKanFixed: rbf_config().validate(); break;
            case ModelKind::SplineKan: spline_config().validate(); break;
            case ModelKind::ChebKan: cheb_config().validate(); break;
            case ModelKind::Mlp: mlp_config().validate(); break;
        }
    }

    friend bool operator==(const ExperimentConfig &, const ExperimentConfig &) = default;
};

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

inline Json to_json(const RbfOptions &o)
{
    return Json{{"num_centers", o.num_centers},
                {"center_range", range_json(o.center_range)},
                {"use_layernorm", o.use_layernorm},
                {"use_residual", o.use_residual},
                {"input_range", optional_range_json(o.input_range)}};
}

inline Json to_json(const ExperimentConfig &c)
{
    Json spline{{"grid_intervals", c.spline.grid_intervals},
                {"degree", c.spline.degree},
                {"domain", range_json(c.spline.domain)},
                {"use_layernorm", c.spline.use_layernorm},
                {"use_residual", c.spline.use_residual},
                {"input_range", optional_range_json(c.spline.input_range)}};
    Json cheb{{"degree", c.cheb.degree},
              {"use_layernorm", c.cheb.use_layernorm},
              {"use_residual", c.cheb.use_residual},
              {"input_range", optional_range_json(c.cheb.input_range)}};
    Json j{{"schema", experiment_schema},
           {"function", std::string(function_name(c.function))},
           {"model", model_kind_name(c.model)},
           {"kernel", std::string(kernel_name(c.kernel))},
           {"samples", c.samples},
           {"seed", c.seed},
           {"widths", c.effective_widths()},
           {"fixed_h", c.fixed_h},
           {"h_init", json_optional(c.h_init)},
           {"grid_resolution", c.grid_resolution},
           {"output_dir", c.output_dir}};
    if (c.points_file) {
        j["points_file"] = *c.points_file;
    }
    j["loocv"] = to_json(c.loocv);
    j["rbf"] = to_json(c.rbf);
    j["spline"] = std::move(spline);
    j["cheb"] = std::move(cheb);
    j["train"] = to_json(c.train);
    return j;
}

namespace detail
{

template <class F>
void read_block(ObjectReader &r, const std::string &key, F &&fill)
{
    if (const Json *v = r.member(key)) {
        ObjectReader sub(*v, r.child_path(key));
        fill(sub);
        sub.finish();
    }
}

inline void read_experiment_fields(ObjectReader &r, ExperimentConfig &c, bool allow_cell_keys)
{
    if (const Json *s = r.member("schema")) {
        if (!s->is_string() || s->get<std::string>() != experiment_schema) {
            throw ConfigError(r.child_path("schema") + ": expected \"" + std::string(experiment_schema) + "\"");
        }
    }
    if (allow_cell_keys) {
        r.get("function", c.function);
        if (const Json *m = r.member("model")) {
            const auto name = ObjectReader::convert<std::string>(*m, r.child_path("model"));
            const auto kind = parse_model_kind(name);
            if (!kind) {
                throw ConfigError(r.child_path("model") + ": unknown model '" + name + "'; valid choices: "
                                  + model_kind_choices());
            }
            c.model = *kind;
        }
        r.get("kernel", c.kernel);
    }
    r.get("samples", c.samples);
    r.get("seed", c.seed);
    if (const Json *w = r.member("widths")) {
        if (w->is_null()) {
            c.widths.reset();
        } else {
            c.widths = ObjectReader::convert<std::vector<std::size_t>>(*w, r.child_path("widths"));
        }
    }
    r.get("fixed_h", c.fixed_h);
    r.get("h_init", c.h_init);
    r.get("grid_resolution", c.grid_resolution);
    r.get("output_dir", c.output_dir);
    r.get("points_file", c.points_file);
    read_block(r, "loocv", [&](ObjectReader &s) {
        s.get("h_min", c.loocv.h_min);
        s.get("h_max", c.loocv.h_max);
        s.get("n_coarse", c.loocv.n_coarse);
        s.get("n_fine", c.loocv.n_fine);
        s.get("lambda", c.loocv.lambda);
        s.get("max_points", c.loocv.max_points);
        s.get("coordinate_index", c.loocv.coordinate_index);
    });
    read_block(r, "rbf", [&](ObjectReader &s) {
        s.get("num_centers", c.rbf.num_centers);
        s.get("center_range", c.rbf.center_range);
        s.get("use_layernorm", c.rbf.use_layernorm);
        s.get("use_residual", c.rbf.use_residual);
        s.get("input_range", c.rbf.input_range);
    });
    read_block(r, "spline", [&](ObjectReader &s) {
        s.get("grid_intervals", c.spline.grid_intervals);
        s.get("degree", c.spline.degree);
        s.get("domain", c.spline.domain);
        s.get("use_layernorm", c.spline.use_layernorm);
        s.get("use_residual", c.spline.use_residual);
        s.get("input_range", c.spline.input_range);
    });
    read_block(r, "cheb", [&](ObjectReader &s) {
        s.get("degree", c.cheb.degree);
        s.get("use_layernorm", c.cheb.use_layernorm);
        s.get("use_residual", c.cheb.use_residual);
        s.get("input_range", c.cheb.input_range);
    });
    read_block(r, "train", [&](ObjectReader &s) {
        s.get("learning_rate", c.train.learning_rate);
        s.get("epochs", c.train.epochs);
        s.get("eval_every", c.train.eval_every);
        s.get("adam_beta1", c.train.adam_beta1);
        s.get("adam_beta2", c.train.adam_beta2);
        s.get("adam_eps", c.train.adam_eps);
    });
}

inline void validate_as_config(const ExperimentConfig &c)
{
    try {
        c.validate();
    } catch (const DomainError &e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

} // namespace detail

/// Applies the members of `j` on top of `base`. Unknown keys are rejected.
inline ExperimentConfig apply_config_json(ExperimentConfig base, const Json &j)
{
    ObjectReader r(j, "");
    detail::read_experiment_fields(r, base, true);
    r.finish();
    return base;
}

inline ExperimentConfig experiment_config_from_json(const Json &j)
{
    auto c = apply_config_json(ExperimentConfig{}, j);
    detail::validate_as_config(c);
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path &path)
{
    const std::string text = read_text_file(path);
    const Json j = parse_json_text(text, path.string());
    try {
        return experiment_config_from_json(j);
    } catch (const ConfigError &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Sets one dotted key (for example `train.epochs` or `rbf.center_range`) from
/// a command-line string. The value is parsed as JSON when it is valid JSON
/// and taken as a plain string otherwise.
inline void set_config_json_path(Json &j, const std::string &assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    Json *node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw ConfigError("--set: malformed key '" + key + "'");
        }
        if (!node->is_object()) {
            throw ConfigError("--set: '" + key + "' descends into a non-object");
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) {
            *node = Json::object();
        }
        start = dot + 1;
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ExperimentReport
{
    Json config; ///< full effective config echo
    std::string run;
    std::string function;
    std::string model;
    std::optional<std::string> kernel;
    std::vector<std::size_t> widths;
    std::size_t parameter_count = 0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::optional<double> h_init;
    std::optional<double> h_final;
    std::optional<double> loocv_err_min;
    std::string status = "ok"; ///< "ok" or "diverged"
    std::optional<std::string> error;
    std::optional<double> test_rel_l2;
    std::optional<double> grid_rel_l2;
    std::optional<double> first_train_mse;
    std::optional<double> final_train_mse;
    int epochs = 0;
    std::string history_file;
    std::optional<std::string> model_file;
    std::optional<std::string> surface_file;
    std::optional<std::string> loocv_curve_file;
    std::string timing_file;

    /// Wall clock; kept out of the report file (see timing_file) and out of equality.
    double loocv_seconds = 0.0;
    double train_seconds = 0.0;

    bool ok() const { return status == "ok"; }

    friend bool operator==(const ExperimentReport &a, const ExperimentReport &b)
    {
        auto tie = [](const ExperimentReport &r) {
            return std::tie(r.config, r.run, r.function, r.model, r.kernel, r.widths, r.parameter_count,
                            r.train_samples, r.test_samples, r.h_init, r.h_final, r.loocv_err_min, r.status, r.error,
                            r.test_rel_l2, r.grid_rel_l2, r.first_train_mse, r.final_train_mse, r.epochs,
                            r.history_file, r.model_file, r.surface_file, r.loocv_curve_file, r.timing_file);
        };
        return tie(a) == tie(b);
    }
};

namespace detail
{

inline Json opt_string(const std::optional<std::string> &s) { return s ? Json(*s) : Json(nullptr); }

template <class T>
void read_optional(ObjectReader &r, const std::string &key, std::optional<T> &out)
{
    const Json *v = r.member(key);
    if (v == nullptr) {
        throw ConfigError(r.child_path(key) + ": missing");
    }
    if (v->is_null()) {
        out.reset();
    } else {
        out = ObjectReader::convert<T>(*v, r.child_path(key));
    }
}

} // namespace detail

inline Json to_json(const ExperimentReport &r)
{
    return Json{{"schema", report_schema},
                {"run", r.run},
                {"function", r.function},
                {"model", r.model},
                {"kernel", detail::opt_string(r.kernel)},
                {"widths", r.widths},
                {"parameter_count", r.parameter_count},
                {"train_samples", r.train_samples},
                {"test_samples", r.test_samples},
                {"status", r.status},
                {"error", detail::opt_string(r.error)},
                {"h_init", json_optional(r.h_init)},
                {"h_final", json_optional(r.h_final)},
                {"loocv_err_min", json_optional(r.loocv_err_min)},
                {"test_rel_l2", json_optional(r.test_rel_l2)},
                {"grid_rel_l2", json_optional(r.grid_rel_l2)},
                {"first_train_mse", json_optional(r.first_train_mse)},
                {"final_train_mse", json_optional(r.final_train_mse)},
                {"epochs", r.epochs},
                {"history_file", r.history_file},
                {"model_file", detail::opt_string(r.model_file)},
                {"surface_file", detail::opt_string(r.surface_file)},
                {"loocv_curve_file", detail::opt_string(r.loocv_curve_file)},
                {"timing_file", r.timing_file},
                {"config", r.config}};
}

inline ExperimentReport report_from_json(const Json &j)
{
    ExperimentReport r;
    ObjectReader o(j, "");
    if (o.require<std::string>("schema") != report_schema) {
        throw ConfigError("/schema: expected \"" + std::string(report_schema) + "\"");
    }
    r.run = o.require<std::string>("run");
    r.function = o.require<std::string>("function");
    r.model = o.require<std::string>("model");
    detail::read_optional(o, "kernel", r.kernel);
    r.widths = o.require<std::vector<std::size_t>>("widths");
    r.parameter_count = o.require<std::size_t>("parameter_count");
    r.train_samples = o.require<std::size_t>("train_samples");
    r.test_samples = o.require<std::size_t>("test_samples");
    r.status = o.require<std::string>("status");
    detail::read_optional(o, "error", r.error);
    detail::read_optional(o, "h_init", r.h_init);
    detail::read_optional(o, "h_final", r.h_final);
    detail::read_optional(o, "loocv_err_min", r.loocv_err_min);
    detail::read_optional(o, "test_rel_l2", r.test_rel_l2);
    detail::read_optional(o, "grid_rel_l2", r.grid_rel_l2);
    detail::read_optional(o, "first_train_mse", r.first_train_mse);
    detail::read_optional(o, "final_train_mse", r.final_train_mse);
    r.epochs = o.require<int>("epochs");
    r.history_file = o.require<std::string>("history_file");
    detail::read_optional(o, "model_file", r.model_file);
    detail::read_optional(o, "surface_file", r.surface_file);
    detail::read_optional(o, "loocv_curve_file", r.loocv_curve_file);
    r.timing_file = o.require<std::string>("timing_file");
    const Json *cfg = o.member("config");
    if (cfg == nullptr) {
        throw ConfigError("/config: missing");
    }
    r.config = *cfg;
    o.finish();
    return r;
}

inline Json timing_json(const ExperimentReport &r)
{
    return Json{{"schema", timing_schema}, {"loocv_seconds", r.loocv_seconds}, {"train_seconds", r.train_seconds}};
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

/// Everything one run produced, before anything touches the file system.
struct ExperimentOutcome
{
    ExperimentReport report;
    std::optional<LoocvResult> loocv;
    std::optional<AnyModel> model;
    TrainRecord record;
    std::optional<SurfaceGrid> surface;
};

namespace detail
{

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::pair<std::vector<double>, std::vector<double>> load_loocv_points(const std::string &file)
{
    const auto ps = parse_points_csv(read_text_file(file), 1, file);
    if (!ps.targets) {
        throw ConfigError(file + ": LOOCV points need a target column");
    }
    const auto d = ps.inputs.data();
    return {std::vector<double>(d.begin(), d.end()), *ps.targets};
}

template <class Model>
void finish_training(ExperimentOutcome &out, Model model, const Dataset &ds, const ExperimentConfig &cfg)
{
    auto &rep = out.report;
    rep.parameter_count = model.parameters().size();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto result = train(std::move(model), ds, cfg.train);
        rep.train_seconds = seconds_since(t0);
        out.record = std::move(result.record);
        out.surface = reconstruct_surface(result.model, cfg.function, cfg.grid_resolution);
        rep.grid_rel_l2 = out.surface->relative_l2;
        out.model = AnyModel(std::move(result.model));
    } catch (const TrainingDivergedError &e) {
        rep.train_seconds = seconds_since(t0);
        out.record = e.partial_record();
        rep.status = "diverged";
        rep.error = e.what();
    }
    const auto &rec = out.record;
    rep.epochs = rec.epochs_completed;
    if (rec.epochs_completed > 0) {
        rep.first_train_mse = rec.first_train_mse;
        rep.final_train_mse = rec.final_train_mse;
    }
    if (!rec.entries.empty()) {
        rep.h_final = rec.entries.back().h;
        if (rep.ok()) {
            rep.test_rel_l2 = rec.entries.back().test_rel_l2;
        }
    }
}

} // namespace detail

/// LOOCV search on the configured auxiliary data. Returns the result and the
/// seconds it took.
inline std::pair<LoocvResult, double> run_loocv(const ExperimentConfig &cfg)
{
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> xs;
    std::vector<double> ys;
    if (cfg.points_file) {
        std::tie(xs, ys) = detail::load_loocv_points(*cfg.points_file);
    } else {
        const Dataset ds = generate_dataset(cfg.function, cfg.samples, cfg.seed);
        std::tie(xs, ys) = prepare_auxiliary(ds, cfg.loocv);
    }
    auto result = search_h(xs, ys, cfg.kernel, cfg.loocv);
    return {std::move(result), detail::seconds_since(t0)};
}

/// LOOCV (adaptive model only), initialization, training and surface
/// reconstruction. Divergence is reported in the outcome, not thrown; LOOCV
/// and configuration failures propagate.
inline ExperimentOutcome run_experiment(const ExperimentConfig &cfg)
{
    cfg.validate();
    ExperimentOutcome out;
    auto &rep = out.report;
    rep.config = to_json(cfg);
    rep.run = cfg.run_name();
    rep.function = std::string(function_name(cfg.function));
    rep.model = model_kind_name(cfg.model);
    if (uses_kernel(cfg.model)) {
        rep.kernel = std::string(kernel_name(cfg.kernel));
    }
    rep.widths = cfg.effective_widths();
    rep.history_file = "history.csv";
    rep.timing_file = "timing.json";

    const Dataset ds = generate_dataset(cfg.function, cfg.samples, cfg.seed);
    rep.train_samples = ds.train_idx.size();
    rep.test_samples = ds.test_idx.size();

    switch (cfg.model) {
        case ModelKind::RbfKan: {
            double h0 = 0.0;
            if (cfg.h_init) {
                h0 = *cfg.h_init;
            } else {
                const auto t0 = std::chrono::steady_clock::now();
                const auto [xs, ys] = prepare_auxiliary(ds, cfg.loocv);
                out.loocv = search_h(xs, ys, cfg.kernel, cfg.loocv);
                rep.loocv_seconds = detail::seconds_since(t0);
                h0 = out.loocv->h_opt;
                if (std::isfinite(out.loocv->err_min)) {
                    rep.loocv_err_min = out.loocv->err_min;
                }
                rep.loocv_curve_file = "loocv_curve.csv";
            }
            rep.h_init = h0;
            detail::finish_training(out, init_model(cfg.rbf_config(), h0), ds, cfg);
            break;
        }
        case ModelKind::FastKanFixed:
            rep.h_init = cfg.fixed_h;
            detail::finish_training(out, init_model(cfg.rbf_config(), cfg.fixed_h), ds, cfg);
            break;
        case ModelKind::SplineKan:
            detail::finish_training(out, SplineKanModel::initialized(cfg.spline_config()), ds, cfg);
            break;
        case ModelKind::ChebKan:
            detail::finish_training(out, ChebKanModel::initialized(cfg.cheb_config()), ds, cfg);
            break;
        case ModelKind::Mlp: detail::finish_training(out, MlpModel::initialized(cfg.mlp_config()), ds, cfg); break;
    }
    if (out.model) {
        rep.model_file = "model.json";
        rep.surface_file = "surface.csv";
    }
    return out;
}

/// `$RBFKAN_OUTPUT_ROOT`, or `runs` when unset.
inline std::filesystem::path output_root()
{
    const char *root = std::getenv(output_root_env);
    return (root != nullptr && *root != '\0') ? std::filesystem::path(root) : std::filesystem::path("runs");
}

/// Output directory of a run: `output_dir` when set, otherwise
/// `<output root>/<run name>`.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig &cfg)
{
    return cfg.output_dir.empty() ? output_root() / cfg.run_name() : std::filesystem::path(cfg.output_dir);
}

/// Writes report.json, timing.json, history.csv and, when present, the model,
/// surface and LOOCV artifacts into `dir`.
inline void write_artifacts(const ExperimentOutcome &out, const std::filesystem::path &dir)
{
    const auto &rep = out.report;
    write_text_file(dir / rep.history_file, history_to_csv(out.record));
    if (out.model && rep.model_file) {
        save_model(dir / *rep.model_file, *out.model);
    }
    if (out.surface && rep.surface_file) {
        write_text_file(dir / *rep.surface_file, surface_to_csv(*out.surface));
    }
    if (out.loocv && rep.loocv_curve_file) {
        write_text_file(dir / *rep.loocv_curve_file, curve_to_csv(*out.loocv));
    }
    write_text_file(dir / rep.timing_file, dump_json(timing_json(rep)));
    write_text_file(dir / "report.json", dump_json(to_json(rep)));
}

/// Runs one training experiment and writes its artifacts. Returns the report
/// (status "diverged" when training hit a non-finite value).
inline ExperimentReport cmd_train(const ExperimentConfig &cfg)
{
    auto out = run_experiment(cfg);
    write_artifacts(out, resolve_output_dir(cfg));
    return out.report;
}

struct LoocvCommandResult
{
    LoocvResult result;
    double seconds = 0.0;
    std::filesystem::path directory;
};

inline Json loocv_report_json(const ExperimentConfig &cfg, const LoocvResult &result)
{
    Json j{{"schema", loocv_schema},
           {"function", std::string(function_name(cfg.function))},
           {"kernel", std::string(kernel_name(cfg.kernel))},
           {"seed", cfg.seed},
           {"points_file", cfg.points_file ? Json(*cfg.points_file) : Json(nullptr)},
           {"loocv", to_json(cfg.loocv)},
           {"curve_file", "loocv_curve.csv"}};
    const Json body = to_json(result);
    for (auto &[k, v] : body.items()) {
        j[k] = v;
    }
    return j;
}

/// LOOCV search only; writes loocv.json and loocv_curve.csv.
inline LoocvCommandResult cmd_loocv(const ExperimentConfig &cfg)
{
    detail::validate_as_config(cfg);
    auto [result, seconds] = run_loocv(cfg);
    const std::filesystem::path dir =
        cfg.output_dir.empty() ? output_root() / (std::string(function_name(cfg.function)) + "_loocv_" + std::string(kernel_name(cfg.kernel))
                                                  + "_s" + std::to_string(cfg.seed))
                               : std::filesystem::path(cfg.output_dir);
    write_text_file(dir / "loocv_curve.csv", curve_to_csv(result));
    write_text_file(dir / "loocv.json", dump_json(loocv_report_json(cfg, result)));
    return {std::move(result), seconds, dir};
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

struct MatrixCell
{
    TargetFunction function;
    ModelKind model;
    KernelKind kernel;
    std::uint64_t seed;
};

struct MatrixSpec
{
    ExperimentConfig base;
    std::vector<TargetFunction> functions;
    std::vector<KernelKind> kernels; ///< adaptive rbf_kan cells
    std::vector<ModelKind> models;   ///< baseline cells (any model kind)
    std::vector<std::uint64_t> seeds;
    std::string output_dir;

    /// Cells in function-major, then kernel, then model, then seed order.
    std::vector<MatrixCell> cells() const
    {
        std::vector<MatrixCell> out;
        const auto seed_list = seeds.empty() ? std::vector<std::uint64_t>{base.seed} : seeds;
        for (auto f : functions) {
            for (auto k : kernels) {
                for (auto s : seed_list) {
                    out.push_back({f, ModelKind::RbfKan, k, s});
                }
            }
            for (auto m : models) {
                for (auto s : seed_list) {
                    out.push_back({f, m, m == ModelKind::FastKanFixed ? KernelKind::GA : base.kernel, s});
                }
            }
        }
        return out;
    }

    ExperimentConfig cell_config(const MatrixCell &c) const
    {
        ExperimentConfig cfg = base;
        cfg.function = c.function;
        cfg.model = c.model;
        cfg.kernel = c.kernel;
        cfg.seed = c.seed;
        cfg.output_dir.clear();
        return cfg;
    }

    void validate() const
    {
        if (functions.empty() || (kernels.empty() && models.empty())) {
            throw DomainError("matrix spec is empty: need at least one function and one kernel or model");
        }
        for (const auto &c : cells()) {
            auto cfg = cell_config(c);
            cfg.validate();
        }
    }
};

inline MatrixSpec matrix_spec_from_json(const Json &j)
{
    MatrixSpec spec;
    ObjectReader r(j, "");
    if (const Json *s = r.member("schema")) {
        if (!s->is_string() || s->get<std::string>() != matrix_schema) {
            throw ConfigError("/schema: expected \"" + std::string(matrix_schema) + "\"");
        }
    }
    if (const Json *b = r.member("base")) {
        ObjectReader br(*b, "/base");
        detail::read_experiment_fields(br, spec.base, false);
        br.finish();
    }
    auto read_list = [&](const char *key, auto &out, auto parse, const std::string &choices) {
        const Json *v = r.member(key);
        if (v == nullptr) {
            return;
        }
        if (!v->is_array()) {
            throw ConfigError(r.child_path(key) + ": expected an array");
        }
        for (std::size_t i = 0; i < v->size(); ++i) {
            const auto p = r.child_path(key) + "/" + std::to_string(i);
            const auto name = ObjectReader::convert<std::string>((*v)[i], p);
            const auto parsed = parse(name);
            if (!parsed) {
                throw ConfigError(p + ": unknown value '" + name + "'; valid choices: " + choices);
            }
            out.push_back(*parsed);
        }
    };
    read_list("functions", spec.functions, [](const std::string &s) { return parse_function(s); }, "f1, f2, f3, f4");
    read_list("kernels", spec.kernels, [](const std::string &s) { return parse_kernel(s); }, kernel_choices());
    read_list("models", spec.models, [](const std::string &s) { return parse_model_kind(s); }, model_kind_choices());
    if (const Json *s = r.member("seeds")) {
        if (!s->is_array()) {
            throw ConfigError("/seeds: expected an array");
        }
        for (std::size_t i = 0; i < s->size(); ++i) {
            spec.seeds.push_back(ObjectReader::convert<std::uint64_t>((*s)[i], "/seeds/" + std::to_string(i)));
        }
    }
    r.get("output_dir", spec.output_dir);
    r.finish();
    return spec;
}

inline MatrixSpec load_matrix_spec(const std::filesystem::path &path)
{
    const std::string text = read_text_file(path);
    const Json j = parse_json_text(text, path.string());
    try {
        return matrix_spec_from_json(j);
    } catch (const ConfigError &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// One aggregated row per matrix cell.
struct MatrixRow
{
    MatrixCell cell;
    std::string run;
    std::vector<std::size_t> widths;
    std::optional<ExperimentReport> report; ///< absent when the cell failed before training
    std::string status;                     ///< ok, diverged or failed
    std::optional<std::string> error;

    std::optional<double> error_value() const
    {
        return report && report->ok() ? report->test_rel_l2 : std::nullopt;
    }
};

struct MatrixResult
{
    std::vector<MatrixRow> rows;
    std::filesystem::path directory;
};

namespace detail
{

inline std::string widths_label(const std::vector<std::size_t> &w)
{
    std::string s = "[";
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += (i ? "," : "") + std::to_string(w[i]);
    }
    return s + "]";
}

inline std::string csv_opt(const std::optional<double> &v) { return v ? format_double(*v) : std::string(); }

inline std::string quoted(const std::string &s) { return "\"" + s + "\""; }

inline std::optional<double> median(std::vector<double> v)
{
    if (v.empty()) {
        return std::nullopt;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline MatrixRow run_cell(const MatrixSpec &spec, const MatrixCell &cell, const std::filesystem::path &root)
{
    const auto cfg = spec.cell_config(cell);
    MatrixRow row{cell, cfg.run_name(), cfg.effective_widths(), std::nullopt, "failed", std::nullopt};
    try {
        auto out = run_experiment(cfg);
        write_artifacts(out, root / "cells" / row.run);
        row.status = out.report.status;
        row.error = out.report.error;
        row.report = std::move(out.report);
    } catch (const std::exception &e) {
        row.error = e.what();
    }
    return row;
}

} // namespace detail

/// Median test error of the adaptive cells of one (function, kernel), and the
/// best kernel of each function by that median.
struct KernelSummary
{
    TargetFunction function;
    KernelKind kernel;
    std::vector<std::size_t> widths;
    std::optional<double> h_init;
    std::optional<double> h_final;
    std::optional<double> rel_l2;
    double seconds = 0.0;
    std::size_t runs = 0;
    std::size_t failed = 0;
    bool best = false;
};

inline std::vector<KernelSummary> summarize_kernels(const MatrixSpec &spec, const std::vector<MatrixRow> &rows)
{
    std::vector<KernelSummary> out;
    for (auto f : spec.functions) {
        const std::size_t first = out.size();
        for (auto k : spec.kernels) {
            KernelSummary s{f, k, {}, {}, {}, {}, 0.0, 0, 0, false};
            std::vector<double> err;
            std::vector<double> h0;
            std::vector<double> h1;
            std::vector<double> secs;
            for (const auto &r : rows) {
                if (r.cell.function != f || r.cell.model != ModelKind::RbfKan || r.cell.kernel != k) {
                    continue;
                }
                s.widths = r.widths;
                ++s.runs;
                if (const auto e = r.error_value()) {
                    err.push_back(*e);
                    h0.push_back(r.report->h_init.value_or(0.0));
                    h1.push_back(r.report->h_final.value_or(0.0));
                    secs.push_back(r.report->loocv_seconds + r.report->train_seconds);
                } else {
                    ++s.failed;
                }
            }
            s.rel_l2 = detail::median(err);
            s.h_init = detail::median(h0);
            s.h_final = detail::median(h1);
            s.seconds = detail::median(secs).value_or(0.0);
            out.push_back(s);
        }
        std::optional<std::size_t> best;
        for (std::size_t i = first; i < out.size(); ++i) {
            if (out[i].rel_l2 && (!best || *out[i].rel_l2 < *out[*best].rel_l2)) {
                best = i;
            }
        }
        if (best) {
            out[*best].best = true;
        }
    }
    return out;
}

inline std::string matrix_rows_csv(const std::vector<MatrixRow> &rows)
{
    std::string out = csv_preamble("rbfkan.matrix_rows/1",
                                   "function,model,kernel,seed,architecture,h_init,h_final,test_rel_l2,epochs,"
                                   "loocv_seconds,train_seconds,status,error");
    for (const auto &r : rows) {
        const auto *rep = r.report ? &*r.report : nullptr;
        std::string err = r.error.value_or("");
        std::replace(err.begin(), err.end(), '"', '\'');
        out += std::string(function_name(r.cell.function)) + "," + model_kind_name(r.cell.model) + ","
               + (uses_kernel(r.cell.model) ? std::string(kernel_name(r.cell.kernel)) : std::string()) + ","
               + std::to_string(r.cell.seed) + "," + detail::quoted(detail::widths_label(r.widths)) + ","
               + detail::csv_opt(rep ? rep->h_init : std::nullopt) + ","
               + detail::csv_opt(rep ? rep->h_final : std::nullopt) + ","
               + detail::csv_opt(rep ? rep->test_rel_l2 : std::nullopt) + "," + std::to_string(rep ? rep->epochs : 0)
               + "," + (rep ? format_double(rep->loocv_seconds) : std::string()) + ","
               + (rep ? format_double(rep->train_seconds) : std::string()) + "," + r.status + ","
               + (err.empty() ? std::string() : detail::quoted(err)) + "\n";
    }
    return out;
}

/// One row per function and kernel with median values over
/// seeds; `best` is `*` on the lowest-error kernel of each function.
inline std::string kernel_table_csv(const std::vector<KernelSummary> &summary)
{
    std::string out = csv_preamble("rbfkan.kernel_table/1",
                                   "function,kernel,architecture,h_init,h_final,rel_l2,time_s,runs,failed,best");
    for (const auto &s : summary) {
        out += std::string(function_name(s.function)) + "," + std::string(kernel_name(s.kernel)) + ","
               + detail::quoted(detail::widths_label(s.widths)) + "," + detail::csv_opt(s.h_init) + ","
               + detail::csv_opt(s.h_final) + "," + detail::csv_opt(s.rel_l2) + "," + format_double(s.seconds) + ","
               + std::to_string(s.runs) + "," + std::to_string(s.failed) + "," + (s.best ? "*" : "") + "\n";
    }
    return out;
}

/// Per function, the median error of each baseline model
/// next to the best adaptive kernel.
inline std::string model_table_csv(const MatrixSpec &spec, const std::vector<MatrixRow> &rows,
                                   const std::vector<KernelSummary> &summary)
{
    std::string header = "function";
    for (auto m : spec.models) {
        header += "," + model_kind_name(m);
    }
    if (!spec.kernels.empty()) {
        header += ",adaptive,adaptive_kernel";
    }
    std::string out = csv_preamble("rbfkan.model_table/1", header);
    for (auto f : spec.functions) {
        out += std::string(function_name(f));
        for (auto m : spec.models) {
            std::vector<double> err;
            for (const auto &r : rows) {
                if (r.cell.function == f && r.cell.model == m) {
                    if (const auto e = r.error_value()) {
                        err.push_back(*e);
                    }
                }
            }
            out += "," + detail::csv_opt(detail::median(err));
        }
        if (!spec.kernels.empty()) {
            const KernelSummary *best = nullptr;
            for (const auto &s : summary) {
                if (s.function == f && s.best) {
                    best = &s;
                }
            }
            out += "," + (best ? detail::csv_opt(best->rel_l2) : std::string()) + ","
                   + (best ? std::string(kernel_name(best->kernel)) : std::string());
        }
        out += "\n";
    }
    return out;
}

inline Json matrix_report_json(const MatrixSpec &spec, const std::vector<MatrixRow> &rows,
                               const std::vector<KernelSummary> &summary)
{
    Json cells = Json::array();
    for (const auto &r : rows) {
        cells.push_back(Json{{"run", r.run},
                             {"function", std::string(function_name(r.cell.function))},
                             {"model", model_kind_name(r.cell.model)},
                             {"kernel", uses_kernel(r.cell.model) ? Json(std::string(kernel_name(r.cell.kernel))) : Json(nullptr)},
                             {"seed", r.cell.seed},
                             {"status", r.status},
                             {"error", detail::opt_string(r.error)},
                             {"report", r.report ? Json("cells/" + r.run + "/report.json") : Json(nullptr)},
                             {"h_init", json_optional(r.report ? r.report->h_init : std::nullopt)},
                             {"h_final", json_optional(r.report ? r.report->h_final : std::nullopt)},
                             {"test_rel_l2", json_optional(r.report ? r.report->test_rel_l2 : std::nullopt)}});
    }
    Json best = Json::object();
    for (const auto &s : summary) {
        if (s.best) {
            best[std::string(function_name(s.function))] = std::string(kernel_name(s.kernel));
        }
    }
    Json fns = Json::array();
    for (auto f : spec.functions) {
        fns.push_back(std::string(function_name(f)));
    }
    return Json{{"schema", matrix_report_schema},
                {"functions", fns},
                {"cell_count", rows.size()},
                {"failed_cells", std::count_if(rows.begin(), rows.end(), [](const MatrixRow &r) { return r.status != "ok"; })},
                {"best_kernel", best},
                {"base_config", to_json(spec.base)},
                {"cells", cells}};
}

/// Runs every cell (on `jobs` worker threads; cells are independent and write
/// to their own directories), then aggregates single-threaded into
/// matrix.json, matrix_rows.csv, kernel_table.csv and, when baselines are
/// present, model_table.csv. Failed cells become failed rows.
inline MatrixResult cmd_matrix(const MatrixSpec &spec, std::size_t jobs = 1)
{
    spec.validate();
    MatrixResult result;
    result.directory = spec.output_dir.empty() ? output_root() / "matrix" : std::filesystem::path(spec.output_dir);
    const auto cells = spec.cells();
    result.rows.resize(cells.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, cells.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            result.rows[i] = detail::run_cell(spec, cells[i], result.directory);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < cells.size(); i = next++) {
                    result.rows[i] = detail::run_cell(spec, cells[i], result.directory);
                }
            });
        }
    }
    const auto summary = summarize_kernels(spec, result.rows);
    write_text_file(result.directory / "matrix_rows.csv", matrix_rows_csv(result.rows));
    if (!spec.kernels.empty()) {
        write_text_file(result.directory / "kernel_table.csv", kernel_table_csv(summary));
    }
    if (!spec.models.empty()) {
        write_text_file(result.directory / "model_table.csv", model_table_csv(spec, result.rows, summary));
    }
    write_text_file(result.directory / "matrix.json", dump_json(matrix_report_json(spec, result.rows, summary)));
    return result;
}

} // namespace rbfkan

#endif
