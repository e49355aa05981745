#ifndef RBFKAN_SERIALIZATION_HPP
#define RBFKAN_SERIALIZATION_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"

#include "rbfkan/baselines.hpp"
#include "rbfkan/benchmarks.hpp"
#include "rbfkan/errors.hpp"
#include "rbfkan/kan_core.hpp"
#include "rbfkan/kernels.hpp"
#include "rbfkan/loocv.hpp"
#include "rbfkan/training.hpp"

namespace rbfkan
{

/// Insertion-ordered JSON so emitted files read top-down in a stable order.
using Json = nlohmann::ordered_json;

inline constexpr std::string_view model_schema = "rbfkan.model/1";
inline constexpr std::string_view loocv_schema = "rbfkan.loocv/1";
inline constexpr std::string_view history_schema = "rbfkan.history/1";
inline constexpr std::string_view curve_schema = "rbfkan.loocv_curve/1";
inline constexpr std::string_view surface_schema = "rbfkan.surface/1";
inline constexpr std::string_view dataset_schema = "rbfkan.dataset/1";
inline constexpr std::string_view predictions_schema = "rbfkan.predictions/1";

// ---------------------------------------------------------------------------
// Files and numbers
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("error while reading '" + path.string() + "'");
    }
    return ss.str();
}

inline void write_text_file(const std::filesystem::path &path, std::string_view content)
{
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
        throw IoError("error while writing '" + path.string() + "'");
    }
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
        return std::nullopt;
    }
    return v;
}

/// Finite doubles as numbers, everything else as null.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json json_optional(const std::optional<double> &v) { return v ? json_number(*v) : Json(nullptr); }

/// Line and column (1-based) of a byte offset into `text`.
inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset)
{
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Parses JSON text, turning syntax errors into ConfigError with line:column.
inline Json parse_json_text(std::string_view text, const std::string &source)
{
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        std::string msg = e.what();
        if (const auto pos = msg.find("syntax error"); pos != std::string::npos) {
            msg = msg.substr(pos);
        }
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }
}

inline std::string dump_json(const Json &j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Strict object reading
// ---------------------------------------------------------------------------

/// Reads the members of one JSON object, rejecting unknown keys and type
/// mismatches with the JSON-pointer path of the offending member.
class ObjectReader
{
public:
    ObjectReader(const Json &j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(where() + ": expected an object");
        }
    }

    bool has(const std::string &key) const { return j_.contains(key); }

    /// The raw member, or nullptr when absent. Marks the key as known.
    const Json *member(const std::string &key)
    {
        known_.push_back(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string child_path(const std::string &key) const { return path_ + "/" + key; }

    template <class T>
    void get(const std::string &key, T &out)
    {
        const Json *v = member(key);
        if (v == nullptr) {
            return;
        }
        out = convert<T>(*v, child_path(key));
    }

    template <class T>
    void get(const std::string &key, std::optional<T> &out)
    {
        const Json *v = member(key);
        if (v == nullptr) {
            return;
        }
        if (v->is_null()) {
            out.reset();
        } else {
            out = convert<T>(*v, child_path(key));
        }
    }

    template <class T>
    T require(const std::string &key)
    {
        const Json *v = member(key);
        if (v == nullptr) {
            throw ConfigError(where() + ": missing required key '" + key + "'");
        }
        return convert<T>(*v, child_path(key));
    }

    /// Throws on any member that no get/member call asked for.
    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(known_.begin(), known_.end(), it.key()) == known_.end()) {
                std::string valid;
                for (const auto &k : known_) {
                    valid += (valid.empty() ? "" : ", ") + k;
                }
                throw ConfigError(child_path(it.key()) + ": unknown key; valid keys are: " + valid);
            }
        }
    }

    template <class T>
    static T convert(const Json &v, const std::string &path);

private:
    std::string where() const { return path_.empty() ? "/" : path_; }

    const Json &j_;
    std::string path_;
    std::vector<std::string> known_;
};

template <class T>
T ObjectReader::convert(const Json &v, const std::string &path)
{
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) {
            throw ConfigError(path + ": expected true or false");
        }
        return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) {
            throw ConfigError(path + ": expected a string");
        }
        return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) {
            throw ConfigError(path + ": expected a number");
        }
        return v.get<T>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(path + ": expected a non-negative integer");
        }
        return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) {
            throw ConfigError(path + ": expected an integer");
        }
        return v.get<T>();
    } else if constexpr (std::is_same_v<T, Range>) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ConfigError(path + ": expected [lo, hi]");
        }
        return Range{v[0].get<double>(), v[1].get<double>()};
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
        if (!v.is_array()) {
            throw ConfigError(path + ": expected an array of integers");
        }
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(convert<std::size_t>(v[i], path + "/" + std::to_string(i)));
        }
        return out;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!v.is_array()) {
            throw ConfigError(path + ": expected an array of numbers");
        }
        std::vector<double> out;
        out.reserve(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(convert<double>(v[i], path + "/" + std::to_string(i)));
        }
        return out;
    } else if constexpr (std::is_same_v<T, KernelKind>) {
        if (!v.is_string()) {
            throw ConfigError(path + ": expected a kernel name (" + kernel_choices() + ")");
        }
        const auto k = parse_kernel(v.get<std::string>());
        if (!k) {
            throw ConfigError(path + ": unknown kernel '" + v.get<std::string>() + "'; valid choices: "
                              + kernel_choices());
        }
        return *k;
    } else if constexpr (std::is_same_v<T, TargetFunction>) {
        if (!v.is_string()) {
            throw ConfigError(path + ": expected a function id (f1, f2, f3, f4)");
        }
        const auto f = parse_function(v.get<std::string>());
        if (!f) {
            throw ConfigError(path + ": unknown function '" + v.get<std::string>() + "'; valid choices: f1, f2, f3, f4");
        }
        return *f;
    } else {
        static_assert(sizeof(T) == 0, "unsupported config value type");
    }
}

inline Json range_json(const Range &r) { return Json::array({r.lo, r.hi}); }

inline Json optional_range_json(const std::optional<Range> &r) { return r ? range_json(*r) : Json(nullptr); }

// ---------------------------------------------------------------------------
// Config blocks
// ---------------------------------------------------------------------------

inline Json to_json(const LoocvConfig &c)
{
    return Json{{"h_min", c.h_min},
                {"h_max", c.h_max},
                {"n_coarse", c.n_coarse},
                {"n_fine", c.n_fine},
                {"lambda", c.lambda},
                {"max_points", c.max_points},
                {"coordinate_index", c.coordinate_index}};
}

inline void read_into(ObjectReader &r, LoocvConfig &c)
{
    r.get("h_min", c.h_min);
    r.get("h_max", c.h_max);
    r.get("n_coarse", c.n_coarse);
    r.get("n_fine", c.n_fine);
    r.get("lambda", c.lambda);
    r.get("max_points", c.max_points);
    r.get("coordinate_index", c.coordinate_index);
    r.finish();
}

inline Json to_json(const TrainConfig &c)
{
    return Json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},         {"eval_every", c.eval_every},
                {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps}};
}

inline void read_into(ObjectReader &r, TrainConfig &c)
{
    r.get("learning_rate", c.learning_rate);
    r.get("epochs", c.epochs);
    r.get("eval_every", c.eval_every);
    r.get("adam_beta1", c.adam_beta1);
    r.get("adam_beta2", c.adam_beta2);
    r.get("adam_eps", c.adam_eps);
    r.finish();
}

inline Json to_json(const ModelConfig &c)
{
    return Json{{"widths", c.widths},
                {"kernel", std::string(kernel_name(c.kernel))},
                {"num_centers", c.num_centers},
                {"center_range", range_json(c.center_range)},
                {"use_layernorm", c.use_layernorm},
                {"use_residual", c.use_residual},
                {"input_range", optional_range_json(c.input_range)},
                {"learn_shape", c.learn_shape},
                {"seed", c.seed}};
}

inline void read_into(ObjectReader &r, ModelConfig &c)
{
    r.get("widths", c.widths);
    r.get("kernel", c.kernel);
    r.get("num_centers", c.num_centers);
    r.get("center_range", c.center_range);
    r.get("use_layernorm", c.use_layernorm);
    r.get("use_residual", c.use_residual);
    r.get("input_range", c.input_range);
    r.get("learn_shape", c.learn_shape);
    r.get("seed", c.seed);
    r.finish();
}

inline Json to_json(const SplineKanConfig &c)
{
    return Json{{"widths", c.widths},
                {"grid_intervals", c.grid_intervals},
                {"degree", c.degree},
                {"domain", range_json(c.domain)},
                {"use_layernorm", c.use_layernorm},
                {"use_residual", c.use_residual},
                {"input_range", optional_range_json(c.input_range)},
                {"seed", c.seed}};
}

inline void read_into(ObjectReader &r, SplineKanConfig &c)
{
    r.get("widths", c.widths);
    r.get("grid_intervals", c.grid_intervals);
    r.get("degree", c.degree);
    r.get("domain", c.domain);
    r.get("use_layernorm", c.use_layernorm);
    r.get("use_residual", c.use_residual);
    r.get("input_range", c.input_range);
    r.get("seed", c.seed);
    r.finish();
}

inline Json to_json(const ChebKanConfig &c)
{
    return Json{{"widths", c.widths},
                {"degree", c.degree},
                {"use_layernorm", c.use_layernorm},
                {"use_residual", c.use_residual},
                {"input_range", optional_range_json(c.input_range)},
                {"seed", c.seed}};
}

inline void read_into(ObjectReader &r, ChebKanConfig &c)
{
    r.get("widths", c.widths);
    r.get("degree", c.degree);
    r.get("use_layernorm", c.use_layernorm);
    r.get("use_residual", c.use_residual);
    r.get("input_range", c.input_range);
    r.get("seed", c.seed);
    r.finish();
}

inline Json to_json(const MlpConfig &c) { return Json{{"widths", c.widths}, {"seed", c.seed}}; }

inline void read_into(ObjectReader &r, MlpConfig &c)
{
    r.get("widths", c.widths);
    r.get("seed", c.seed);
    r.finish();
}

/// Parses a whole config block, rejecting unknown keys.
template <class Config>
Config config_from_json(const Json &j, const std::string &path)
{
    Config c{};
    ObjectReader r(j, path);
    read_into(r, c);
    return c;
}

// ---------------------------------------------------------------------------
// LOOCV results
// ---------------------------------------------------------------------------

inline Json to_json(const LoocvResult &r)
{
    Json curve = Json::array();
    for (const auto &p : r.curve) {
        curve.push_back(Json{{"h", p.h}, {"err", json_number(p.err)}, {"stage", p.stage}});
    }
    return Json{{"h_opt", r.h_opt},
                {"err_min", json_number(r.err_min)},
                {"stage2_halfwidth", r.stage2_halfwidth},
                {"curve", std::move(curve)}};
}

inline LoocvResult loocv_result_from_json(const Json &j, const std::string &path)
{
    LoocvResult out;
    ObjectReader r(j, path);
    out.h_opt = r.require<double>("h_opt");
    const Json *em = r.member("err_min");
    out.err_min = (em == nullptr || em->is_null()) ? std::numeric_limits<double>::infinity()
                                                  : ObjectReader::convert<double>(*em, path + "/err_min");
    r.get("stage2_halfwidth", out.stage2_halfwidth);
    if (const Json *curve = r.member("curve")) {
        if (!curve->is_array()) {
            throw ConfigError(path + "/curve: expected an array");
        }
        for (std::size_t i = 0; i < curve->size(); ++i) {
            const std::string p = path + "/curve/" + std::to_string(i);
            ObjectReader pr((*curve)[i], p);
            LoocvCurvePoint pt{};
            pt.h = pr.require<double>("h");
            const Json *e = pr.member("err");
            pt.err = (e == nullptr || e->is_null()) ? std::numeric_limits<double>::infinity()
                                                    : ObjectReader::convert<double>(*e, p + "/err");
            pt.stage = pr.require<int>("stage");
            pr.finish();
            out.curve.push_back(pt);
        }
    }
    r.finish();
    return out;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

using AnyModel = std::variant<RbfKanModel, SplineKanModel, ChebKanModel, MlpModel>;

inline std::string model_kind_name(const AnyModel &m)
{
    switch (m.index()) {
        case 0: return "rbf_kan";
        case 1: return "spline_kan";
        case 2: return "cheb_kan";
        default: return "mlp";
    }
}

inline std::vector<double> predict(const AnyModel &m, const Matrix &inputs)
{
    return std::visit([&](const auto &model) { return predict(model, inputs); }, m);
}

inline std::size_t input_width(const AnyModel &m)
{
    return std::visit([](const auto &model) { return model.config().widths.front(); }, m);
}

/// A named tensor stored contiguously in a model's flat parameter vector.
struct ParameterBlock
{
    std::string name;
    std::size_t offset;
    std::vector<std::size_t> shape;

    std::size_t size() const
    {
        std::size_t n = 1;
        for (auto d : shape) {
            n *= d;
        }
        return n;
    }
};

/// Coefficients (d_out x d_in x K), residual weights, norm gains and biases per
/// layer. Theta is not a block; it is stored separately.
inline std::vector<ParameterBlock> parameter_blocks(const RbfKanModel &m)
{
    std::vector<ParameterBlock> b;
    const auto &w = m.config().widths;
    for (std::size_t k = 0; k < m.num_layers(); ++k) {
        const auto &o = m.offsets(k);
        const std::string p = "layer" + std::to_string(k) + ".";
        b.push_back({p + "coefficients", o.coef, {w[k + 1], w[k], m.config().num_centers}});
        b.push_back({p + "residual_weights", o.resid, {w[k + 1], w[k]}});
        b.push_back({p + "norm_gain", o.gain, {w[k]}});
        b.push_back({p + "norm_bias", o.bias, {w[k]}});
    }
    return b;
}

template <class Config>
std::vector<ParameterBlock> parameter_blocks(const BasisKanModel<Config> &m)
{
    std::vector<ParameterBlock> b;
    const auto &w = m.config().widths;
    for (std::size_t k = 0; k < m.num_layers(); ++k) {
        const auto &o = m.offsets(k);
        const std::string p = "layer" + std::to_string(k) + ".";
        b.push_back({p + "coefficients", o.coef, {w[k + 1], w[k], m.basis().size()}});
        if (m.config().use_residual) {
            b.push_back({p + "residual_weights", o.resid, {w[k + 1], w[k]}});
        }
        b.push_back({p + "norm_gain", o.gain, {w[k]}});
        b.push_back({p + "norm_bias", o.bias, {w[k]}});
    }
    return b;
}

inline std::vector<ParameterBlock> parameter_blocks(const MlpModel &m)
{
    std::vector<ParameterBlock> b;
    const auto &w = m.config().widths;
    for (std::size_t k = 0; k < m.num_layers(); ++k) {
        const auto &o = m.offsets(k);
        const std::string p = "layer" + std::to_string(k) + ".";
        b.push_back({p + "weight", o.weight, {w[k + 1], w[k]}});
        b.push_back({p + "bias", o.bias, {w[k + 1]}});
    }
    return b;
}

/// Versioned model file: kind, full config, centers and theta (RBF-KAN) and
/// every parameter tensor with its shape. Doubles are written in shortest
/// round-trip form, so loading restores them exactly.
inline Json model_to_json(const AnyModel &any)
{
    return std::visit(
        [&](const auto &m) {
            using M = std::decay_t<decltype(m)>;
            Json tensors = Json::object();
            const auto p = m.parameters();
            for (const auto &blk : parameter_blocks(m)) {
                const auto first = p.begin() + static_cast<std::ptrdiff_t>(blk.offset);
                tensors[blk.name] = Json{{"shape", blk.shape},
                                         {"data", std::vector<double>(first, first + static_cast<std::ptrdiff_t>(blk.size()))}};
            }
            Json j{{"schema", model_schema}, {"kind", model_kind_name(any)}, {"config", to_json(m.config())}};
            if constexpr (std::is_same_v<M, RbfKanModel>) {
                const auto c = m.centers();
                j["centers"] = std::vector<double>(c.begin(), c.end());
                j["theta"] = m.theta();
                j["h"] = m.shape();
            }
            j["parameter_count"] = p.size();
            j["tensors"] = std::move(tensors);
            return j;
        },
        any);
}

namespace detail
{

template <class Model>
Model fill_model(Model model, const Json &tensors, const std::string &path)
{
    ObjectReader r(tensors, path);
    auto p = model.parameters();
    for (const auto &blk : parameter_blocks(model)) {
        const Json *t = r.member(blk.name);
        if (t == nullptr) {
            throw ConfigError(r.child_path(blk.name) + ": missing tensor");
        }
        ObjectReader tr(*t, r.child_path(blk.name));
        const auto shape = tr.require<std::vector<std::size_t>>("shape");
        const auto data = tr.require<std::vector<double>>("data");
        tr.finish();
        if (shape != blk.shape || data.size() != blk.size()) {
            throw ConfigError(r.child_path(blk.name) + ": shape or length does not match the config");
        }
        std::copy(data.begin(), data.end(), p.begin() + static_cast<std::ptrdiff_t>(blk.offset));
    }
    r.finish();
    return model;
}

} // namespace detail

inline AnyModel model_from_json(const Json &j)
{
    ObjectReader r(j, "");
    const auto schema = r.require<std::string>("schema");
    if (schema != model_schema) {
        throw ConfigError("/schema: unsupported model schema '" + schema + "' (expected '" + std::string(model_schema)
                          + "')");
    }
    const auto kind = r.require<std::string>("kind");
    const Json *config = r.member("config");
    const Json *tensors = r.member("tensors");
    const Json *centers = r.member("centers");
    const Json *theta = r.member("theta");
    r.member("h");
    r.member("parameter_count");
    r.finish();
    if (config == nullptr || tensors == nullptr) {
        throw ConfigError("model file needs 'config' and 'tensors'");
    }
    try {
        if (kind == "rbf_kan") {
            if (theta == nullptr) {
                throw ConfigError("/theta: missing");
            }
            auto m = detail::fill_model(RbfKanModel(config_from_json<ModelConfig>(*config, "/config")), *tensors,
                                        "/tensors");
            m.set_theta(ObjectReader::convert<double>(*theta, "/theta"));
            if (centers != nullptr) {
                const auto c = ObjectReader::convert<std::vector<double>>(*centers, "/centers");
                const auto expect = m.centers();
                if (!std::equal(c.begin(), c.end(), expect.begin(), expect.end())) {
                    throw ConfigError("/centers: do not match the configured center grid");
                }
            }
            return m;
        }
        if (kind == "spline_kan") {
            return detail::fill_model(SplineKanModel(config_from_json<SplineKanConfig>(*config, "/config")), *tensors,
                                      "/tensors");
        }
        if (kind == "cheb_kan") {
            return detail::fill_model(ChebKanModel(config_from_json<ChebKanConfig>(*config, "/config")), *tensors,
                                      "/tensors");
        }
        if (kind == "mlp") {
            return detail::fill_model(MlpModel(config_from_json<MlpConfig>(*config, "/config")), *tensors, "/tensors");
        }
    } catch (const DomainError &e) {
        throw ConfigError(std::string("model file: invalid config: ") + e.what());
    }
    throw ConfigError("/kind: unknown model kind '" + kind + "'; valid choices: rbf_kan, spline_kan, cheb_kan, mlp");
}

inline void save_model(const std::filesystem::path &path, const AnyModel &model)
{
    write_text_file(path, dump_json(model_to_json(model)));
}

inline AnyModel load_model(const std::filesystem::path &path)
{
    const std::string text = read_text_file(path);
    try {
        return model_from_json(parse_json_text(text, path.string()));
    } catch (const ConfigError &e) {
        const std::string msg = e.what();
        throw ConfigError(msg.rfind(path.string(), 0) == 0 ? msg : path.string() + ": " + msg);
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Emitted CSVs start with one `# schema: <id>` comment line, then a header.
inline std::string csv_preamble(std::string_view schema, std::string_view header)
{
    return "# schema: " + std::string(schema) + "\n" + std::string(header) + "\n";
}

inline std::string history_to_csv(const TrainRecord &record)
{
    std::string out = csv_preamble(history_schema, "epoch,train_mse,test_rel_l2,h");
    for (const auto &e : record.entries) {
        out += std::to_string(e.epoch) + "," + format_double(e.train_mse) + "," + format_double(e.test_rel_l2) + ","
               + (e.h ? format_double(*e.h) : std::string()) + "\n";
    }
    return out;
}

inline std::string curve_to_csv(const LoocvResult &result)
{
    std::string out = csv_preamble(curve_schema, "h,err,stage");
    for (const auto &p : result.curve) {
        out += format_double(p.h) + "," + format_double(p.err) + "," + std::to_string(p.stage) + "\n";
    }
    return out;
}

inline std::string surface_to_csv(const SurfaceGrid &grid)
{
    std::string out = csv_preamble(surface_schema, "x,y,z_pred,z_true");
    for (std::size_t i = 0; i < grid.x.size(); ++i) {
        out += format_double(grid.x[i]) + "," + format_double(grid.y[i]) + "," + format_double(grid.predicted[i]) + ","
               + format_double(grid.truth[i]) + "\n";
    }
    return out;
}

/// One row per sample in generation order; `split` is train/test and
/// `position` the sample's index within that split's (shuffled) order.
inline std::string dataset_to_csv(const Dataset &ds)
{
    std::string out = "# schema: " + std::string(dataset_schema) + " function=" + std::string(function_name(ds.function))
                      + " seed=" + std::to_string(ds.seed) + "\nindex,x,y,target,split,position\n";
    const std::size_t n = ds.targets.size();
    std::vector<std::pair<const char *, std::size_t>> where(n, {"", 0});
    for (std::size_t i = 0; i < ds.train_idx.size(); ++i) {
        where[ds.train_idx[i]] = {"train", i};
    }
    for (std::size_t i = 0; i < ds.test_idx.size(); ++i) {
        where[ds.test_idx[i]] = {"test", i};
    }
    for (std::size_t i = 0; i < n; ++i) {
        out += std::to_string(i) + "," + format_double(ds.inputs(i, 0)) + "," + format_double(ds.inputs(i, 1)) + ","
               + format_double(ds.targets[i]) + "," + where[i].first + "," + std::to_string(where[i].second) + "\n";
    }
    return out;
}

/// Rows of comma-separated fields with comment lines and blank lines dropped.
struct CsvTable
{
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; ///< source line of each row

    std::optional<std::size_t> column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    }
};

/// Splits one CSV line. Fields may be double-quoted, with "" standing for a
/// literal quote; unquoted fields are trimmed of surrounding blanks.
inline std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (true) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
            ++i;
        }
        std::string field;
        if (i < line.size() && line[i] == '"') {
            ++i;
            while (i < line.size()) {
                if (line[i] == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        field += '"';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                field += line[i++];
            }
            while (i < line.size() && line[i] != ',') {
                ++i;
            }
        } else {
            const auto comma = line.find(',', i);
            std::string_view raw = line.substr(i, comma == std::string_view::npos ? line.npos : comma - i);
            while (!raw.empty() && (raw.back() == ' ' || raw.back() == '\t' || raw.back() == '\r')) {
                raw.remove_suffix(1);
            }
            field = raw;
            i = comma == std::string_view::npos ? line.size() : comma;
        }
        out.push_back(std::move(field));
        if (i >= line.size()) {
            break;
        }
        ++i; // past the comma
    }
    return out;
}

/// Parses CSV text. When `expect_header` is true the first data line is the header.
inline CsvTable parse_csv(std::string_view text, bool expect_header)
{
    CsvTable t;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        if (line.front() == '#') {
            t.comments.emplace_back(line.substr(1));
            continue;
        }
        auto fields = split_csv_line(line);
        if (expect_header && t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    return t;
}

namespace detail
{

inline double csv_number(const CsvTable &t, std::size_t row, std::size_t col, const std::string &source)
{
    const auto &fields = t.rows[row];
    if (col >= fields.size()) {
        throw ConfigError(source + ":" + std::to_string(t.line_numbers[row]) + ": expected at least "
                          + std::to_string(col + 1) + " fields");
    }
    const auto v = parse_double(fields[col]);
    if (!v) {
        throw ConfigError(source + ":" + std::to_string(t.line_numbers[row]) + ": '" + fields[col]
                          + "' is not a number");
    }
    return *v;
}

inline bool looks_numeric(const std::vector<std::string> &fields)
{
    return !fields.empty() && parse_double(fields.front()).has_value();
}

} // namespace detail

/// Points for evaluation or LOOCV. With a header, `x`/`y` (and optionally
/// `target` or `z`) columns are used; without one, columns are taken in order.
struct PointSet
{
    Matrix inputs;
    std::optional<std::vector<double>> targets;
};

inline PointSet parse_points_csv(std::string_view text, std::size_t dims, const std::string &source)
{
    CsvTable t = parse_csv(text, false);
    if (!t.rows.empty() && !detail::looks_numeric(t.rows.front())) {
        t.header = t.rows.front();
        t.rows.erase(t.rows.begin());
        t.line_numbers.erase(t.line_numbers.begin());
    }
    if (t.rows.empty()) {
        throw ConfigError(source + ": no data rows");
    }
    std::vector<std::size_t> in_cols;
    std::optional<std::size_t> target_col;
    if (!t.header.empty()) {
        static constexpr const char *names[] = {"x", "y"};
        for (std::size_t d = 0; d < dims; ++d) {
            const auto c = d < 2 ? t.column(names[d]) : std::nullopt;
            if (!c) {
                throw ConfigError(source + ": header lacks column '" + (d < 2 ? names[d] : "?") + "'");
            }
            in_cols.push_back(*c);
        }
        target_col = t.column("target");
        if (!target_col) {
            target_col = t.column("z");
        }
        if (!target_col) {
            target_col = t.column("z_true");
        }
    } else {
        for (std::size_t d = 0; d < dims; ++d) {
            in_cols.push_back(d);
        }
        if (t.rows.front().size() > dims) {
            target_col = dims;
        }
    }
    PointSet ps;
    ps.inputs = Matrix(t.rows.size(), dims);
    if (target_col) {
        ps.targets.emplace(t.rows.size());
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t d = 0; d < dims; ++d) {
            ps.inputs(r, d) = detail::csv_number(t, r, in_cols[d], source);
        }
        if (target_col) {
            (*ps.targets)[r] = detail::csv_number(t, r, *target_col, source);
        }
    }
    return ps;
}

inline Dataset dataset_from_csv(std::string_view text, const std::string &source)
{
    const CsvTable t = parse_csv(text, true);
    Dataset ds;
    bool saw_schema = false;
    for (const auto &c : t.comments) {
        std::istringstream ss(c);
        std::string tok;
        while (ss >> tok) {
            if (tok == "schema:") {
                std::string id;
                ss >> id;
                if (id != dataset_schema) {
                    throw ConfigError(source + ": unsupported dataset schema '" + id + "'");
                }
                saw_schema = true;
            } else if (tok.rfind("function=", 0) == 0) {
                const auto f = parse_function(tok.substr(9));
                if (!f) {
                    throw ConfigError(source + ": unknown function '" + tok.substr(9) + "'");
                }
                ds.function = *f;
            } else if (tok.rfind("seed=", 0) == 0) {
                ds.seed = std::stoull(tok.substr(5));
            }
        }
    }
    if (!saw_schema) {
        throw ConfigError(source + ": missing '# schema: " + std::string(dataset_schema) + "' line");
    }
    const char *cols[] = {"index", "x", "y", "target", "split", "position"};
    std::size_t idx[6];
    for (std::size_t i = 0; i < 6; ++i) {
        const auto c = t.column(cols[i]);
        if (!c) {
            throw ConfigError(source + ": header lacks column '" + cols[i] + "'");
        }
        idx[i] = *c;
    }
    const std::size_t n = t.rows.size();
    ds.inputs = Matrix(n, 2);
    ds.targets.assign(n, 0.0);
    std::vector<std::pair<std::size_t, std::size_t>> train;
    std::vector<std::pair<std::size_t, std::size_t>> test;
    std::vector<bool> seen(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        const double index_d = detail::csv_number(t, r, idx[0], source);
        const auto i = static_cast<std::size_t>(index_d);
        if (index_d < 0 || static_cast<double>(i) != index_d || i >= n || seen[i]) {
            throw ConfigError(source + ":" + std::to_string(t.line_numbers[r]) + ": bad or repeated index");
        }
        seen[i] = true;
        ds.inputs(i, 0) = detail::csv_number(t, r, idx[1], source);
        ds.inputs(i, 1) = detail::csv_number(t, r, idx[2], source);
        ds.targets[i] = detail::csv_number(t, r, idx[3], source);
        const auto pos = static_cast<std::size_t>(detail::csv_number(t, r, idx[5], source));
        const std::string &split = t.rows[r].at(idx[4]);
        if (split == "train") {
            train.emplace_back(pos, i);
        } else if (split == "test") {
            test.emplace_back(pos, i);
        } else {
            throw ConfigError(source + ":" + std::to_string(t.line_numbers[r]) + ": split must be train or test");
        }
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    for (const auto &[p, i] : train) {
        ds.train_idx.push_back(i);
    }
    for (const auto &[p, i] : test) {
        ds.test_idx.push_back(i);
    }
    return ds;
}

inline std::string predictions_to_csv(const Matrix &inputs, std::span<const double> predictions,
                                      const std::optional<std::vector<double>> &targets)
{
    std::string header;
    for (std::size_t d = 0; d < inputs.cols(); ++d) {
        header += (d == 0 ? "" : ",") + (d == 0 ? std::string("x") : d == 1 ? std::string("y") : "x" + std::to_string(d));
    }
    header += targets ? ",z_pred,z_true" : ",z_pred";
    std::string out = csv_preamble(predictions_schema, header);
    for (std::size_t r = 0; r < inputs.rows(); ++r) {
        for (std::size_t d = 0; d < inputs.cols(); ++d) {
            out += format_double(inputs(r, d)) + ",";
        }
        out += format_double(predictions[r]);
        if (targets) {
            out += "," + format_double((*targets)[r]);
        }
        out += "\n";
    }
    return out;
}

} // namespace rbfkan

#endif
