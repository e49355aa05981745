#ifndef RBFKAN_KAN_CORE_HPP
#define RBFKAN_KAN_CORE_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbfkan/errors.hpp"
#include "rbfkan/kernels.hpp"
#include "rbfkan/layers.hpp"
#include "rbfkan/random.hpp"
#include "rbfkan/tensor.hpp"

namespace rbfkan
{

struct ModelConfig
{
    std::vector<std::size_t> widths = {2, 8, 1};
    KernelKind kernel = KernelKind::GA;
    std::size_t num_centers = 8;
    Range center_range{-2.0, 2.0};
    bool use_layernorm = true;
    bool use_residual = true;
    /// When set, the first layer maps this input box linearly onto the center range
    /// instead of layer-normalizing it.
    std::optional<Range> input_range = Range{0.0, 1.0};
    /// False freezes theta (fixed-shape FastKAN).
    bool learn_shape = true;
    std::uint64_t seed = 0;

    void validate() const
    {
        check_widths(widths, "ModelConfig");
        if (num_centers < 2) {
            throw DomainError("ModelConfig: need at least 2 centers");
        }
        if (!(center_range.lo < center_range.hi)) {
            throw DomainError("ModelConfig: center range must satisfy c_min < c_max");
        }
        if (input_range && !(input_range->lo < input_range->hi)) {
            throw DomainError("ModelConfig: input range must satisfy lo < hi");
        }
    }

    friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// Flat gradient, laid out exactly like the model's parameter vector.
using Gradients = std::vector<double>;

/// Everything the backward pass needs from one forward call.
struct RbfKanTrace
{
    struct Layer
    {
        Matrix input;      ///< pre-normalization activations, B x d_in
        Matrix normalized; ///< edge inputs z, B x d_in
        NormTrace norm;
        std::vector<double> phi;     ///< B x d_in x K kernel values
        std::vector<double> dphi_dz; ///< d phi / d z (signed)
        std::vector<double> dphi_dh;
        Matrix output; ///< B x d_out
    };
    std::vector<Layer> layers;
    Matrix outputs;
    double h = 0.0;
    std::size_t parameter_count = 0;
};

class RbfKanModel
{
public:
    struct Offsets
    {
        std::size_t coef;  ///< d_out x d_in x K
        std::size_t resid; ///< d_out x d_in
        std::size_t gain;  ///< d_in
        std::size_t bias;  ///< d_in
    };

    RbfKanModel() = default;

    explicit RbfKanModel(ModelConfig config) : config_(std::move(config))
    {
        config_.validate();
        const std::size_t k_centers = config_.num_centers;
        centers_.resize(k_centers);
        const Range cr = config_.center_range;
        for (std::size_t j = 0; j < k_centers; ++j) {
            centers_[j] = cr.lo + (cr.hi - cr.lo) * static_cast<double>(j) / static_cast<double>(k_centers - 1);
        }
        std::size_t off = 0;
        for (std::size_t k = 0; k + 1 < config_.widths.size(); ++k) {
            const std::size_t din = config_.widths[k];
            const std::size_t dout = config_.widths[k + 1];
            Offsets o{};
            o.coef = off;
            off += dout * din * k_centers;
            o.resid = off;
            off += dout * din;
            o.gain = off;
            off += din;
            o.bias = off;
            off += din;
            offsets_.push_back(o);
        }
        theta_index_ = off;
        params_.assign(off + 1, 0.0);
    }

    const ModelConfig &config() const noexcept { return config_; }
    std::size_t num_layers() const noexcept { return offsets_.size(); }
    std::size_t width(std::size_t k) const { return config_.widths.at(k); }
    std::span<const double> centers() const noexcept { return centers_; }
    const Offsets &offsets(std::size_t k) const { return offsets_.at(k); }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    double &coefficient(std::size_t k, std::size_t m, std::size_t n, std::size_t j)
    {
        return params_[coef_index(k, m, n, j)];
    }
    double coefficient(std::size_t k, std::size_t m, std::size_t n, std::size_t j) const
    {
        return params_[coef_index(k, m, n, j)];
    }
    double &residual_weight(std::size_t k, std::size_t m, std::size_t n)
    {
        return params_[offsets_.at(k).resid + m * width(k) + n];
    }
    double residual_weight(std::size_t k, std::size_t m, std::size_t n) const
    {
        return params_[offsets_.at(k).resid + m * width(k) + n];
    }
    double &layernorm_gain(std::size_t k, std::size_t n) { return params_[offsets_.at(k).gain + n]; }
    double &layernorm_bias(std::size_t k, std::size_t n) { return params_[offsets_.at(k).bias + n]; }

    std::size_t theta_index() const noexcept { return theta_index_; }
    double theta() const noexcept { return params_[theta_index_]; }
    void set_theta(double theta) noexcept { params_[theta_index_] = theta; }
    /// h = e^theta, positive for every finite theta.
    double shape() const noexcept { return std::exp(params_[theta_index_]); }
    std::optional<double> shape_parameter() const noexcept { return shape(); }

    NormSpec norm_spec(std::size_t k) const
    {
        return layer_norm_spec(k, config_.use_layernorm, config_.input_range, config_.center_range);
    }

    std::size_t coef_index(std::size_t k, std::size_t m, std::size_t n, std::size_t j) const
    {
        return offsets_.at(k).coef + (m * width(k) + n) * config_.num_centers + j;
    }

private:
    ModelConfig config_;
    std::vector<double> centers_;
    std::vector<Offsets> offsets_;
    std::vector<double> params_;
    std::size_t theta_index_ = 0;
};

/// Builds a model with theta = ln(h_init). Coefficients are N(0, 1/K) draws from
/// xoshiro256** seeded with config.seed, in storage order; residual weights and
/// layernorm gains start at 1, biases at 0.
inline RbfKanModel init_model(const ModelConfig &config, double h_init)
{
    if (!(h_init > 0.0) || !std::isfinite(h_init)) {
        throw DomainError("init_model: h_init must be positive and finite");
    }
    RbfKanModel model(config);
    Xoshiro256 rng(config.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.num_centers));
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
        const auto &o = model.offsets(k);
        auto p = model.parameters();
        for (std::size_t i = o.coef; i < o.resid; ++i) {
            p[i] = scale * rng.normal();
        }
        for (std::size_t i = o.resid; i < o.gain; ++i) {
            p[i] = 1.0;
        }
        for (std::size_t i = o.gain; i < o.bias; ++i) {
            p[i] = 1.0;
        }
    }
    model.set_theta(std::log(h_init));
    return model;
}

/// psi_{k,m,n}(x): the RBF expansion over the fixed centers plus, when enabled,
/// the w * SiLU(x) residual branch. `x` is the (already normalized) edge input.
inline double edge_eval(const RbfKanModel &model, std::size_t k, std::size_t m, std::size_t n, double x)
{
    if (k >= model.num_layers() || n >= model.width(k) || m >= model.width(k + 1)) {
        throw DomainError("edge_eval: index out of range");
    }
    const double h = model.shape();
    const auto kind = model.config().kernel;
    const auto c = model.centers();
    double acc = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
        acc += model.coefficient(k, m, n, j) * eval(kind, std::abs(x - c[j]), h);
    }
    if (model.config().use_residual) {
        acc += model.residual_weight(k, m, n) * silu(x);
    }
    return acc;
}

/// Forward pass into `tr`, reusing its buffers.
inline void forward(const RbfKanModel &model, const Matrix &inputs, RbfKanTrace &tr)
{
    const auto &cfg = model.config();
    check_batch(inputs, cfg.widths.front(), "forward");
    const std::size_t batch = inputs.rows();
    const std::size_t kc = cfg.num_centers;
    const auto centers = model.centers();
    const auto p = model.parameters();
    const double h = model.shape();
    if (!std::isfinite(h) || !(h > 0.0)) {
        throw NumericalDivergenceError("shape parameter left the representable range", -1, -1);
    }

    tr.h = h;
    tr.parameter_count = p.size();
    tr.layers.resize(model.num_layers());
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
        auto &L = tr.layers[k];
        const std::size_t din = cfg.widths[k];
        const std::size_t dout = cfg.widths[k + 1];
        const auto &o = model.offsets(k);
        L.input = k == 0 ? inputs : tr.layers[k - 1].output;
        norm_forward(model.norm_spec(k), L.input, p.subspan(o.gain, din), p.subspan(o.bias, din), L.normalized,
                     L.norm);
        const std::size_t width = din * kc;
        L.phi.resize(batch * width);
        L.dphi_dz.resize(batch * width);
        L.dphi_dh.resize(batch * width);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t n = 0; n < din; ++n) {
                const double z = L.normalized(b, n);
                for (std::size_t j = 0; j < kc; ++j) {
                    const double diff = z - centers[j];
                    const auto s = eval_all(cfg.kernel, std::abs(diff), h);
                    const std::size_t idx = b * width + n * kc + j;
                    L.phi[idx] = s.value;
                    L.dphi_dz[idx] = diff < 0.0 ? -s.d_dr : s.d_dr;
                    L.dphi_dh[idx] = s.d_dh;
                }
            }
        }
        Matrix &out = L.output;
        out.resize(batch, dout);
        const double *coef = p.data() + o.coef;
        const double *resid = p.data() + o.resid;
        for (std::size_t b = 0; b < batch; ++b) {
            const double *phi = L.phi.data() + b * width;
            for (std::size_t m = 0; m < dout; ++m) {
                const double *cm = coef + m * width;
                double acc = 0.0;
                for (std::size_t i = 0; i < width; ++i) {
                    acc += cm[i] * phi[i];
                }
                if (cfg.use_residual) {
                    for (std::size_t n = 0; n < din; ++n) {
                        acc += resid[m * din + n] * silu(L.normalized(b, n));
                    }
                }
                out(b, m) = acc;
            }
        }
        check_finite(out, static_cast<int>(k), "activation");
    }
    tr.outputs = tr.layers.back().output;
}

inline RbfKanTrace forward(const RbfKanModel &model, const Matrix &inputs)
{
    RbfKanTrace tr;
    forward(model, inputs, tr);
    return tr;
}

/// Exact gradient of sum_{b,m} output_grads(b,m) * outputs(b,m) with respect to
/// every parameter, theta included (d/d theta = h * d/dh).
inline Gradients backward(const RbfKanModel &model, const RbfKanTrace &trace, const Matrix &output_grads)
{
    const auto &cfg = model.config();
    const auto p = model.parameters();
    if (trace.layers.size() != model.num_layers() || trace.parameter_count != p.size()
        || output_grads.rows() != trace.outputs.rows() || output_grads.cols() != trace.outputs.cols()) {
        throw DomainError("backward: trace does not match model or output gradient shape");
    }
    Gradients grad(p.size(), 0.0);
    const std::size_t kc = cfg.num_centers;
    const std::size_t batch = output_grads.rows();
    const double h = trace.h;
    double dtheta = 0.0;

    Matrix g = output_grads;
    for (std::size_t kk = model.num_layers(); kk-- > 0;) {
        const auto &L = trace.layers[kk];
        const std::size_t din = cfg.widths[kk];
        const std::size_t dout = cfg.widths[kk + 1];
        const std::size_t width = din * kc;
        const auto &o = model.offsets(kk);
        const double *coef = p.data() + o.coef;
        const double *resid = p.data() + o.resid;
        double *gcoef = grad.data() + o.coef;
        double *gresid = grad.data() + o.resid;

        Matrix dz(batch, din);
        std::vector<double> gphi(width);
        for (std::size_t b = 0; b < batch; ++b) {
            const double *phi = L.phi.data() + b * width;
            const double *dpz = L.dphi_dz.data() + b * width;
            const double *dph = L.dphi_dh.data() + b * width;
            std::fill(gphi.begin(), gphi.end(), 0.0);
            for (std::size_t m = 0; m < dout; ++m) {
                const double gm = g(b, m);
                if (gm == 0.0) {
                    continue;
                }
                const double *cm = coef + m * width;
                double *gcm = gcoef + m * width;
                for (std::size_t i = 0; i < width; ++i) {
                    gcm[i] += gm * phi[i];
                    gphi[i] += gm * cm[i];
                }
            }
            for (std::size_t n = 0; n < din; ++n) {
                double acc = 0.0;
                for (std::size_t j = 0; j < kc; ++j) {
                    const std::size_t i = n * kc + j;
                    acc += gphi[i] * dpz[i];
                    dtheta += gphi[i] * dph[i];
                }
                if (cfg.use_residual) {
                    const double z = L.normalized(b, n);
                    const double sz = silu(z);
                    const double dsz = silu_grad(z);
                    for (std::size_t m = 0; m < dout; ++m) {
                        gresid[m * din + n] += g(b, m) * sz;
                        acc += g(b, m) * resid[m * din + n] * dsz;
                    }
                }
                dz(b, n) = acc;
            }
        }
        Matrix da;
        norm_backward(model.norm_spec(kk), dz, L.norm, p.subspan(o.gain, din),
                      std::span<double>(grad).subspan(o.gain, din), std::span<double>(grad).subspan(o.bias, din), da);
        g = std::move(da);
    }
    grad[model.theta_index()] = cfg.learn_shape ? h * dtheta : 0.0;
    for (double v : grad) {
        if (!std::isfinite(v)) {
            throw NumericalDivergenceError("non-finite gradient", -1, -1);
        }
    }
    return grad;
}

inline std::vector<double> predict(const RbfKanModel &model, const Matrix &inputs)
{
    auto tr = forward(model, inputs);
    const auto d = tr.outputs.data();
    return {d.begin(), d.end()};
}

} // namespace rbfkan

#endif
