#ifndef RBFKAN_BASELINES_HPP
#define RBFKAN_BASELINES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbfkan/errors.hpp"
#include "rbfkan/kan_core.hpp"
#include "rbfkan/layers.hpp"
#include "rbfkan/random.hpp"
#include "rbfkan/tensor.hpp"

namespace rbfkan
{

// ---------------------------------------------------------------------------
// B-spline basis

/// Clamped uniform knot vector: `degree + 1` copies of each end, `intervals`
/// equal spans in between.
inline std::vector<double> clamped_knots(std::size_t intervals, std::size_t degree, Range domain)
{
    std::vector<double> t;
    t.reserve(intervals + 2 * degree + 1);
    for (std::size_t i = 0; i < degree; ++i) {
        t.push_back(domain.lo);
    }
    for (std::size_t i = 0; i <= intervals; ++i) {
        t.push_back(domain.lo + (domain.hi - domain.lo) * static_cast<double>(i) / static_cast<double>(intervals));
    }
    for (std::size_t i = 0; i < degree; ++i) {
        t.push_back(domain.hi);
    }
    return t;
}

namespace detail
{

// Index of the last non-degenerate span; x == knots.back() belongs to it.
inline std::size_t last_span(std::span<const double> knots)
{
    std::size_t s = knots.size() - 2;
    while (s > 0 && !(knots[s] < knots[s + 1])) {
        --s;
    }
    return s;
}

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

} // namespace detail

/// B_{j,degree}(x) by the Cox-de Boor recursion. Degree-0 pieces are half-open
/// [t_j, t_{j+1}) except that the right end of the knot vector closes the last
/// non-empty span. Outside [t_0, t_last] every basis function is 0.
inline double bspline_basis(double x, std::span<const double> knots, std::size_t j, std::size_t degree)
{
    if (knots.size() < degree + 2 || j + degree + 1 >= knots.size()) {
        throw DomainError("bspline_basis: index out of range for knot vector");
    }
    if (degree == 0) {
        if (knots[j] <= x && x < knots[j + 1]) {
            return 1.0;
        }
        return (x == knots.back() && j == detail::last_span(knots)) ? 1.0 : 0.0;
    }
    const double left = detail::safe_ratio(x - knots[j], knots[j + degree] - knots[j]);
    const double right = detail::safe_ratio(knots[j + degree + 1] - x, knots[j + degree + 1] - knots[j + 1]);
    double v = 0.0;
    if (left != 0.0) {
        v += left * bspline_basis(x, knots, j, degree - 1);
    }
    if (right != 0.0) {
        v += right * bspline_basis(x, knots, j + 1, degree - 1);
    }
    return v;
}

/// All degree-J basis values and x-derivatives at once (bottom-up Cox-de Boor).
/// `values` and `derivs` must hold knots.size() - degree - 1 entries.
inline void bspline_all(double x, std::span<const double> knots, std::size_t degree, std::span<double> values,
                        std::span<double> derivs)
{
    const std::size_t m = knots.size();
    const std::size_t nb = m - degree - 1;
    double buf[64];
    double prev[64];
    if (m - 1 > 64) {
        throw DomainError("bspline_all: knot vector too long");
    }
    const std::size_t last = detail::last_span(knots);
    for (std::size_t j = 0; j + 1 < m; ++j) {
        buf[j] = ((knots[j] <= x && x < knots[j + 1]) || (x == knots.back() && j == last)) ? 1.0 : 0.0;
    }
    for (std::size_t p = 1; p <= degree; ++p) {
        std::copy(buf, buf + (m - p), prev);
        for (std::size_t j = 0; j + p + 1 < m; ++j) {
            double v = 0.0;
            const double dl = knots[j + p] - knots[j];
            const double dr = knots[j + p + 1] - knots[j + 1];
            if (dl > 0.0) {
                v += (x - knots[j]) / dl * prev[j];
            }
            if (dr > 0.0) {
                v += (knots[j + p + 1] - x) / dr * prev[j + 1];
            }
            buf[j] = v;
        }
    }
    for (std::size_t j = 0; j < nb; ++j) {
        values[j] = buf[j];
    }
    if (degree == 0) {
        std::fill(derivs.begin(), derivs.begin() + static_cast<std::ptrdiff_t>(nb), 0.0);
        return;
    }
    // prev holds the degree-1 lower basis.
    const double p = static_cast<double>(degree);
    for (std::size_t j = 0; j < nb; ++j) {
        derivs[j] = p * (detail::safe_ratio(prev[j], knots[j + degree] - knots[j])
                         - detail::safe_ratio(prev[j + 1], knots[j + degree + 1] - knots[j + 1]));
    }
}

/// Spline edge basis on a clamped grid. Inputs outside the domain are clamped
/// to it, so the basis part is constant there.
struct SplineBasis
{
    std::vector<double> knots;
    std::size_t degree = 3;
    Range domain{-1.0, 1.0};

    std::size_t size() const noexcept { return knots.size() - degree - 1; }

    void eval(double z, std::span<double> v, std::span<double> dv) const
    {
        if (z < domain.lo || z > domain.hi) {
            bspline_all(std::clamp(z, domain.lo, domain.hi), knots, degree, v, dv);
            std::fill(dv.begin(), dv.begin() + static_cast<std::ptrdiff_t>(size()), 0.0);
            return;
        }
        bspline_all(z, knots, degree, v, dv);
    }
};

// ---------------------------------------------------------------------------
// Chebyshev basis

inline double chebyshev_trig(std::size_t j, double t) { return std::cos(static_cast<double>(j) * std::acos(t)); }

/// T_0..T_P at t via T_{j+1} = 2 t T_j - T_{j-1}, with dT_j/dt alongside.
inline void chebyshev_all(double t, std::size_t degree, std::span<double> v, std::span<double> dv)
{
    v[0] = 1.0;
    dv[0] = 0.0;
    if (degree == 0) {
        return;
    }
    v[1] = t;
    dv[1] = 1.0;
    for (std::size_t j = 1; j < degree; ++j) {
        v[j + 1] = 2.0 * t * v[j] - v[j - 1];
        dv[j + 1] = 2.0 * v[j] + 2.0 * t * dv[j] - dv[j - 1];
    }
}

/// Chebyshev edge basis applied to tanh(z), which keeps arguments in (-1, 1).
struct ChebBasis
{
    std::size_t degree = 4;

    std::size_t size() const noexcept { return degree + 1; }

    void eval(double z, std::span<double> v, std::span<double> dv) const
    {
        const double t = std::tanh(z);
        chebyshev_all(t, degree, v, dv);
        const double dt = 1.0 - t * t;
        for (std::size_t j = 0; j < size(); ++j) {
            dv[j] *= dt;
        }
    }
};

// ---------------------------------------------------------------------------
// Basis-expansion KAN shared by the spline and Chebyshev baselines

struct SplineKanConfig
{
    std::vector<std::size_t> widths = {2, 5, 5, 1};
    std::size_t grid_intervals = 5;
    std::size_t degree = 3;
    Range domain{-1.0, 1.0};
    bool use_layernorm = true;
    bool use_residual = true;
    std::optional<Range> input_range = Range{0.0, 1.0};
    std::uint64_t seed = 0;

    void validate() const
    {
        check_widths(widths, "SplineKanConfig");
        if (grid_intervals < 1 || degree > 8 || grid_intervals + 2 * degree + 1 > 64) {
            throw DomainError("SplineKanConfig: unsupported grid size or degree");
        }
        if (!(domain.lo < domain.hi)) {
            throw DomainError("SplineKanConfig: empty spline domain");
        }
    }
    SplineBasis make_basis() const { return {clamped_knots(grid_intervals, degree, domain), degree, domain}; }
    Range edge_domain() const { return domain; }
    double init_scale(std::size_t /*din*/, std::size_t nb) const { return 1.0 / std::sqrt(static_cast<double>(nb)); }

    friend bool operator==(const SplineKanConfig &, const SplineKanConfig &) = default;
};

struct ChebKanConfig
{
    std::vector<std::size_t> widths = {2, 8, 1};
    std::size_t degree = 4;
    bool use_layernorm = true;
    bool use_residual = false;
    std::optional<Range> input_range = Range{0.0, 1.0};
    std::uint64_t seed = 0;

    void validate() const { check_widths(widths, "ChebKanConfig"); }
    ChebBasis make_basis() const { return {degree}; }
    Range edge_domain() const { return {-1.0, 1.0}; }
    double init_scale(std::size_t din, std::size_t nb) const { return 1.0 / static_cast<double>(din * nb); }

    friend bool operator==(const ChebKanConfig &, const ChebKanConfig &) = default;
};

struct BasisKanTrace
{
    struct Layer
    {
        Matrix input;
        Matrix normalized;
        NormTrace norm;
        std::vector<double> basis;  ///< B x d_in x nb
        std::vector<double> dbasis; ///< d basis / d z
        Matrix output;
    };
    std::vector<Layer> layers;
    Matrix outputs;
    std::size_t parameter_count = 0;
};

/// KAN whose edges are psi(z) = sum_j c_j basis_j(z) (+ w SiLU(z)).
template <class Config>
class BasisKanModel
{
public:
    using Basis = decltype(std::declval<const Config &>().make_basis());

    struct Offsets
    {
        std::size_t coef;
        std::size_t resid;
        std::size_t gain;
        std::size_t bias;
    };

    BasisKanModel() = default;

    explicit BasisKanModel(Config config) : config_(std::move(config))
    {
        config_.validate();
        basis_ = config_.make_basis();
        const std::size_t nb = basis_.size();
        std::size_t off = 0;
        for (std::size_t k = 0; k + 1 < config_.widths.size(); ++k) {
            const std::size_t din = config_.widths[k];
            const std::size_t dout = config_.widths[k + 1];
            Offsets o{};
            o.coef = off;
            off += dout * din * nb;
            o.resid = off;
            off += config_.use_residual ? dout * din : 0;
            o.gain = off;
            off += din;
            o.bias = off;
            off += din;
            offsets_.push_back(o);
        }
        params_.assign(off, 0.0);
    }

    /// Seeded N(0, init_scale^2) coefficients; residual weights and gains 1.
    static BasisKanModel initialized(const Config &config)
    {
        BasisKanModel model(config);
        Xoshiro256 rng(config.seed);
        const std::size_t nb = model.basis_.size();
        for (std::size_t k = 0; k < model.num_layers(); ++k) {
            const auto &o = model.offsets_[k];
            const double scale = config.init_scale(config.widths[k], nb);
            for (std::size_t i = o.coef; i < o.resid; ++i) {
                model.params_[i] = scale * rng.normal();
            }
            for (std::size_t i = o.resid; i < o.bias; ++i) {
                model.params_[i] = 1.0;
            }
        }
        return model;
    }

    const Config &config() const noexcept { return config_; }
    const Basis &basis() const noexcept { return basis_; }
    std::size_t num_layers() const noexcept { return offsets_.size(); }
    const Offsets &offsets(std::size_t k) const { return offsets_.at(k); }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::optional<double> shape_parameter() const noexcept { return std::nullopt; }

    double &coefficient(std::size_t k, std::size_t m, std::size_t n, std::size_t j)
    {
        return params_[offsets_.at(k).coef + (m * config_.widths[k] + n) * basis_.size() + j];
    }

    NormSpec norm_spec(std::size_t k) const
    {
        return layer_norm_spec(k, config_.use_layernorm, config_.input_range, config_.edge_domain());
    }

private:
    Config config_;
    Basis basis_;
    std::vector<Offsets> offsets_;
    std::vector<double> params_;
};

using SplineKanModel = BasisKanModel<SplineKanConfig>;
using ChebKanModel = BasisKanModel<ChebKanConfig>;

template <class Config>
void forward(const BasisKanModel<Config> &model, const Matrix &inputs, BasisKanTrace &tr)
{
    const auto &cfg = model.config();
    check_batch(inputs, cfg.widths.front(), "forward");
    const std::size_t batch = inputs.rows();
    const std::size_t nb = model.basis().size();
    const auto p = model.parameters();
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
        const std::size_t width = din * nb;
        L.basis.resize(batch * width);
        L.dbasis.resize(batch * width);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t n = 0; n < din; ++n) {
                const std::size_t at = b * width + n * nb;
                model.basis().eval(L.normalized(b, n), std::span<double>(L.basis).subspan(at, nb),
                                   std::span<double>(L.dbasis).subspan(at, nb));
            }
        }
        Matrix &out = L.output;
        out.resize(batch, dout);
        const double *coef = p.data() + o.coef;
        const double *resid = p.data() + o.resid;
        for (std::size_t b = 0; b < batch; ++b) {
            const double *phi = L.basis.data() + b * width;
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

template <class Config>
BasisKanTrace forward(const BasisKanModel<Config> &model, const Matrix &inputs)
{
    BasisKanTrace tr;
    forward(model, inputs, tr);
    return tr;
}

template <class Config>
Gradients backward(const BasisKanModel<Config> &model, const BasisKanTrace &trace, const Matrix &output_grads)
{
    const auto &cfg = model.config();
    const auto p = model.parameters();
    if (trace.layers.size() != model.num_layers() || trace.parameter_count != p.size()
        || output_grads.rows() != trace.outputs.rows() || output_grads.cols() != trace.outputs.cols()) {
        throw DomainError("backward: trace does not match model or output gradient shape");
    }
    Gradients grad(p.size(), 0.0);
    const std::size_t nb = model.basis().size();
    const std::size_t batch = output_grads.rows();
    Matrix g = output_grads;
    for (std::size_t kk = model.num_layers(); kk-- > 0;) {
        const auto &L = trace.layers[kk];
        const std::size_t din = cfg.widths[kk];
        const std::size_t dout = cfg.widths[kk + 1];
        const std::size_t width = din * nb;
        const auto &o = model.offsets(kk);
        const double *coef = p.data() + o.coef;
        const double *resid = p.data() + o.resid;
        double *gcoef = grad.data() + o.coef;
        double *gresid = grad.data() + o.resid;
        Matrix dz(batch, din);
        std::vector<double> gphi(width);
        for (std::size_t b = 0; b < batch; ++b) {
            const double *phi = L.basis.data() + b * width;
            const double *dphi = L.dbasis.data() + b * width;
            std::fill(gphi.begin(), gphi.end(), 0.0);
            for (std::size_t m = 0; m < dout; ++m) {
                const double gm = g(b, m);
                const double *cm = coef + m * width;
                double *gcm = gcoef + m * width;
                for (std::size_t i = 0; i < width; ++i) {
                    gcm[i] += gm * phi[i];
                    gphi[i] += gm * cm[i];
                }
            }
            for (std::size_t n = 0; n < din; ++n) {
                double acc = 0.0;
                for (std::size_t j = 0; j < nb; ++j) {
                    acc += gphi[n * nb + j] * dphi[n * nb + j];
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
    for (double v : grad) {
        if (!std::isfinite(v)) {
            throw NumericalDivergenceError("non-finite gradient", -1, -1);
        }
    }
    return grad;
}

template <class Config>
std::vector<double> predict(const BasisKanModel<Config> &model, const Matrix &inputs)
{
    auto tr = forward(model, inputs);
    const auto d = tr.outputs.data();
    return {d.begin(), d.end()};
}

// ---------------------------------------------------------------------------
// MLP

struct MlpConfig
{
    std::vector<std::size_t> widths = {2, 128, 128, 128, 1};
    std::uint64_t seed = 0;

    void validate() const { check_widths(widths, "MlpConfig"); }

    friend bool operator==(const MlpConfig &, const MlpConfig &) = default;
};

struct MlpTrace
{
    std::vector<Matrix> activations; ///< A_0 = inputs, A_k = relu(Z_{k-1}), k < L
    std::vector<Matrix> preacts;     ///< Z_k = A_k W_k^T + b_k
    Matrix outputs;
    std::size_t parameter_count = 0;
};

/// Affine layers with ReLU between them; no activation after the last layer.
class MlpModel
{
public:
    struct Offsets
    {
        std::size_t weight; ///< d_out x d_in
        std::size_t bias;   ///< d_out
    };

    MlpModel() = default;

    explicit MlpModel(MlpConfig config) : config_(std::move(config))
    {
        config_.validate();
        std::size_t off = 0;
        for (std::size_t k = 0; k + 1 < config_.widths.size(); ++k) {
            offsets_.push_back({off, off + config_.widths[k] * config_.widths[k + 1]});
            off += (config_.widths[k] + 1) * config_.widths[k + 1];
        }
        params_.assign(off, 0.0);
    }

    /// He-normal weights N(0, 2 / fan_in), zero biases.
    static MlpModel initialized(const MlpConfig &config)
    {
        MlpModel model(config);
        Xoshiro256 rng(config.seed);
        for (std::size_t k = 0; k < model.num_layers(); ++k) {
            const double scale = std::sqrt(2.0 / static_cast<double>(config.widths[k]));
            const auto &o = model.offsets_[k];
            for (std::size_t i = o.weight; i < o.bias; ++i) {
                model.params_[i] = scale * rng.normal();
            }
        }
        return model;
    }

    const MlpConfig &config() const noexcept { return config_; }
    std::size_t num_layers() const noexcept { return offsets_.size(); }
    const Offsets &offsets(std::size_t k) const { return offsets_.at(k); }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::optional<double> shape_parameter() const noexcept { return std::nullopt; }

    double &weight(std::size_t k, std::size_t m, std::size_t n)
    {
        return params_[offsets_.at(k).weight + m * config_.widths[k] + n];
    }
    double &bias(std::size_t k, std::size_t m) { return params_[offsets_.at(k).bias + m]; }

private:
    MlpConfig config_;
    std::vector<Offsets> offsets_;
    std::vector<double> params_;
};

inline void forward(const MlpModel &model, const Matrix &inputs, MlpTrace &tr)
{
    const auto &w = model.config().widths;
    check_batch(inputs, w.front(), "forward");
    const std::size_t batch = inputs.rows();
    const auto p = model.parameters();
    const std::size_t layers = model.num_layers();
    tr.parameter_count = p.size();
    tr.activations.resize(layers);
    tr.preacts.resize(layers);
    tr.activations[0] = inputs;
    for (std::size_t k = 0; k < layers; ++k) {
        const std::size_t din = w[k];
        const std::size_t dout = w[k + 1];
        const double *W = p.data() + model.offsets(k).weight;
        const double *bias = p.data() + model.offsets(k).bias;
        const Matrix &a = tr.activations[k];
        Matrix &z = tr.preacts[k];
        z.resize(batch, dout);
        for (std::size_t b = 0; b < batch; ++b) {
            const double *ab = a.row(b).data();
            for (std::size_t m = 0; m < dout; ++m) {
                const double *wm = W + m * din;
                double acc = bias[m];
                for (std::size_t n = 0; n < din; ++n) {
                    acc += wm[n] * ab[n];
                }
                z(b, m) = acc;
            }
        }
        check_finite(z, static_cast<int>(k), "pre-activation");
        if (k + 1 < layers) {
            Matrix &act = tr.activations[k + 1];
            act.resize(batch, dout);
            for (std::size_t i = 0; i < batch * dout; ++i) {
                act.data()[i] = std::max(0.0, z.data()[i]);
            }
        }
    }
    tr.outputs = tr.preacts.back();
}

inline MlpTrace forward(const MlpModel &model, const Matrix &inputs)
{
    MlpTrace tr;
    forward(model, inputs, tr);
    return tr;
}

inline Gradients backward(const MlpModel &model, const MlpTrace &trace, const Matrix &output_grads)
{
    const auto &w = model.config().widths;
    const auto p = model.parameters();
    if (trace.preacts.size() != model.num_layers() || trace.parameter_count != p.size()
        || output_grads.rows() != trace.outputs.rows() || output_grads.cols() != trace.outputs.cols()) {
        throw DomainError("backward: trace does not match model or output gradient shape");
    }
    Gradients grad(p.size(), 0.0);
    const std::size_t batch = output_grads.rows();
    Matrix dz = output_grads;
    for (std::size_t kk = model.num_layers(); kk-- > 0;) {
        const std::size_t din = w[kk];
        const std::size_t dout = w[kk + 1];
        const double *W = p.data() + model.offsets(kk).weight;
        double *gW = grad.data() + model.offsets(kk).weight;
        double *gb = grad.data() + model.offsets(kk).bias;
        const Matrix &a = trace.activations[kk];
        Matrix da(batch, din);
        for (std::size_t b = 0; b < batch; ++b) {
            const double *ab = a.row(b).data();
            double *dab = da.row(b).data();
            for (std::size_t m = 0; m < dout; ++m) {
                const double g = dz(b, m);
                if (g == 0.0) {
                    continue;
                }
                gb[m] += g;
                double *gwm = gW + m * din;
                const double *wm = W + m * din;
                for (std::size_t n = 0; n < din; ++n) {
                    gwm[n] += g * ab[n];
                    dab[n] += g * wm[n];
                }
            }
        }
        if (kk > 0) {
            const Matrix &zprev = trace.preacts[kk - 1];
            for (std::size_t i = 0; i < batch * din; ++i) {
                if (!(zprev.data()[i] > 0.0)) {
                    da.data()[i] = 0.0;
                }
            }
        }
        dz = std::move(da);
    }
    for (double v : grad) {
        if (!std::isfinite(v)) {
            throw NumericalDivergenceError("non-finite gradient", -1, -1);
        }
    }
    return grad;
}

inline std::vector<double> predict(const MlpModel &model, const Matrix &inputs)
{
    auto tr = forward(model, inputs);
    const auto d = tr.outputs.data();
    return {d.begin(), d.end()};
}

} // namespace rbfkan

#endif
