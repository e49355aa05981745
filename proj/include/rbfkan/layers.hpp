#ifndef RBFKAN_LAYERS_HPP
#define RBFKAN_LAYERS_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbfkan/errors.hpp"
#include "rbfkan/tensor.hpp"

namespace rbfkan
{

inline constexpr double layernorm_eps = 1e-5;

/// Closed interval [lo, hi].
struct Range
{
    double lo = 0.0;
    double hi = 1.0;

    friend bool operator==(const Range &, const Range &) = default;
};

inline double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) noexcept
{
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

/// How a layer conditions its incoming activations before the edge functions.
enum class NormMode
{
    Identity,
    Affine,    ///< fixed z = scale * a + shift
    LayerNorm, ///< per-sample standardization over features, learnable gain/bias
};

struct NormSpec
{
    NormMode mode = NormMode::Identity;
    double scale = 1.0;
    double shift = 0.0;

    /// Fixed linear map taking `from` onto `to`.
    static NormSpec affine(Range from, Range to)
    {
        const double scale = (to.hi - to.lo) / (from.hi - from.lo);
        return {NormMode::Affine, scale, to.lo - scale * from.lo};
    }
};

/// Normalization used by layer `k` of a KAN: the input layer is mapped from
/// `input_range` onto `edge_domain` when a range is configured; otherwise every
/// layer uses layer normalization if enabled.
inline NormSpec layer_norm_spec(std::size_t k, bool use_layernorm, const std::optional<Range> &input_range,
                                Range edge_domain)
{
    if (k == 0 && input_range) {
        return NormSpec::affine(*input_range, edge_domain);
    }
    return use_layernorm ? NormSpec{NormMode::LayerNorm} : NormSpec{};
}

struct NormTrace
{
    Matrix xhat;                  ///< standardized activations (LayerNorm only)
    std::vector<double> inv_std;  ///< per-sample 1/sqrt(var + eps) (LayerNorm only)
};

inline void norm_forward(const NormSpec &spec, const Matrix &a, std::span<const double> gain,
                         std::span<const double> bias, Matrix &z, NormTrace &trace)
{
    const std::size_t rows = a.rows();
    const std::size_t d = a.cols();
    z.resize(rows, d);
    switch (spec.mode) {
        case NormMode::Identity: z = a; return;
        case NormMode::Affine:
            for (std::size_t b = 0; b < rows; ++b) {
                for (std::size_t n = 0; n < d; ++n) {
                    z(b, n) = spec.scale * a(b, n) + spec.shift;
                }
            }
            return;
        case NormMode::LayerNorm: {
            trace.xhat.resize(rows, d);
            trace.inv_std.assign(rows, 0.0);
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t b = 0; b < rows; ++b) {
                double mu = 0.0;
                for (std::size_t n = 0; n < d; ++n) {
                    mu += a(b, n);
                }
                mu *= inv_d;
                double var = 0.0;
                for (std::size_t n = 0; n < d; ++n) {
                    const double c = a(b, n) - mu;
                    var += c * c;
                }
                var *= inv_d;
                const double inv = 1.0 / std::sqrt(var + layernorm_eps);
                trace.inv_std[b] = inv;
                for (std::size_t n = 0; n < d; ++n) {
                    const double xh = (a(b, n) - mu) * inv;
                    trace.xhat(b, n) = xh;
                    z(b, n) = gain[n] * xh + bias[n];
                }
            }
            return;
        }
    }
}

/// Back-propagates dz through the normalization into da, accumulating the
/// gain/bias gradients for LayerNorm.
inline void norm_backward(const NormSpec &spec, const Matrix &dz, const NormTrace &trace,
                          std::span<const double> gain, std::span<double> d_gain, std::span<double> d_bias,
                          Matrix &da)
{
    const std::size_t rows = dz.rows();
    const std::size_t d = dz.cols();
    da.resize(rows, d);
    switch (spec.mode) {
        case NormMode::Identity: da = dz; return;
        case NormMode::Affine:
            for (std::size_t b = 0; b < rows; ++b) {
                for (std::size_t n = 0; n < d; ++n) {
                    da(b, n) = spec.scale * dz(b, n);
                }
            }
            return;
        case NormMode::LayerNorm: {
            const double inv_d = 1.0 / static_cast<double>(d);
            std::vector<double> dxhat(d);
            for (std::size_t b = 0; b < rows; ++b) {
                double mean_dx = 0.0;
                double mean_dx_xh = 0.0;
                for (std::size_t n = 0; n < d; ++n) {
                    const double g = dz(b, n);
                    const double xh = trace.xhat(b, n);
                    d_gain[n] += g * xh;
                    d_bias[n] += g;
                    dxhat[n] = g * gain[n];
                    mean_dx += dxhat[n];
                    mean_dx_xh += dxhat[n] * xh;
                }
                mean_dx *= inv_d;
                mean_dx_xh *= inv_d;
                const double inv = trace.inv_std[b];
                for (std::size_t n = 0; n < d; ++n) {
                    da(b, n) = inv * (dxhat[n] - mean_dx - trace.xhat(b, n) * mean_dx_xh);
                }
            }
            return;
        }
    }
}

inline void check_finite(const Matrix &m, int layer, const char *what)
{
    for (double v : m.data()) {
        if (!std::isfinite(v)) {
            throw NumericalDivergenceError(std::string("non-finite ") + what + " in layer " + std::to_string(layer),
                                           -1, layer);
        }
    }
}

inline void check_widths(std::span<const std::size_t> widths, const char *who)
{
    if (widths.size() < 2) {
        throw DomainError(std::string(who) + ": need at least one layer (two widths)");
    }
    for (auto w : widths) {
        if (w < 1) {
            throw DomainError(std::string(who) + ": layer widths must be >= 1");
        }
    }
}

inline void check_batch(const Matrix &inputs, std::size_t d0, const char *who)
{
    if (inputs.rows() == 0) {
        throw DomainError(std::string(who) + ": empty batch");
    }
    if (inputs.cols() != d0) {
        throw DomainError(std::string(who) + ": input dimension " + std::to_string(inputs.cols())
                          + " does not match model input width " + std::to_string(d0));
    }
    for (double v : inputs.data()) {
        if (!std::isfinite(v)) {
            throw DomainError(std::string(who) + ": non-finite input");
        }
    }
}

} // namespace rbfkan

#endif
