#ifndef RBFKAN_BENCHMARKS_HPP
#define RBFKAN_BENCHMARKS_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rbfkan/errors.hpp"
#include "rbfkan/random.hpp"
#include "rbfkan/tensor.hpp"

namespace rbfkan
{

enum class TargetFunction
{
    F1, ///< Franke
    F2, ///< circular step
    F3, ///< sin(25x) cos(25y)
    F4, ///< inverse-distance peak at (0.5, 0.5)
};

inline constexpr TargetFunction all_functions[] = {TargetFunction::F1, TargetFunction::F2, TargetFunction::F3,
                                                   TargetFunction::F4};

constexpr std::string_view function_name(TargetFunction f) noexcept
{
    switch (f) {
        case TargetFunction::F1: return "f1";
        case TargetFunction::F2: return "f2";
        case TargetFunction::F3: return "f3";
        case TargetFunction::F4: return "f4";
    }
    return "?";
}

inline std::optional<TargetFunction> parse_function(std::string_view name) noexcept
{
    for (auto f : all_functions) {
        if (function_name(f) == name) {
            return f;
        }
    }
    return std::nullopt;
}

inline double target_fn(TargetFunction f, double x, double y)
{
    switch (f) {
        case TargetFunction::F1: {
            const double a = 9.0 * x;
            const double b = 9.0 * y;
            // The second term uses (9y + 1) / 10 unsquared.
            return 0.75 * std::exp(-((a - 2.0) * (a - 2.0) + (b - 2.0) * (b - 2.0)) / 4.0)
                   + 0.75 * std::exp(-(a + 1.0) * (a + 1.0) / 49.0 - (b + 1.0) / 10.0)
                   + 0.5 * std::exp(-((a - 7.0) * (a - 7.0) + (b - 3.0) * (b - 3.0)) / 4.0)
                   - 0.2 * std::exp(-(a - 4.0) * (a - 4.0) - (b - 7.0) * (b - 7.0));
        }
        case TargetFunction::F2: return std::sqrt(x * x + y * y) >= 0.5 ? 1.0 : 0.0;
        case TargetFunction::F3: return std::sin(25.0 * x) * std::cos(25.0 * y);
        case TargetFunction::F4: {
            const double dx = x - 0.5;
            const double dy = y - 0.5;
            return 1.0 / (std::sqrt(dx * dx + dy * dy) + 0.1);
        }
    }
    return 0.0;
}

/// Fraction of samples assigned to training.
inline constexpr double train_fraction = 0.8;

struct Dataset
{
    TargetFunction function = TargetFunction::F1;
    std::uint64_t seed = 0;
    Matrix inputs; ///< N x 2, points in [0,1]^2
    std::vector<double> targets;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    std::size_t size() const noexcept { return targets.size(); }

    Matrix train_inputs() const { return select_rows(inputs, train_idx); }
    Matrix test_inputs() const { return select_rows(inputs, test_idx); }
    std::vector<double> train_targets() const { return select<double>(targets, train_idx); }
    std::vector<double> test_targets() const { return select<double>(targets, test_idx); }

    friend bool operator==(const Dataset &, const Dataset &) = default;
};

/// Samples n points i.i.d. uniform on the unit square and splits them 80/20.
///
/// One xoshiro256** stream seeded with `seed` first draws x then y for every
/// point in order, then drives a Fisher-Yates shuffle of 0..n-1 (i from n-1
/// down to 1, j = below(i + 1)). The first floor(0.8 n) shuffled indices form
/// the training set. Point locations depend only on (n, seed), so every
/// target function sees the same sample.
inline Dataset generate_dataset(TargetFunction f, std::size_t n, std::uint64_t seed)
{
    if (n < 10) {
        throw DomainError("generate_dataset: need at least 10 samples, got " + std::to_string(n));
    }
    Dataset ds;
    ds.function = f;
    ds.seed = seed;
    ds.inputs = Matrix(n, 2);
    ds.targets.resize(n);
    Xoshiro256 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform();
        const double y = rng.uniform();
        ds.inputs(i, 0) = x;
        ds.inputs(i, 1) = y;
        ds.targets[i] = target_fn(f, x, y);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(order[i], order[j]);
    }
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    ds.train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.test_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return ds;
}

struct SurfaceGrid
{
    std::size_t resolution = 0;
    std::vector<double> x; ///< resolution^2 entries, x varies fastest
    std::vector<double> y;
    std::vector<double> predicted;
    std::vector<double> truth;
    double relative_l2 = 0.0;
};

/// Uniform R x R grid over [0,1]^2 inclusive, x fastest.
inline Matrix grid_points(std::size_t resolution)
{
    if (resolution < 2) {
        throw DomainError("grid resolution must be at least 2");
    }
    Matrix pts(resolution * resolution, 2);
    const double step = 1.0 / static_cast<double>(resolution - 1);
    for (std::size_t iy = 0; iy < resolution; ++iy) {
        for (std::size_t ix = 0; ix < resolution; ++ix) {
            const std::size_t r = iy * resolution + ix;
            pts(r, 0) = static_cast<double>(ix) * step;
            pts(r, 1) = static_cast<double>(iy) * step;
        }
    }
    return pts;
}

/// Evaluates `predict(model, points)` on a uniform grid and pairs it with the true surface.
template <class Model>
SurfaceGrid reconstruct_surface(const Model &model, TargetFunction f, std::size_t resolution = 100)
{
    const Matrix pts = grid_points(resolution);
    SurfaceGrid g;
    g.resolution = resolution;
    g.predicted = predict(model, pts);
    const std::size_t n = pts.rows();
    g.x.resize(n);
    g.y.resize(n);
    g.truth.resize(n);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        g.x[i] = pts(i, 0);
        g.y[i] = pts(i, 1);
        g.truth[i] = target_fn(f, g.x[i], g.y[i]);
        const double d = g.predicted[i] - g.truth[i];
        num += d * d;
        den += g.truth[i] * g.truth[i];
    }
    g.relative_l2 = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return g;
}

} // namespace rbfkan

#endif
