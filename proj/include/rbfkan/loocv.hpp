#ifndef RBFKAN_LOOCV_HPP
#define RBFKAN_LOOCV_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbfkan/benchmarks.hpp"
#include "rbfkan/densela.hpp"
#include "rbfkan/errors.hpp"
#include "rbfkan/kernels.hpp"

namespace rbfkan
{

struct LoocvConfig
{
    double h_min = 0.01;
    double h_max = 20.0;
    std::size_t n_coarse = 50;
    std::size_t n_fine = 20;
    double lambda = 1e-9;
    std::size_t max_points = 200;
    std::size_t coordinate_index = 0;

    void validate() const
    {
        if (!(h_min > 0.0) || !(h_max > h_min) || !std::isfinite(h_max)) {
            throw DomainError("LoocvConfig: need 0 < h_min < h_max");
        }
        if (n_coarse < 2 || n_fine < 2) {
            throw DomainError("LoocvConfig: n_coarse and n_fine must be >= 2");
        }
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw DomainError("LoocvConfig: lambda must be positive");
        }
        if (max_points < 10) {
            throw DomainError("LoocvConfig: max_points must be >= 10");
        }
    }

    friend bool operator==(const LoocvConfig &, const LoocvConfig &) = default;
};

struct LoocvCurvePoint
{
    double h;
    double err; ///< max_i |e_i|; +inf when the candidate could not be factorized
    int stage;  ///< 1 = coarse, 2 = fine

    friend bool operator==(const LoocvCurvePoint &, const LoocvCurvePoint &) = default;
};

struct LoocvResult
{
    double h_opt = 0.0;
    double err_min = std::numeric_limits<double>::infinity();
    std::vector<LoocvCurvePoint> curve;
    double stage2_halfwidth = 0.0;

    friend bool operator==(const LoocvResult &, const LoocvResult &) = default;
};

namespace detail
{

inline void check_aux_inputs(std::span<const double> points, std::span<const double> targets)
{
    if (points.size() != targets.size()) {
        throw DomainError("LOOCV: points and targets differ in length");
    }
    if (points.size() < 2) {
        throw DomainError("LOOCV: need at least 2 points");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points[i]) || !std::isfinite(targets[i])) {
            throw DomainError("LOOCV: non-finite input");
        }
    }
}

inline std::vector<double> pairwise_distances(std::span<const double> points)
{
    const std::size_t n = points.size();
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            d[i * n + j] = std::abs(points[i] - points[j]);
        }
    }
    return d;
}

inline std::vector<double> rippa_from_distances(std::span<const double> dist, std::span<const double> targets,
                                                KernelKind kind, double h, double lambda)
{
    const std::size_t n = targets.size();
    SymMatrix a(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a(i, j) = eval(kind, dist[i * n + j], h);
        }
    }
    Factorization f = [&] {
        try {
            return factorize(a, lambda);
        } catch (const NumericalRankError &e) {
            throw NumericalRankError(std::string(e.what()) + " [kernel " + std::string(kernel_name(kind))
                                     + ", h=" + std::to_string(h) + "]");
        }
    }();
    const auto w = f.solve(targets);
    const auto dinv = inverse_diagonal(f);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = w[i] / dinv[i];
    }
    return e;
}

inline double max_abs(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return v;
}

} // namespace detail

/// Leave-one-out residuals of the lambda-regularized 1D interpolant via Rippa's
/// identity e_i = w_i / (A^{-1})_ii with A_ij = phi(|x_i - x_j|; h) + lambda delta_ij.
inline std::vector<double> rippa_errors(std::span<const double> points, std::span<const double> targets,
                                        KernelKind kind, double h, double lambda)
{
    detail::check_aux_inputs(points, targets);
    if (!(h > 0.0) || !(lambda > 0.0)) {
        throw DomainError("rippa_errors: h and lambda must be positive");
    }
    const auto dist = detail::pairwise_distances(points);
    return detail::rippa_from_distances(dist, targets, kind, h, lambda);
}

/// Two-stage grid search for the shape parameter minimizing the max-norm LOOCV
/// error. Stage 1 scans n_coarse equally spaced values on [h_min, h_max]; stage 2
/// scans n_fine equally spaced values on [h1 - r, h1 + r] around the stage-1
/// winner h1, with r = 2 (h_max - h_min) / n_coarse. A stage-2 window reaching
/// h <= 0 starts at h_min / 2 instead. Ties keep the earliest candidate.
inline LoocvResult search_h(std::span<const double> points, std::span<const double> targets, KernelKind kind,
                            const LoocvConfig &config)
{
    config.validate();
    detail::check_aux_inputs(points, targets);
    const auto dist = detail::pairwise_distances(points);

    LoocvResult result;
    result.h_opt = config.h_min;
    bool any_ok = false;

    auto try_candidate = [&](double h, int stage) {
        double err = std::numeric_limits<double>::infinity();
        try {
            const auto e = detail::rippa_from_distances(dist, targets, kind, h, config.lambda);
            err = detail::max_abs(e);
            if (!std::isfinite(err)) {
                err = std::numeric_limits<double>::infinity();
            } else {
                any_ok = true;
            }
        } catch (const NumericalRankError &) {
        }
        result.curve.push_back({h, err, stage});
        if (err < result.err_min) {
            result.err_min = err;
            result.h_opt = h;
        }
    };

    for (double h : detail::linspace(config.h_min, config.h_max, config.n_coarse)) {
        try_candidate(h, 1);
    }
    const double h1 = result.h_opt;
    const double r = 2.0 * (config.h_max - config.h_min) / static_cast<double>(config.n_coarse);
    result.stage2_halfwidth = r;
    double lo = h1 - r;
    if (lo <= 0.0) {
        lo = 0.5 * config.h_min;
    }
    for (double h : detail::linspace(lo, h1 + r, config.n_fine)) {
        try_candidate(h, 2);
    }
    if (!any_ok) {
        throw SearchFailedError("LOOCV search: every candidate h was numerically singular for kernel "
                                + std::string(kernel_name(kind)));
    }
    return result;
}

/// Projects the training set onto one input coordinate for the auxiliary 1D
/// problem. Exact duplicate coordinates collapse to one point carrying the mean
/// target; output is sorted by coordinate. More than `max_points` survivors are
/// thinned to the sorted positions round(i (n-1) / (max_points-1)).
inline std::pair<std::vector<double>, std::vector<double>> prepare_auxiliary(const Dataset &dataset,
                                                                             const LoocvConfig &config)
{
    config.validate();
    if (dataset.train_idx.size() < 2) {
        throw DegenerateDataError("LOOCV: need at least 2 training samples");
    }
    if (config.coordinate_index >= dataset.inputs.cols()) {
        throw DomainError("LOOCV: coordinate_index " + std::to_string(config.coordinate_index)
                          + " out of range for inputs of dimension " + std::to_string(dataset.inputs.cols()));
    }
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(dataset.train_idx.size());
    for (auto i : dataset.train_idx) {
        pairs.emplace_back(dataset.inputs(i, config.coordinate_index), dataset.targets[i]);
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto &a, const auto &b) { return a.first < b.first; });

    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < pairs.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) {
            sum += pairs[j].second;
            ++j;
        }
        xs.push_back(pairs[i].first);
        ys.push_back(sum / static_cast<double>(j - i));
        i = j;
    }
    if (xs.size() < 2) {
        throw DegenerateDataError("LOOCV: fewer than 2 distinct coordinates after merging duplicates");
    }
    if (xs.size() > config.max_points) {
        const std::size_t n = xs.size();
        const std::size_t m = config.max_points;
        std::vector<double> sx(m);
        std::vector<double> sy(m);
        for (std::size_t i = 0; i < m; ++i) {
            // round(i (n-1) / (m-1)) in exact integer arithmetic
            const std::size_t k = (2 * i * (n - 1) + (m - 1)) / (2 * (m - 1));
            sx[i] = xs[k];
            sy[i] = ys[k];
        }
        xs = std::move(sx);
        ys = std::move(sy);
    }
    return {std::move(xs), std::move(ys)};
}

} // namespace rbfkan

#endif
