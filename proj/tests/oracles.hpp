#ifndef RBFKAN_TESTS_ORACLES_HPP
#define RBFKAN_TESTS_ORACLES_HPP

// Independent reference computations used by the unit and acceptance tests.
// None of these share code with the library beyond kernel evaluation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbfkan/kernels.hpp"
#include "rbfkan/random.hpp"
#include "rbfkan/tensor.hpp"

namespace oracle
{

using Dense = std::vector<std::vector<double>>;

/// Full inverse by Gauss-Jordan elimination with partial pivoting.
inline Dense gauss_jordan_inverse(Dense a)
{
    const std::size_t n = a.size();
    Dense inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        inv[i][i] = 1.0;
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) {
                piv = r;
            }
        }
        if (a[piv][col] == 0.0) {
            throw std::runtime_error("gauss_jordan_inverse: singular");
        }
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        const double d = a[col][col];
        for (std::size_t c = 0; c < n; ++c) {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0.0) {
                continue;
            }
            const double f = a[r][col];
            for (std::size_t c = 0; c < n; ++c) {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    return inv;
}

inline std::vector<double> mat_vec(const Dense &a, std::span<const double> x)
{
    std::vector<double> y(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            y[i] += a[i][j] * x[j];
        }
    }
    return y;
}

/// Solves a x = b by Gaussian elimination with partial pivoting in long double.
inline std::vector<long double> gauss_solve(std::vector<std::vector<long double>> a, std::vector<long double> b)
{
    const std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) {
                piv = r;
            }
        }
        if (a[piv][col] == 0.0L) {
            throw std::runtime_error("gauss_solve: singular");
        }
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const long double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    std::vector<long double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        long double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) {
            s -= a[i][c] * x[c];
        }
        x[i] = s / a[i][i];
    }
    return x;
}

/// Leave-one-out residuals by explicit refitting: for each i, solve the
/// regularized system on the remaining points and evaluate the miss at x_i.
/// Works in long double so it stays trustworthy on ill-conditioned kernels.
inline std::vector<double> explicit_loo(std::span<const double> x, std::span<const double> y,
                                        rbfkan::KernelKind kind, double h, double lambda)
{
    const std::size_t n = x.size();
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> keep;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                keep.push_back(j);
            }
        }
        std::vector<std::vector<long double>> a(keep.size(), std::vector<long double>(keep.size()));
        std::vector<long double> rhs(keep.size());
        for (std::size_t p = 0; p < keep.size(); ++p) {
            for (std::size_t q = 0; q < keep.size(); ++q) {
                a[p][q] = rbfkan::eval(kind, std::abs(x[keep[p]] - x[keep[q]]), h);
            }
            a[p][p] += lambda;
            rhs[p] = y[keep[p]];
        }
        const auto w = gauss_solve(std::move(a), std::move(rhs));
        long double s = 0.0L;
        for (std::size_t p = 0; p < keep.size(); ++p) {
            s += w[p] * rbfkan::eval(kind, std::abs(x[i] - x[keep[p]]), h);
        }
        e[i] = static_cast<double>(y[i] - s);
    }
    return e;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double rel_max_diff(std::span<const double> a, std::span<const double> b, double floor = 1e-300)
{
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / std::max(den, floor);
}

/// Result of comparing an analytic gradient against central differences.
struct GradCheck
{
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_rel = 0.0;
    std::size_t worst_index = 0;
};

/// Central-difference check of `backward` on the scalar L = sum_b G_b * out_b.
/// An entry passes when, for at least one step in `steps`,
/// |analytic - numeric| <= max(rel_tol * max(|a|, |n|), abs_floor). Trying a
/// ladder of steps separates truncation error near kernel kinks and round-off
/// through near-degenerate layer norms from genuine gradient mistakes, which
/// disagree at every step.
template <class Model>
GradCheck check_gradient_steps(Model model, const rbfkan::Matrix &inputs, const rbfkan::Matrix &out_grad,
                               std::span<const double> steps, double rel_tol = 1e-5, double abs_floor = 1e-8)
{
    auto loss = [&](const Model &m) {
        const auto tr = forward(m, inputs);
        double acc = 0.0;
        const auto o = tr.outputs.data();
        const auto g = out_grad.data();
        for (std::size_t i = 0; i < o.size(); ++i) {
            acc += o[i] * g[i];
        }
        return acc;
    };
    const auto tr = forward(model, inputs);
    const auto grad = backward(model, tr, out_grad);
    GradCheck res;
    auto p = model.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        bool ok = false;
        double best_rel = INFINITY;
        for (double step : steps) {
            p[i] = saved + step;
            const double lp = loss(model);
            p[i] = saved - step;
            const double lm = loss(model);
            p[i] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double diff = std::abs(grad[i] - numeric);
            const double scale = std::max(std::abs(grad[i]), std::abs(numeric));
            ok = ok || diff <= std::max(rel_tol * scale, abs_floor);
            best_rel = std::min(best_rel, diff > abs_floor && scale > 0.0 ? diff / scale : 0.0);
        }
        ++res.checked;
        res.failures += !ok;
        if (best_rel > res.worst_rel) {
            res.worst_rel = best_rel;
            res.worst_index = i;
        }
    }
    return res;
}

template <class Model>
GradCheck check_gradient(const Model &model, const rbfkan::Matrix &inputs, const rbfkan::Matrix &out_grad,
                         double step = 1e-6, double rel_tol = 1e-5, double abs_floor = 1e-8)
{
    const double steps[] = {step};
    return check_gradient_steps(model, inputs, out_grad, steps, rel_tol, abs_floor);
}

inline rbfkan::Matrix random_matrix(rbfkan::Xoshiro256 &rng, std::size_t rows, std::size_t cols, double lo, double hi)
{
    rbfkan::Matrix m(rows, cols);
    for (auto &v : m.data()) {
        v = lo + (hi - lo) * rng.uniform();
    }
    return m;
}

} // namespace oracle

#endif
