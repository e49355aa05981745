#ifndef RBFKAN_KERNELS_HPP
#define RBFKAN_KERNELS_HPP

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "rbfkan/errors.hpp"

namespace rbfkan
{

/// Radial kernel families. All are functions of s = r / h only.
enum class KernelKind
{
    GA,  ///< Gaussian, exp(-s^2 / 2)
    IMQ, ///< inverse multiquadric, (1 + s^2)^(-1/2)
    M6,  ///< Matern C6, e^-s (s^3 + 6 s^2 + 15 s + 15)
    M4,  ///< Matern C4, e^-s (s^2 + 3 s + 3)
    M2,  ///< Matern C2, e^-s (s + 1)
    W6,  ///< Wendland C6, (1-s)_+^8 (32 s^3 + 25 s^2 + 8 s + 1)
    W4,  ///< Wendland C4, (1-s)_+^6 (35 s^2 + 18 s + 3)
    W2,  ///< Wendland C2, (1-s)_+^4 (4 s + 1)
};

inline constexpr std::array<KernelKind, 8> all_kernels = {KernelKind::GA, KernelKind::IMQ, KernelKind::M6,
                                                          KernelKind::M4, KernelKind::M2,  KernelKind::W6,
                                                          KernelKind::W4, KernelKind::W2};

constexpr std::string_view kernel_name(KernelKind kind) noexcept
{
    switch (kind) {
        case KernelKind::GA: return "GA";
        case KernelKind::IMQ: return "IMQ";
        case KernelKind::M6: return "M6";
        case KernelKind::M4: return "M4";
        case KernelKind::M2: return "M2";
        case KernelKind::W6: return "W6";
        case KernelKind::W4: return "W4";
        case KernelKind::W2: return "W2";
    }
    return "?";
}

inline std::optional<KernelKind> parse_kernel(std::string_view name) noexcept
{
    for (auto k : all_kernels) {
        if (kernel_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

inline std::string kernel_choices()
{
    std::string out;
    for (auto k : all_kernels) {
        if (!out.empty()) {
            out += ", ";
        }
        out += kernel_name(k);
    }
    return out;
}

constexpr bool is_compact(KernelKind kind) noexcept
{
    return kind == KernelKind::W2 || kind == KernelKind::W4 || kind == KernelKind::W6;
}

/// Kernel value with both partial derivatives, evaluated together on hot paths.
struct KernelSample
{
    double value = 0.0;
    double d_dr = 0.0;
    double d_dh = 0.0;
};

namespace detail
{

inline void check_kernel_args(double r, double h)
{
    if (!std::isfinite(r) || !std::isfinite(h) || r < 0.0 || h <= 0.0) {
        throw DomainError("kernel evaluated outside its domain (r=" + std::to_string(r) + ", h=" + std::to_string(h)
                          + ")");
    }
}

// Profile phi(s) and phi'(s) in the scaled variable s = r / h.
struct Profile
{
    double value;
    double slope;
};

inline Profile profile(KernelKind kind, double s) noexcept
{
    switch (kind) {
        case KernelKind::GA: {
            const double v = std::exp(-0.5 * s * s);
            return {v, -s * v};
        }
        case KernelKind::IMQ: {
            const double q = 1.0 / (1.0 + s * s);
            const double v = std::sqrt(q);
            return {v, -s * v * q};
        }
        case KernelKind::M6: {
            const double e = std::exp(-s);
            return {e * (((s + 6.0) * s + 15.0) * s + 15.0), -s * e * ((s + 3.0) * s + 3.0)};
        }
        case KernelKind::M4: {
            const double e = std::exp(-s);
            return {e * ((s + 3.0) * s + 3.0), -s * e * (s + 1.0)};
        }
        case KernelKind::M2: {
            const double e = std::exp(-s);
            return {e * (s + 1.0), -s * e};
        }
        case KernelKind::W6: {
            if (s >= 1.0) {
                return {0.0, 0.0};
            }
            const double t = 1.0 - s;
            const double t2 = t * t;
            const double t4 = t2 * t2;
            const double t7 = t4 * t2 * t;
            return {t7 * t * (((32.0 * s + 25.0) * s + 8.0) * s + 1.0), -22.0 * s * t7 * ((16.0 * s + 7.0) * s + 1.0)};
        }
        case KernelKind::W4: {
            if (s >= 1.0) {
                return {0.0, 0.0};
            }
            const double t = 1.0 - s;
            const double t2 = t * t;
            const double t5 = t2 * t2 * t;
            return {t5 * t * ((35.0 * s + 18.0) * s + 3.0), -56.0 * s * t5 * (5.0 * s + 1.0)};
        }
        case KernelKind::W2: {
            if (s >= 1.0) {
                return {0.0, 0.0};
            }
            const double t = 1.0 - s;
            const double t3 = t * t * t;
            return {t3 * t * (4.0 * s + 1.0), -20.0 * s * t3};
        }
    }
    return {0.0, 0.0};
}

} // namespace detail

/// phi(r; h) at raw distance r with the shape parameter inside the formula.
inline double eval(KernelKind kind, double r, double h)
{
    detail::check_kernel_args(r, h);
    return detail::profile(kind, r / h).value;
}

inline double eval_dr(KernelKind kind, double r, double h)
{
    detail::check_kernel_args(r, h);
    return detail::profile(kind, r / h).slope / h;
}

inline double eval_dh(KernelKind kind, double r, double h)
{
    detail::check_kernel_args(r, h);
    const double s = r / h;
    return -s * detail::profile(kind, s).slope / h;
}

inline KernelSample eval_all(KernelKind kind, double r, double h)
{
    detail::check_kernel_args(r, h);
    const double s = r / h;
    const auto p = detail::profile(kind, s);
    return {p.value, p.slope / h, -s * p.slope / h};
}

} // namespace rbfkan

#endif
