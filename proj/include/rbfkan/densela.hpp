#ifndef RBFKAN_DENSELA_HPP
#define RBFKAN_DENSELA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbfkan/errors.hpp"

namespace rbfkan
{

/// Dense symmetric matrix, row-major storage.
class SymMatrix
{
public:
    static constexpr double symmetry_tolerance = 1e-12;

    explicit SymMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

    SymMatrix(std::size_t n, std::vector<double> entries) : n_(n), data_(std::move(entries))
    {
        if (data_.size() != n_ * n_) {
            throw DomainError("SymMatrix: expected " + std::to_string(n_ * n_) + " entries, got "
                              + std::to_string(data_.size()));
        }
        validate();
    }

    static SymMatrix identity(std::size_t n)
    {
        SymMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    std::size_t size() const noexcept { return n_; }

    double &operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }

    std::span<const double> entries() const noexcept { return data_; }

    // Entries written through operator() bypass the constructor check.
    void validate() const
    {
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                const double v = (*this)(i, j);
                if (!std::isfinite(v)) {
                    throw DomainError("SymMatrix: non-finite entry");
                }
                if (j > i && std::abs(v - (*this)(j, i)) > symmetry_tolerance) {
                    throw DomainError("SymMatrix: matrix is not symmetric");
                }
            }
        }
    }

    std::vector<double> multiply(std::span<const double> x) const
    {
        if (x.size() != n_) {
            throw DomainError("SymMatrix::multiply: dimension mismatch");
        }
        std::vector<double> y(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) {
                acc += (*this)(i, j) * x[j];
            }
            y[i] = acc;
        }
        return y;
    }

private:
    std::size_t n_;
    std::vector<double> data_;
};

/// Immutable factorization of a SymMatrix: Cholesky when the matrix is numerically
/// SPD, otherwise LU with partial pivoting. Factors and substitutions are carried
/// in extended precision; the kernel matrices of flat RBFs reach condition numbers
/// near 1/lambda, where double working precision loses most of its digits.
class Factorization
{
public:
    using Real = long double;

    enum class Method
    {
        Cholesky,
        PivotedLU,
    };

    // Pivots below this fraction of the largest initial pivot count as zero.
    static constexpr double relative_pivot_tolerance = 1e-14;

    std::size_t size() const noexcept { return n_; }
    Method method() const noexcept { return method_; }

    friend Factorization factorize(const SymMatrix &a, double diagonal_shift);

    std::vector<double> solve(std::span<const double> b) const
    {
        if (b.size() != n_) {
            throw DomainError("solve: right-hand side has length " + std::to_string(b.size()) + ", expected "
                              + std::to_string(n_));
        }
        std::vector<Real> x(b.begin(), b.end());
        if (method_ == Method::Cholesky) {
            // L y = b, then L^T x = y; L stored in the lower triangle.
            for (std::size_t i = 0; i < n_; ++i) {
                Real acc = x[i];
                const Real *row = &lu_[i * n_];
                for (std::size_t k = 0; k < i; ++k) {
                    acc -= row[k] * x[k];
                }
                x[i] = acc / row[i];
            }
            for (std::size_t ii = n_; ii-- > 0;) {
                Real acc = x[ii];
                for (std::size_t k = ii + 1; k < n_; ++k) {
                    acc -= lu_[k * n_ + ii] * x[k];
                }
                x[ii] = acc / lu_[ii * n_ + ii];
            }
            return {x.begin(), x.end()};
        }
        std::vector<Real> y(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            y[i] = b[perm_[i]];
        }
        for (std::size_t i = 0; i < n_; ++i) {
            Real acc = y[i];
            const Real *row = &lu_[i * n_];
            for (std::size_t k = 0; k < i; ++k) {
                acc -= row[k] * y[k];
            }
            y[i] = acc;
        }
        for (std::size_t ii = n_; ii-- > 0;) {
            Real acc = y[ii];
            const Real *row = &lu_[ii * n_];
            for (std::size_t k = ii + 1; k < n_; ++k) {
                acc -= row[k] * y[k];
            }
            y[ii] = acc / row[ii];
        }
        return {y.begin(), y.end()};
    }

private:
    Factorization() = default;

    std::size_t n_ = 0;
    Method method_ = Method::Cholesky;
    std::vector<Real> lu_;
    std::vector<std::size_t> perm_;
};

/// Factors a + diagonal_shift * I. The shift is added in extended precision, so
/// a small regularizer on a unit diagonal is not rounded away before factoring.
inline Factorization factorize(const SymMatrix &a, double diagonal_shift = 0.0)
{
    using Real = Factorization::Real;
    const std::size_t n = a.size();
    const auto load = [&](std::vector<Real> &dst) {
        dst.assign(a.entries().begin(), a.entries().end());
        for (std::size_t i = 0; i < n; ++i) {
            dst[i * n + i] += diagonal_shift;
        }
    };
    Factorization f;
    f.n_ = n;
    load(f.lu_);
    Real max_pivot = 0.0;
    for (Real v : f.lu_) {
        max_pivot = std::max(max_pivot, std::abs(v));
    }
    const Real tol = Factorization::relative_pivot_tolerance * max_pivot;

    bool spd = max_pivot > 0.0;
    for (std::size_t j = 0; j < n && spd; ++j) {
        Real *rowj = &f.lu_[j * n];
        Real d = rowj[j];
        for (std::size_t k = 0; k < j; ++k) {
            d -= rowj[k] * rowj[k];
        }
        if (!(d > tol)) {
            spd = false;
            break;
        }
        const Real ljj = std::sqrt(d);
        rowj[j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            Real *rowi = &f.lu_[i * n];
            Real acc = rowi[j];
            for (std::size_t k = 0; k < j; ++k) {
                acc -= rowi[k] * rowj[k];
            }
            rowi[j] = acc / ljj;
        }
    }
    if (spd) {
        f.method_ = Factorization::Method::Cholesky;
        return f;
    }

    f.method_ = Factorization::Method::PivotedLU;
    load(f.lu_);
    f.perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        f.perm_[i] = i;
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        Real best = std::abs(f.lu_[col * n + col]);
        for (std::size_t i = col + 1; i < n; ++i) {
            const Real v = std::abs(f.lu_[i * n + col]);
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (!(best > tol)) {
            throw NumericalRankError("factorize: matrix is singular to working precision (pivot "
                                     + std::to_string(static_cast<double>(best)) + " at column " + std::to_string(col) + ")");
        }
        if (piv != col) {
            std::swap_ranges(f.lu_.begin() + static_cast<std::ptrdiff_t>(col * n),
                             f.lu_.begin() + static_cast<std::ptrdiff_t>((col + 1) * n),
                             f.lu_.begin() + static_cast<std::ptrdiff_t>(piv * n));
            std::swap(f.perm_[col], f.perm_[piv]);
        }
        const Real *prow = &f.lu_[col * n];
        for (std::size_t i = col + 1; i < n; ++i) {
            Real *row = &f.lu_[i * n];
            const Real m = row[col] / prow[col];
            row[col] = m;
            if (m != 0.0) {
                for (std::size_t k = col + 1; k < n; ++k) {
                    row[k] -= m * prow[k];
                }
            }
        }
    }
    return f;
}

inline std::vector<double> solve(const Factorization &f, std::span<const double> b)
{
    return f.solve(b);
}

/// Diagonal of A^{-1}, one unit-vector solve per entry.
inline std::vector<double> inverse_diagonal(const Factorization &f)
{
    const std::size_t n = f.size();
    std::vector<double> diag(n);
    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = 1.0;
        diag[i] = f.solve(e)[i];
        e[i] = 0.0;
    }
    return diag;
}

} // namespace rbfkan

#endif
