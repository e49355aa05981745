#ifndef RBFKAN_TENSOR_HPP
#define RBFKAN_TENSOR_HPP

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbfkan/errors.hpp"

namespace rbfkan
{

/// Row-major batch of vectors: one sample per row.
class Matrix
{
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != rows_ * cols_) {
            throw DomainError("Matrix: data length " + std::to_string(data_.size()) + " does not match "
                              + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    /// Reshape, keeping the allocation; contents are unspecified afterwards.
    void resize(std::size_t rows, std::size_t cols)
    {
        rows_ = rows;
        cols_ = cols;
        data_.resize(rows * cols);
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double &operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const Matrix &, const Matrix &) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Gather the listed rows into a new matrix.
inline Matrix select_rows(const Matrix &m, std::span<const std::size_t> idx)
{
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = m.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

template <class T>
std::vector<T> select(std::span<const T> v, std::span<const std::size_t> idx)
{
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        out.push_back(v[i]);
    }
    return out;
}

} // namespace rbfkan

#endif
