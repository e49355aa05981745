#ifndef RBFKAN_ERRORS_HPP
#define RBFKAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rbfkan
{

// Caller bug: bad argument, shape mismatch, invalid configuration.
class DomainError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

// A matrix is singular to working precision.
class NumericalRankError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Every LOOCV candidate failed to factorize.
class SearchFailedError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Auxiliary LOOCV data collapsed to fewer than two distinct points.
class DegenerateDataError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// A forward or backward pass produced a non-finite value.
class NumericalDivergenceError : public std::runtime_error
{
public:
    NumericalDivergenceError(const std::string &what, int epoch, int layer)
        : std::runtime_error(what), epoch_(epoch), layer_(layer)
    {
    }

    int epoch() const noexcept { return epoch_; }
    int layer() const noexcept { return layer_; }

private:
    int epoch_;
    int layer_;
};

// Malformed experiment configuration or input file.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// File could not be read or written.
class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace rbfkan

#endif
