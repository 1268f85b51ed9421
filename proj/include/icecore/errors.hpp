#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icecore {

/// Malformed or inconsistent input data. `row()` is the 1-based data row when
/// the problem is tied to one (0 otherwise).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what, std::size_t row = 0)
        : std::runtime_error(what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// A model term left its domain, e.g. 1 + gamma*x <= 0.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// No kernel mass at a query point.
class EmptyWindowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solver gave up.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too many bootstrap replicates or simulation runs failed.
class ExcessFailureError : public std::runtime_error {
public:
    ExcessFailureError(const std::string& what, std::size_t failed, std::size_t total)
        : std::runtime_error(what), failed_(failed), total_(total) {}

    std::size_t failed() const noexcept { return failed_; }
    std::size_t total() const noexcept { return total_; }

private:
    std::size_t failed_;
    std::size_t total_;
};

} // namespace icecore
