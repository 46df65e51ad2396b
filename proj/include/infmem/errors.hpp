#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace infmem {

enum class ErrorCode {
    invalid_argument = 1,
    shape_mismatch = 2,
    not_positive_definite = 3,
    numeric = 4,
    io = 5,
    state = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error(ErrorCode::invalid_argument, what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorCode::shape_mismatch, what) {}
};

// Cholesky breakdown; pivot() is the zero-based row where the diagonal went non-positive.
class NotPositiveDefinite : public Error {
public:
    NotPositiveDefinite(std::size_t pivot, double value, const std::string& hint = {})
        : Error(ErrorCode::not_positive_definite,
                "matrix is not positive definite: pivot " + std::to_string(pivot) + " = " +
                    std::to_string(value) + (hint.empty() ? "" : "; " + hint)),
          pivot_(pivot) {}
    [[nodiscard]] std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

struct StateError : Error {
    explicit StateError(const std::string& what) : Error(ErrorCode::state, what) {}
};

}  // namespace infmem
