#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace taskgroup {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for a kernel or composition.
class ShapeError : public Error {
public:
    ShapeError(const std::string& kernel, const std::string& detail)
        : Error(kernel + ": shape mismatch: " + detail), kernel_(kernel) {}
    const std::string& kernel() const noexcept { return kernel_; }

private:
    std::string kernel_;
};

/// Argument outside a kernel's mathematical domain (e.g. log of a non-positive value).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite values appeared during training.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::string parameter)
        : Error(what), parameter_(std::move(parameter)) {}
    const std::string& parameter() const noexcept { return parameter_; }

private:
    std::string parameter_;
};

/// A label is not in the output charset of a recognition head.
class UnsupportedCharacter : public Error {
public:
    UnsupportedCharacter(std::size_t head_id, int code)
        : Error("head " + std::to_string(head_id) + " does not support character code " +
                std::to_string(code)),
          head_id_(head_id), code_(code) {}
    std::size_t head_id() const noexcept { return head_id_; }
    int code() const noexcept { return code_; }

private:
    std::size_t head_id_;
    int code_;
};

/// Invalid or unsatisfiable experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace taskgroup
