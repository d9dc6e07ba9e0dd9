#pragma once

#include <stdexcept>
#include <string>

namespace koopgraph {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, bad parameter).
class ContractError : public Error {
public:
    using Error::Error;
};

/// An iterative kernel failed to converge or produced non-finite output.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Input data admits no meaningful answer (all-zero snapshots, isolated
/// nodes under normalization, zero-variance signals, empty edge sets).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// A nonlinear rollout left the finite range.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int step)
        : Error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

/// Malformed files, configs or manifests.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace koopgraph
