#pragma once

#include <stdexcept>
#include <string>

namespace growlab {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

/// Violated precondition of an operation (bad indices, divisibility, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Tensor shapes that cannot be combined.
class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Bad user-supplied data: token ids out of range, empty corpus, ...
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration. `field` names the offending key path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Object queried in a state that cannot answer (no trace recorded, no adapter, ...).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A required artifact (lens adapters, checkpoint, ...) is absent.
class MissingPrerequisite : public std::runtime_error {
public:
    MissingPrerequisite(const std::string& message, std::string hint)
        : std::runtime_error(message), hint_(std::move(hint)) {}

    const std::string& hint() const noexcept { return hint_; }

private:
    std::string hint_;
};

}  // namespace growlab
