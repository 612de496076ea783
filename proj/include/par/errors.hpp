#pragma once

#include <stdexcept>
#include <string>

namespace par {

// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A value violates an operation's precondition (non-binary mask, p >= 1, ...).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A configuration, policy or checkpoint document is inconsistent.
class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A single data record could not be loaded.
class DataError : public std::runtime_error {
public:
    DataError(std::string record_id, const std::string& what)
        : std::runtime_error("record '" + record_id + "': " + what), record_id_(std::move(record_id)) {}

    const std::string& record_id() const noexcept { return record_id_; }

private:
    std::string record_id_;
};

// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(long step, const std::string& what)
        : std::runtime_error(what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace par
