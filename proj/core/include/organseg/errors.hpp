#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace organseg {

// Violated precondition or malformed input. The CLI maps this family to exit code 1.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A box or point that does not touch the grid it refers to. Usually means localization failed upstream.
class OutOfBounds : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class MissingStatistics : public std::runtime_error {
public:
    MissingStatistics(int organ_id, const std::string& what)
        : std::runtime_error(what), organ_id_(organ_id) {}
    int organ_id() const noexcept { return organ_id_; }

private:
    int organ_id_;
};

// Loss became NaN/inf during optimization.
class TrainingFailure : public std::runtime_error {
public:
    TrainingFailure(std::size_t step, const std::string& what)
        : std::runtime_error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// A pluggable component (predictor) broke its output contract.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    IoError(std::string path, const std::string& what)
        : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace organseg
