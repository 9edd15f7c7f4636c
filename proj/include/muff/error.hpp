#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace muff {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or axis mismatch in a tensor operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A parameter outside its documented domain (n = 0, p >= 1, alpha > 1, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Malformed or unsupported input file (pcap, JSONL, checkpoint, manifest).
class FormatError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

// One or more invalid configuration fields; all of them are listed.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems);

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

}  // namespace muff
