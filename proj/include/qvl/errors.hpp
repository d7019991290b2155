#pragma once

#include <stdexcept>
#include <string>

namespace qvl {

// All failures surface as typed exceptions so callers (and the CLI) can map
// them to exit codes without string matching.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};

struct EmptyReductionError : std::runtime_error {
    explicit EmptyReductionError(const std::string& m) : std::runtime_error(m) {}
};

struct NotScalarError : std::runtime_error {
    explicit NotScalarError(const std::string& m) : std::runtime_error(m) {}
};

struct NondeterminismError : std::runtime_error {
    explicit NondeterminismError(const std::string& m) : std::runtime_error(m) {}
};

struct TooLargeError : std::runtime_error {
    explicit TooLargeError(const std::string& m) : std::runtime_error(m) {}
};

struct IllegalActionError : std::runtime_error {
    explicit IllegalActionError(const std::string& m) : std::runtime_error(m) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};

struct NotEnoughDataError : std::runtime_error {
    explicit NotEnoughDataError(const std::string& m) : std::runtime_error(m) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& m) : std::runtime_error(m) {}
};

struct GridMismatchError : std::runtime_error {
    explicit GridMismatchError(const std::string& m) : std::runtime_error(m) {}
};

struct EmptyInputError : std::runtime_error {
    explicit EmptyInputError(const std::string& m) : std::runtime_error(m) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace qvl
