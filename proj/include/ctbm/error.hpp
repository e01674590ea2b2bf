#pragma once

#include <stdexcept>
#include <string>

namespace ctbm {

// Base class for every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid process document or process invariant violation.
class spec_error : public error {
public:
    spec_error(std::string state, const std::string& what)
        : error(state.empty() ? what : "state '" + state + "': " + what), state_(std::move(state)) {}

    [[nodiscard]] const std::string& state() const { return state_; }

private:
    std::string state_;
};

class dimension_error : public error {
public:
    using error::error;
};

// Invalid numeric configuration (discount outside (0,1), bad tolerances, ...).
class config_error : public error {
public:
    using error::error;
};

// The requested algorithm does not support the structure of the given process.
class unsupported_structure : public error {
public:
    using error::error;
};

// Cost matrix is not a pseudometric where one is required.
class not_a_pseudometric : public error {
public:
    using error::error;
};

class parse_error : public error {
public:
    parse_error(const std::string& what, std::size_t offset)
        : error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    [[nodiscard]] std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Formula constructor used outside its dialect (e.g. a diamond inside L_sigma).
class dialect_error : public error {
public:
    using error::error;
};

class budget_exceeded : public error {
public:
    using error::error;
};

} // namespace ctbm
