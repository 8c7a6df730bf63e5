#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nesya {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input text could not be parsed. `position` is a 0-based character offset
// for guard expressions and a 1-based line number for spec files.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}
    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ResourceLimitError : public Error {
public:
    using Error::Error;
};

// Raised when a runtime invariant that validation should guarantee is broken.
class InternalConsistencyError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace nesya
