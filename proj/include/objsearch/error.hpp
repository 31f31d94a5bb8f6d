#ifndef OBJSEARCH_ERROR_HPP
#define OBJSEARCH_ERROR_HPP

#include <stdexcept>
#include <string>

namespace objsearch {

/// Base of every exception thrown by the library. `kind()` is a short
/// machine-readable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error("parse", what) {}
};

class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& what) : Error("invariant", what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class UnknownIdError : public Error {
public:
    explicit UnknownIdError(const std::string& what) : Error("unknown-id", what) {}
};

class NonFiniteError : public Error {
public:
    explicit NonFiniteError(const std::string& what) : Error("non-finite", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

} // namespace objsearch

#endif // OBJSEARCH_ERROR_HPP
