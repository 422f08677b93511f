#pragma once

#include <stdexcept>
#include <string>

namespace peersync {

// Domain-specific error taxonomy. Precondition violations use
// std::invalid_argument directly; these cover the recoverable cases
// callers are expected to branch on.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric or lookup has no backing data yet (empty speed window,
// empty content index). Callers treat the subject as unscored.
class NoDataError : public Error {
public:
    explicit NoDataError(const std::string& msg) : Error(msg) {}
};

class NoCandidatesError : public Error {
public:
    explicit NoCandidatesError(const std::string& msg) : Error(msg) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& msg) : Error(msg) {}
};

// Every peer exhausted and the upstream registry unreachable.
class LayerUnavailableError : public Error {
public:
    explicit LayerUnavailableError(const std::string& msg) : Error(msg) {}
};

class UpstreamUnavailableError : public Error {
public:
    explicit UpstreamUnavailableError(const std::string& msg) : Error(msg) {}
};

// Scenario / manifest parse failure. `where` carries a JSON path or
// file:line locator.
class ParseError : public Error {
public:
    ParseError(const std::string& where, const std::string& msg)
        : Error(where + ": " + msg), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

} // namespace peersync
