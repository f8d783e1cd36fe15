#pragma once

#include <stdexcept>
#include <string>

namespace oto {

// Every failure in the library surfaces as one of these. The kind tag lets
// callers (CLI, tests) distinguish bad input from internal inconsistency
// without parsing message text.
enum class errc {
    parse,        // malformed manifest / blob / config / idx file
    shape,        // shape inference or shape compatibility failure
    validity,     // graph structure invariant violated
    consistency,  // checkpoint / partition disagree with each other
    numeric,      // NaN/Inf or divergence
    config,       // bad option combination
    io,           // filesystem
};

class error : public std::runtime_error {
public:
    error(errc kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    errc kind() const { return kind_; }

private:
    errc kind_;
};

[[noreturn]] inline void fail(errc kind, const std::string& msg) {
    throw error(kind, msg);
}

} // namespace oto
