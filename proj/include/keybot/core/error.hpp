#pragma once

#include <stdexcept>
#include <string>

namespace keybot {

enum class Errc {
    invalid_argument,
    out_of_range,
    failed_precondition,
    resolution_mismatch,
    not_found,
    io_error,
};

const char* errc_name(Errc code);

/// Library-wide exception. The code lets callers (the HTTP layer, the CLI)
/// map failures onto their own status vocabularies.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline void require(bool condition, Errc code, const std::string& message)
{
    if (!condition) throw Error(code, message);
}

}  // namespace keybot
