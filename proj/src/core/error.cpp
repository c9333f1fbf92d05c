#include "keybot/core/error.hpp"

namespace keybot {

const char* errc_name(Errc code)
{
    switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::out_of_range: return "out_of_range";
    case Errc::failed_precondition: return "failed_precondition";
    case Errc::resolution_mismatch: return "resolution_mismatch";
    case Errc::not_found: return "not_found";
    case Errc::io_error: return "io_error";
    }
    return "unknown";
}

}  // namespace keybot
