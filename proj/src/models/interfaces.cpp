#include "keybot/models/interfaces.hpp"

#include "keybot/core/error.hpp"

namespace keybot::models {

void validate_window(const SpineTopology& topology, int window_size, std::span<const int> window)
{
    require(static_cast<int>(window.size()) == window_size, Errc::invalid_argument,
            "window length differs from the detector window size");
    for (int i : window)
        require(topology.is_detectable(i), Errc::invalid_argument,
                "window contains non-detectable index " + std::to_string(i));
}

}  // namespace keybot::models
