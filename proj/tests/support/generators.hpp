#pragma once

// Hand-rolled random generators shared by the property and acceptance tests.

#include <cstdint>
#include <string>
#include <vector>

#include "keybot/core/geometry.hpp"
#include "keybot/core/image.hpp"
#include "keybot/core/random.hpp"
#include "keybot/core/topology.hpp"

namespace keybot::testgen {

inline Point random_point(Rng& rng, double rows, double cols)
{
    return {uniform_real(rng, 0.0, rows), uniform_real(rng, 0.0, cols)};
}

/// K points drawn uniformly over a rows x cols box. Continuous draws make
/// coincident points a probability-zero event.
inline KeypointSet random_keypoints(Rng& rng, int K, double rows = 512.0, double cols = 256.0)
{
    KeypointSet k;
    for (int i = 0; i < K; ++i) k.points.push_back(random_point(rng, rows, cols));
    return k;
}

/// Offsets every point by a uniform amount up to `amount` per axis.
inline KeypointSet jitter(const KeypointSet& k, Rng& rng, double amount)
{
    KeypointSet out = k;
    for (auto& p : out.points) {
        p.row += uniform_real(rng, -amount, amount);
        p.col += uniform_real(rng, -amount, amount);
    }
    return out;
}

inline SpineTopology random_topology(Rng& rng)
{
    const auto names = SpineTopology::preset_names();
    return SpineTopology::preset(names[uniform_int(rng, 0, static_cast<int>(names.size()) - 1)]);
}

/// Random column with 2..8 full vertebrae and 0..2 trailing points.
inline SpineTopology random_column(Rng& rng)
{
    return SpineTopology::column("gen", uniform_int(rng, 2, 8), uniform_int(rng, 0, 2));
}

inline Image random_image(Rng& rng, int height, int width)
{
    Image img(height, width);
    for (auto& v : img.pixels()) v = static_cast<float>(uniform_real(rng, 0.0, 1.0));
    return img;
}

inline std::vector<double> random_curve(Rng& rng, int length, double scale = 20.0)
{
    std::vector<double> c(length);
    for (auto& v : c) v = uniform_real(rng, 0.0, scale);
    return c;
}

}  // namespace keybot::testgen
