#include "keybot/eval/metrics.hpp"

#include <cmath>

#include "keybot/core/error.hpp"

namespace keybot::eval {

double mre(const KeypointSet& prediction, const KeypointSet& groundtruth)
{
    require(prediction.size() == groundtruth.size(), Errc::invalid_argument, "mre needs equally sized keypoint sets");
    require(!prediction.points.empty(), Errc::invalid_argument, "mre of an empty keypoint set");
    require(prediction.all_finite() && groundtruth.all_finite(), Errc::invalid_argument,
            "mre needs finite coordinates");
    double sum = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) sum += distance(prediction[i], groundtruth[i]);
    return sum / static_cast<double>(prediction.size());
}

double noc(std::span<const double> curve, int max_clicks, double target)
{
    require(max_clicks >= 0, Errc::invalid_argument, "noc needs a non-negative click cap");
    require(static_cast<int>(curve.size()) >= max_clicks + 1, Errc::out_of_range,
            "noc click cap exceeds the curve length");
    for (int c = 0; c <= max_clicks; ++c)
        if (curve[c] <= target) return c;
    return max_clicks;
}

}  // namespace keybot::eval
