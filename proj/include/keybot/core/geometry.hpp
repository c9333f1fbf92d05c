#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace keybot {

/// Continuous image coordinate, origin at the top-left pixel center.
struct Point {
    double row = 0.0;
    double col = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b)
{
    return std::hypot(a.row - b.row, a.col - b.col);
}

inline bool is_finite(const Point& p)
{
    return std::isfinite(p.row) && std::isfinite(p.col);
}

/// K ordered keypoints; the topology that gives them meaning travels separately.
struct KeypointSet {
    std::vector<Point> points;

    KeypointSet() = default;
    explicit KeypointSet(std::vector<Point> pts) : points(std::move(pts)) {}

    std::size_t size() const { return points.size(); }
    Point& operator[](std::size_t i) { return points[i]; }
    const Point& operator[](std::size_t i) const { return points[i]; }

    bool all_finite() const
    {
        for (const auto& p : points)
            if (!is_finite(p)) return false;
        return true;
    }

    friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

/// Per-keypoint anomaly flags, true = erroneous.
struct AnomalyLabel {
    std::vector<bool> flags;

    std::size_t size() const { return flags.size(); }
    std::size_t count() const
    {
        std::size_t n = 0;
        for (bool f : flags) n += f ? 1 : 0;
        return n;
    }

    friend bool operator==(const AnomalyLabel&, const AnomalyLabel&) = default;
};

}  // namespace keybot
