#include "keybot/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "keybot/core/error.hpp"
#include "keybot/core/random.hpp"

namespace keybot::data {

SyntheticSpineParams SyntheticSpineParams::for_topology(const std::string& topology)
{
    SyntheticSpineParams p;
    p.topology = topology;
    const SpineTopology topo = SpineTopology::preset(topology);
    if (topo.full_vertebrae().size() <= 6) {
        p.vertebra_height_min = 44.0;
        p.vertebra_height_max = 52.0;
        p.vertebra_width_min = 90.0;
        p.vertebra_width_max = 116.0;
        p.gap_min = 22.0;
        p.gap_max = 26.0;
        p.start_row = 40.0;
        p.start_row_jitter = 8.0;
        p.curvature_amplitude = 10.0;
    }
    return p;
}

namespace {

constexpr double kTrailingDrop = 18.0;

struct Layout {
    int full = 0;
    int trailing = 0;
};

Layout layout_of(const SpineTopology& topo)
{
    Layout l;
    l.full = static_cast<int>(topo.full_vertebrae().size());
    l.trailing = topo.num_keypoints() - 4 * l.full;
    return l;
}

double growth_at(const SyntheticSpineParams& p, int v, int n)
{
    return 1.0 + p.growth * (n > 1 ? static_cast<double>(v) / (n - 1) : 0.0);
}

}  // namespace

void SyntheticSpineParams::validate() const
{
    auto positive_range = [](double lo, double hi, const char* what) {
        require(lo > 0.0 && hi >= lo, Errc::invalid_argument, std::string("invalid synthetic range: ") + what);
    };
    require(image_height >= 32 && image_width >= 32, Errc::invalid_argument, "synthetic image too small");
    positive_range(vertebra_height_min, vertebra_height_max, "vertebra height");
    positive_range(vertebra_width_min, vertebra_width_max, "vertebra width");
    positive_range(gap_min, gap_max, "gap");
    positive_range(curvature_frequency_min, curvature_frequency_max, "curvature frequency");
    require(growth >= 0.0 && start_row > 0.0 && start_row_jitter >= 0.0 && curvature_amplitude >= 0.0 &&
                tilt_max >= 0.0 && noise >= 0.0 && contrast > 0.0 && min_separation >= 0.0,
            Errc::invalid_argument, "synthetic parameters must be non-negative");
    const Layout l = layout_of(SpineTopology::preset(topology));

    double bottom = start_row + start_row_jitter;
    for (int v = 0; v < l.full; ++v) {
        const double g = growth_at(*this, v, l.full);
        bottom += vertebra_height_max * g + (v + 1 < l.full ? gap_max * g : 0.0);
    }
    if (l.trailing > 0) bottom += kTrailingDrop;
    // Rotation can push corners a little past the axis extent.
    bottom += 0.5 * vertebra_width_max * (1.0 + growth) * std::sin(0.25);
    require(bottom <= image_height - 2.0, Errc::invalid_argument,
            "synthetic column does not fit the image height; vertebrae would leave the image");
    const double half = 0.5 * vertebra_width_max * (1.0 + growth) + curvature_amplitude + tilt_max * image_height;
    require(half <= 0.5 * image_width - 2.0, Errc::invalid_argument,
            "synthetic column does not fit the image width; vertebrae would leave the image");
}

nlohmann::json to_json(const SyntheticSpineParams& p)
{
    return {{"topology", p.topology},
            {"image_height", p.image_height},
            {"image_width", p.image_width},
            {"vertebra_height_min", p.vertebra_height_min},
            {"vertebra_height_max", p.vertebra_height_max},
            {"vertebra_width_min", p.vertebra_width_min},
            {"vertebra_width_max", p.vertebra_width_max},
            {"gap_min", p.gap_min},
            {"gap_max", p.gap_max},
            {"growth", p.growth},
            {"start_row", p.start_row},
            {"start_row_jitter", p.start_row_jitter},
            {"curvature_amplitude", p.curvature_amplitude},
            {"curvature_frequency_min", p.curvature_frequency_min},
            {"curvature_frequency_max", p.curvature_frequency_max},
            {"tilt_max", p.tilt_max},
            {"background", p.background},
            {"contrast", p.contrast},
            {"noise", p.noise},
            {"min_separation", p.min_separation},
            {"seed", p.seed}};
}

SyntheticSpineParams synthetic_params_from_json(const nlohmann::json& j, SyntheticSpineParams base)
{
    require(j.is_object(), Errc::invalid_argument, "synthetic params must be an object");
    nlohmann::json merged = to_json(base);
    for (auto it = j.begin(); it != j.end(); ++it) {
        require(merged.contains(it.key()), Errc::invalid_argument, "unknown synthetic key '" + it.key() + "'");
        merged[it.key()] = it.value();
    }
    SyntheticSpineParams p;
    try {
        p.topology = merged.at("topology").get<std::string>();
        p.image_height = merged.at("image_height").get<int>();
        p.image_width = merged.at("image_width").get<int>();
        p.vertebra_height_min = merged.at("vertebra_height_min").get<double>();
        p.vertebra_height_max = merged.at("vertebra_height_max").get<double>();
        p.vertebra_width_min = merged.at("vertebra_width_min").get<double>();
        p.vertebra_width_max = merged.at("vertebra_width_max").get<double>();
        p.gap_min = merged.at("gap_min").get<double>();
        p.gap_max = merged.at("gap_max").get<double>();
        p.growth = merged.at("growth").get<double>();
        p.start_row = merged.at("start_row").get<double>();
        p.start_row_jitter = merged.at("start_row_jitter").get<double>();
        p.curvature_amplitude = merged.at("curvature_amplitude").get<double>();
        p.curvature_frequency_min = merged.at("curvature_frequency_min").get<double>();
        p.curvature_frequency_max = merged.at("curvature_frequency_max").get<double>();
        p.tilt_max = merged.at("tilt_max").get<double>();
        p.background = merged.at("background").get<double>();
        p.contrast = merged.at("contrast").get<double>();
        p.noise = merged.at("noise").get<double>();
        p.min_separation = merged.at("min_separation").get<double>();
        p.seed = merged.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("bad synthetic params: ") + e.what());
    }
    return p;
}

namespace {

struct Quad {
    Point c[4];  // TL, TR, BR, BL (clockwise on screen)
    double brightness = 1.0;
};

bool inside(const Quad& q, double r, double c)
{
    for (int i = 0; i < 4; ++i) {
        const Point& a = q.c[i];
        const Point& b = q.c[(i + 1) % 4];
        // Screen-clockwise in (row, col) means the interior is on the right.
        const double cross = (b.col - a.col) * (r - a.row) - (b.row - a.row) * (c - a.col);
        if (cross < 0.0) return false;
    }
    return true;
}

double min_pairwise(const std::vector<Point>& pts)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::min(best, distance(pts[i], pts[j]));
    return best;
}

struct Column {
    std::vector<Point> keypoints;
    std::vector<Quad> quads;
    double center_col = 0.0;
};

Column layout_column(const SyntheticSpineParams& p, const Layout& l, Rng& rng)
{
    const double H = p.image_height, W = p.image_width;
    const double amp = uniform_real(rng, 0.0, p.curvature_amplitude);
    const double freq = uniform_real(rng, p.curvature_frequency_min, p.curvature_frequency_max);
    const double phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
    const double tilt = uniform_real(rng, -p.tilt_max, p.tilt_max);
    auto center = [&](double row) {
        return 0.5 * W + amp * std::sin(2.0 * std::numbers::pi * freq * row / H + phase) + tilt * (row - 0.5 * H);
    };
    auto slope = [&](double row) {
        return amp * 2.0 * std::numbers::pi * freq / H * std::cos(2.0 * std::numbers::pi * freq * row / H + phase) +
               tilt;
    };

    Column col;
    col.center_col = 0.5 * W;
    double cursor = p.start_row + uniform_real(rng, -p.start_row_jitter, p.start_row_jitter);
    double last_bottom = cursor, last_center = center(cursor), last_width = p.vertebra_width_min;
    for (int v = 0; v < l.full; ++v) {
        const double g = growth_at(p, v, l.full);
        const double h = uniform_real(rng, p.vertebra_height_min, p.vertebra_height_max) * g;
        const double w = uniform_real(rng, p.vertebra_width_min, p.vertebra_width_max) * g;
        const double taper = uniform_real(rng, -0.06, 0.06);
        const double mid_row = cursor + 0.5 * h;
        const double mid_col = center(mid_row);
        const double theta = std::atan(slope(mid_row));
        // Axis unit vectors in (row, col): down the spine and to the right.
        const Point d{std::cos(theta), std::sin(theta)};
        const Point r{-std::sin(theta), std::cos(theta)};
        auto at = [&](double along, double across) {
            return Point{mid_row + along * d.row + across * r.row, mid_col + along * d.col + across * r.col};
        };
        const double top_half = 0.5 * w * (1.0 - taper), bottom_half = 0.5 * w * (1.0 + taper);
        const Point tl = at(-0.5 * h, -top_half), tr = at(-0.5 * h, top_half);
        const Point bl = at(0.5 * h, -bottom_half), br = at(0.5 * h, bottom_half);
        col.keypoints.insert(col.keypoints.end(), {tl, tr, bl, br});
        Quad q;
        q.c[0] = tl;
        q.c[1] = tr;
        q.c[2] = br;
        q.c[3] = bl;
        q.brightness = uniform_real(rng, 0.85, 1.1);
        col.quads.push_back(q);
        last_bottom = cursor + h;
        last_center = mid_col;
        last_width = w;
        cursor += h + uniform_real(rng, p.gap_min, p.gap_max) * g;
    }
    for (int t = 0; t < l.trailing; ++t) {
        const double side = (t % 2 == 0) ? -1.0 : 1.0;
        col.keypoints.push_back({last_bottom + kTrailingDrop - 4.0 * (t / 2),
                                 last_center + side * 0.3 * last_width});
    }
    return col;
}

}  // namespace

LabeledImage generate_synthetic_sample(const SyntheticSpineParams& params, int index)
{
    params.validate();
    require(index >= 0, Errc::invalid_argument, "sample index must be non-negative");
    const SpineTopology topo = SpineTopology::preset(params.topology);
    const Layout l = layout_of(topo);
    Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(index)));

    Column col;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        col = layout_column(params, l, rng);
        placed = min_pairwise(col.keypoints) >= params.min_separation;
        for (const Point& pt : col.keypoints)
            placed = placed && pt.row >= 1.0 && pt.col >= 1.0 && pt.row <= params.image_height - 2.0 &&
                     pt.col <= params.image_width - 2.0;
    }
    require(placed, Errc::invalid_argument, "could not place keypoints with the requested separation");

    const int H = params.image_height, W = params.image_width;
    std::vector<float> pixels(static_cast<std::size_t>(H) * W);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double body_width = 0.35 * W;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double dc = (c - col.center_col) / body_width;
            pixels[static_cast<std::size_t>(r) * W + c] =
                static_cast<float>(params.background + 0.06 * r / H + 0.08 * std::exp(-dc * dc));
        }
    // 2x2 supersampled coverage per quad.
    for (const Quad& q : col.quads) {
        double r0 = q.c[0].row, r1 = r0, c0 = q.c[0].col, c1 = c0;
        for (const Point& pt : q.c) {
            r0 = std::min(r0, pt.row);
            r1 = std::max(r1, pt.row);
            c0 = std::min(c0, pt.col);
            c1 = std::max(c1, pt.col);
        }
        for (int r = std::max(0, static_cast<int>(r0) - 1); r <= std::min(H - 1, static_cast<int>(r1) + 1); ++r)
            for (int c = std::max(0, static_cast<int>(c0) - 1); c <= std::min(W - 1, static_cast<int>(c1) + 1); ++c) {
                int hits = 0;
                for (double sr : {-0.25, 0.25})
                    for (double sc : {-0.25, 0.25}) hits += inside(q, r + sr, c + sc) ? 1 : 0;
                pixels[static_cast<std::size_t>(r) * W + c] +=
                    static_cast<float>(params.contrast * q.brightness * hits / 4.0);
            }
    }
    for (float& v : pixels) {
        const double noisy = v + params.noise * gauss(rng);
        v = static_cast<float>(std::round(std::clamp(noisy, 0.0, 1.0) * 255.0) / 255.0);
    }

    char id[32];
    std::snprintf(id, sizeof id, "syn_%05d", index);
    return LabeledImage{id, Image(H, W, std::move(pixels), id), KeypointSet(std::move(col.keypoints))};
}

std::vector<LabeledImage> generate_synthetic(const SyntheticSpineParams& params, int count)
{
    require(count >= 1, Errc::invalid_argument, "synthetic count must be positive");
    params.validate();
    std::vector<LabeledImage> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(generate_synthetic_sample(params, i));
    return out;
}

}  // namespace keybot::data
