#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "../support/generators.hpp"
#include "keybot/core/crop.hpp"
#include "keybot/core/error.hpp"
#include "keybot/core/heatmap.hpp"
#include "keybot/core/io.hpp"
#include "keybot/core/topology.hpp"

using namespace keybot;

TEST_CASE("grid mapping puts cell centers on pixel centers")
{
    const GridSpec g{128, 64, 512, 256};
    CHECK(g.to_image(0, 0).row == doctest::Approx(1.5));
    CHECK(g.to_image(0, 0).col == doctest::Approx(1.5));
    CHECK(g.to_image(127, 63).row == doctest::Approx(509.5));
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const Point p = testgen::random_point(rng, 512, 256);
        const Point q = g.to_grid(p);
        const Point back = g.to_image(q.row, q.col);
        CHECK(back.row == doctest::Approx(p.row).epsilon(1e-12));
        CHECK(back.col == doctest::Approx(p.col).epsilon(1e-12));
    }
}

TEST_CASE("render then decode recovers keypoints within half a cell")
{
    Rng rng(2);
    for (const GridSpec g : {GridSpec::same_as_image(64, 32), GridSpec{32, 16, 128, 64}}) {
        const KeypointSet k = testgen::random_keypoints(rng, 12, g.image_height - 1, g.image_width - 1);
        const auto d = decode_heatmaps(render_heatmaps(k, g, 2.0));
        for (std::size_t i = 0; i < k.size(); ++i) {
            CHECK(std::abs(d.keypoints[i].row - k[i].row) <= 0.5 * g.row_scale() + 1e-9);
            CHECK(std::abs(d.keypoints[i].col - k[i].col) <= 0.5 * g.col_scale() + 1e-9);
            CHECK_FALSE(d.low_confidence[i]);
        }
    }
}

TEST_CASE("integer keypoints decode exactly on a full-resolution grid")
{
    const KeypointSet k{{{3, 4}, {10, 0}, {0, 7}}};
    const auto d = decode_heatmaps(render_heatmaps(k, GridSpec::same_as_image(16, 8), 2.0));
    CHECK(d.keypoints == k);
}

TEST_CASE("decode breaks ties by lowest row then lowest column")
{
    HeatmapStack s(1, GridSpec::same_as_image(4, 4));
    s.at(0, 2, 1) = 1.0f;
    s.at(0, 1, 3) = 1.0f;
    s.at(0, 1, 2) = 1.0f;
    const auto d = decode_heatmaps(s);
    CHECK(d.keypoints[0] == Point{1, 2});
}

TEST_CASE("an all-zero channel decodes to the origin with low confidence")
{
    HeatmapStack s(2, GridSpec{4, 4, 16, 16});
    s.at(1, 3, 3) = 0.5f;
    const auto d = decode_heatmaps(s);
    CHECK(d.low_confidence[0]);
    CHECK_FALSE(d.low_confidence[1]);
    CHECK(d.keypoints[0] == Point{1.5, 1.5});
}

TEST_CASE("rendering only touches active channels and rejects non-finite points")
{
    const KeypointSet k{{{2, 2}, {NAN, 1}}};
    const std::vector<int> active = {0};
    const auto s = render_heatmaps(k, GridSpec::same_as_image(8, 8), 1.0, active);
    CHECK(s.at(0, 2, 2) == doctest::Approx(1.0f));
    for (float v : s.channel(1)) CHECK(v == 0.0f);
    CHECK_THROWS_AS(render_heatmaps(k, GridSpec::same_as_image(8, 8), 1.0), Error);
}

TEST_CASE("resample keeps the peak location")
{
    const KeypointSet k{{{21.5, 9.5}}};
    const GridSpec fine = GridSpec::same_as_image(64, 32);
    const GridSpec coarse{16, 8, 64, 32};
    const auto s = resample(render_heatmaps(k, fine, 4.0), coarse);
    const auto d = decode_heatmaps(s);
    CHECK(std::abs(d.keypoints[0].row - 21.5) <= 2.0);
    CHECK(std::abs(d.keypoints[0].col - 9.5) <= 2.0);
}

TEST_CASE("topology presets")
{
    const auto a = SpineTopology::aasce();
    CHECK(a.num_keypoints() == 68);
    CHECK(a.vertebrae().size() == 17);
    CHECK(a.lr_pairs().size() == 34);
    CHECK(a.detectable_indices().size() == 68);
    const auto la = SpineTopology::buu_la();
    CHECK(la.num_keypoints() == 22);
    CHECK(la.full_vertebrae().size() == 5);
    CHECK_FALSE(la.is_detectable(20));
    CHECK_FALSE(la.is_detectable(21));
    CHECK(la.vertebra_of(5) == 1);
    CHECK(SpineTopology::preset("column:2").num_keypoints() == 8);
    CHECK(SpineTopology::preset("column:3:2").num_keypoints() == 14);
    CHECK_THROWS_AS(SpineTopology::preset("column:2x"), Error);
    CHECK_THROWS_AS(SpineTopology::preset("lumbar"), Error);
}

TEST_CASE("vertebra corners follow TL, TR, BL, BR and pair left with right")
{
    const auto t = SpineTopology::column("c", 2);
    CHECK(t.vertebrae()[1].indices == std::vector<int>{4, 5, 6, 7});
    for (auto [l, r] : t.lr_pairs()) CHECK(r == l + 1);
}

TEST_CASE("png round trip is lossless for 8-bit images")
{
    Rng rng(3);
    Image img(17, 9);
    for (auto& v : img.pixels()) v = static_cast<float>(uniform_int(rng, 0, 255)) / 255.0f;
    const Image back = decode_png(encode_png(img));
    CHECK(back.pixels() == img.pixels());
}

TEST_CASE("garbage bytes are not a png")
{
    const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    try {
        decode_png(junk);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::io_error);
    }
}

TEST_CASE("annotation json round trip keeps coordinates")
{
    Rng rng(4);
    Annotation a{"x1", 256, 512, testgen::random_keypoints(rng, 8), "column:2"};
    const Annotation b = annotation_from_json(nlohmann::json::parse(to_json(a).dump()));
    CHECK(b.source_id == a.source_id);
    for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
        CHECK(std::abs(b.keypoints[i].row - a.keypoints[i].row) < 1e-6);
        CHECK(std::abs(b.keypoints[i].col - a.keypoints[i].col) < 1e-6);
    }
}

TEST_CASE("crop maps the grown box onto the corner pixel centers")
{
    const Image img(100, 120, 0.5f);
    const KeypointSet k{{{10, 10}, {50, 90}}};
    const std::vector<int> idx = {0, 1};
    const auto c = crop_around(img, k, idx, 41, 81, 0.0);
    CHECK(c.keypoints[0].row == doctest::Approx(0.0));
    CHECK(c.keypoints[0].col == doctest::Approx(0.0));
    CHECK(c.keypoints[1].row == doctest::Approx(40.0));
    CHECK(c.keypoints[1].col == doctest::Approx(80.0));
    const Point back = c.transform.inverse(c.keypoints[1]);
    CHECK(back.row == doctest::Approx(50.0));
    CHECK(back.col == doctest::Approx(90.0));
}

TEST_CASE("tiny crop boxes are widened to the minimum extent")
{
    const Image img(100, 100, 0.0f);
    const KeypointSet k{{{50, 50}, {51, 52}}};
    const std::vector<int> idx = {0, 1};
    const auto c = crop_around(img, k, idx, 32, 32, 0.0);
    CHECK(c.transform.row_scale <= 31.0 / kMinCropExtent + 1e-9);
    CHECK(c.transform.col_scale <= 31.0 / kMinCropExtent + 1e-9);
}

TEST_CASE("resize to the same size is the identity and downscale averages")
{
    Rng rng(5);
    const Image img = testgen::random_image(rng, 8, 6);
    CHECK(resize(img, 8, 6).pixels() == img.pixels());
    const Image d = downscale(img, 2);
    CHECK(d.height() == 4);
    CHECK(d.at(1, 2) == doctest::Approx((img.at(2, 4) + img.at(2, 5) + img.at(3, 4) + img.at(3, 5)) / 4.0f));
}
