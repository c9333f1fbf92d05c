#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/data/dataset.hpp"
#include "keybot/data/synthetic.hpp"

using namespace keybot;
using namespace keybot::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("keybot_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

DatasetManifest ids_manifest(int n)
{
    DatasetManifest m;
    m.name = "m";
    m.topology = "aasce";
    for (int i = 0; i < n; ++i) m.train.push_back("s" + std::to_string(i));
    return m;
}

double gradient_magnitude(const Image& img, double row, double col)
{
    const double gr = img.sample(row + 1, col) - img.sample(row - 1, col);
    const double gc = img.sample(row, col + 1) - img.sample(row, col - 1);
    return std::hypot(gr, gc) / 2.0;
}

}  // namespace

TEST_CASE("synthetic samples are deterministic per seed and index")
{
    const auto p = SyntheticSpineParams::for_topology("aasce");
    const LabeledImage a = generate_synthetic_sample(p, 3), b = generate_synthetic_sample(p, 3);
    CHECK(a.image == b.image);
    CHECK(a.keypoints == b.keypoints);
    CHECK(a.keypoints.size() == 68);
    CHECK(a.image.height() == 512);
    CHECK(a.image.width() == 256);
    CHECK_FALSE(generate_synthetic_sample(p, 4).keypoints == a.keypoints);
    auto q = p;
    q.seed = p.seed + 1;
    CHECK_FALSE(generate_synthetic_sample(q, 3).image == a.image);
}

TEST_CASE("every synthetic keypoint sits on an edge of the rendered column")
{
    for (const char* topo : {"aasce", "buu_ap", "buu_la"}) {
        const auto p = SyntheticSpineParams::for_topology(topo);
        const SpineTopology t = SpineTopology::preset(topo);
        for (int i = 0; i < 10; ++i) {
            const LabeledImage s = generate_synthetic_sample(p, i);
            CHECK(static_cast<int>(s.keypoints.size()) == t.num_keypoints());
            std::vector<double> all;
            for (int r = 1; r + 1 < s.image.height(); r += 3)
                for (int c = 1; c + 1 < s.image.width(); c += 3) all.push_back(gradient_magnitude(s.image, r, c));
            std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
            const double median = all[all.size() / 2];
            for (int k : t.detectable_indices())
                CHECK(gradient_magnitude(s.image, s.keypoints[k].row, s.keypoints[k].col) > median);
        }
    }
}

TEST_CASE("synthetic keypoints keep their minimum separation")
{
    const auto p = SyntheticSpineParams::for_topology("aasce");
    for (int i = 0; i < 20; ++i) {
        const auto k = generate_synthetic_sample(p, i).keypoints;
        for (std::size_t a = 0; a < k.size(); ++a)
            for (std::size_t b = a + 1; b < k.size(); ++b) CHECK(distance(k[a], k[b]) >= p.min_separation);
    }
}

TEST_CASE("parameters that push vertebrae off the image are rejected")
{
    auto p = SyntheticSpineParams::for_topology("aasce");
    p.vertebra_height_min = p.vertebra_height_max = 40;
    CHECK_THROWS_AS(p.validate(), Error);
    auto q = SyntheticSpineParams::for_topology("aasce");
    q.image_width = 40;
    CHECK_THROWS_AS(generate_synthetic(q, 1), Error);
    CHECK_THROWS(synthetic_params_from_json({{"colour", 1}}, SyntheticSpineParams{}));
}

TEST_CASE("399 ids split 60/20/20 into 240/80/79")
{
    const auto m = split_dataset(ids_manifest(399), {0.6, 0.2, 0.2}, 5);
    CHECK(m.train.size() == 240);
    CHECK(m.val.size() == 80);
    CHECK(m.test.size() == 79);
}

TEST_CASE("splits partition the ids and depend only on the seed")
{
    for (int n : {1, 2, 7, 50, 101}) {
        const auto a = split_dataset(ids_manifest(n), {0.6, 0.2, 0.2}, 9);
        const auto b = split_dataset(ids_manifest(n), {0.6, 0.2, 0.2}, 9);
        CHECK(a.train == b.train);
        CHECK(a.test == b.test);
        const auto all = a.ids();
        CHECK(std::set<std::string>(all.begin(), all.end()).size() == static_cast<std::size_t>(n));
        CHECK(all.size() == static_cast<std::size_t>(n));
        a.validate();
    }
    CHECK_FALSE(split_dataset(ids_manifest(50), {0.6, 0.2, 0.2}, 1).train ==
                split_dataset(ids_manifest(50), {0.6, 0.2, 0.2}, 2).train);
    CHECK_THROWS(split_dataset(ids_manifest(0), {0.6, 0.2, 0.2}, 1));
    CHECK_THROWS(split_dataset(ids_manifest(5), {0.6, 0.3, 0.2}, 1));
}

TEST_CASE("overlapping splits fail validation")
{
    DatasetManifest m = ids_manifest(3);
    m.test = {"s1"};
    CHECK_THROWS(m.validate());
}

TEST_CASE("datasets round trip through disk")
{
    const fs::path root = scratch("dataset");
    auto p = SyntheticSpineParams::for_topology("buu_ap");
    auto samples = generate_synthetic(p, 4);
    DatasetManifest m = ids_manifest(0);
    m.topology = "buu_ap";
    for (const auto& s : samples) m.train.push_back(s.id);
    m = split_dataset(m, {0.5, 0.25, 0.25}, 1);
    write_dataset(root, m, samples);
    const DatasetManifest back = load_manifest(root);
    CHECK(back.train == m.train);
    CHECK(back.topology == "buu_ap");
    for (const auto& s : samples) {
        const LabeledImage l = load_sample(root, s.id, SpineTopology::buu_ap());
        CHECK(l.image.pixels() == s.image.pixels());
        for (std::size_t i = 0; i < s.keypoints.size(); ++i) {
            CHECK(std::abs(l.keypoints[i].row - s.keypoints[i].row) < 1e-6);
            CHECK(std::abs(l.keypoints[i].col - s.keypoints[i].col) < 1e-6);
        }
    }
    CHECK_THROWS(load_sample(root, samples[0].id, SpineTopology::aasce()));
}

TEST_CASE("working-frame conversion scales keypoints with the image")
{
    LabeledImage s{"x", Image(100, 50, 0.5f), KeypointSet(std::vector<Point>{{-0.5, -0.5}, {99.5, 49.5}, {49.5, 24.5}})};
    const LabeledImage w = to_working_frame(s, 200, 100);
    CHECK(w.image.height() == 200);
    CHECK(w.keypoints[0] == Point{-0.5, -0.5});
    CHECK(w.keypoints[1] == Point{199.5, 99.5});
    CHECK(w.keypoints[2] == Point{99.5, 49.5});
}

TEST_CASE("canonical import round trips and skips bad samples")
{
    const fs::path root = scratch("canonical");
    auto samples = generate_synthetic(SyntheticSpineParams::for_topology("buu_ap"), 3);
    DatasetManifest m = ids_manifest(0);
    m.topology = "buu_ap";
    for (const auto& s : samples) m.train.push_back(s.id);
    write_dataset(root, m, samples);
    // A fourth annotation with the wrong keypoint count.
    Annotation bad{"broken", 256, 512, KeypointSet(std::vector<Point>{{1, 1}}), "buu_ap"};
    write_json(root / "annotations" / "broken.json", to_json(bad));
    const ImportResult r = import_annotations(root, ImportFormat::canonical_json, "buu_ap");
    CHECK(r.samples.size() == 3);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0].id == "broken");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r.samples[i].id == samples[i].id);
        CHECK(r.samples[i].image.pixels() == samples[i].image.pixels());
    }
}

TEST_CASE("landmark-table import maps a hand-written two-vertebra fixture")
{
    const fs::path root = scratch("aasce_fixture");
    fs::create_directories(root / "images");
    write_png(root / "images" / "a.png", Image(100, 50, 0.2f));
    {
        std::ofstream f(root / "filenames.csv");
        f << "a.jpg\n";
    }
    {
        // Eight x values then eight y values, normalized by width and height.
        std::ofstream f(root / "landmarks.csv");
        f << "0.2,0.8,0.2,0.8,0.3,0.7,0.3,0.7,0.1,0.1,0.2,0.2,0.5,0.5,0.6,0.6\n";
    }
    const ImportResult r = import_annotations(root, ImportFormat::aasce_landmarks, "column:2");
    REQUIRE(r.samples.size() == 1);
    const auto& k = r.samples[0].keypoints;
    CHECK(k[0].row == doctest::Approx(10.0));
    CHECK(k[0].col == doctest::Approx(10.0));
    CHECK(k[1].col == doctest::Approx(40.0));
    CHECK(k[3].row == doctest::Approx(20.0));
    CHECK(k[6].row == doctest::Approx(60.0));
    CHECK(k[6].col == doctest::Approx(15.0));
    CHECK(r.manifest.train == std::vector<std::string>{"a"});
}

TEST_CASE("point-list import reads x,y lines and skips short files")
{
    const fs::path root = scratch("buu_fixture");
    write_png(root / "p1.png", Image(60, 40, 0.2f));
    write_png(root / "p2.png", Image(60, 40, 0.2f));
    {
        std::ofstream f(root / "p1.txt");
        for (int i = 0; i < 8; ++i) f << 2 * i << "," << 3 * i << "\n";
    }
    {
        std::ofstream f(root / "p2.txt");
        f << "1,2\n";
    }
    const ImportResult r = import_annotations(root, ImportFormat::buu_landmarks, "column:2");
    REQUIRE(r.samples.size() == 1);
    CHECK(r.samples[0].keypoints[5] == Point{15, 10});
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0].id == "p2");
    CHECK_THROWS(import_annotations(scratch("empty_import"), ImportFormat::buu_landmarks, "column:2"));
}
