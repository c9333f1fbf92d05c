#include <doctest.h>

#include <map>
#include <set>

#include "../support/generators.hpp"
#include "keybot/core/error.hpp"
#include "keybot/errorsim/errorsim.hpp"

using namespace keybot;
using namespace keybot::errorsim;

namespace {

// Two-vertebra column: vertebra 0 corners on row 10, vertebra 1 on row 30.
KeypointSet toy_column()
{
    return KeypointSet{{{10, 0}, {10, 20}, {10, 5}, {10, 25}, {30, 0}, {30, 20}, {30, 5}, {30, 25}}};
}

}  // namespace

TEST_CASE("misbone extrapolates past the top of the column")
{
    const auto topo = SpineTopology::column("toy", 2);
    Rng rng(1);
    const auto r = simulate_misbone(toy_column(), topo, rng, BoneShift::up, SpanScenario::random_end);
    const auto& p = std::get<MisboneParams>(r.applied_spec.params);
    if (p.last_vertebra == 0) {
        for (int i = 0; i < 4; ++i) CHECK(r.corrupted[i].row == -10.0);
        for (int i = 4; i < 8; ++i) CHECK(r.corrupted[i].row == 30.0);
    }
    MisboneParams fixed{BoneShift::up, SpanScenario::random_end, 0, 0};
    const auto f = apply_spec(toy_column(), topo, {ErrorKind::misbone, fixed, 0});
    for (int i = 0; i < 4; ++i) CHECK(f.corrupted[i].row == -10.0);
    CHECK(f.labels.count() == 4);
}

TEST_CASE("misbone down on the whole column shifts interior and extrapolates the bottom")
{
    const auto topo = SpineTopology::column("toy", 2);
    MisboneParams down{BoneShift::down, SpanScenario::full_range, 0, 1};
    const auto r = apply_spec(toy_column(), topo, {ErrorKind::misbone, down, 0});
    for (int i = 0; i < 4; ++i) CHECK(r.corrupted[i].row == 30.0);
    for (int i = 4; i < 8; ++i) CHECK(r.corrupted[i].row == 50.0);
}

TEST_CASE("misbone accurate direction is the identity")
{
    const auto topo = SpineTopology::column("toy", 2);
    Rng rng(2);
    const auto r = simulate_misbone(toy_column(), topo, rng, BoneShift::accurate);
    CHECK(r.corrupted == toy_column());
    CHECK(r.labels.count() == 0);
}

TEST_CASE("misvertex with radius 1 moves a point onto a neighbor")
{
    const KeypointSet k{{{0, 0}, {1, 1}, {2, 2}, {3, 3}}};
    Rng rng(3);
    const auto r = simulate_misvertex(k, 1, 1, rng);
    const auto& p = std::get<MisvertexParams>(r.applied_spec.params);
    REQUIRE(p.displacements.size() == 1);
    const auto [i, d] = p.displacements[0];
    CHECK((d == 1 || d == -1));
    CHECK(r.corrupted[i] == k[(i + d + 4) % 4]);
}

TEST_CASE("misvertex offsets cover both signs and never zero")
{
    Rng rng(4);
    const KeypointSet k = testgen::random_keypoints(rng, 20);
    std::set<int> seen;
    for (int n = 0; n < 400; ++n) {
        const auto r = simulate_misvertex(k, 4, 3, rng);
        for (auto [i, d] : std::get<MisvertexParams>(r.applied_spec.params).displacements) seen.insert(d);
    }
    CHECK(seen == std::set<int>{-4, -3, -2, -1, 1, 2, 3, 4});
}

TEST_CASE("misvertex rejects a radius that wraps onto itself")
{
    Rng rng(5);
    const KeypointSet k = testgen::random_keypoints(rng, 4);
    CHECK_THROWS_AS(simulate_misvertex(k, 4, 1, rng), Error);
    CHECK_THROWS_AS(simulate_misvertex(k, 0, 1, rng), Error);
    CHECK_THROWS_AS(simulate_misvertex(k, 2, 5, rng), Error);
}

TEST_CASE("lr inversion with probability zero changes nothing")
{
    const auto topo = SpineTopology::aasce();
    Rng rng(6);
    const KeypointSet k = testgen::random_keypoints(rng, 68);
    const auto r = simulate_lr_inversion(k, topo, 0.0, rng);
    CHECK(r.corrupted == k);
    CHECK(r.labels.count() == 0);
}

TEST_CASE("a coincident pair swaps without raising labels")
{
    const auto topo = SpineTopology::column("toy", 1);
    const KeypointSet k{{{1, 1}, {1, 1}, {5, 0}, {5, 9}}};
    Rng rng(7);
    const auto r = simulate_lr_inversion(k, topo, 1.0, rng);
    CHECK_FALSE(r.labels.flags[0]);
    CHECK_FALSE(r.labels.flags[1]);
    CHECK(r.labels.flags[2]);
    CHECK(r.labels.flags[3]);
}

TEST_CASE("detector profile displaces 0..3 keypoints inside the window only")
{
    const auto topo = SpineTopology::aasce();
    const auto profile = CorruptionProfile::detector_train(topo);
    CHECK(profile.detector_max_displaced == 3);
    CHECK(CorruptionProfile::detector_train(SpineTopology::buu_ap()).detector_max_displaced == 4);
    Rng rng(8);
    const KeypointSet k = testgen::random_keypoints(rng, 68);
    const std::vector<int> window = {8, 9, 10, 11, 12, 13, 14, 15};
    std::map<std::size_t, int> counts;
    for (int n = 0; n < 2000; ++n) {
        const auto r = sample_training_corruption(k, topo, profile, rng, window);
        CHECK(r.applied_spec.kind != ErrorKind::misbone);
        CHECK(r.applied_spec.kind != ErrorKind::lr_inversion);
        ++counts[r.labels.count()];
        for (int i = 0; i < 68; ++i)
            if (r.labels.flags[i]) CHECK((i >= 8 && i <= 15));
    }
    CHECK(counts.size() == 4);
    for (auto [c, n] : counts) CHECK(n > 350);
}

TEST_CASE("corrector profile is accurate about a fifth of the time")
{
    const auto topo = SpineTopology::aasce();
    const auto profile = CorruptionProfile::corrector_train();
    Rng rng(9);
    const KeypointSet k = testgen::random_keypoints(rng, 68);
    std::map<ErrorKind, int> kinds;
    const int n = 5000;
    for (int i = 0; i < n; ++i) ++kinds[sample_training_corruption(k, topo, profile, rng).applied_spec.kind];
    CHECK(kinds[ErrorKind::accurate] / double(n) == doctest::Approx(0.2).epsilon(0.15));
    for (auto kind : {ErrorKind::misvertex, ErrorKind::misbone, ErrorKind::lr_inversion})
        CHECK(kinds[kind] / double(n) == doctest::Approx(0.8 / 3).epsilon(0.12));
}

TEST_CASE("single errors always change something")
{
    const auto topo = SpineTopology::buu_la();
    const auto profile = CorruptionProfile::corrector_train();
    Rng rng(10);
    for (int n = 0; n < 300; ++n) {
        const KeypointSet k = testgen::random_keypoints(rng, topo.num_keypoints());
        for (auto kind : {ErrorKind::misvertex, ErrorKind::misbone, ErrorKind::lr_inversion}) {
            const auto r = sample_single_error(k, topo, kind, profile, rng);
            CHECK(r.applied_spec.kind == kind);
            CHECK(r.labels.count() > 0);
        }
    }
    CHECK_THROWS_AS(sample_single_error(testgen::random_keypoints(rng, 22), topo, ErrorKind::accurate, profile, rng),
                    Error);
}

TEST_CASE("error specs round trip through json and replay")
{
    const auto topo = SpineTopology::aasce();
    const auto profile = CorruptionProfile::corrector_train();
    Rng rng(11);
    for (int n = 0; n < 200; ++n) {
        const KeypointSet k = testgen::random_keypoints(rng, 68);
        const auto r = sample_training_corruption(k, topo, profile, rng);
        const ErrorSpec back = error_spec_from_json(nlohmann::json::parse(to_json(r.applied_spec).dump()));
        CHECK(apply_spec(k, topo, back).corrupted == r.corrupted);
    }
}

TEST_CASE("profiles round trip and reject unknown names")
{
    auto p = CorruptionProfile::corrector_train();
    p.misvertex_count_weights = {1, 2, 3};
    const auto q = CorruptionProfile::from_json(p.to_json());
    CHECK(q.misvertex_count_weights == p.misvertex_count_weights);
    CHECK(q.kind == p.kind);
    CHECK_THROWS(error_kind_from_string("sideways"));
    CHECK_THROWS(profile_kind_from_string("both"));
}
