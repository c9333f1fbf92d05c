// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
// Usage: keybot_acceptance [--only 1,2,...] [--work-dir DIR] [--quick] [--reuse-models]
//   --quick shrinks the trained-model criteria for smoke runs; the verdicts
//   it prints are not the acceptance verdicts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "../support/generators.hpp"
#include "keybot/core/error.hpp"
#include "keybot/core/heatmap.hpp"
#include "keybot/core/io.hpp"
#include "keybot/data/synthetic.hpp"
#include "keybot/engine/engine.hpp"
#include "keybot/errorsim/errorsim.hpp"
#include "keybot/eval/bench.hpp"
#include "keybot/eval/metrics.hpp"
#include "keybot/models/checkpoint.hpp"
#include "keybot/models/oracles.hpp"
#include "keybot/models/training.hpp"
#include "keybot/service/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace keybot;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool same_bits(const Point& a, const Point& b)
{
    return std::memcmp(&a.row, &b.row, sizeof(double)) == 0 && std::memcmp(&a.col, &b.col, sizeof(double)) == 0;
}

// ------------------------------------------------------------ criterion 1

/// Counts violations; `why` keeps the first one.
struct Violations {
    long count = 0;
    std::string first;

    void add(bool ok, const std::string& what)
    {
        if (ok) return;
        if (count++ == 0) first = what;
    }
};

void check_labels(const KeypointSet& orig, const errorsim::CorruptionResult& r, Violations& v, const char* gen)
{
    v.add(r.corrupted.size() == orig.size(), std::string(gen) + ": size changed");
    v.add(r.labels.size() == orig.size(), std::string(gen) + ": label count");
    for (std::size_t i = 0; i < orig.size() && i < r.labels.size(); ++i)
        v.add(r.labels.flags[i] == !same_bits(orig[i], r.corrupted[i]), std::string(gen) + ": label/position mismatch");
}

Verdict criterion_errorsim()
{
    const auto t0 = Clock::now();
    Rng rng(101);
    Violations v;
    constexpr int kCases = 1000;

    for (int n = 0; n < kCases; ++n) {
        const int K = uniform_int(rng, 3, 80);
        const KeypointSet kps = testgen::random_keypoints(rng, K);
        const int radius = uniform_int(rng, 1, std::min(6, K - 1));
        const int count = uniform_int(rng, 0, K);
        const std::uint64_t seed = rng();
        Rng a(seed), b(seed);
        const auto r = errorsim::simulate_misvertex(kps, radius, count, a);
        const auto r2 = errorsim::simulate_misvertex(kps, radius, count, b);
        v.add(r.corrupted == r2.corrupted && r.labels == r2.labels, "misvertex: not reproducible");
        check_labels(kps, r, v, "misvertex");
        const auto& p = std::get<errorsim::MisvertexParams>(r.applied_spec.params);
        v.add(static_cast<int>(p.displacements.size()) == count, "misvertex: displaced count");
        std::set<int> moved;
        for (auto [i, d] : p.displacements) {
            v.add(d != 0, "misvertex: zero offset");
            v.add(std::abs(d) <= radius, "misvertex: offset beyond radius");
            v.add(moved.insert(i).second, "misvertex: index displaced twice");
            const int src = ((i + d) % K + K) % K;
            v.add(same_bits(r.corrupted[i], kps[src]), "misvertex: displaced point is not the wrapped original");
        }
        for (int i = 0; i < K; ++i)
            if (!moved.count(i)) v.add(same_bits(r.corrupted[i], kps[i]), "misvertex: untouched point moved");
        v.add(errorsim::apply_spec(kps, SpineTopology::column("x", 1), r.applied_spec).corrupted == r.corrupted,
              "misvertex: spec replay differs");
    }

    for (int n = 0; n < kCases; ++n) {
        const SpineTopology topo = n % 2 ? testgen::random_topology(rng) : testgen::random_column(rng);
        const KeypointSet kps = testgen::random_keypoints(rng, topo.num_keypoints());
        const std::uint64_t seed = rng();
        Rng a(seed), b(seed);
        const auto r = errorsim::simulate_misbone(kps, topo, a);
        v.add(errorsim::simulate_misbone(kps, topo, b).corrupted == r.corrupted, "misbone: not reproducible");
        check_labels(kps, r, v, "misbone");
        const auto& p = std::get<errorsim::MisboneParams>(r.applied_spec.params);
        const auto full = topo.full_vertebrae();
        const int V = static_cast<int>(full.size());
        const auto& verts = topo.vertebrae();
        std::vector<bool> in_span(kps.size(), false);
        if (p.direction != errorsim::BoneShift::accurate) {
            v.add(p.first_vertebra >= 0 && p.first_vertebra <= p.last_vertebra && p.last_vertebra < V,
                  "misbone: span out of range");
            switch (p.scenario) {
            case errorsim::SpanScenario::full_range:
                v.add(p.first_vertebra == 0 && p.last_vertebra == V - 1, "misbone: full range span");
                break;
            case errorsim::SpanScenario::random_start: v.add(p.last_vertebra == V - 1, "misbone: random start"); break;
            case errorsim::SpanScenario::random_end: v.add(p.first_vertebra == 0, "misbone: random end"); break;
            default: break;
            }
            const int step = p.direction == errorsim::BoneShift::up ? -1 : 1;
            for (int vi = p.first_vertebra; vi <= p.last_vertebra; ++vi) {
                for (int role = 0; role < 4; ++role) {
                    const int idx = verts[full[vi]].indices[role];
                    in_span[idx] = true;
                    const int nb = vi + step;
                    Point want;
                    if (nb >= 0 && nb < V) {
                        want = kps[verts[full[nb]].indices[role]];
                    } else if (step < 0) {
                        const Point f = kps[verts[full[0]].indices[role]], s = kps[verts[full[1]].indices[role]];
                        want = {kps[idx].row + (f.row - s.row), kps[idx].col + (f.col - s.col)};
                    } else {
                        const Point l = kps[verts[full[V - 1]].indices[role]], s = kps[verts[full[V - 2]].indices[role]];
                        want = {kps[idx].row + (l.row - s.row), kps[idx].col + (l.col - s.col)};
                    }
                    v.add(same_bits(r.corrupted[idx], want), "misbone: adjacency/extrapolation formula");
                }
            }
        }
        for (std::size_t i = 0; i < kps.size(); ++i)
            if (!in_span[i]) v.add(same_bits(r.corrupted[i], kps[i]), "misbone: point outside span moved");
        v.add(errorsim::apply_spec(kps, topo, r.applied_spec).corrupted == r.corrupted, "misbone: spec replay differs");
    }

    for (int n = 0; n < kCases; ++n) {
        const SpineTopology topo = n % 2 ? testgen::random_topology(rng) : testgen::random_column(rng);
        const KeypointSet kps = testgen::random_keypoints(rng, topo.num_keypoints());
        Rng a(rng());
        const auto once = errorsim::simulate_lr_inversion(kps, topo, 1.0, a);
        const auto twice = errorsim::simulate_lr_inversion(once.corrupted, topo, 1.0, a);
        v.add(twice.corrupted == kps, "lr_inversion: not an involution");
        check_labels(kps, once, v, "lr_inversion");
        for (auto [l, r] : topo.lr_pairs())
            v.add(same_bits(once.corrupted[l], kps[r]) && same_bits(once.corrupted[r], kps[l]),
                  "lr_inversion: pair not swapped at probability 1");
        const double prob = uniform_real(rng, 0.0, 1.0);
        const auto partial = errorsim::simulate_lr_inversion(kps, topo, prob, a);
        check_labels(kps, partial, v, "lr_inversion");
        const auto& sw = std::get<errorsim::LrInversionParams>(partial.applied_spec.params).swapped_pairs;
        std::vector<bool> swapped(kps.size(), false);
        for (int pi : sw) {
            const auto [l, r] = topo.lr_pairs().at(pi);
            swapped[l] = swapped[r] = true;
            v.add(same_bits(partial.corrupted[l], kps[r]) && same_bits(partial.corrupted[r], kps[l]),
                  "lr_inversion: recorded pair not swapped");
        }
        for (std::size_t i = 0; i < kps.size(); ++i)
            if (!swapped[i]) v.add(same_bits(partial.corrupted[i], kps[i]), "lr_inversion: unswapped point moved");
    }

    const double secs = seconds_since(t0);
    const bool pass = v.count == 0 && secs < 30.0;
    return {pass, fmt("%d cases x 3 generators, %ld violations%s%s, %.2f s", kCases, v.count,
                      v.count ? ": " : "", v.first.c_str(), secs)};
}

// ------------------------------------------------------------ criterion 2

Verdict criterion_oracle_loop()
{
    data::SyntheticSpineParams params = data::SyntheticSpineParams::for_topology("aasce");
    params.seed = 2024;
    const SpineTopology topo = SpineTopology::aasce();
    const auto profile = errorsim::CorruptionProfile::corrector_train();
    const GridSpec corrector_grid{256, 128, models::kWorkingHeight, models::kWorkingWidth};
    const GridSpec full = GridSpec::same_as_image(models::kWorkingHeight, models::kWorkingWidth);
    static constexpr errorsim::ErrorKind kinds[] = {errorsim::ErrorKind::misvertex, errorsim::ErrorKind::misbone,
                                                    errorsim::ErrorKind::lr_inversion};
    int ok = 0;
    double worst = 0.0, mean_before = 0.0;
    for (int i = 0; i < 100; ++i) {
        const LabeledImage s = data::generate_synthetic_sample(params, i);
        Rng rng(mix_seed(77, i));
        const KeypointSet corrupted = errorsim::sample_single_error(s.keypoints, topo, kinds[i % 3], profile, rng).corrupted;
        models::ModelSet m;
        m.detector = std::make_shared<models::OracleDetector>(s.keypoints, 8, 8.0);
        m.corrector = std::make_shared<models::OracleCorrector>(s.keypoints, corrector_grid);
        m.interaction = std::make_shared<models::IdentityHintInteraction>(corrupted, full);
        engine::RefinementConfig cfg;
        cfg.N = 3;
        cfg.T = 0;
        engine::RefinementSession session(s.image, topo, m, cfg, s.keypoints, corrupted);
        session.run_keybot(3);
        const double e = eval::mre(session.prediction(), s.keypoints);
        mean_before += eval::mre(corrupted, s.keypoints) / 100.0;
        worst = std::max(worst, e);
        ok += e <= 1.5 && session.t() == 0 && session.n() <= 3;
    }
    return {ok == 100, fmt("%d/100 samples reach MRE <= 1.5 px (worst %.3f px, corrupted mean %.2f px)", ok, worst,
                           mean_before)};
}

// ------------------------------------------------------------ criterion 3

/// Flags keypoints through a hash of their exact coordinates, so repeated
/// predictions give fresh but reproducible verdicts.
class HashDetector final : public models::DetectorModel {
public:
    HashDetector(int k, std::uint64_t salt) : k_(k), salt_(salt) {}
    int window_size() const override { return k_; }
    std::vector<double> forward(const Image&, const KeypointSet& kps, std::span<const int> window) const override
    {
        std::vector<double> p;
        for (int i : window) {
            std::uint64_t bits[2];
            std::memcpy(&bits[0], &kps[i].row, 8);
            std::memcpy(&bits[1], &kps[i].col, 8);
            const std::uint64_t h = mix_seed(bits[0] ^ mix_seed(bits[1], i), salt_);
            p.push_back(static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53));
        }
        return p;
    }

private:
    int k_;
    std::uint64_t salt_;
};

json strip_timings(json j)
{
    for (auto& it : j["iterations"]) it.erase("seconds");
    return j;
}

/// One randomized session; returns its export (timings stripped). Invariant
/// violations are recorded in `v`.
struct SessionStats {
    long iterations = 0, clicks = 0, rejected_clicks = 0, selections = 0, e_entries = 0;
};

json random_session(std::uint64_t seed, Violations& v, SessionStats& st)
{
    Rng rng(seed);
    const SpineTopology topo = testgen::random_column(rng);
    const int K = topo.num_keypoints();
    const GridSpec grid{128, 64, 512, 256};
    const KeypointSet gt = testgen::random_keypoints(rng, K, 500, 250);
    models::ModelSet m;
    m.interaction = std::make_shared<models::IdentityHintInteraction>(testgen::jitter(gt, rng, 12.0), grid);
    m.corrector = std::make_shared<models::OracleCorrector>(testgen::jitter(gt, rng, 6.0), grid);
    const int D = static_cast<int>(topo.detectable_indices().size());
    engine::RefinementConfig cfg;
    cfg.T = uniform_int(rng, 0, 5);
    cfg.N = uniform_int(rng, 0, 4);
    cfg.k = uniform_int(rng, 1, std::max(1, D));
    cfg.s = uniform_int(rng, 1, cfg.k);
    cfg.anomaly_threshold = uniform_real(rng, 0.2, 0.8);
    cfg.accumulate_false_preds = bernoulli(rng, 0.5);
    cfg.keep_paths = bernoulli(rng, 0.5);
    cfg.seed = rng();
    m.detector = std::make_shared<HashDetector>(cfg.k, rng());

    engine::RefinementSession s(Image(512, 256, 0.5f), topo, m, cfg, gt);
    std::map<int, Point> user;  // rho with the last user position
    int clicks = 0;
    std::set<int> round_added;
    std::vector<std::vector<Point>> e_before = s.false_predictions();
    const int actions = uniform_int(rng, 1, 12);
    for (int a = 0; a < actions; ++a) {
        const int what = uniform_int(rng, 0, 9);
        if (what < 5) {
            const int n_before = s.n();
            const KeypointSet before = s.prediction();
            const auto out = s.keybot_step();
            v.add(s.n() <= cfg.N, "iteration budget exceeded");
            if (!out.executed) {
                v.add(s.n() == n_before && s.prediction() == before, "no-op step changed state");
                continue;
            }
            const auto& rec = *out.record;
            ++st.iterations;
            st.e_entries += static_cast<long>(rec.false_added.size());
            for (int i : rec.corrected) v.add(!user.count(i), "pseudo-correction written to a revised keypoint");
            for (int i : rec.detected)
                if (user.count(i))
                    v.add(std::find(rec.corrected.begin(), rec.corrected.end(), i) == rec.corrected.end(),
                          "revised keypoint corrected");
            for (int i : rec.false_added) {
                v.add(round_added.insert(i).second, "keypoint entered e twice in one round");
                v.add(!user.count(i), "revised keypoint entered e through KeyBot");
            }
            const auto& e = s.false_predictions();
            for (int i = 0; i < K; ++i) {
                const bool added = std::find(rec.false_added.begin(), rec.false_added.end(), i) != rec.false_added.end();
                std::vector<Point> want = cfg.accumulate_false_preds ? e_before[i] : std::vector<Point>{};
                if (added) want.push_back(before[i]);
                v.add(e[i] == want, "e update differs from the once-per-round rule");
            }
            e_before = e;
        } else if (what < 8) {
            const int idx = uniform_int(rng, 0, K - 1);
            const Point pos = testgen::random_point(rng, 500, 250);
            const KeypointSet before = s.prediction();
            if (clicks >= cfg.T) {
                bool threw = false;
                try {
                    s.user_step({idx, pos, 0.0});
                } catch (const Error&) {
                    threw = true;
                }
                v.add(threw, "click accepted beyond the budget");
                ++st.rejected_clicks;
                continue;
            }
            s.user_step({idx, pos, 0.0});
            ++clicks;
            ++st.clicks;
            user[idx] = pos;
            round_added.clear();
            const auto& e = s.false_predictions();
            for (int i = 0; i < K; ++i) {
                std::vector<Point> want = cfg.accumulate_false_preds ? e_before[i] : std::vector<Point>{};
                if (i == idx) want.push_back(before[i]);
                v.add(e[i] == want, "click e update");
            }
            e_before = e;
            v.add(s.n() == 0 && s.t() == clicks, "round counters after click");
        } else if (cfg.keep_paths && !s.path_selected()) {
            const int j = uniform_int(rng, 0, static_cast<int>(s.current_paths().size()) - 1);
            s.select_path(j);
            ++st.selections;
            v.add(s.prediction() == s.current_paths().back(), "selected path is not the prediction");
            // Restored e and a shorter round: recompute the expected bookkeeping.
            e_before = s.false_predictions();
            round_added.clear();
            for (const auto& it : s.iterations())
                if (it.round == s.t() && it.iteration <= s.n())
                    round_added.insert(it.false_added.begin(), it.false_added.end());
        }
        // rho exemption: revised keypoints keep exactly the user position in c.
        for (const auto& [i, p] : user) v.add(s.corrections()[i] && *s.corrections()[i] == p, "c lost a user point");
        v.add(s.t() <= cfg.T, "click budget exceeded");
    }
    s.finalize();
    return strip_timings(s.to_json());
}

Verdict criterion_state_machine()
{
    Violations v;
    SessionStats st, scratch_stats;
    int reproducible = 0;
    for (int n = 0; n < 1000; ++n) {
        const std::uint64_t seed = mix_seed(303, n);
        Violations scratch;
        const json a = random_session(seed, v, st);
        const json b = random_session(seed, scratch, scratch_stats);
        const bool same = a.dump() == b.dump();
        reproducible += same;
        v.add(same, "same seed gave a different trajectory");
    }
    return {v.count == 0,
            fmt("1000 sessions (%ld KeyBot iterations, %ld clicks, %ld over-budget clicks rejected, %ld path "
                "selections, %ld e entries), %ld violations%s%s, %d/1000 bitwise reproducible",
                st.iterations, st.clicks, st.rejected_clicks, st.selections, st.e_entries, v.count,
                v.count ? ": " : "", v.first.c_str(), reproducible)};
}

// ------------------------------------------------------------ criterion 4

Verdict criterion_metrics()
{
    Rng rng(404);
    double worst_mre = 0.0;
    long noc_mismatch = 0;
    for (int n = 0; n < 10000; ++n) {
        const int K = uniform_int(rng, 1, 80);
        const double scale = std::pow(10.0, uniform_real(rng, -2, 3));
        const KeypointSet a = testgen::random_keypoints(rng, K, scale, scale);
        const KeypointSet b = testgen::random_keypoints(rng, K, scale, scale);
        long double sum = 0.0L;
        for (int i = 0; i < K; ++i) {
            const long double dr = static_cast<long double>(a[i].row) - b[i].row;
            const long double dc = static_cast<long double>(a[i].col) - b[i].col;
            sum += std::sqrt(dr * dr + dc * dc);
        }
        const double want = static_cast<double>(sum / K);
        worst_mre = std::max(worst_mre, std::abs(eval::mre(a, b) - want) / std::max(1.0, want));

        const int T = uniform_int(rng, 0, 8);
        const auto curve = testgen::random_curve(rng, T + 1);
        const int cap = uniform_int(rng, 0, T);
        const double target = uniform_real(rng, 0.0, 20.0);
        int brute = cap;
        for (int c = cap; c >= 0; --c)
            if (curve[c] <= target) brute = c;
        noc_mismatch += eval::noc(curve, cap, target) != brute;
    }
    const KeypointSet z{{{1, 2}, {3, 4}}};
    const KeypointSet shifted{{{4, 6}}};
    const KeypointSet origin{{{1, 2}}};
    const std::vector<double> never = {9, 8, 7, 6, 5};
    const bool analytic = eval::mre(z, z) == 0.0 && eval::mre(shifted, origin) == 5.0 &&
                          eval::noc(never, 4, 1.0) == 4.0 && eval::noc(never, 2, 7.0) == 2.0;
    const bool pass = worst_mre <= 1e-9 && noc_mismatch == 0 && analytic;
    return {pass, fmt("10000 random cases: max mre deviation %.2e, %ld noc mismatches; analytic cases %s", worst_mre,
                      noc_mismatch, analytic ? "exact" : "WRONG")};
}

// ------------------------------------------------------------ trained models

struct Corpus {
    std::vector<LabeledImage> train, val, test;
};

struct TrainedModels {
    models::ModelSet set;
    std::shared_ptr<models::ToyDetector> detector;
    double train_seconds = 0.0;
    std::string summary;
};

struct Options {
    std::set<int> only;
    fs::path work_dir = fs::temp_directory_path() / "keybot_acceptance";
    bool quick = false;
    /// Load checkpoints left in work_dir by an earlier run instead of
    /// training. Refused when criterion 5 is selected, since it times training.
    bool reuse_models = false;
};

Corpus make_corpus(const Options& opt)
{
    data::SyntheticSpineParams p = data::SyntheticSpineParams::for_topology("aasce");
    p.seed = 500;
    const int n = opt.quick ? 60 : 500;
    auto all = data::generate_synthetic(p, n);
    Corpus c;
    const int tr = n * 6 / 10, va = n * 2 / 10;
    c.train.assign(all.begin(), all.begin() + tr);
    c.val.assign(all.begin() + tr, all.begin() + tr + va);
    c.test.assign(all.begin() + tr + va, all.end());
    return c;
}

TrainedModels train_models(const Corpus& c, const Options& opt)
{
    const SpineTopology topo = SpineTopology::aasce();
    TrainedModels out;
    const auto t0 = Clock::now();
    auto log_line = [](const char* name) {
        return [name](const models::EpochLog& e) {
            std::printf("  [%s] epoch %d train %.5f val %.5f (%.0f s)\n", name, e.epoch, e.train_loss, e.val_loss,
                        e.seconds);
            std::fflush(stdout);
        };
    };
    const double scale = opt.quick ? 0.05 : 1.0;

    models::TrainingConfig det;
    det.epochs = opt.quick ? 1 : 6;
    det.patience = 2;
    det.samples_per_image = 4;
    det.time_budget_seconds = 240 * scale;
    det.seed = 11;
    models::TrainingLog det_log;
    out.detector = models::train_detector(det, {}, topo, c.train, c.val, &det_log, log_line("detector"));

    models::TrainingConfig cor;
    cor.epochs = opt.quick ? 1 : 12;
    cor.patience = 3;
    cor.time_budget_seconds = 600 * scale;
    cor.seed = 12;
    models::TrainingLog cor_log;
    std::shared_ptr<models::ToyCorrector> corrector =
        models::train_corrector(cor, {}, topo, c.train, c.val, &cor_log, log_line("corrector"));

    models::TrainingConfig inter;
    inter.epochs = opt.quick ? 1 : 8;
    inter.patience = 2;
    inter.time_budget_seconds = 1500 * scale;
    inter.max_val_images = 40;
    inter.seed = 13;
    models::TrainingLog int_log;
    std::shared_ptr<models::ToyInteractionModel> interaction =
        models::train_interaction(inter, {}, topo, c.train, c.val, &int_log, log_line("interaction"));

    out.train_seconds = seconds_since(t0);
    out.set.detector = out.detector;
    out.set.corrector = corrector;
    out.set.interaction = interaction;
    fs::create_directories(opt.work_dir);
    models::save_checkpoint(opt.work_dir / "detector.ckpt", *out.detector);
    models::save_checkpoint(opt.work_dir / "corrector.ckpt", *corrector);
    models::save_checkpoint(opt.work_dir / "interaction.ckpt", *interaction);
    out.summary = fmt("epochs det/cor/int %zu/%zu/%zu", det_log.epochs.size(), cor_log.epochs.size(),
                      int_log.epochs.size());
    return out;
}

TrainedModels load_models(const Options& opt)
{
    TrainedModels out;
    out.detector = models::load_detector(opt.work_dir / "detector.ckpt");
    out.set.detector = out.detector;
    out.set.corrector = models::load_corrector(opt.work_dir / "corrector.ckpt");
    out.set.interaction = models::load_interaction(opt.work_dir / "interaction.ckpt");
    out.summary = "reused checkpoints from " + opt.work_dir.string();
    return out;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels)
{
    // Rank statistic with midranks for ties.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = (i + j + 1) / 2.0;
        for (std::size_t q = i; q < j; ++q)
            if (labels[order[q]]) {
                rank_sum += mid;
                pos += 1;
            }
        i = j;
    }
    const double neg = static_cast<double>(scores.size()) - pos;
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

std::vector<eval::BenchmarkSample> corrupted_test_set(const Corpus& c, std::size_t limit)
{
    std::vector<eval::BenchmarkSample> out;
    for (const auto& s : c.test) {
        if (out.size() >= limit) break;
        eval::BenchmarkSample b;
        b.sample = s;
        b.original_height = s.image.height();
        b.original_width = s.image.width();
        out.push_back(std::move(b));
    }
    eval::attach_corrupted_initials(out, SpineTopology::aasce(), errorsim::CorruptionProfile::corrector_train(), 5150);
    return out;
}

Verdict criterion_trained(const Corpus& c, const TrainedModels& tm, const Options& opt, eval::EvalReport* report_out)
{
    const SpineTopology topo = SpineTopology::aasce();
    std::vector<double> scores;
    std::vector<int> labels;
    models::evaluate_detector(*tm.detector, topo, errorsim::CorruptionProfile::detector_train(topo), c.test, 4, 99,
                              &scores, &labels);
    const double auc = roc_auc(scores, labels);

    const auto samples = corrupted_test_set(c, opt.quick ? 10 : c.test.size());
    engine::RefinementConfig rc;
    rc.N = 3;
    rc.T = 4;
    const std::vector<eval::BenchmarkRun> runs = {{"model_only", engine::Policy::model_only, rc},
                                                  {"KeyBot-i3", engine::Policy::keybot, rc},
                                                  {"KeyBot-i3-oracle-path", engine::Policy::keybot_oracle_path, rc}};
    const std::vector<eval::NocSpec> noc = {{4, 5.0}, {4, 10.0}};
    const auto report = eval::run_benchmark("synthetic-test-corrupted", samples,
                                            [&](const eval::BenchmarkSample&) { return tm.set; }, runs, noc, topo);
    if (report_out) *report_out = report;
    const auto& mo = report.runs[0].mean_mre;
    const auto& kb = report.runs[1].mean_mre;
    const auto& op = report.runs[2].mean_mre;
    const double reduction = 1.0 - kb[0] / mo[0];
    bool dominated = true;
    for (std::size_t i = 0; i < kb.size(); ++i) dominated = dominated && op[i] <= kb[i];
    const bool budget = tm.train_seconds < 45 * 60;
    const bool pass = auc >= 0.90 && reduction >= 0.15 && dominated && budget;
    std::ostringstream curve;
    for (std::size_t i = 0; i < kb.size(); ++i)
        curve << (i ? " " : "") << fmt("%.2f/%.2f/%.2f", mo[i], kb[i], op[i]);
    return {pass, fmt("train %.0f s (%s); detector AUC %.3f; MRE@0 model_only %.2f -> KeyBot-i3 %.2f (%.1f%% "
                      "reduction); oracle-path <= KeyBot at every click: %s; MRE by click model/keybot/oracle: %s",
                      tm.train_seconds, tm.summary.c_str(), auc, mo[0], kb[0], 100.0 * reduction,
                      dominated ? "yes" : "no", curve.str().c_str())};
}

// ------------------------------------------------------------ criterion 6

Verdict criterion_without_fp(const Corpus& c, const TrainedModels& tm, const Options& opt)
{
    const SpineTopology topo = SpineTopology::aasce();
    const auto samples = corrupted_test_set(c, opt.quick ? 5 : 30);
    engine::RefinementConfig acc;
    acc.N = 3;
    acc.T = 4;
    engine::RefinementConfig wo = acc;
    wo.accumulate_false_preds = false;
    const std::vector<eval::BenchmarkRun> runs = {{"KeyBot-i3", engine::Policy::keybot, acc},
                                                  {"KeyBot-i3-wo-fp", engine::Policy::keybot, wo}};
    const std::vector<eval::NocSpec> noc = {{4, 5.0}};
    const auto report = eval::run_benchmark("synthetic-test-corrupted", samples,
                                            [&](const eval::BenchmarkSample&) { return tm.set; }, runs, noc, topo);
    const auto& a = report.runs[0];
    const auto& b = report.runs[1];
    bool distinct = a.run.config.accumulate_false_preds != b.run.config.accumulate_false_preds;
    bool curves_differ = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) curves_differ = curves_differ || a.samples[i].curve != b.samples[i].curve;
    const std::string csv = report.mre_csv();
    const bool rows = csv.find("KeyBot-i3-wo-fp,keybot,0,") != std::string::npos &&
                      csv.find("KeyBot-i3,keybot,0,") != std::string::npos;
    std::ostringstream text;
    for (std::size_t i = 0; i < a.mean_mre.size(); ++i)
        text << (i ? " " : "") << fmt("%.3f/%.3f", a.mean_mre[i], b.mean_mre[i]);
    return {distinct && rows && curves_differ,
            fmt("%zu samples; rows present: %s; per-sample curves differ: %s; MRE by click acc/w-o-fp: %s",
                samples.size(), rows ? "yes" : "no", curves_differ ? "yes" : "no", text.str().c_str())};
}

// ------------------------------------------------------------ criterion 7

json post_json(httplib::Client& cli, const std::string& path, const json& body, int* status)
{
    auto res = cli.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("no response for " + path);
    *status = res->status;
    return json::parse(res->body);
}

Verdict criterion_service(const Corpus& c, const TrainedModels& tm, const Options& opt)
{
    const SpineTopology topo = SpineTopology::aasce();
    const fs::path state = opt.work_dir / "service_state";
    fs::remove_all(state);
    service::ServiceConfig sc;
    sc.state_dir = state;
    sc.refinement.keep_paths = true;
    sc.refinement.T = 4;
    sc.refinement.N = 3;
    service::AnnotationService svc(sc, tm.set);
    httplib::Server server;
    svc.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(120, 0);

    const int sessions = opt.quick ? 4 : 50;
    int identical = 0, failures = 0;
    double max_iter = 0.0, sum_iter = 0.0;
    long iter_count = 0;
    std::string first_problem;
    auto problem = [&](const std::string& what) {
        if (first_problem.empty()) first_problem = what;
        ++failures;
    };
    Rng rng(707);
    for (int n = 0; n < sessions; ++n) {
        const LabeledImage& s = c.test[n % c.test.size()];
        // Every third upload is rescaled so the coordinate mapping is exercised.
        Image upload = s.image;
        KeypointSet gt = s.keypoints;
        if (n % 3 == 1) {
            upload = resize(s.image, 640, 300);
            for (auto& p : gt.points) p = {(p.row + 0.5) * 640 / 512 - 0.5, (p.col + 0.5) * 300 / 256 - 0.5};
        }
        const auto png = encode_png(upload);
        json cfg = {{"seed", n}, {"accumulate_false_preds", bernoulli(rng, 0.7)}};
        httplib::MultipartFormDataItems items = {
            {"image", std::string(png.begin(), png.end()), "image.png", "image/png"},
            {"config", cfg.dump(), "", "application/json"},
            {"groundtruth", keypoints_to_json(gt).dump(), "", "application/json"}};
        if (n % 2 == 0) {
            Rng er(mix_seed(99, n));
            const auto bad = errorsim::sample_single_error(gt, topo, errorsim::ErrorKind::misvertex,
                                                           errorsim::CorruptionProfile::corrector_train(), er);
            items.push_back({"initial", keypoints_to_json(bad.corrupted).dump(), "", "application/json"});
        }
        auto created = cli.Post("/sessions", items);
        if (!created || created->status != 201) {
            problem("session creation failed");
            continue;
        }
        const std::string id = json::parse(created->body)["id"];
        const std::string base = "/sessions/" + id;
        int status = 0;
        const int steps = uniform_int(rng, 1, 6);
        for (int a = 0; a < steps; ++a) {
            const int what = uniform_int(rng, 0, 3);
            if (what <= 1) {
                const json r = post_json(cli, base + "/keybot", {{"iterations", uniform_int(rng, 1, 3)}}, &status);
                if (status != 200) problem("keybot call failed: " + r.dump());
                for (const auto& it : r.value("iterations", json::array())) {
                    const double secs = it["seconds"].get<double>();
                    max_iter = std::max(max_iter, secs);
                    sum_iter += secs;
                    ++iter_count;
                }
            } else if (what == 2) {
                const int idx = uniform_int(rng, 0, topo.num_keypoints() - 1);
                const Point p = gt[idx];
                const json r = post_json(cli, base + "/click",
                                         {{"index", idx}, {"position", {p.row + uniform_real(rng, -2, 2), p.col}}},
                                         &status);
                if (status != 200 && status != 409) problem("click failed: " + r.dump());
            } else {
                auto paths = cli.Get(base + "/paths");
                if (!paths || paths->status != 200) {
                    problem("paths failed");
                    continue;
                }
                const int count = static_cast<int>(json::parse(paths->body)["candidates"].size());
                const json r =
                    post_json(cli, base + "/select-path", {{"candidate", uniform_int(rng, 0, count - 1)}}, &status);
                if (status != 200 && status != 409) problem("select-path failed: " + r.dump());
            }
        }
        const json fin = post_json(cli, base + "/finalize", json::object(), &status);
        if (status != 200) {
            problem("finalize failed: " + fin.dump());
            continue;
        }
        const json& ex = fin["trajectory"];
        // Replay sees the image exactly as the service decoded it.
        Image working = resize(decode_png(png), models::kWorkingHeight, models::kWorkingWidth);
        working.set_source_id(id);
        const auto replayed = engine::replay(working, topo, tm.set, ex);
        const KeypointSet api = keypoints_from_json(ex["prediction"]);
        if (replayed.prediction() == api && replayed.status() == engine::SessionStatus::finalized)
            ++identical;
        else
            problem("replay differs for session " + std::to_string(n));
    }
    server.stop();
    th.join();
    const double mean_iter = iter_count ? sum_iter / iter_count : 0.0;
    const bool pass = identical == sessions && failures == 0 && iter_count > 0 && max_iter < 1.0;
    return {pass, fmt("%d/%d API sessions replay to identical keypoints; %ld KeyBot iterations, mean %.3f s, max "
                      "%.3f s%s%s",
                      identical, sessions, iter_count, mean_iter, max_iter, first_problem.empty() ? "" : "; ",
                      first_problem.c_str())};
}

void print(int n, const char* name, const Verdict& v)
{
    std::printf("criterion %d %s: %s: %s\n", n, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv)
{
    Options opt;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--quick") {
            opt.quick = true;
        } else if (a == "--reuse-models") {
            opt.reuse_models = true;
        } else if (a == "--work-dir" && i + 1 < argc) {
            opt.work_dir = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string item;
            while (std::getline(ss, item, ',')) opt.only.insert(std::stoi(item));
        } else {
            std::fprintf(stderr, "usage: %s [--only 1,2,...] [--work-dir DIR] [--quick] [--reuse-models]\n", argv[0]);
            return 1;
        }
    }
    auto wanted = [&](int n) { return opt.only.empty() || opt.only.count(n); };
    bool all = true;
    auto run = [&](int n, const char* name, const std::function<Verdict()>& fn) {
        if (!wanted(n)) return;
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        all = all && v.pass;
        print(n, name, v);
    };

    run(1, "error simulation suite", criterion_errorsim);
    run(2, "oracle loop", criterion_oracle_loop);
    run(3, "state machine invariants", criterion_state_machine);
    run(4, "metric oracles", criterion_metrics);

    if (wanted(5) || wanted(6) || wanted(7)) {
        std::optional<Corpus> corpus;
        std::optional<TrainedModels> tm;
        std::string setup_error;
        try {
            corpus = make_corpus(opt);
            if (opt.reuse_models) {
                if (wanted(5)) throw std::runtime_error("--reuse-models cannot be combined with criterion 5");
                tm = load_models(opt);
            } else {
                tm = train_models(*corpus, opt);
            }
        } catch (const std::exception& e) {
            setup_error = e.what();
        }
        auto needs_models = [&](auto fn) {
            return [&, fn]() -> Verdict {
                if (!tm) return {false, "training failed: " + setup_error};
                return fn();
            };
        };
        eval::EvalReport report;
        run(5, "trained-model direction check",
            needs_models([&] { return criterion_trained(*corpus, *tm, opt, &report); }));
        if (wanted(5) && !report.runs.empty()) report.write(opt.work_dir / "report");
        run(6, "w/o fp ablation row", needs_models([&] { return criterion_without_fp(*corpus, *tm, opt); }));
        run(7, "service contract", needs_models([&] { return criterion_service(*corpus, *tm, opt); }));
    }
    if (opt.quick) std::printf("quick mode: trained-model verdicts above are smoke results only\n");
    return all ? 0 : 1;
}
