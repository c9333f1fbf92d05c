#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keybot/core/sample.hpp"
#include "keybot/engine/engine.hpp"
#include "keybot/errorsim/errorsim.hpp"

namespace keybot::eval {

struct NocSpec {
    int max_clicks = 0;
    double target = 0.0;

    std::string label() const;
};

/// One evaluation image in the working frame, with the size of the original
/// it came from so errors are reported in original pixels.
struct BenchmarkSample {
    LabeledImage sample;
    int original_height = 0;
    int original_width = 0;
    /// Replaces the model's initial prediction when set (working frame).
    std::optional<KeypointSet> initial;
};

/// One report row: a policy under a specific refinement configuration.
struct BenchmarkRun {
    std::string label;
    engine::Policy policy = engine::Policy::keybot;
    engine::RefinementConfig config;
};

struct SampleRecord {
    std::string id;
    /// MRE after 0..T clicks.
    std::vector<double> curve;
    std::vector<double> noc;
};

struct RunReport {
    BenchmarkRun run;
    std::vector<double> mean_mre;
    std::vector<double> mean_noc;
    std::vector<SampleRecord> samples;
    double mean_interaction_seconds = 0.0;
    double mean_iteration_seconds = 0.0;
    double max_iteration_seconds = 0.0;
    std::size_t iteration_count = 0;
};

struct EvalReport {
    std::string dataset;
    std::vector<NocSpec> noc_specs;
    std::vector<RunReport> runs;

    nlohmann::json to_json() const;
    /// One row per (run, click count): label,policy,clicks,mean_mre.
    std::string mre_csv() const;
    /// One row per (run, NoC spec).
    std::string noc_csv() const;
    void write(const std::filesystem::path& dir) const;
};

/// Maps a working-frame point back to the original image.
Point to_original(const Point& p, const BenchmarkSample& s);

using ModelsForSample = std::function<models::ModelSet(const BenchmarkSample&)>;

EvalReport run_benchmark(const std::string& dataset, std::span<const BenchmarkSample> samples,
                         const ModelsForSample& models_for, std::span<const BenchmarkRun> runs,
                         std::span<const NocSpec> noc_specs, const SpineTopology& topology);

/// Replaces each sample's initial prediction with a single-error corruption
/// of its groundtruth. Error kinds cycle misvertex, misbone, lr_inversion over
/// the sample order; sample i draws from mix_seed(seed, i).
void attach_corrupted_initials(std::span<BenchmarkSample> samples, const SpineTopology& topology,
                               const errorsim::CorruptionProfile& profile, std::uint64_t seed);

/// Recomputes mean_mre and mean_noc from the stored per-sample records.
void recompute_aggregates(RunReport& run, std::span<const NocSpec> noc_specs);

}  // namespace keybot::eval
