#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keybot/core/sample.hpp"
#include "keybot/core/topology.hpp"
#include "keybot/errorsim/errorsim.hpp"
#include "keybot/models/toy_models.hpp"

namespace keybot::models {

struct TrainingConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    int epochs = 300;
    /// Epochs without validation improvement tolerated before stopping.
    int patience = 0;
    /// Samples whose gradients are accumulated per optimizer step.
    int batch_size = 4;
    std::string optimizer = "adamw";
    std::uint64_t seed = 1;
    /// Used only when no validation set is passed.
    double val_fraction = 0.2;
    /// Training draws (windows or corruptions) per image per epoch.
    int samples_per_image = 1;
    /// Interaction model: simulated clicks per sample are uniform in 0..max_clicks.
    int max_clicks = 3;
    /// Interaction model: a prediction farther than this from groundtruth counts as wrong.
    double click_error_px = 6.0;
    /// Detector: Gaussian jitter (px) added to every keypoint of a window.
    double keypoint_jitter = 1.0;
    /// Wall-clock cap in seconds, 0 for none. The best epoch so far is kept.
    double time_budget_seconds = 0.0;
    /// Caps the validation images scored per epoch, 0 for all.
    int max_val_images = 0;
    /// Empty means the per-model default profile.
    nlohmann::json profile;

    void validate() const;
};

nlohmann::json to_json(const TrainingConfig& c);
/// Missing keys keep the defaults of `base`; unknown keys are rejected.
TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    /// Epoch whose parameters were kept (argmin of val_loss).
    int best_epoch = 0;
    double best_val_loss = 0.0;
    std::string stop_reason;

    void write_csv(const std::filesystem::path& path) const;
};

using EpochCallback = std::function<void(const EpochLog&)>;

std::unique_ptr<ToyDetector> train_detector(const TrainingConfig& config, const DetectorConfig& model_config,
                                            const SpineTopology& topology, std::span<const LabeledImage> train,
                                            std::span<const LabeledImage> val, TrainingLog* log = nullptr,
                                            const EpochCallback& on_epoch = {});

std::unique_ptr<ToyCorrector> train_corrector(const TrainingConfig& config, const CorrectorConfig& model_config,
                                              const SpineTopology& topology, std::span<const LabeledImage> train,
                                              std::span<const LabeledImage> val, TrainingLog* log = nullptr,
                                              const EpochCallback& on_epoch = {});

std::unique_ptr<ToyInteractionModel> train_interaction(const TrainingConfig& config,
                                                       const InteractionConfig& model_config,
                                                       const SpineTopology& topology,
                                                       std::span<const LabeledImage> train,
                                                       std::span<const LabeledImage> val, TrainingLog* log = nullptr,
                                                       const EpochCallback& on_epoch = {});

/// Consecutive window of `window` detectable indices starting at position `start`.
std::vector<int> detectable_window(const SpineTopology& topology, int start, int window);

/// Mean per-keypoint BCE of a detector over fixed-seed training-style
/// windows. When non-null, `scores` / `labels` receive one entry per window:
/// the maximum probability and whether any keypoint in it was corrupted.
double evaluate_detector(const ToyDetector& model, const SpineTopology& topology, const errorsim::CorruptionProfile& profile,
                         std::span<const LabeledImage> images, int windows_per_image, std::uint64_t seed,
                         std::vector<double>* scores = nullptr, std::vector<int>* labels = nullptr);

}  // namespace keybot::models
