#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "keybot/core/geometry.hpp"
#include "keybot/core/heatmap.hpp"
#include "keybot/core/image.hpp"
#include "keybot/core/topology.hpp"
#include "keybot/models/interfaces.hpp"

namespace keybot::engine {

struct RefinementConfig {
    /// Maximum user clicks per session.
    int T = 4;
    /// Maximum KeyBot iterations per user round.
    int N = 3;
    /// Detector window size and stride.
    int k = 8;
    int s = 4;
    double anomaly_threshold = 0.5;
    /// When false, e only holds the entries written by the latest update.
    bool accumulate_false_preds = true;
    bool keep_paths = false;
    double sigma_cells = kDefaultSigmaCells;
    std::uint64_t seed = 0;

    /// Checks the ranges against a topology with `num_keypoints` keypoints.
    void validate(int num_keypoints) const;
};

nlohmann::json to_json(const RefinementConfig& c);
/// Missing keys keep the defaults of `base`; unknown keys are rejected.
RefinementConfig refinement_config_from_json(const nlohmann::json& j, RefinementConfig base = {});

enum class SessionStatus { active, converged, budget_exhausted, finalized };
const char* to_string(SessionStatus s);
SessionStatus session_status_from_string(const std::string& s);

struct UserEvent {
    int index = 0;
    Point position;
    double timestamp = 0.0;
};

/// One executed KeyBot iteration.
struct IterationRecord {
    int round = 0;
    /// Iteration count after this step (1-based).
    int iteration = 0;
    /// Flagged by the detector sweep.
    std::vector<int> detected;
    /// Flagged and not user-revised: these received pseudo-corrections.
    std::vector<int> corrected;
    /// Corrector positions for `corrected`, same order.
    std::vector<Point> pseudo_corrections;
    /// Indices whose current prediction entered e in this step.
    std::vector<int> false_added;
    KeypointSet prediction;
    double seconds = 0.0;
};

struct StepOutcome {
    /// False when the step was a no-op (converged, budget used, or path selected).
    bool executed = false;
    SessionStatus status = SessionStatus::active;
    std::optional<IterationRecord> record;
};

/// Windows of k consecutive detectable indices starting at 0, s, 2s, ...;
/// a final right-aligned window covers any tail. A single window of all
/// detectable indices when there are fewer than k.
std::vector<std::vector<int>> sweep_windows(const SpineTopology& topology, int k, int s);

/// Union of the keypoints whose probability exceeds the threshold in any window.
std::vector<int> detector_sweep(const SpineTopology& topology, const models::DetectorModel& detector,
                                const Image& image, const KeypointSet& keypoints, int k, int s, double threshold);

/// Algorithm state for one image: user rounds (t), KeyBot iterations (n),
/// the user-revised set (rho), the correction points (c) and the
/// false-prediction points (e). c and e are re-rendered on every forward.
class RefinementSession {
public:
    /// Runs the initial forward with empty c and e, unless `initial` is given,
    /// in which case it becomes y_{0,0} directly.
    RefinementSession(Image image, SpineTopology topology, models::ModelSet models, RefinementConfig config,
                      std::optional<KeypointSet> groundtruth = std::nullopt,
                      std::optional<KeypointSet> initial = std::nullopt);

    StepOutcome keybot_step();
    /// Runs keybot_step until it stops executing or `max_iterations` ran.
    std::vector<IterationRecord> run_keybot(int max_iterations);
    void user_step(const UserEvent& event);
    /// Groundtruth-driven click on the largest remaining error.
    UserEvent simulate_user() const;
    /// Restores candidate j of the current round and closes its KeyBot phase.
    void select_path(int candidate);
    void finalize();

    int t() const { return t_; }
    int n() const { return n_; }
    SessionStatus status() const { return status_; }
    const KeypointSet& prediction() const { return prediction_; }
    const KeypointSet& initial_prediction() const { return initial_; }
    const std::vector<int>& revised() const { return rho_order_; }
    bool is_revised(int i) const { return rho_.at(i); }
    const std::vector<std::optional<Point>>& corrections() const { return c_points_; }
    const std::vector<std::vector<Point>>& false_predictions() const { return e_points_; }
    /// Candidates y_{t,0..n} of the current round.
    const std::vector<KeypointSet>& current_paths() const { return paths_.back(); }
    const std::vector<std::vector<KeypointSet>>& path_history() const { return paths_; }
    /// Detected sets of the executed iterations, per round.
    const std::vector<std::vector<std::vector<int>>>& nu_history() const { return nu_history_; }
    const std::vector<IterationRecord>& iterations() const { return iterations_; }
    bool path_selected() const { return path_selected_; }
    const std::optional<KeypointSet>& groundtruth() const { return groundtruth_; }
    const RefinementConfig& config() const { return config_; }
    const SpineTopology& topology() const { return topology_; }
    const Image& image() const { return image_; }
    const models::ModelSet& models() const { return models_; }
    const std::vector<double>& interaction_seconds() const { return interaction_seconds_; }
    const std::vector<double>& iteration_seconds() const { return iteration_seconds_; }

    HeatmapStack render_corrections() const;
    HeatmapStack render_false_predictions() const;

    /// Ordered log of state-changing calls, enough to replay the session.
    const nlohmann::json& events() const { return events_; }
    /// Full trajectory: config, events, per-round paths and iteration records.
    nlohmann::json to_json() const;

private:
    struct Snapshot {
        KeypointSet prediction;
        std::vector<std::optional<Point>> c_points;
        std::vector<std::vector<Point>> e_points;
    };

    KeypointSet predict();
    void require_open(const char* what) const;
    void begin_round();

    Image image_;
    SpineTopology topology_;
    models::ModelSet models_;
    RefinementConfig config_;
    std::optional<KeypointSet> groundtruth_;
    int K_ = 0;

    int t_ = 0;
    int n_ = 0;
    SessionStatus status_ = SessionStatus::active;
    bool phase_closed_ = false;
    bool path_selected_ = false;
    KeypointSet initial_;
    KeypointSet prediction_;
    std::vector<bool> rho_;
    std::vector<int> rho_order_;
    std::vector<std::optional<Point>> user_points_;
    std::vector<std::optional<Point>> c_points_;
    std::vector<std::vector<Point>> e_points_;
    std::vector<bool> round_flagged_;
    std::vector<std::vector<KeypointSet>> paths_;
    std::vector<Snapshot> snapshots_;
    std::vector<std::vector<std::vector<int>>> nu_history_;
    std::vector<IterationRecord> iterations_;
    std::vector<double> interaction_seconds_;
    std::vector<double> iteration_seconds_;
    nlohmann::json events_ = nlohmann::json::array();
};

/// Re-runs a session export (from to_json()) against the models.
RefinementSession replay(const Image& image, const SpineTopology& topology, const models::ModelSet& models,
                         const nlohmann::json& exported, std::optional<KeypointSet> groundtruth = std::nullopt);

enum class Policy { manual_only, model_only, keybot, keybot_oracle_path };
const char* to_string(Policy p);
Policy policy_from_string(const std::string& s);

struct Trajectory {
    Policy policy = Policy::keybot;
    /// outputs[c] = prediction after c clicks, c = 0..T.
    std::vector<KeypointSet> outputs;
    std::vector<double> interaction_seconds;
    std::vector<double> iteration_seconds;
};

/// Simulated-user run of one policy. manual_only moves clicked keypoints
/// without re-running the model; model_only is the loop with N = 0; keybot
/// is the full loop; keybot_oracle_path reports the minimum-MRE candidate of
/// each round of the keybot run.
Trajectory run_policy(const Image& image, const KeypointSet& groundtruth, const SpineTopology& topology,
                      const models::ModelSet& models, const RefinementConfig& config, Policy policy,
                      const std::optional<KeypointSet>& initial = std::nullopt);

/// Index of the largest radial error outside `revised` (lowest index on ties).
int largest_error_index(const KeypointSet& prediction, const KeypointSet& groundtruth,
                        const std::vector<bool>& revised);

}  // namespace keybot::engine
