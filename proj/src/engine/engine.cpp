#include "keybot/engine/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/eval/metrics.hpp"

namespace keybot::engine {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json point_json(const Point& p)
{
    return nlohmann::json::array({p.row, p.col});
}

Point point_from_json(const nlohmann::json& j)
{
    require(j.is_array() && j.size() == 2, Errc::invalid_argument, "a point is a [row, col] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void RefinementConfig::validate(int num_keypoints) const
{
    require(T >= 0 && N >= 0, Errc::invalid_argument, "T and N must be non-negative");
    require(T <= num_keypoints, Errc::invalid_argument, "T cannot exceed the number of keypoints");
    require(s >= 1 && s <= k && k <= num_keypoints, Errc::invalid_argument, "need 1 <= s <= k <= K");
    require(anomaly_threshold > 0.0 && anomaly_threshold < 1.0, Errc::invalid_argument,
            "anomaly threshold must lie in (0, 1)");
    require(sigma_cells > 0.0, Errc::invalid_argument, "sigma must be positive");
}

nlohmann::json to_json(const RefinementConfig& c)
{
    return {{"T", c.T},
            {"N", c.N},
            {"k", c.k},
            {"s", c.s},
            {"anomaly_threshold", c.anomaly_threshold},
            {"accumulate_false_preds", c.accumulate_false_preds},
            {"keep_paths", c.keep_paths},
            {"sigma_cells", c.sigma_cells},
            {"seed", c.seed}};
}

RefinementConfig refinement_config_from_json(const nlohmann::json& j, RefinementConfig base)
{
    require(j.is_object(), Errc::invalid_argument, "refinement config must be an object");
    nlohmann::json m = to_json(base);
    for (auto it = j.begin(); it != j.end(); ++it) {
        require(m.contains(it.key()), Errc::invalid_argument, "unknown refinement key '" + it.key() + "'");
        m[it.key()] = it.value();
    }
    RefinementConfig c;
    try {
        c.T = m.at("T").get<int>();
        c.N = m.at("N").get<int>();
        c.k = m.at("k").get<int>();
        c.s = m.at("s").get<int>();
        c.anomaly_threshold = m.at("anomaly_threshold").get<double>();
        c.accumulate_false_preds = m.at("accumulate_false_preds").get<bool>();
        c.keep_paths = m.at("keep_paths").get<bool>();
        c.sigma_cells = m.at("sigma_cells").get<double>();
        c.seed = m.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("bad refinement config: ") + e.what());
    }
    return c;
}

const char* to_string(SessionStatus s)
{
    switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::converged: return "converged";
    case SessionStatus::budget_exhausted: return "budget_exhausted";
    case SessionStatus::finalized: return "finalized";
    }
    return "?";
}

SessionStatus session_status_from_string(const std::string& s)
{
    for (auto v : {SessionStatus::active, SessionStatus::converged, SessionStatus::budget_exhausted,
                   SessionStatus::finalized})
        if (s == to_string(v)) return v;
    throw Error(Errc::invalid_argument, "unknown session status '" + s + "'");
}

std::vector<std::vector<int>> sweep_windows(const SpineTopology& topology, int k, int s)
{
    require(k >= 1 && s >= 1, Errc::invalid_argument, "window size and stride must be positive");
    const auto& d = topology.detectable_indices();
    const int m = static_cast<int>(d.size());
    std::vector<std::vector<int>> out;
    if (m == 0) return out;
    if (k >= m) {
        out.emplace_back(d.begin(), d.end());
        return out;
    }
    int start = 0;
    for (; start + k <= m; start += s) out.emplace_back(d.begin() + start, d.begin() + start + k);
    if (start - s + k < m) out.emplace_back(d.end() - k, d.end());
    return out;
}

std::vector<int> detector_sweep(const SpineTopology& topology, const models::DetectorModel& detector,
                                const Image& image, const KeypointSet& keypoints, int k, int s, double threshold)
{
    std::vector<bool> flagged(topology.num_keypoints(), false);
    for (const auto& window : sweep_windows(topology, k, s)) {
        const std::vector<double> probs = detector.forward(image, keypoints, window);
        require(probs.size() == window.size(), Errc::invalid_argument, "detector returned the wrong number of outputs");
        for (std::size_t j = 0; j < window.size(); ++j)
            if (probs[j] > threshold) flagged[window[j]] = true;
    }
    std::vector<int> out;
    for (int i = 0; i < topology.num_keypoints(); ++i)
        if (flagged[i] && topology.is_detectable(i)) out.push_back(i);
    return out;
}

int largest_error_index(const KeypointSet& prediction, const KeypointSet& groundtruth, const std::vector<bool>& revised)
{
    require(prediction.size() == groundtruth.size() && revised.size() == prediction.size(), Errc::invalid_argument,
            "keypoint count mismatch");
    int best = -1;
    double best_err = -1.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        if (revised[i]) continue;
        const double err = distance(prediction[i], groundtruth[i]);
        if (err > best_err) {
            best_err = err;
            best = static_cast<int>(i);
        }
    }
    require(best >= 0, Errc::failed_precondition, "every keypoint has already been revised");
    return best;
}

// ---------------------------------------------------------------------------

RefinementSession::RefinementSession(Image image, SpineTopology topology, models::ModelSet models,
                                     RefinementConfig config, std::optional<KeypointSet> groundtruth,
                                     std::optional<KeypointSet> initial)
    : image_(std::move(image)),
      topology_(std::move(topology)),
      models_(std::move(models)),
      config_(config),
      groundtruth_(std::move(groundtruth)),
      K_(topology_.num_keypoints())
{
    config_.validate(K_);
    require(models_.interaction != nullptr, Errc::failed_precondition, "no interaction model loaded");
    require(models_.interaction->num_keypoints() == K_, Errc::resolution_mismatch,
            "interaction model K differs from the topology");
    const GridSpec grid = models_.interaction->input_grid();
    require(grid.image_height == image_.height() && grid.image_width == image_.width(), Errc::resolution_mismatch,
            "image does not match the interaction model's working resolution");
    if (config_.N > 0) {
        require(models_.detector != nullptr && models_.corrector != nullptr, Errc::failed_precondition,
                "KeyBot iterations need a detector and a corrector");
        require(models_.detector->window_size() == config_.k, Errc::invalid_argument,
                "detector window differs from config k");
        require(models_.corrector->num_keypoints() == K_, Errc::resolution_mismatch,
                "corrector K differs from the topology");
    }
    if (groundtruth_)
        require(static_cast<int>(groundtruth_->size()) == K_, Errc::invalid_argument, "groundtruth size differs from K");

    rho_.assign(K_, false);
    user_points_.assign(K_, std::nullopt);
    c_points_.assign(K_, std::nullopt);
    e_points_.assign(K_, {});
    if (initial) {
        require(static_cast<int>(initial->size()) == K_ && initial->all_finite(), Errc::invalid_argument,
                "initial keypoints must be K finite points");
        prediction_ = *initial;
    } else {
        prediction_ = predict();
    }
    initial_ = prediction_;
    nlohmann::json start = {{"type", "start"}};
    if (initial) start["initial"] = keypoints_to_json(*initial);
    events_.push_back(start);
    begin_round();
}

void RefinementSession::begin_round()
{
    n_ = 0;
    phase_closed_ = false;
    path_selected_ = false;
    status_ = SessionStatus::active;
    round_flagged_.assign(K_, false);
    paths_.push_back({prediction_});
    snapshots_.clear();
    snapshots_.push_back({prediction_, c_points_, e_points_});
    nu_history_.emplace_back();
}

HeatmapStack RefinementSession::render_corrections() const
{
    HeatmapStack c(K_, models_.interaction->input_grid());
    for (int i = 0; i < K_; ++i)
        if (c_points_[i]) splat_gaussian(c, i, *c_points_[i], config_.sigma_cells);
    return c;
}

HeatmapStack RefinementSession::render_false_predictions() const
{
    HeatmapStack e(K_, models_.interaction->input_grid());
    for (int i = 0; i < K_; ++i)
        for (const Point& p : e_points_[i]) splat_gaussian(e, i, p, config_.sigma_cells);
    return e;
}

KeypointSet RefinementSession::predict()
{
    const auto t0 = Clock::now();
    const HeatmapStack out = models_.interaction->forward(image_, render_corrections(), render_false_predictions());
    require(out.channels() == K_, Errc::resolution_mismatch, "interaction model returned the wrong channel count");
    KeypointSet y = decode_heatmaps(out).keypoints;
    interaction_seconds_.push_back(seconds_since(t0));
    return y;
}

void RefinementSession::require_open(const char* what) const
{
    require(status_ != SessionStatus::finalized, Errc::failed_precondition,
            std::string("session is finalized; cannot ") + what);
}

StepOutcome RefinementSession::keybot_step()
{
    require_open("run KeyBot");
    StepOutcome out;
    if (phase_closed_ || n_ >= config_.N) {
        out.status = status_;
        return out;
    }
    const auto t0 = Clock::now();
    const std::vector<int> detected =
        detector_sweep(topology_, *models_.detector, image_, prediction_, config_.k, config_.s, config_.anomaly_threshold);
    std::vector<int> corrected;
    for (int i : detected)
        if (!rho_[i]) corrected.push_back(i);
    if (corrected.empty()) {
        phase_closed_ = true;
        status_ = SessionStatus::converged;
        events_.push_back({{"type", "keybot"}, {"iterations", 1}});
        out.status = status_;
        return out;
    }

    const HeatmapStack z_maps = models_.corrector->forward(image_, prediction_);
    require(z_maps.channels() == K_, Errc::resolution_mismatch, "corrector returned the wrong channel count");
    const KeypointSet z = decode_heatmaps(z_maps).keypoints;

    IterationRecord rec;
    rec.round = t_;
    rec.detected = detected;
    rec.corrected = corrected;
    for (int i : corrected) {
        c_points_[i] = z[i];
        rec.pseudo_corrections.push_back(z[i]);
    }
    // Only first-time flags of this round enter e.
    for (int i : corrected)
        if (!round_flagged_[i]) rec.false_added.push_back(i);
    if (!config_.accumulate_false_preds) e_points_.assign(K_, {});
    for (int i : rec.false_added) e_points_[i].push_back(prediction_[i]);
    for (int i : detected) round_flagged_[i] = true;

    prediction_ = predict();
    ++n_;
    rec.iteration = n_;
    rec.prediction = prediction_;
    rec.seconds = seconds_since(t0);
    iteration_seconds_.push_back(rec.seconds);
    nu_history_.back().push_back(detected);
    paths_.back().push_back(prediction_);
    snapshots_.push_back({prediction_, c_points_, e_points_});
    iterations_.push_back(rec);
    if (n_ >= config_.N) {
        phase_closed_ = true;
        status_ = SessionStatus::budget_exhausted;
    }
    events_.push_back({{"type", "keybot"}, {"iterations", 1}});
    out.executed = true;
    out.status = status_;
    out.record = std::move(rec);
    return out;
}

std::vector<IterationRecord> RefinementSession::run_keybot(int max_iterations)
{
    std::vector<IterationRecord> out;
    for (int i = 0; i < max_iterations; ++i) {
        StepOutcome s = keybot_step();
        if (!s.executed) break;
        out.push_back(std::move(*s.record));
    }
    return out;
}

void RefinementSession::user_step(const UserEvent& event)
{
    require_open("click");
    require(t_ < config_.T, Errc::failed_precondition, "user click budget exhausted");
    require(event.index >= 0 && event.index < K_, Errc::out_of_range, "keypoint index out of range");
    require(is_finite(event.position), Errc::invalid_argument, "click position must be finite");
    const int i = event.index;
    if (!rho_[i]) {
        rho_[i] = true;
        rho_order_.push_back(i);
    }
    user_points_[i] = event.position;
    // The new round's c holds the user hints only.
    c_points_ = user_points_;
    if (!config_.accumulate_false_preds) e_points_.assign(K_, {});
    e_points_[i].push_back(prediction_[i]);
    prediction_ = predict();
    ++t_;
    events_.push_back({{"type", "click"},
                       {"index", i},
                       {"position", point_json(event.position)},
                       {"timestamp", event.timestamp}});
    begin_round();
}

UserEvent RefinementSession::simulate_user() const
{
    require(groundtruth_.has_value(), Errc::failed_precondition, "simulated clicks need groundtruth");
    UserEvent ev;
    ev.index = largest_error_index(prediction_, *groundtruth_, rho_);
    ev.position = (*groundtruth_)[ev.index];
    return ev;
}

void RefinementSession::select_path(int candidate)
{
    require_open("select a path");
    require(!path_selected_, Errc::failed_precondition, "a path was already selected in this round");
    require(candidate >= 0 && candidate < static_cast<int>(snapshots_.size()), Errc::out_of_range,
            "path candidate out of range");
    const Snapshot& s = snapshots_[candidate];
    prediction_ = s.prediction;
    c_points_ = s.c_points;
    e_points_ = s.e_points;
    n_ = candidate;
    snapshots_.resize(candidate + 1);
    paths_.back().resize(candidate + 1);
    nu_history_.back().resize(candidate);
    round_flagged_.assign(K_, false);
    for (const auto& nu : nu_history_.back())
        for (int i : nu) round_flagged_[i] = true;
    path_selected_ = true;
    phase_closed_ = true;
    events_.push_back({{"type", "select_path"}, {"candidate", candidate}});
}

void RefinementSession::finalize()
{
    status_ = SessionStatus::finalized;
    events_.push_back({{"type", "finalize"}});
}

nlohmann::json RefinementSession::to_json() const
{
    nlohmann::json rounds = nlohmann::json::array();
    for (std::size_t r = 0; r < paths_.size(); ++r) {
        nlohmann::json paths = nlohmann::json::array();
        for (const auto& p : paths_[r]) paths.push_back(keypoints_to_json(p));
        rounds.push_back({{"round", r}, {"paths", paths}, {"detected", nu_history_[r]}});
    }
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : iterations_) {
        nlohmann::json z = nlohmann::json::array();
        for (const auto& p : it.pseudo_corrections) z.push_back(point_json(p));
        iters.push_back({{"round", it.round},
                         {"iteration", it.iteration},
                         {"detected", it.detected},
                         {"corrected", it.corrected},
                         {"pseudo_corrections", z},
                         {"false_added", it.false_added},
                         {"prediction", keypoints_to_json(it.prediction)},
                         {"seconds", it.seconds}});
    }
    nlohmann::json c = nlohmann::json::array();
    for (const auto& p : c_points_) c.push_back(p ? point_json(*p) : nlohmann::json());
    nlohmann::json e = nlohmann::json::array();
    for (const auto& list : e_points_) {
        nlohmann::json l = nlohmann::json::array();
        for (const auto& p : list) l.push_back(point_json(p));
        e.push_back(l);
    }
    return {{"topology", topology_.name()},
            {"config", engine::to_json(config_)},
            {"image", {{"height", image_.height()}, {"width", image_.width()}, {"source_id", image_.source_id()}}},
            {"t", t_},
            {"n", n_},
            {"status", to_string(status_)},
            {"revised", rho_order_},
            {"initial_prediction", keypoints_to_json(initial_)},
            {"prediction", keypoints_to_json(prediction_)},
            {"corrections", c},
            {"false_predictions", e},
            {"rounds", rounds},
            {"iterations", iters},
            {"events", events_}};
}

RefinementSession replay(const Image& image, const SpineTopology& topology, const models::ModelSet& models,
                         const nlohmann::json& exported, std::optional<KeypointSet> groundtruth)
{
    try {
        const RefinementConfig config = refinement_config_from_json(exported.at("config"));
        const auto& events = exported.at("events");
        require(events.is_array() && !events.empty() && events[0].at("type") == "start", Errc::invalid_argument,
                "export must begin with a start event");
        std::optional<KeypointSet> initial;
        if (events[0].contains("initial")) initial = keypoints_from_json(events[0]["initial"]);
        RefinementSession s(image, topology, models, config, std::move(groundtruth), std::move(initial));
        for (std::size_t i = 1; i < events.size(); ++i) {
            const auto& ev = events[i];
            const std::string type = ev.at("type").get<std::string>();
            if (type == "keybot") {
                s.run_keybot(ev.at("iterations").get<int>());
            } else if (type == "click") {
                s.user_step({ev.at("index").get<int>(), point_from_json(ev.at("position")), ev.value("timestamp", 0.0)});
            } else if (type == "select_path") {
                s.select_path(ev.at("candidate").get<int>());
            } else if (type == "finalize") {
                s.finalize();
            } else {
                throw Error(Errc::invalid_argument, "unknown event type '" + type + "'");
            }
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed session export: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

const char* to_string(Policy p)
{
    switch (p) {
    case Policy::manual_only: return "manual_only";
    case Policy::model_only: return "model_only";
    case Policy::keybot: return "keybot";
    case Policy::keybot_oracle_path: return "keybot_oracle_path";
    }
    return "?";
}

Policy policy_from_string(const std::string& s)
{
    for (auto p : {Policy::manual_only, Policy::model_only, Policy::keybot, Policy::keybot_oracle_path})
        if (s == to_string(p)) return p;
    throw Error(Errc::invalid_argument, "unknown policy '" + s + "'");
}

Trajectory run_policy(const Image& image, const KeypointSet& groundtruth, const SpineTopology& topology,
                      const models::ModelSet& models, const RefinementConfig& config, Policy policy,
                      const std::optional<KeypointSet>& initial)
{
    require(static_cast<int>(groundtruth.size()) == topology.num_keypoints(), Errc::invalid_argument,
            "simulation policies need groundtruth for every keypoint");
    Trajectory traj;
    traj.policy = policy;
    RefinementConfig cfg = config;
    if (policy == Policy::model_only || policy == Policy::manual_only) cfg.N = 0;

    if (policy == Policy::manual_only) {
        RefinementSession s(image, topology, models, cfg, groundtruth, initial);
        traj.interaction_seconds = s.interaction_seconds();
        KeypointSet y = s.prediction();
        std::vector<bool> revised(topology.num_keypoints(), false);
        traj.outputs.push_back(y);
        for (int c = 0; c < cfg.T; ++c) {
            const int i = largest_error_index(y, groundtruth, revised);
            revised[i] = true;
            y[i] = groundtruth[i];
            traj.outputs.push_back(y);
        }
        return traj;
    }

    RefinementSession s(image, topology, models, cfg, groundtruth, initial);
    auto round_output = [&] {
        if (policy != Policy::keybot_oracle_path) return s.prediction();
        const auto& paths = s.current_paths();
        std::size_t best = 0;
        double best_mre = eval::mre(paths[0], groundtruth);
        for (std::size_t j = 1; j < paths.size(); ++j) {
            const double m = eval::mre(paths[j], groundtruth);
            if (m < best_mre) {
                best_mre = m;
                best = j;
            }
        }
        return paths[best];
    };
    s.run_keybot(cfg.N);
    traj.outputs.push_back(round_output());
    for (int c = 0; c < cfg.T; ++c) {
        s.user_step(s.simulate_user());
        s.run_keybot(cfg.N);
        traj.outputs.push_back(round_output());
    }
    traj.interaction_seconds = s.interaction_seconds();
    traj.iteration_seconds = s.iteration_seconds();
    return traj;
}

}  // namespace keybot::engine
