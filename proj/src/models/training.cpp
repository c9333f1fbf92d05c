#include "keybot/models/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "keybot/core/error.hpp"
#include "keybot/nn/optim.hpp"

namespace keybot::models {

namespace es = keybot::errorsim;

void TrainingConfig::validate() const
{
    require(learning_rate > 0.0, Errc::invalid_argument, "learning rate must be positive");
    require(weight_decay >= 0.0, Errc::invalid_argument, "weight decay must be non-negative");
    require(epochs >= 1, Errc::invalid_argument, "epochs must be >= 1");
    require(patience >= 0 && batch_size >= 1 && samples_per_image >= 1 && max_clicks >= 0 && max_val_images >= 0,
            Errc::invalid_argument, "patience, batch size, samples per image and clicks must be non-negative");
    require(optimizer == "adamw", Errc::invalid_argument, "only the adamw optimizer is available");
    require(val_fraction > 0.0 && val_fraction < 1.0, Errc::invalid_argument, "val_fraction must be in (0, 1)");
    require(time_budget_seconds >= 0.0 && keypoint_jitter >= 0.0 && click_error_px >= 0.0, Errc::invalid_argument,
            "time budget, jitter and click error must be non-negative");
}

nlohmann::json to_json(const TrainingConfig& c)
{
    return {{"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"epochs", c.epochs},
            {"patience", c.patience},
            {"batch_size", c.batch_size},
            {"optimizer", c.optimizer},
            {"seed", c.seed},
            {"val_fraction", c.val_fraction},
            {"samples_per_image", c.samples_per_image},
            {"max_clicks", c.max_clicks},
            {"click_error_px", c.click_error_px},
            {"keypoint_jitter", c.keypoint_jitter},
            {"time_budget_seconds", c.time_budget_seconds},
            {"max_val_images", c.max_val_images},
            {"profile", c.profile}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base)
{
    require(j.is_object(), Errc::invalid_argument, "training config must be an object");
    nlohmann::json m = to_json(base);
    for (auto it = j.begin(); it != j.end(); ++it) {
        require(m.contains(it.key()), Errc::invalid_argument, "unknown training key '" + it.key() + "'");
        m[it.key()] = it.value();
    }
    TrainingConfig c;
    try {
        c.learning_rate = m.at("learning_rate").get<double>();
        c.weight_decay = m.at("weight_decay").get<double>();
        c.epochs = m.at("epochs").get<int>();
        c.patience = m.at("patience").get<int>();
        c.batch_size = m.at("batch_size").get<int>();
        c.optimizer = m.at("optimizer").get<std::string>();
        c.seed = m.at("seed").get<std::uint64_t>();
        c.val_fraction = m.at("val_fraction").get<double>();
        c.samples_per_image = m.at("samples_per_image").get<int>();
        c.max_clicks = m.at("max_clicks").get<int>();
        c.click_error_px = m.at("click_error_px").get<double>();
        c.keypoint_jitter = m.at("keypoint_jitter").get<double>();
        c.time_budget_seconds = m.at("time_budget_seconds").get<double>();
        c.max_val_images = m.at("max_val_images").get<int>();
        c.profile = m.at("profile");
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("bad training config: ") + e.what());
    }
    c.validate();
    return c;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    require(out.good(), Errc::io_error, "cannot write " + path.string());
    out << "epoch,train_loss,val_loss,seconds\n";
    out.precision(9);
    for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.seconds << '\n';
}

std::vector<int> detectable_window(const SpineTopology& topology, int start, int window)
{
    const auto& d = topology.detectable_indices();
    require(window >= 1 && start >= 0 && start + window <= static_cast<int>(d.size()), Errc::out_of_range,
            "window exceeds the detectable indices");
    return std::vector<int>(d.begin() + start, d.begin() + start + window);
}

namespace {

using Clock = std::chrono::steady_clock;

struct Split {
    std::vector<const LabeledImage*> train;
    std::vector<const LabeledImage*> val;
};

Split make_split(const TrainingConfig& cfg, std::span<const LabeledImage> train, std::span<const LabeledImage> val)
{
    require(!train.empty(), Errc::invalid_argument, "training set is empty");
    Split s;
    if (!val.empty()) {
        for (const auto& x : train) s.train.push_back(&x);
        for (const auto& x : val) s.val.push_back(&x);
    } else {
        require(train.size() >= 2, Errc::invalid_argument, "need at least two images to hold out validation");
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(cfg.seed, 0x5a11));
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::ceil(cfg.val_fraction * train.size() - 1e-9)), 1, train.size() - 1);
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < n_val ? s.val : s.train).push_back(&train[order[i]]);
    }
    if (cfg.max_val_images > 0 && static_cast<int>(s.val.size()) > cfg.max_val_images) s.val.resize(cfg.max_val_images);
    return s;
}

/// Shared epoch loop: per-sample gradient accumulation, AdamW steps every
/// batch_size samples, validation after every epoch and early stopping that
/// restores the best parameters.
TrainingLog fit(const TrainingConfig& cfg, const std::vector<nn::Param*>& params, std::size_t steps_per_epoch,
                const std::function<double(std::size_t, Rng&)>& step, const std::function<double()>& validate,
                const EpochCallback& on_epoch)
{
    for (nn::Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
    nn::AdamW opt(params, {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng rng(mix_seed(cfg.seed, 0x7a1));
    TrainingLog log;
    log.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best = nn::snapshot(params);
    int bad_epochs = 0;
    const auto started = Clock::now();
    std::vector<std::size_t> order(steps_per_epoch);
    std::iota(order.begin(), order.end(), 0);
    log.stop_reason = "max_epochs";

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        int pending = 0;
        for (std::size_t i : order) {
            total += step(i, rng);
            if (++pending == cfg.batch_size) {
                opt.step(1.0 / pending);
                opt.zero_grad();
                pending = 0;
            }
        }
        if (pending > 0) {
            opt.step(1.0 / pending);
            opt.zero_grad();
        }
        EpochLog e;
        e.epoch = epoch;
        e.train_loss = total / static_cast<double>(steps_per_epoch);
        e.val_loss = validate();
        e.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        log.epochs.push_back(e);
        if (on_epoch) on_epoch(e);

        if (!std::isfinite(e.val_loss)) {
            log.stop_reason = "non_finite_loss";
            break;
        }
        if (e.val_loss < log.best_val_loss) {
            log.best_val_loss = e.val_loss;
            log.best_epoch = epoch;
            best = nn::snapshot(params);
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            log.stop_reason = "early_stopping";
            break;
        }
        const double elapsed = std::chrono::duration<double>(Clock::now() - started).count();
        if (cfg.time_budget_seconds > 0.0 && epoch < cfg.epochs) {
            const double per_epoch = elapsed / epoch;
            if (elapsed + per_epoch > cfg.time_budget_seconds) {
                log.stop_reason = "time_budget";
                break;
            }
        }
    }
    nn::restore(params, best);
    return log;
}

es::CorruptionProfile resolve_profile(const TrainingConfig& cfg, es::CorruptionProfile fallback)
{
    if (cfg.profile.is_null() || (cfg.profile.is_object() && cfg.profile.empty())) return fallback;
    return es::CorruptionProfile::from_json(cfg.profile);
}

double bce(const nn::Tensor& logits, const std::vector<float>& targets, nn::Tensor* grad)
{
    if (!grad) return nn::bce_with_logits(logits.data, targets, nullptr);
    *grad = nn::Tensor(logits.c, logits.h, logits.w);
    return nn::bce_with_logits(logits.data, targets, &grad->data);
}

struct DetectorDraw {
    std::vector<int> window;
    KeypointSet keypoints;
    std::vector<float> targets;
};

DetectorDraw draw_detector_sample(const LabeledImage& s, const SpineTopology& topo, const es::CorruptionProfile& profile,
                                  int window, double jitter, Rng& rng)
{
    const int m = static_cast<int>(topo.detectable_indices().size());
    require(m >= window, Errc::invalid_argument, "topology has fewer detectable indices than the detector window");
    DetectorDraw d;
    d.window = detectable_window(topo, uniform_int(rng, 0, m - window), window);
    es::CorruptionResult c = es::sample_training_corruption(s.keypoints, topo, profile, rng, d.window);
    d.keypoints = std::move(c.corrupted);
    if (jitter > 0.0) {
        std::normal_distribution<double> g(0.0, jitter);
        for (int i : d.window) {
            d.keypoints[i].row += g(rng);
            d.keypoints[i].col += g(rng);
        }
    }
    for (int i : d.window) d.targets.push_back(c.labels.flags[i] ? 1.0f : 0.0f);
    return d;
}

}  // namespace

double evaluate_detector(const ToyDetector& model, const SpineTopology& topology, const es::CorruptionProfile& profile,
                         std::span<const LabeledImage> images, int windows_per_image, std::uint64_t seed,
                         std::vector<double>* scores, std::vector<int>* labels)
{
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Rng rng(mix_seed(seed, i));
        for (int w = 0; w < windows_per_image; ++w) {
            DetectorDraw d = draw_detector_sample(images[i], topology, profile, model.window_size(), 0.0, rng);
            const nn::Tensor logits = model.logits(model.build_input(images[i].image, d.keypoints, d.window), nullptr);
            total += bce(logits, d.targets, nullptr);
            ++n;
            if (scores && labels) {
                double best = 0.0;
                for (float v : logits.data) best = std::max(best, static_cast<double>(nn::sigmoid(v)));
                scores->push_back(best);
                labels->push_back(std::any_of(d.targets.begin(), d.targets.end(), [](float t) { return t > 0.5f; })
                                      ? 1
                                      : 0);
            }
        }
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

std::unique_ptr<ToyDetector> train_detector(const TrainingConfig& config, const DetectorConfig& model_config,
                                            const SpineTopology& topology, std::span<const LabeledImage> train,
                                            std::span<const LabeledImage> val, TrainingLog* log,
                                            const EpochCallback& on_epoch)
{
    config.validate();
    const Split split = make_split(config, train, val);
    const es::CorruptionProfile profile = resolve_profile(config, es::CorruptionProfile::detector_train(topology));
    require(profile.kind == es::ProfileKind::detector_train, Errc::invalid_argument,
            "detector training needs a detector_train profile");
    auto model = std::make_unique<ToyDetector>(model_config, config.seed);
    std::vector<LabeledImage> val_images;
    for (const auto* v : split.val) val_images.push_back(*v);

    const std::size_t per = static_cast<std::size_t>(config.samples_per_image);
    auto step = [&](std::size_t i, Rng& rng) {
        const LabeledImage& s = *split.train[i / per];
        DetectorDraw d = draw_detector_sample(s, topology, profile, model->window_size(), config.keypoint_jitter, rng);
        std::vector<nn::Saved> saved;
        const nn::Tensor logits = model->logits(model->build_input(s.image, d.keypoints, d.window), &saved);
        nn::Tensor grad;
        const double loss = bce(logits, d.targets, &grad);
        model->backward(grad, saved);
        return loss;
    };
    auto validate = [&] {
        return evaluate_detector(*model, topology, profile, val_images, config.samples_per_image,
                                 mix_seed(config.seed, 0xd37), nullptr, nullptr);
    };
    TrainingLog l = fit(config, model->params(), split.train.size() * per, step, validate, on_epoch);
    if (log) *log = std::move(l);
    return model;
}

std::unique_ptr<ToyCorrector> train_corrector(const TrainingConfig& config, const CorrectorConfig& model_config,
                                              const SpineTopology& topology, std::span<const LabeledImage> train,
                                              std::span<const LabeledImage> val, TrainingLog* log,
                                              const EpochCallback& on_epoch)
{
    config.validate();
    require(model_config.num_keypoints == topology.num_keypoints(), Errc::invalid_argument,
            "corrector K differs from the topology");
    const Split split = make_split(config, train, val);
    const es::CorruptionProfile profile = resolve_profile(config, es::CorruptionProfile::corrector_train());
    require(profile.kind == es::ProfileKind::corrector_train, Errc::invalid_argument,
            "corrector training needs a corrector_train profile");
    auto model = std::make_unique<ToyCorrector>(model_config, config.seed);
    const GridSpec out_grid = model->output_grid();

    auto loss_of = [&](const LabeledImage& s, Rng& rng, bool train_pass) {
        const es::CorruptionResult c = es::sample_training_corruption(s.keypoints, topology, profile, rng);
        const HeatmapStack target = render_heatmaps(s.keypoints, out_grid, model_config.target_sigma_cells);
        EncoderDecoder::Trace trace;
        const nn::Tensor logits = model->logits(model->build_input(s.image, c.corrupted), train_pass ? &trace : nullptr);
        if (!train_pass) return bce(logits, target.data(), nullptr);
        nn::Tensor grad;
        const double loss = bce(logits, target.data(), &grad);
        model->backward(grad, trace);
        return loss;
    };
    const std::size_t per = static_cast<std::size_t>(config.samples_per_image);
    auto step = [&](std::size_t i, Rng& rng) { return loss_of(*split.train[i / per], rng, true); };
    auto validate = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < split.val.size(); ++i) {
            Rng rng(mix_seed(mix_seed(config.seed, 0xc0), i));
            total += loss_of(*split.val[i], rng, false);
        }
        return total / static_cast<double>(split.val.size());
    };
    TrainingLog l = fit(config, model->params(), split.train.size() * per, step, validate, on_epoch);
    if (log) *log = std::move(l);
    return model;
}

std::unique_ptr<ToyInteractionModel> train_interaction(const TrainingConfig& config,
                                                       const InteractionConfig& model_config,
                                                       const SpineTopology& topology,
                                                       std::span<const LabeledImage> train,
                                                       std::span<const LabeledImage> val, TrainingLog* log,
                                                       const EpochCallback& on_epoch)
{
    config.validate();
    require(model_config.num_keypoints == topology.num_keypoints(), Errc::invalid_argument,
            "interaction K differs from the topology");
    const Split split = make_split(config, train, val);
    auto model = std::make_unique<ToyInteractionModel>(model_config, config.seed);
    const GridSpec in_grid = model->input_grid();
    const GridSpec out_grid = model->output_grid();
    const int K = topology.num_keypoints();

    // One sample: a hint-free pass, then 0..max_clicks simulated clicks, each
    // putting the groundtruth of one wrong keypoint into c and its previous
    // prediction into e. Every pass contributes equally to the loss.
    auto run = [&](const LabeledImage& s, Rng& rng, bool train_pass) {
        const HeatmapStack target = render_heatmaps(s.keypoints, out_grid, model_config.target_sigma_cells);
        HeatmapStack c(K, in_grid), e(K, in_grid);
        std::vector<bool> clicked(K, false);
        const int clicks = uniform_int(rng, 0, config.max_clicks);
        double total = 0.0;
        for (int pass = 0; pass <= clicks; ++pass) {
            EncoderDecoder::Trace trace;
            const nn::Tensor logits = model->logits(model->build_input(s.image, c, e), train_pass ? &trace : nullptr);
            nn::Tensor grad;
            total += bce(logits, target.data(), train_pass ? &grad : nullptr);
            if (train_pass) model->backward(grad, trace);
            if (pass == clicks) break;

            const KeypointSet pred = decode_heatmaps(logits_to_heatmaps(logits, out_grid)).keypoints;
            std::vector<int> wrong, open;
            for (int i = 0; i < K; ++i) {
                if (clicked[i]) continue;
                open.push_back(i);
                if (distance(pred[i], s.keypoints[i]) > config.click_error_px) wrong.push_back(i);
            }
            if (open.empty()) break;
            const auto& pool = wrong.empty() ? open : wrong;
            const int idx = pool[uniform_int(rng, 0, static_cast<int>(pool.size()) - 1)];
            clicked[idx] = true;
            splat_gaussian(c, idx, s.keypoints[idx], kDefaultSigmaCells);
            splat_gaussian(e, idx, pred[idx], kDefaultSigmaCells);
        }
        return total / (clicks + 1);
    };
    auto step = [&](std::size_t i, Rng& rng) {
        return run(*split.train[i / static_cast<std::size_t>(config.samples_per_image)], rng, true);
    };
    auto validate = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < split.val.size(); ++i) {
            Rng rng(mix_seed(mix_seed(config.seed, 0x1a), i));
            total += run(*split.val[i], rng, false);
        }
        return total / static_cast<double>(split.val.size());
    };
    TrainingLog l = fit(config, model->params(), split.train.size() * config.samples_per_image, step, validate,
                        on_epoch);
    if (log) *log = std::move(l);
    return model;
}

}  // namespace keybot::models
