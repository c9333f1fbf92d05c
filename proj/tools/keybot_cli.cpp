// Command-line entry points: data generation, corruption corpora, training,
// evaluation, serving and replay. Every command reads one merged config
// document, applies flag overrides and echoes the effective config into
// --out-dir.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/core/random.hpp"
#include "keybot/data/dataset.hpp"
#include "keybot/data/synthetic.hpp"
#include "keybot/engine/engine.hpp"
#include "keybot/errorsim/errorsim.hpp"
#include "keybot/eval/bench.hpp"
#include "keybot/models/checkpoint.hpp"
#include "keybot/models/training.hpp"
#include "keybot/service/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace keybot;

namespace {

/// Bad flags or config: exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvaluationSection {
    std::string split = "test";
    std::vector<std::string> policies = {"model_only", "keybot", "keybot_oracle_path", "manual_only"};
    std::vector<int> keybot_iters = {1, 2, 3};
    std::vector<eval::NocSpec> noc = {{4, 5.0}, {4, 10.0}};
    /// "model" runs the interaction model first; "corrupted" injects a
    /// single-error corruption of the groundtruth as the initial prediction.
    std::string initial = "model";
    bool without_fp = false;
    int max_samples = 0;
};

struct ServiceSection {
    std::string host = "127.0.0.1";
    int port = 8080;
};

struct CliConfig {
    std::uint64_t seed = 7;
    std::string topology = "aasce";
    data::SyntheticSpineParams synthetic;
    std::array<double, 3> split = {0.6, 0.2, 0.2};
    models::TrainingConfig train_detector;
    models::TrainingConfig train_corrector;
    models::TrainingConfig train_interaction;
    models::InteractionConfig interaction;
    models::CorrectorConfig corrector;
    models::DetectorConfig detector;
    engine::RefinementConfig refinement;
    EvaluationSection evaluation;
    std::string corruption_kind = "mixed";
    errorsim::CorruptionProfile corruption = errorsim::CorruptionProfile::corrector_train();
    ServiceSection service;
};

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where)
{
    if (!j.is_object()) throw UsageError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw UsageError("unknown config key '" + where + "." + k + "'");
    }
}

json to_json(const CliConfig& c)
{
    json noc = json::array();
    for (const auto& s : c.evaluation.noc) noc.push_back({{"max_clicks", s.max_clicks}, {"target", s.target}});
    return {{"seed", c.seed},
            {"topology", c.topology},
            {"synthetic", data::to_json(c.synthetic)},
            {"split", {{"train", c.split[0]}, {"val", c.split[1]}, {"test", c.split[2]}}},
            {"training",
             {{"detector", models::to_json(c.train_detector)},
              {"corrector", models::to_json(c.train_corrector)},
              {"interaction", models::to_json(c.train_interaction)}}},
            {"models",
             {{"interaction", models::to_json(c.interaction)},
              {"corrector", models::to_json(c.corrector)},
              {"detector", models::to_json(c.detector)}}},
            {"refinement", engine::to_json(c.refinement)},
            {"evaluation",
             {{"split", c.evaluation.split},
              {"policies", c.evaluation.policies},
              {"keybot_iters", c.evaluation.keybot_iters},
              {"noc", noc},
              {"initial", c.evaluation.initial},
              {"without_fp", c.evaluation.without_fp},
              {"max_samples", c.evaluation.max_samples}}},
            {"corruption", {{"kind", c.corruption_kind}, {"profile", c.corruption.to_json()}}},
            {"service", {{"host", c.service.host}, {"port", c.service.port}}}};
}

/// Builds the effective config. Seeds of the sub-sections follow the
/// top-level seed unless the document sets them explicitly.
CliConfig config_from_json(const json& doc)
{
    reject_unknown(doc, {"seed", "topology", "synthetic", "split", "training", "models", "refinement", "evaluation",
                         "corruption", "service"},
                   "config");
    CliConfig c;
    c.seed = doc.value("seed", c.seed);
    c.topology = doc.value("topology", c.topology);
    SpineTopology::preset(c.topology);
    const json empty = json::object();
    auto section = [&](const json& parent, const char* key) -> const json& {
        return parent.contains(key) ? parent.at(key) : empty;
    };
    auto seeded = [&](const json& j) {
        json out = j;
        if (!out.contains("seed")) out["seed"] = c.seed;
        return out;
    };

    json syn = seeded(section(doc, "synthetic"));
    if (!syn.contains("topology")) syn["topology"] = c.topology;
    c.synthetic = data::synthetic_params_from_json(syn, data::SyntheticSpineParams::for_topology(syn["topology"]));
    if (c.synthetic.topology != c.topology) throw UsageError("synthetic.topology differs from topology");

    const json& split = section(doc, "split");
    reject_unknown(split, {"train", "val", "test"}, "split");
    c.split = {split.value("train", c.split[0]), split.value("val", c.split[1]), split.value("test", c.split[2])};

    const json& training = section(doc, "training");
    reject_unknown(training, {"detector", "corrector", "interaction"}, "training");
    c.train_detector = models::training_config_from_json(seeded(section(training, "detector")));
    c.train_corrector = models::training_config_from_json(seeded(section(training, "corrector")));
    c.train_interaction = models::training_config_from_json(seeded(section(training, "interaction")));

    const json& m = section(doc, "models");
    reject_unknown(m, {"interaction", "corrector", "detector"}, "models");
    const int K = SpineTopology::preset(c.topology).num_keypoints();
    json mi = section(m, "interaction"), mc = section(m, "corrector");
    if (!mi.contains("num_keypoints")) mi["num_keypoints"] = K;
    if (!mc.contains("num_keypoints")) mc["num_keypoints"] = K;
    c.interaction = models::interaction_config_from_json(mi);
    c.corrector = models::corrector_config_from_json(mc);
    c.detector = models::detector_config_from_json(section(m, "detector"));

    c.refinement = engine::refinement_config_from_json(seeded(section(doc, "refinement")));
    c.refinement.validate(K);

    const json& ev = section(doc, "evaluation");
    reject_unknown(ev, {"split", "policies", "keybot_iters", "noc", "initial", "without_fp", "max_samples"}, "evaluation");
    c.evaluation.split = ev.value("split", c.evaluation.split);
    c.evaluation.policies = ev.value("policies", c.evaluation.policies);
    c.evaluation.keybot_iters = ev.value("keybot_iters", c.evaluation.keybot_iters);
    if (ev.contains("noc")) {
        c.evaluation.noc.clear();
        for (const auto& s : ev["noc"]) {
            reject_unknown(s, {"max_clicks", "target"}, "evaluation.noc[]");
            c.evaluation.noc.push_back({s.at("max_clicks").get<int>(), s.at("target").get<double>()});
        }
    }
    c.evaluation.initial = ev.value("initial", c.evaluation.initial);
    if (c.evaluation.initial != "model" && c.evaluation.initial != "corrupted")
        throw UsageError("evaluation.initial must be 'model' or 'corrupted'");
    c.evaluation.without_fp = ev.value("without_fp", c.evaluation.without_fp);
    c.evaluation.max_samples = ev.value("max_samples", c.evaluation.max_samples);
    for (const auto& p : c.evaluation.policies) engine::policy_from_string(p);

    const json& cor = section(doc, "corruption");
    reject_unknown(cor, {"kind", "profile"}, "corruption");
    c.corruption_kind = cor.value("kind", c.corruption_kind);
    if (cor.contains("profile")) c.corruption = errorsim::CorruptionProfile::from_json(cor["profile"]);

    const json& sv = section(doc, "service");
    reject_unknown(sv, {"host", "port"}, "service");
    c.service.host = sv.value("host", c.service.host);
    c.service.port = sv.value("port", c.service.port);
    return c;
}

/// Parses "a.b.c=value"; the value is JSON when it parses, a string otherwise.
void apply_override(json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw UsageError("override '" + assignment + "' has an empty key");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (!node->is_object()) *node = json::object();
        start = dot + 1;
    }
}

/// Flags shared by every subcommand.
struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool out_required = true)
{
    cmd->add_option("--config", a.config_path, "Config document (JSON) for all modules");
    cmd->add_option("--set", a.overrides, "Override a config key, e.g. training.detector.epochs=5");
    auto* out = cmd->add_option("--out-dir", a.out_dir, "Directory for all artifacts");
    if (out_required) out->required();
    cmd->add_option("--seed", a.seed, "Top-level seed");
}

/// Loads the document, applies overrides (flags last) and echoes the result.
CliConfig resolve(const CommonArgs& a, json flag_overrides, const char* command)
{
    json doc = json::object();
    if (!a.config_path.empty()) {
        try {
            doc = read_json(a.config_path);
        } catch (const std::exception& e) {
            throw UsageError(std::string("cannot read config: ") + e.what());
        }
    }
    for (const auto& o : a.overrides) apply_override(doc, o);
    if (a.seed) doc["seed"] = *a.seed;
    for (const auto& [k, v] : flag_overrides.items()) apply_override(doc, k + "=" + v.dump());
    CliConfig cfg;
    try {
        cfg = config_from_json(doc);
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        json echo = to_json(cfg);
        write_json(fs::path(a.out_dir) / (std::string("effective_config.") + command + ".json"), echo);
    }
    return cfg;
}

models::ModelSet load_models(const fs::path& dir, json* info = nullptr)
{
    const fs::path ip = dir / "interaction.ckpt", cp = dir / "corrector.ckpt", dp = dir / "detector.ckpt";
    for (const auto& p : {ip, cp, dp})
        require(fs::exists(p), Errc::not_found, "missing checkpoint " + p.string());
    if (info) {
        *info = json::object();
        for (const auto& [name, p] : {std::pair{"interaction", ip}, {"corrector", cp}, {"detector", dp}})
            (*info)[name] = models::sidecar_json(models::read_checkpoint_info(p));
    }
    models::ModelSet set;
    set.interaction = models::load_interaction(ip);
    set.corrector = models::load_corrector(cp);
    set.detector = models::load_detector(dp);
    return set;
}

std::vector<LabeledImage> working_split(const fs::path& root, const data::DatasetManifest& m, const std::string& which)
{
    std::vector<LabeledImage> out;
    for (auto& s : data::load_split(root, m, which))
        out.push_back(data::to_working_frame(s, models::kWorkingHeight, models::kWorkingWidth));
    return out;
}

// ---------------------------------------------------------------- commands

int cmd_gen_synthetic(const CommonArgs& a, int count)
{
    if (count <= 0) throw UsageError("--count must be positive");
    const CliConfig cfg = resolve(a, json::object(), "gen-synthetic");
    const fs::path out = a.out_dir;
    if (fs::exists(out / "manifest.json")) throw UsageError(out.string() + " already holds a dataset");
    const auto samples = data::generate_synthetic(cfg.synthetic, count);
    data::DatasetManifest m;
    m.name = "synthetic";
    m.topology = cfg.topology;
    m.provenance = "synthetic seed " + std::to_string(cfg.synthetic.seed);
    for (const auto& s : samples) m.train.push_back(s.id);
    m = data::split_dataset(m, cfg.split, cfg.seed);
    data::write_dataset(out, m, samples);
    std::printf("wrote %d samples to %s (train %zu, val %zu, test %zu)\n", count, out.c_str(), m.train.size(),
                m.val.size(), m.test.size());
    return 0;
}

int cmd_corrupt(const CommonArgs& a, const std::string& dataset)
{
    const CliConfig cfg = resolve(a, json::object(), "corrupt");
    const fs::path root = dataset;
    const data::DatasetManifest m = data::load_manifest(root);
    const SpineTopology topo = SpineTopology::preset(m.topology);
    const fs::path out = a.out_dir;
    fs::create_directories(out / "annotations");
    std::optional<errorsim::ErrorKind> kind;
    if (cfg.corruption_kind != "mixed") kind = errorsim::error_kind_from_string(cfg.corruption_kind);
    const auto ids = m.ids();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const Annotation ann = annotation_from_json(read_json(root / "annotations" / (ids[i] + ".json")));
        Rng rng(mix_seed(cfg.seed, i));
        const errorsim::CorruptionResult r =
            kind ? errorsim::sample_single_error(ann.keypoints, topo, *kind, cfg.corruption, rng)
                 : errorsim::sample_training_corruption(ann.keypoints, topo, cfg.corruption, rng);
        json doc = to_json(ann);
        doc["corruption"] = errorsim::to_json(r.applied_spec);
        doc["labels"] = r.labels.flags;
        doc["corrupted_keypoints"] = keypoints_to_json(r.corrupted);
        write_json(out / "annotations" / (ids[i] + ".json"), doc);
    }
    write_json(out / "manifest.json", data::to_json(m));
    std::printf("wrote %zu corrupted annotations to %s\n", ids.size(), out.c_str());
    return 0;
}

int cmd_train(const CommonArgs& a, const std::string& which, const std::string& dataset)
{
    if (which != "detector" && which != "corrector" && which != "interaction")
        throw UsageError("--which must be detector, corrector or interaction");
    const CliConfig cfg = resolve(a, json::object(), ("train-" + which).c_str());
    const fs::path root = dataset;
    if (!fs::exists(root / "manifest.json")) throw Error(Errc::not_found, "no dataset manifest under " + root.string());
    const data::DatasetManifest m = data::load_manifest(root);
    if (m.topology != cfg.topology)
        throw UsageError("dataset topology '" + m.topology + "' differs from config topology '" + cfg.topology + "'");
    const SpineTopology topo = SpineTopology::preset(m.topology);
    const auto train = working_split(root, m, "train");
    const auto val = working_split(root, m, "val");
    const fs::path out = a.out_dir;
    models::TrainingLog log;
    auto progress = [](const models::EpochLog& e) {
        std::printf("epoch %d train %.6f val %.6f (%.1fs)\n", e.epoch, e.train_loss, e.val_loss, e.seconds);
        std::fflush(stdout);
    };
    if (which == "detector") {
        auto model = models::train_detector(cfg.train_detector, cfg.detector, topo, train, val, &log, progress);
        models::save_checkpoint(out / "detector.ckpt", *model);
    } else if (which == "corrector") {
        auto model = models::train_corrector(cfg.train_corrector, cfg.corrector, topo, train, val, &log, progress);
        models::save_checkpoint(out / "corrector.ckpt", *model);
    } else {
        auto model = models::train_interaction(cfg.train_interaction, cfg.interaction, topo, train, val, &log, progress);
        models::save_checkpoint(out / "interaction.ckpt", *model);
    }
    log.write_csv(out / (which + "_training_log.csv"));
    std::printf("best epoch %d val %.6f (%s)\n", log.best_epoch, log.best_val_loss, log.stop_reason.c_str());
    return 0;
}

int cmd_evaluate(const CommonArgs& a, const std::string& dataset, const std::string& checkpoints)
{
    const CliConfig cfg = resolve(a, json::object(), "evaluate");
    const fs::path root = dataset;
    const data::DatasetManifest m = data::load_manifest(root);
    const SpineTopology topo = SpineTopology::preset(m.topology);
    const models::ModelSet models = load_models(checkpoints);

    std::vector<eval::BenchmarkSample> samples;
    for (auto& s : data::load_split(root, m, cfg.evaluation.split)) {
        if (cfg.evaluation.max_samples > 0 && static_cast<int>(samples.size()) >= cfg.evaluation.max_samples) break;
        eval::BenchmarkSample b;
        b.original_height = s.image.height();
        b.original_width = s.image.width();
        b.sample = data::to_working_frame(s, models::kWorkingHeight, models::kWorkingWidth);
        samples.push_back(std::move(b));
    }
    if (cfg.evaluation.initial == "corrupted")
        eval::attach_corrupted_initials(samples, topo, cfg.corruption, cfg.seed);

    std::vector<eval::BenchmarkRun> runs;
    for (const auto& name : cfg.evaluation.policies) {
        const engine::Policy p = engine::policy_from_string(name);
        if (p == engine::Policy::keybot || p == engine::Policy::keybot_oracle_path) {
            for (int n : cfg.evaluation.keybot_iters) {
                engine::RefinementConfig rc = cfg.refinement;
                rc.N = n;
                const std::string base = "KeyBot-i" + std::to_string(n);
                runs.push_back({p == engine::Policy::keybot ? base : base + "-oracle-path", p, rc});
                if (cfg.evaluation.without_fp && p == engine::Policy::keybot) {
                    rc.accumulate_false_preds = false;
                    runs.push_back({base + "-wo-fp", p, rc});
                }
            }
        } else {
            runs.push_back({name, p, cfg.refinement});
        }
    }
    const eval::EvalReport report = eval::run_benchmark(m.name + ":" + cfg.evaluation.split, samples,
                                                        [&](const eval::BenchmarkSample&) { return models; }, runs,
                                                        cfg.evaluation.noc, topo);
    report.write(a.out_dir);
    std::cout << report.mre_csv();
    return 0;
}

std::atomic<httplib::Server*> g_server{nullptr};

int cmd_serve(const CommonArgs& a, const std::string& checkpoints, const std::string& state_dir, json flags)
{
    const CliConfig cfg = resolve(a, std::move(flags), "serve");
    service::ServiceConfig sc;
    sc.state_dir = state_dir.empty() ? fs::path(a.out_dir) / "state" : fs::path(state_dir);
    sc.topology = cfg.topology;
    sc.refinement = cfg.refinement;
    std::optional<models::ModelSet> models;
    if (!checkpoints.empty()) {
        json info;
        models = load_models(checkpoints, &info);
        sc.model_info = info;
    }
    service::AnnotationService svc(sc, models);

    // Signals are taken synchronously on a dedicated thread.
    sigset_t mask;
    sigemptyset(&mask);
    sigaddset(&mask, SIGTERM);
    sigaddset(&mask, SIGINT);
    pthread_sigmask(SIG_BLOCK, &mask, nullptr);

    httplib::Server server;
    svc.mount(server);
    int port = cfg.service.port;
    if (port == 0) {
        port = server.bind_to_any_port(cfg.service.host);
        if (port < 0) throw Error(Errc::io_error, "cannot bind " + cfg.service.host);
    } else if (!server.bind_to_port(cfg.service.host, port)) {
        throw Error(Errc::io_error, "cannot bind " + cfg.service.host + ":" + std::to_string(port));
    }
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&mask, &sig);
        server.stop();
    });
    std::printf("listening on http://%s:%d\n", cfg.service.host.c_str(), port);
    std::fflush(stdout);
    server.listen_after_bind();
    svc.flush();
    if (waiter.joinable()) {
        // listen_after_bind only returns after stop(), which the waiter issued.
        waiter.join();
    }
    std::printf("flushed %zu sessions\n", svc.session_count());
    return 0;
}

int cmd_replay(const CommonArgs& a, const std::string& export_path, const std::string& image_path,
               const std::string& checkpoints)
{
    const CliConfig cfg = resolve(a, json::object(), "replay");
    const json ex = read_json(export_path);
    const SpineTopology topo = SpineTopology::preset(ex.value("topology", cfg.topology));
    const models::ModelSet models = load_models(checkpoints);
    const GridSpec g = models.interaction->input_grid();
    Image img = read_png(image_path);
    if (img.height() != g.image_height || img.width() != g.image_width)
        img = resize(img, g.image_height, g.image_width);
    if (ex.contains("id")) img.set_source_id(ex["id"].get<std::string>());
    const engine::RefinementSession s = engine::replay(img, topo, models, ex);
    const KeypointSet recorded = keypoints_from_json(ex.at("prediction"));
    const bool match = recorded == s.prediction();
    json out = s.to_json();
    out["matches_export"] = match;
    write_json(fs::path(a.out_dir) / "replayed.json", out);
    std::printf("replayed %zu events: %s\n", ex.at("events").size(), match ? "identical" : "DIFFERENT");
    return match ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"keybot: vertebrae keypoint annotation with automatic error revision"};
    app.require_subcommand(1);
    CommonArgs common;

    auto* gen = app.add_subcommand("gen-synthetic", "Render a synthetic spine corpus");
    add_common(gen, common);
    int count = 500;
    gen->add_option("--count", count, "Number of images");

    auto* corrupt = app.add_subcommand("corrupt", "Write a corrupted-annotation corpus");
    add_common(corrupt, common);
    std::string dataset;
    corrupt->add_option("--dataset", dataset, "Dataset root")->required();

    auto* train = app.add_subcommand("train", "Train one model");
    add_common(train, common);
    std::string which;
    train->add_option("--which", which, "detector, corrector or interaction")->required();
    train->add_option("--dataset", dataset, "Dataset root")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Benchmark refinement policies");
    add_common(evaluate, common);
    std::string checkpoints;
    evaluate->add_option("--dataset", dataset, "Dataset root")->required();
    evaluate->add_option("--checkpoints", checkpoints, "Directory with the three checkpoints")->required();
    std::string policies, iters, initial;
    bool without_fp = false;
    evaluate->add_option("--policies", policies, "Comma-separated policies");
    evaluate->add_option("--keybot-iters", iters, "Comma-separated KeyBot iteration counts");
    evaluate->add_option("--initial", initial, "model or corrupted");
    evaluate->add_flag("--without-fp", without_fp, "Add rows without false-prediction accumulation");

    auto* serve = app.add_subcommand("serve", "Run the annotation service");
    add_common(serve, common, false);
    std::string state_dir, host, topology;
    int port = -1, T = -1, N = -1, k = -1, s = -1;
    double threshold = -1.0;
    bool keep_paths = false;
    serve->add_option("--checkpoints", checkpoints, "Directory with the three checkpoints");
    serve->add_option("--state-dir", state_dir, "Session store (default <out-dir>/state)");
    serve->add_option("--host", host);
    serve->add_option("--port", port, "0 picks a free port");
    serve->add_option("--topology", topology);
    serve->add_option("--T", T);
    serve->add_option("--N", N);
    serve->add_option("--k", k);
    serve->add_option("--s", s);
    serve->add_option("--threshold", threshold);
    serve->add_flag("--keep-paths", keep_paths);

    auto* replay = app.add_subcommand("replay", "Re-run a session export against the models");
    add_common(replay, common);
    std::string export_path, image_path;
    replay->add_option("--export", export_path, "Session export JSON")->required();
    replay->add_option("--image", image_path, "Session image (PNG)")->required();
    replay->add_option("--checkpoints", checkpoints, "Directory with the three checkpoints")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    auto split_list = [](const std::string& text) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (start <= text.size()) {
            const auto comma = text.find(',', start);
            const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!item.empty()) out.push_back(item);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return out;
    };

    try {
        if (*gen) return cmd_gen_synthetic(common, count);
        if (*corrupt) return cmd_corrupt(common, dataset);
        if (*train) return cmd_train(common, which, dataset);
        if (*evaluate) {
            if (!policies.empty()) common.overrides.push_back("evaluation.policies=" + json(split_list(policies)).dump());
            if (!iters.empty()) {
                std::vector<int> n;
                for (const auto& t : split_list(iters)) {
                    try {
                        n.push_back(std::stoi(t));
                    } catch (const std::exception&) {
                        throw UsageError("--keybot-iters takes integers");
                    }
                }
                common.overrides.push_back("evaluation.keybot_iters=" + json(n).dump());
            }
            if (!initial.empty()) common.overrides.push_back("evaluation.initial=\"" + initial + "\"");
            if (without_fp) common.overrides.push_back("evaluation.without_fp=true");
            return cmd_evaluate(common, dataset, checkpoints);
        }
        if (*serve) {
            json flags = json::object();
            if (!host.empty()) flags["service.host"] = host;
            if (port >= 0) flags["service.port"] = port;
            if (!topology.empty()) flags["topology"] = topology;
            if (T >= 0) flags["refinement.T"] = T;
            if (N >= 0) flags["refinement.N"] = N;
            if (k >= 0) flags["refinement.k"] = k;
            if (s >= 0) flags["refinement.s"] = s;
            if (threshold >= 0) flags["refinement.anomaly_threshold"] = threshold;
            if (keep_paths) flags["refinement.keep_paths"] = true;
            return cmd_serve(common, checkpoints, state_dir, flags);
        }
        if (*replay) return cmd_replay(common, export_path, image_path, checkpoints);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
