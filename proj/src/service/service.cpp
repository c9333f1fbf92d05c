#include "keybot/service/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include <httplib.h>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/eval/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace keybot::service {

struct AnnotationService::Entry {
    std::mutex mu;
    std::string id;
    fs::path dir;
    std::unique_ptr<engine::RefinementSession> session;
    int original_height = 0;
    int original_width = 0;
    std::string created;
    std::string updated;
    std::size_t logged_events = 0;
    std::optional<KeypointSet> groundtruth;  // working frame
};

namespace {

/// An error with its HTTP status and machine-readable code.
struct HttpError {
    int status;
    std::string code;
    std::string message;
};

[[noreturn]] void fail(int status, std::string code, std::string message)
{
    throw HttpError{status, std::move(code), std::move(message)};
}

void reply(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::string now_iso()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string new_uuid()
{
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    const std::uint64_t a = rng(), b = rng();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%08x-%04x-4%03x-%04x-%012llx", static_cast<unsigned>(a >> 32),
                  static_cast<unsigned>((a >> 16) & 0xffff), static_cast<unsigned>(a & 0xfff),
                  static_cast<unsigned>(0x8000 | ((b >> 48) & 0x3fff)),
                  static_cast<unsigned long long>(b & 0xffffffffffffULL));
    return buf;
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) return json::object();
    try {
        json j = json::parse(req.body);
        if (!j.is_object()) fail(400, "malformed_body", "request body must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        fail(400, "malformed_body", std::string("request body is not valid JSON: ") + e.what());
    }
}

Point to_working(const Point& p, int oh, int ow, int wh, int ww)
{
    return {(p.row + 0.5) * wh / oh - 0.5, (p.col + 0.5) * ww / ow - 0.5};
}

Point to_original(const Point& p, int oh, int ow, int wh, int ww)
{
    return {(p.row + 0.5) * oh / wh - 0.5, (p.col + 0.5) * ow / ww - 0.5};
}

json topology_json(const SpineTopology& t)
{
    json verts = json::array();
    for (const auto& v : t.vertebrae()) verts.push_back(v.indices);
    json pairs = json::array();
    for (const auto& [l, r] : t.lr_pairs()) pairs.push_back({l, r});
    return {{"name", t.name()},
            {"num_keypoints", t.num_keypoints()},
            {"vertebrae", verts},
            {"lr_pairs", pairs},
            {"detectable_indices", t.detectable_indices()}};
}

Point point_arg(const json& j, const char* what)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        fail(422, "invalid_position", std::string(what) + " must be a [row, col] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

KeypointSet keypoints_arg(const json& j, int K, const char* what)
{
    const json& arr = j.is_object() && j.contains("keypoints") ? j["keypoints"] : j;
    KeypointSet out;
    try {
        out = keypoints_from_json(arr);
    } catch (const std::exception& e) {
        fail(422, "invalid_keypoints", std::string(what) + ": " + e.what());
    }
    if (static_cast<int>(out.size()) != K)
        fail(422, "keypoint_count_mismatch",
             std::string(what) + " has " + std::to_string(out.size()) + " keypoints, expected " + std::to_string(K));
    if (!out.all_finite()) fail(422, "invalid_keypoints", std::string(what) + " has non-finite coordinates");
    return out;
}

json read_jsonl(const fs::path& p)
{
    json out = json::array();
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    require(in.good(), Errc::io_error, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

AnnotationService::AnnotationService(ServiceConfig config, std::optional<models::ModelSet> models)
    : cfg_(std::move(config)), topology_(SpineTopology::preset(cfg_.topology)), models_(std::move(models))
{
    cfg_.refinement.validate(topology_.num_keypoints());
    fs::create_directories(cfg_.state_dir / "sessions");
    if (models_) restore_sessions();
}

AnnotationService::~AnnotationService() = default;

std::size_t AnnotationService::session_count() const
{
    std::lock_guard lock(store_mu_);
    return sessions_.size();
}

std::shared_ptr<AnnotationService::Entry> AnnotationService::find(const std::string& id) const
{
    std::lock_guard lock(store_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(404, "session_not_found", "no session '" + id + "'");
    return it->second;
}

void AnnotationService::persist_events(Entry& e)
{
    const json& events = e.session->events();
    std::ofstream out(e.dir / "events.jsonl", std::ios::app);
    for (std::size_t i = e.logged_events; i < events.size(); ++i) out << events[i].dump() << '\n';
    out.flush();
    e.logged_events = events.size();
    e.updated = now_iso();
}

nlohmann::json AnnotationService::export_session(const Entry& e) const
{
    json ex = e.session->to_json();
    ex["id"] = e.id;
    ex["original_size"] = {{"height", e.original_height}, {"width", e.original_width}};
    ex["created"] = e.created;
    ex["updated"] = e.updated;
    const GridSpec g = models_->interaction->input_grid();
    json final_kps = json::array();
    for (const auto& p : e.session->prediction().points) {
        const Point o = to_original(p, e.original_height, e.original_width, g.image_height, g.image_width);
        final_kps.push_back({o.row, o.col});
    }
    ex["final_keypoints"] = final_kps;
    return ex;
}

void AnnotationService::write_snapshot(Entry& e)
{
    write_json(e.dir / "snapshot.json", export_session(e));
}

void AnnotationService::flush()
{
    std::vector<std::shared_ptr<Entry>> all;
    {
        std::lock_guard lock(store_mu_);
        for (auto& [id, e] : sessions_) all.push_back(e);
    }
    for (auto& e : all) {
        std::lock_guard lock(e->mu);
        persist_events(*e);
        write_snapshot(*e);
    }
}

void AnnotationService::restore_sessions()
{
    for (const auto& d : fs::directory_iterator(cfg_.state_dir / "sessions")) {
        if (!d.is_directory() || !fs::exists(d.path() / "session.json")) continue;
        try {
            const json meta = read_json(d.path() / "session.json");
            auto e = std::make_shared<Entry>();
            e->id = meta.at("id").get<std::string>();
            e->dir = d.path();
            e->original_height = meta.at("original_size").at("height").get<int>();
            e->original_width = meta.at("original_size").at("width").get<int>();
            e->created = meta.at("created").get<std::string>();
            if (meta.contains("groundtruth") && !meta["groundtruth"].is_null())
                e->groundtruth = keypoints_from_json(meta["groundtruth"]);
            const GridSpec g = models_->interaction->input_grid();
            Image img = decode_png(read_bytes(d.path() / "image.png"));
            img = resize(img, g.image_height, g.image_width);
            img.set_source_id(e->id);
            const json ex = {{"config", meta.at("config")}, {"events", read_jsonl(d.path() / "events.jsonl")}};
            e->session = std::make_unique<engine::RefinementSession>(
                engine::replay(img, topology_, *models_, ex, e->groundtruth));
            e->logged_events = e->session->events().size();
            e->updated = meta.value("created", e->created);
            sessions_[e->id] = std::move(e);
        } catch (const std::exception& ex) {
            std::fprintf(stderr, "skipping session %s: %s\n", d.path().string().c_str(), ex.what());
        }
    }
}

nlohmann::json AnnotationService::describe(const Entry& e) const
{
    const auto& s = *e.session;
    const GridSpec g = models_->interaction->input_grid();
    json kps = json::array();
    for (const auto& p : s.prediction().points) {
        const Point o = to_original(p, e.original_height, e.original_width, g.image_height, g.image_width);
        kps.push_back({o.row, o.col});
    }
    return {{"id", e.id},
            {"status", engine::to_string(s.status())},
            {"t", s.t()},
            {"n", s.n()},
            {"remaining_clicks", s.config().T - s.t()},
            {"revised", s.revised()},
            {"keypoints", kps},
            {"config", engine::to_json(s.config())},
            {"created", e.created},
            {"updated", e.updated}};
}

void AnnotationService::mount(httplib::Server& server)
{
    // Runs a handler, turning HttpError and library errors into JSON errors.
    auto guarded = [](auto fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                reply(res, e.status, {{"code", e.code}, {"message", e.message}});
            } catch (const Error& e) {
                int status = 500;
                switch (e.code()) {
                case Errc::invalid_argument:
                case Errc::out_of_range:
                case Errc::resolution_mismatch: status = 422; break;
                case Errc::failed_precondition: status = 409; break;
                case Errc::not_found: status = 404; break;
                case Errc::io_error: status = 500; break;
                }
                reply(res, status, {{"code", errc_name(e.code())}, {"message", e.what()}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"code", "internal"}, {"message", e.what()}});
            }
        };
    };

    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                   reply(res, 200,
                         {{"status", "ok"},
                          {"models_loaded", models_.has_value()},
                          {"models", cfg_.model_info},
                          {"topology", topology_json(topology_)},
                          {"config", engine::to_json(cfg_.refinement)},
                          {"sessions", session_count()}});
               }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    if (!models_) fail(503, "models_not_loaded", "the server has no models loaded");
                    if (!req.has_file("image")) fail(400, "missing_image", "multipart field 'image' is required");
                    const std::string bytes = req.get_file_value("image").content;
                    Image original;
                    try {
                        original = decode_png(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
                    } catch (const std::exception& e) {
                        fail(400, "invalid_image", e.what());
                    }
                    json overrides = json::object();
                    if (req.has_file("config")) {
                        try {
                            overrides = json::parse(req.get_file_value("config").content);
                        } catch (const json::exception& e) {
                            fail(400, "malformed_config", e.what());
                        }
                        if (!overrides.is_object()) fail(400, "malformed_config", "config must be a JSON object");
                    }
                    if (overrides.contains("topology")) {
                        if (overrides["topology"] != topology_.name())
                            fail(422, "topology_mismatch", "server models are for topology '" + topology_.name() + "'");
                        overrides.erase("topology");
                    }
                    engine::RefinementConfig config;
                    try {
                        config = engine::refinement_config_from_json(overrides, cfg_.refinement);
                        config.validate(topology_.num_keypoints());
                    } catch (const Error& e) {
                        fail(422, "invalid_config", e.what());
                    }
                    const GridSpec g = models_->interaction->input_grid();
                    const int oh = original.height(), ow = original.width();
                    auto field_keypoints = [&](const char* name) -> std::optional<KeypointSet> {
                        if (!req.has_file(name)) return std::nullopt;
                        json j;
                        try {
                            j = json::parse(req.get_file_value(name).content);
                        } catch (const json::exception& e) {
                            fail(400, "malformed_keypoints", e.what());
                        }
                        KeypointSet k = keypoints_arg(j, topology_.num_keypoints(), name);
                        for (auto& p : k.points) p = to_working(p, oh, ow, g.image_height, g.image_width);
                        return k;
                    };
                    std::optional<KeypointSet> gt = field_keypoints("groundtruth");
                    std::optional<KeypointSet> initial = field_keypoints("initial");

                    auto e = std::make_shared<Entry>();
                    e->id = new_uuid();
                    e->original_height = oh;
                    e->original_width = ow;
                    e->created = e->updated = now_iso();
                    e->groundtruth = gt;
                    Image working = resize(original, g.image_height, g.image_width);
                    working.set_source_id(e->id);
                    e->session = std::make_unique<engine::RefinementSession>(std::move(working), topology_, *models_,
                                                                             config, gt, initial);
                    e->dir = cfg_.state_dir / "sessions" / e->id;
                    fs::create_directories(e->dir);
                    {
                        std::ofstream img(e->dir / "image.png", std::ios::binary);
                        img.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
                    }
                    write_json(e->dir / "session.json",
                               {{"id", e->id},
                                {"created", e->created},
                                {"topology", topology_.name()},
                                {"config", engine::to_json(config)},
                                {"original_size", {{"height", oh}, {"width", ow}}},
                                {"groundtruth", gt ? keypoints_to_json(*gt) : json()}});
                    persist_events(*e);
                    json body = describe(*e);
                    body["topology"] = topology_json(topology_);
                    body["image"] = {{"height", oh}, {"width", ow}};
                    {
                        std::lock_guard lock(store_mu_);
                        sessions_[e->id] = e;
                    }
                    reply(res, 201, body);
                }));

    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto e = find(req.matches[1]);
                   std::lock_guard lock(e->mu);
                   reply(res, 200, describe(*e));
               }));

    server.Post(R"(/sessions/([^/]+)/keybot)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    auto e = find(req.matches[1]);
                    const json body = parse_body(req);
                    std::lock_guard lock(e->mu);
                    auto& s = *e->session;
                    if (s.status() == engine::SessionStatus::finalized)
                        fail(409, "session_finalized", "session is finalized");
                    int iterations = s.config().N;
                    if (body.contains("iterations")) {
                        if (!body["iterations"].is_number_integer())
                            fail(422, "invalid_iterations", "iterations must be an integer");
                        iterations = body["iterations"].get<int>();
                    }
                    if (iterations < 0 || iterations > s.config().N)
                        fail(422, "invalid_iterations", "iterations must lie in 0..N");
                    const GridSpec g = models_->interaction->input_grid();
                    auto orig = [&](const Point& p) {
                        const Point o = to_original(p, e->original_height, e->original_width, g.image_height,
                                                    g.image_width);
                        return json::array({o.row, o.col});
                    };
                    json records = json::array();
                    for (const auto& rec : s.run_keybot(iterations)) {
                        json z = json::array();
                        for (std::size_t j = 0; j < rec.corrected.size(); ++j)
                            z.push_back({{"index", rec.corrected[j]}, {"position", orig(rec.pseudo_corrections[j])}});
                        json kps = json::array();
                        for (const auto& p : rec.prediction.points) kps.push_back(orig(p));
                        records.push_back({{"iteration", rec.iteration},
                                           {"detected", rec.detected},
                                           {"pseudo_corrections", z},
                                           {"false_added", rec.false_added},
                                           {"keypoints", kps},
                                           {"seconds", rec.seconds}});
                    }
                    persist_events(*e);
                    json out = describe(*e);
                    out["iterations"] = records;
                    reply(res, 200, out);
                }));

    server.Post(R"(/sessions/([^/]+)/click)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    auto e = find(req.matches[1]);
                    const json body = parse_body(req);
                    std::lock_guard lock(e->mu);
                    auto& s = *e->session;
                    if (s.status() == engine::SessionStatus::finalized)
                        fail(409, "session_finalized", "session is finalized");
                    if (s.t() >= s.config().T) fail(409, "click_budget_exhausted", "no clicks left in this session");
                    if (!body.contains("index") || !body["index"].is_number_integer())
                        fail(422, "invalid_index", "index must be an integer");
                    const int index = body["index"].get<int>();
                    if (index < 0 || index >= topology_.num_keypoints())
                        fail(422, "invalid_index", "index out of range");
                    if (!body.contains("position")) fail(422, "invalid_position", "position is required");
                    const GridSpec g = models_->interaction->input_grid();
                    const Point p = to_working(point_arg(body["position"], "position"), e->original_height,
                                               e->original_width, g.image_height, g.image_width);
                    s.user_step({index, p, body.value("timestamp", 0.0)});
                    persist_events(*e);
                    reply(res, 200, describe(*e));
                }));

    server.Get(R"(/sessions/([^/]+)/paths)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto e = find(req.matches[1]);
                   std::lock_guard lock(e->mu);
                   const auto& s = *e->session;
                   if (!s.config().keep_paths) fail(412, "paths_disabled", "keep_paths is disabled for this session");
                   const GridSpec g = models_->interaction->input_grid();
                   json candidates = json::array();
                   const auto& paths = s.current_paths();
                   for (std::size_t j = 0; j < paths.size(); ++j) {
                       KeypointSet o = paths[j];
                       for (auto& p : o.points)
                           p = to_original(p, e->original_height, e->original_width, g.image_height, g.image_width);
                       json c = {{"iteration", j}, {"keypoints", keypoints_to_json(o)}};
                       if (e->groundtruth) {
                           KeypointSet gt = *e->groundtruth;
                           for (auto& p : gt.points)
                               p = to_original(p, e->original_height, e->original_width, g.image_height,
                                               g.image_width);
                           c["mre"] = eval::mre(o, gt);
                       }
                       candidates.push_back(c);
                   }
                   reply(res, 200, {{"round", s.t()}, {"selected", s.path_selected()}, {"candidates", candidates}});
               }));

    server.Post(R"(/sessions/([^/]+)/select-path)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                    auto e = find(req.matches[1]);
                    const json body = parse_body(req);
                    std::lock_guard lock(e->mu);
                    auto& s = *e->session;
                    if (!s.config().keep_paths) fail(412, "paths_disabled", "keep_paths is disabled for this session");
                    if (s.status() == engine::SessionStatus::finalized)
                        fail(409, "session_finalized", "session is finalized");
                    if (s.path_selected()) fail(409, "path_already_selected", "a path was already selected this round");
                    if (!body.contains("candidate") || !body["candidate"].is_number_integer())
                        fail(422, "invalid_candidate", "candidate must be an integer");
                    const int j = body["candidate"].get<int>();
                    if (j < 0 || j >= static_cast<int>(s.current_paths().size()))
                        fail(422, "invalid_candidate", "candidate index out of range");
                    s.select_path(j);
                    persist_events(*e);
                    reply(res, 200, describe(*e));
                }));

    server.Post(R"(/sessions/([^/]+)/finalize)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    auto e = find(req.matches[1]);
                    std::lock_guard lock(e->mu);
                    auto& s = *e->session;
                    if (s.status() == engine::SessionStatus::finalized)
                        fail(409, "session_finalized", "session is already finalized");
                    s.finalize();
                    persist_events(*e);
                    write_snapshot(*e);
                    json out = describe(*e);
                    out["trajectory"] = export_session(*e);
                    reply(res, 200, out);
                }));
}

}  // namespace keybot::service
