#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "keybot/engine/engine.hpp"

namespace httplib {
class Server;
}

namespace keybot::service {

struct ServiceConfig {
    /// Sessions persist under <state_dir>/sessions/<id>/.
    std::filesystem::path state_dir;
    std::string topology = "aasce";
    engine::RefinementConfig refinement;
    /// Reported verbatim by /health (checkpoint sidecars and the like).
    nlohmann::json model_info = nlohmann::json::object();
};

/// HTTP facade over refinement sessions. Requests on one session are
/// serialized by a per-session lock; different sessions run in parallel.
/// Every state change is appended to the session's events.jsonl, which is
/// replayed on startup.
class AnnotationService {
public:
    /// `models` empty means session creation answers 503.
    AnnotationService(ServiceConfig config, std::optional<models::ModelSet> models);
    ~AnnotationService();

    void mount(httplib::Server& server);
    /// Writes snapshot.json for every session.
    void flush();
    std::size_t session_count() const;

private:
    struct Entry;

    std::shared_ptr<Entry> find(const std::string& id) const;
    void restore_sessions();
    void persist_events(Entry& e);
    void write_snapshot(Entry& e);
    nlohmann::json describe(const Entry& e) const;
    nlohmann::json export_session(const Entry& e) const;

    ServiceConfig cfg_;
    SpineTopology topology_;
    std::optional<models::ModelSet> models_;
    mutable std::mutex store_mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace keybot::service
