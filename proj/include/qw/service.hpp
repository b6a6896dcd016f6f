#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "qw/prompting.hpp"
#include "qw/retrieval.hpp"
#include "qw/writer.hpp"

namespace qw {

PromptConfig prompt_config_from_json(const nlohmann::json& j);
nlohmann::json prompt_config_to_json(const PromptConfig& c);

struct ServiceOptions {
    std::shared_ptr<LmBackend> backend;
    const std::vector<Dialogue>* pool = nullptr;  // few-shot exemplars, optional
    const Bm25Index* index = nullptr;
    CompletionParams decode;
    std::size_t jobs = 1;
    std::size_t max_k = 16;
    std::optional<std::filesystem::path> snapshot_dir;
    std::string cors_origin = "*";
};

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

// Authoring sessions over JSON. Routes:
//   POST   /sessions                      {spec, start_utterance, config?}
//   GET    /sessions/{id}
//   POST   /sessions/{id}/rounds          {k, revision?}
//   POST   /sessions/{id}/commit          {candidate_id, revision?}
//   PATCH  /sessions/{id}/nodes/{nid}     {text?, speaker?, facts?, revision?}
//   GET    /sessions/{id}/export
//   POST   /validate                      corpus document
//   POST   /stats                         corpus document
// Errors are {code, message, detail}. A mutation that carries a revision
// other than the current one is rejected with 409.
class Service {
  public:
    explicit Service(ServiceOptions options);

    ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body);

    const ServiceOptions& options() const { return options_; }
    std::size_t session_count() const;

  private:
    struct Session {
        std::string id;
        std::uint64_t revision = 1;
        SpineSession spine;
        mutable std::shared_mutex mutex;

        Session(std::string id, SpineSession s) : id(std::move(id)), spine(std::move(s)) {}
    };

    ServiceResponse create_session(const nlohmann::json& body);
    ServiceResponse get_session(Session& s) const;
    ServiceResponse propose(Session& s, const nlohmann::json& body);
    ServiceResponse commit(Session& s, const nlohmann::json& body);
    ServiceResponse edit_node(Session& s, const std::string& node_id, const nlohmann::json& body);
    ServiceResponse export_session(Session& s) const;

    std::shared_ptr<Session> find(const std::string& id) const;
    nlohmann::json state_json(const Session& s) const;
    void snapshot(const Session& s) const;

    ServiceOptions options_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

// httplib-backed listener for a Service. CORS headers are added to every
// response and OPTIONS preflights are answered directly.
class HttpServer {
  public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    // Binds; port 0 picks a free port. Returns the bound port or throws.
    int bind(const std::string& host, int port);
    // Blocks until stop() is called.
    void run();
    void stop();
    bool running() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace qw
