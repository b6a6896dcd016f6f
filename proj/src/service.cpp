#include "qw/service.hpp"

#include <atomic>
#include <cstdio>

#include <httplib.h>

#include "qw/corpus_json.hpp"
#include "qw/error.hpp"
#include "qw/text.hpp"

namespace qw {

using nlohmann::json;

PromptConfig prompt_config_from_json(const json& j) {
    PromptConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "config must be an object");
    if (j.contains("mode")) {
        auto m = prompt_mode_from_string(j.at("mode").get<std::string>());
        if (!m) throw Error(ErrorCode::invalid_argument, "unknown prompt mode '" + j.at("mode").get<std::string>() + "'");
        c.mode = *m;
    }
    if (j.contains("token_budget")) c.token_budget = j.at("token_budget").get<std::size_t>();
    if (j.contains("tokenizer")) c.tokenizer_id = j.at("tokenizer").get<std::string>();
    if (j.contains("allow_few_shot")) c.allow_few_shot = j.at("allow_few_shot").get<bool>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

json prompt_config_to_json(const PromptConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"token_budget", c.token_budget},
            {"tokenizer", c.tokenizer_id},
            {"allow_few_shot", c.allow_few_shot},
            {"seed", c.seed}};
}

namespace {

ServiceResponse error_response(int status, const std::string& code, const std::string& message,
                               json detail = nullptr) {
    return {status, {{"code", code}, {"message", message}, {"detail", std::move(detail)}}};
}

ServiceResponse from_error(const Error& e) {
    switch (e.code()) {
        case ErrorCode::not_found:
            return error_response(404, "not_found", e.what());
        case ErrorCode::conflict:
            return error_response(409, "conflict", e.what());
        case ErrorCode::backend_failure:
        case ErrorCode::parse_error:
            return error_response(502, "backend_failure", e.what());
        default:
            return error_response(422, to_string(e.code()), e.what());
    }
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path.substr(0, path.find('?'))) {
        if (c == '/') {
            if (!cur.empty()) parts.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
}

json fact_json(const DialogueSpec& spec, const FactRef& f) {
    return {{"source", f.source_id}, {"i", f.index}, {"label", fact_label(spec, f)}, {"text", resolve_fact(spec, f).text}};
}

json node_json(const DialogueSpec& spec, const UtteranceNode& n) {
    json facts = json::array();
    for (const auto& f : n.support_facts) facts.push_back(fact_json(spec, f));
    return {{"id", n.id}, {"speaker", n.speaker}, {"text", n.text}, {"facts", facts}, {"origin", to_string(n.origin)}};
}

void check_revision(const json& body, std::uint64_t current) {
    if (body.is_object() && body.contains("revision") && !body.at("revision").is_null() &&
        body.at("revision").get<std::uint64_t>() != current)
        throw Error(ErrorCode::conflict, "stale revision " + body.at("revision").dump() + " (current " +
                                             std::to_string(current) + ")");
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {
    if (!options_.backend) options_.backend = std::make_shared<MockBackend>();
    if (options_.snapshot_dir) std::filesystem::create_directories(*options_.snapshot_dir);
}

std::size_t Service::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown session '" + id + "'");
    return it->second;
}

ServiceResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
    json payload;
    if (!text::trim(body).empty()) {
        payload = json::parse(body, nullptr, false);
        if (payload.is_discarded()) return error_response(400, "bad_request", "request body is not valid JSON");
    }
    const auto parts = split_path(path);
    try {
        try {
            if (parts.size() == 1 && parts[0] == "validate" && method == "POST") {
                auto report = validate_corpus(payload.get<Corpus>());
                return {200, {{"ok", report.ok()}, {"report", report}}};
            }
            if (parts.size() == 1 && parts[0] == "stats" && method == "POST")
                return {200, corpus_stats(payload.get<Corpus>())};
            if (parts.empty() || parts[0] != "sessions")
                return error_response(404, "not_found", "no route for " + method + " " + path);

            if (parts.size() == 1) {
                if (method == "POST") return create_session(payload);
                if (method == "GET") {
                    std::shared_lock lock(sessions_mutex_);
                    json ids = json::array();
                    for (const auto& [id, s] : sessions_) ids.push_back(id);
                    return {200, {{"sessions", ids}}};
                }
            } else {
                auto session = find(parts[1]);
                if (parts.size() == 2 && method == "GET") return get_session(*session);
                if (parts.size() == 3 && parts[2] == "rounds" && method == "POST") return propose(*session, payload);
                if (parts.size() == 3 && parts[2] == "commit" && method == "POST") return commit(*session, payload);
                if (parts.size() == 3 && parts[2] == "export" && method == "GET") return export_session(*session);
                if (parts.size() == 4 && parts[2] == "nodes" && method == "PATCH")
                    return edit_node(*session, parts[3], payload);
            }
            return error_response(405, "method_not_allowed", "no route for " + method + " " + path);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, std::string("malformed request: ") + e.what());
        }
    } catch (const Error& e) {
        return from_error(e);
    }
}

ServiceResponse Service::create_session(const json& body) {
    if (!body.is_object() || !body.contains("spec") || !body.contains("start_utterance"))
        return error_response(422, "invalid_argument", "body needs spec and start_utterance");
    DialogueSpec spec;
    try {
        spec = parse_spec(body.at("spec"));
    } catch (const Error& e) {
        return error_response(422, "invalid_spec", e.what());
    }
    auto report = validate_spec(spec);
    if (!report.ok()) return error_response(422, "invalid_spec", "spec failed validation", report);

    const auto& su = body.at("start_utterance");
    UtteranceNode start;
    start.id = su.value("id", std::string("start"));
    start.speaker = su.at("speaker").get<std::string>();
    start.text = su.at("text").get<std::string>();
    if (su.contains("facts")) start.support_facts = su.at("facts").get<std::vector<FactRef>>();
    start.origin = Origin::gold;
    if (!spec.is_participant(start.speaker))
        return error_response(422, "invalid_argument", "start speaker '" + start.speaker + "' is not a participant");

    auto config = prompt_config_from_json(body.value("config", json(nullptr)));
    SpineSession spine(std::move(spec), std::move(start), config);

    std::shared_ptr<Session> session;
    {
        std::unique_lock lock(sessions_mutex_);
        char id[32];
        std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
        session = std::make_shared<Session>(id, std::move(spine));
        sessions_.emplace(session->id, session);
    }
    std::shared_lock lock(session->mutex);
    snapshot(*session);
    auto state = state_json(*session);
    return {201, state};
}

json Service::state_json(const Session& s) const {
    const auto& sp = s.spine;
    json nodes = json::array();
    for (const auto& [id, n] : sp.tree().nodes) nodes.push_back(node_json(sp.spec(), n));
    return {{"session_id", s.id},
            {"revision", s.revision},
            {"spec", sp.spec()},
            {"config", prompt_config_to_json(sp.config())},
            {"tree", sp.tree()},
            {"nodes", nodes},
            {"committed_path", sp.committed_path()},
            {"rounds", sp.round_candidates()},
            {"round_open", sp.round_open()},
            {"completed_rounds", sp.completed_rounds()},
            {"frontier", sp.frontier()},
            {"node_count", sp.tree().nodes.size()},
            {"warnings", sp.warnings()}};
}

ServiceResponse Service::get_session(Session& s) const {
    std::shared_lock lock(s.mutex);
    return {200, state_json(s)};
}

ServiceResponse Service::propose(Session& s, const json& body) {
    std::unique_lock lock(s.mutex);
    check_revision(body, s.revision);
    const auto k = body.is_object() ? body.value("k", std::size_t{3}) : std::size_t{3};
    if (k == 0 || k > options_.max_k)
        return error_response(422, "invalid_argument", "k must be in 1.." + std::to_string(options_.max_k));
    if (s.spine.round_open()) return error_response(409, "conflict", "the previous round has not been committed");

    GenerationOptions gen;
    gen.pool = options_.pool;
    gen.index = options_.index;
    gen.decode = options_.decode;
    gen.jobs = options_.jobs;
    std::vector<std::string> ids;
    try {
        ids = s.spine.propose(k, *options_.backend, gen);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::overflow || e.code() == ErrorCode::invalid_argument)
            return error_response(422, to_string(e.code()), e.what());
        return error_response(502, "backend_failure", e.what());
    } catch (const std::exception& e) {
        return error_response(502, "backend_failure", e.what());
    }
    ++s.revision;
    snapshot(s);

    json candidates = json::array();
    for (const auto& id : ids) candidates.push_back(node_json(s.spine.spec(), s.spine.tree().node(id)));
    return {200,
            {{"session_id", s.id},
             {"revision", s.revision},
             {"round", s.spine.round_candidates().size()},
             {"parent", s.spine.frontier()},
             {"candidates", candidates}}};
}

ServiceResponse Service::commit(Session& s, const json& body) {
    std::unique_lock lock(s.mutex);
    check_revision(body, s.revision);
    if (!body.is_object() || !body.contains("candidate_id"))
        return error_response(422, "invalid_argument", "body needs candidate_id");
    s.spine.commit(body.at("candidate_id").get<std::string>());
    ++s.revision;
    snapshot(s);
    return {200,
            {{"session_id", s.id},
             {"revision", s.revision},
             {"committed_path", s.spine.committed_path()},
             {"completed_rounds", s.spine.completed_rounds()},
             {"node_count", s.spine.tree().nodes.size()},
             {"frontier", s.spine.frontier()}}};
}

ServiceResponse Service::edit_node(Session& s, const std::string& node_id, const json& body) {
    std::unique_lock lock(s.mutex);
    if (!s.spine.tree().contains(node_id)) throw Error(ErrorCode::not_found, "unknown node '" + node_id + "'");
    check_revision(body, s.revision);
    if (!body.is_object()) return error_response(422, "invalid_argument", "body must be an object");

    std::optional<std::string> text, speaker;
    std::optional<std::vector<FactRef>> facts;
    if (body.contains("text")) text = body.at("text").get<std::string>();
    if (body.contains("speaker")) speaker = body.at("speaker").get<std::string>();
    if (body.contains("facts")) facts = body.at("facts").get<std::vector<FactRef>>();
    try {
        s.spine.edit_node(node_id, text, speaker, facts);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::not_found && s.spine.tree().contains(node_id))
            return error_response(422, "invalid_argument", e.what());
        throw;
    }
    ++s.revision;
    snapshot(s);
    return {200, {{"revision", s.revision}, {"node", node_json(s.spine.spec(), s.spine.tree().node(node_id))}}};
}

ServiceResponse Service::export_session(Session& s) const {
    std::shared_lock lock(s.mutex);
    return {200, export_spine(s.spine.spec(), s.spine.tree(), s.id)};
}

void Service::snapshot(const Session& s) const {
    if (!options_.snapshot_dir) return;
    json envelope = {{"session",
                      {{"id", s.id},
                       {"revision", s.revision},
                       {"config", prompt_config_to_json(s.spine.config())},
                       {"committed_path", s.spine.committed_path()},
                       {"rounds", s.spine.round_candidates()},
                       {"round_open", s.spine.round_open()},
                       {"warnings", s.spine.warnings()}}},
                     {"corpus", export_spine(s.spine.spec(), s.spine.tree(), s.id)}};
    const auto path = *options_.snapshot_dir / (s.id + ".json");
    const auto tmp = path.string() + ".tmp";
    write_file(tmp, canonical(envelope));
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;
    std::atomic<bool> bound{false};

    explicit Impl(Service& s) : service(s) {
        const auto origin = service.options().cors_origin;
        server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
            auto out = service.handle(req.method, req.path, req.body);
            res.status = out.status;
            res.set_content(out.body.dump(), "application/json");
        };
        server.Get(".*", dispatch);
        server.Post(".*", dispatch);
        server.Patch(".*", dispatch);
        server.Delete(".*", dispatch);
        server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::invalid_argument, "cannot bind " + host + ":" + std::to_string(port));
    impl_->bound = true;
    return bound;
}

void HttpServer::run() {
    if (!impl_->bound) throw Error(ErrorCode::invalid_argument, "server is not bound");
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace qw
