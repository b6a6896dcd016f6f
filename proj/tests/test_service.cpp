#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "qw/corpus_json.hpp"
#include "qw/service.hpp"

using namespace qw;

namespace {

json new_session_body(const std::string& speaker = "Agnes Needham") {
    return {{"spec", fx::agnes_spec()},
            {"start_utterance", {{"speaker", speaker}, {"text", "Oh, a traveller! Please, I need help."}}},
            {"config", {{"mode", "full"}, {"seed", 3}}}};
}

Service make_service(std::optional<std::filesystem::path> dir = std::nullopt) {
    ServiceOptions o;
    o.backend = std::make_shared<MockBackend>();
    o.snapshot_dir = dir;
    return Service(std::move(o));
}

ServiceResponse call(Service& s, const std::string& method, const std::string& path, const json& body = nullptr) {
    return s.handle(method, path, body.is_null() ? std::string() : body.dump());
}

std::string create(Service& s) {
    auto r = call(s, "POST", "/sessions", new_session_body());
    REQUIRE(r.status == 201);
    return r.body["session_id"];
}

}  // namespace

TEST_CASE("session creation") {
    auto svc = make_service();
    auto r = call(svc, "POST", "/sessions", new_session_body());
    CHECK(r.status == 201);
    CHECK(r.body["node_count"] == 1);
    CHECK(r.body["revision"] == 1);
    CHECK(r.body["frontier"] == "start");
    CHECK(r.body["config"]["seed"] == 3);

    auto ghost = call(svc, "POST", "/sessions", new_session_body("Ghost"));
    CHECK(ghost.status == 422);
    CHECK(ghost.body["code"] == "invalid_argument");

    auto bad_spec = new_session_body();
    bad_spec["spec"]["participants"] = json::array();
    auto invalid = call(svc, "POST", "/sessions", bad_spec);
    CHECK(invalid.status == 422);
    CHECK(invalid.body["code"] == "invalid_spec");

    CHECK(svc.handle("POST", "/sessions", "{oops").status == 400);

    auto a = create(svc), b = create(svc);
    CHECK(a != b);
    CHECK(svc.session_count() == 3);
    auto list = call(svc, "GET", "/sessions");
    CHECK(list.status == 200);
    CHECK(call(svc, "GET", "/sessions/nope").status == 404);
    CHECK(call(svc, "GET", "/nowhere").status == 404);
}

TEST_CASE("rounds and commits") {
    auto svc = make_service();
    auto id = create(svc);
    auto round = call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 3}});
    REQUIRE(round.status == 200);
    CHECK(round.body["candidates"].size() == 3);
    CHECK(round.body["parent"] == "start");
    for (const auto& c : round.body["candidates"]) CHECK(c["speaker"] == "Player");

    CHECK(call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 3}}).status == 409);
    CHECK(call(svc, "POST", "/sessions/" + id + "/commit", {{"candidate_id", "start"}}).status == 409);

    const std::string first = round.body["candidates"][0]["id"];
    auto commit = call(svc, "POST", "/sessions/" + id + "/commit", {{"candidate_id", first}});
    REQUIRE(commit.status == 200);
    CHECK(commit.body["committed_path"].size() == 2);
    CHECK(commit.body["frontier"] == first);

    auto next = call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 3}});
    REQUIRE(next.status == 200);
    CHECK(next.body["parent"] == first);
    const std::string old = round.body["candidates"][1]["id"];
    CHECK(call(svc, "POST", "/sessions/" + id + "/commit", {{"candidate_id", old}}).status == 409);

    CHECK(call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 0}}).status == 422);
}

TEST_CASE("ten rounds of three through the service") {
    auto svc = make_service();
    auto id = create(svc);
    for (int i = 0; i < 10; ++i) {
        auto r = call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 3}});
        REQUIRE(r.status == 200);
        auto c = call(svc, "POST", "/sessions/" + id + "/commit", {{"candidate_id", r.body["candidates"][i % 3]["id"]}});
        REQUIRE(c.status == 200);
    }
    auto state = call(svc, "GET", "/sessions/" + id);
    CHECK(state.body["node_count"] == 31);
    CHECK(state.body["committed_path"].size() == 11);
    CHECK(state.body["completed_rounds"] == 10);

    auto exported = call(svc, "GET", "/sessions/" + id + "/export");
    REQUIRE(exported.status == 200);
    auto corpus = exported.body.get<Corpus>();
    CHECK(corpus.dialogues.at(0).tree.nodes.size() == 31);
    auto validated = call(svc, "POST", "/validate", exported.body);
    CHECK(validated.status == 200);
    CHECK(validated.body["ok"] == true);
    CHECK(call(svc, "POST", "/stats", exported.body).body["nodes"] == 31);
}

TEST_CASE("revisions guard against stale writers") {
    auto svc = make_service();
    auto id = create(svc);
    auto r = call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 2}, {"revision", 1}});
    REQUIRE(r.status == 200);
    CHECK(r.body["revision"] == 2);
    auto stale = call(svc, "POST", "/sessions/" + id + "/commit",
                      {{"candidate_id", r.body["candidates"][0]["id"]}, {"revision", 1}});
    CHECK(stale.status == 409);
    CHECK(stale.body["code"] == "conflict");
    auto ok = call(svc, "POST", "/sessions/" + id + "/commit",
                   {{"candidate_id", r.body["candidates"][0]["id"]}, {"revision", 2}});
    CHECK(ok.status == 200);
}

TEST_CASE("node edits") {
    auto svc = make_service();
    auto id = create(svc);
    auto edit = call(svc, "PATCH", "/sessions/" + id + "/nodes/start",
                     {{"text", "Help me, stranger."}, {"facts", {{{"source", "log:hunt"}, {"i", 0}}}}});
    REQUIRE(edit.status == 200);
    CHECK(edit.body["node"]["text"] == "Help me, stranger.");
    CHECK(edit.body["node"]["facts"][0]["label"] == "Hunt the Raptidon");
    CHECK(call(svc, "PATCH", "/sessions/" + id + "/nodes/start", {{"speaker", "Ghost"}}).status == 422);
    CHECK(call(svc, "PATCH", "/sessions/" + id + "/nodes/start", {{"facts", {{{"source", "log:hunt"}, {"i", 9}}}}})
              .status == 422);
    CHECK(call(svc, "PATCH", "/sessions/" + id + "/nodes/zzz", {{"text", "x"}}).status == 404);
    CHECK(call(svc, "GET", "/sessions/" + id).body["nodes"][0]["text"] == "Help me, stranger.");
}

TEST_CASE("backend failures map to 502") {
    ServiceOptions o;
    o.backend = std::make_shared<ScriptedBackend>(std::vector<std::string>{"no marker here"});
    Service svc(std::move(o));
    auto id = create(svc);
    auto r = call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 2}});
    CHECK(r.status == 502);
    CHECK(call(svc, "GET", "/sessions/" + id).body["round_open"] == false);
}

TEST_CASE("snapshots are written per mutation") {
    auto dir = std::filesystem::temp_directory_path() / ("qw-snap-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    auto svc = make_service(dir);
    auto id = create(svc);
    auto r = call(svc, "POST", "/sessions/" + id + "/rounds", {{"k", 2}});
    REQUIRE(r.status == 200);
    std::ifstream in(dir / (id + ".json"));
    REQUIRE(in.good());
    auto snap = json::parse(in);
    CHECK(snap["session"]["revision"] == 2);
    CHECK(snap["session"]["round_open"] == true);
    CHECK(snap["corpus"]["dialogues"][0]["tree"]["nodes"].size() == 3);
    CHECK_FALSE(std::filesystem::exists(dir / (id + ".json.tmp")));
    std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent sessions") {
    auto svc = make_service();
    std::vector<std::thread> threads;
    std::vector<std::string> ids(8);
    for (std::size_t i = 0; i < ids.size(); ++i)
        threads.emplace_back([&, i] {
            auto r = call(svc, "POST", "/sessions", new_session_body());
            ids[i] = r.body["session_id"];
            call(svc, "POST", "/sessions/" + ids[i] + "/rounds", {{"k", 2}});
        });
    for (auto& t : threads) t.join();
    CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == ids.size());
    for (const auto& id : ids) CHECK(call(svc, "GET", "/sessions/" + id).body["node_count"] == 3);
}

TEST_CASE("live HTTP server") {
    auto svc = make_service();
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread t([&] { server.run(); });

    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    auto created = client.Post("/sessions", new_session_body().dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
    const std::string id = json::parse(created->body)["session_id"];

    auto round = client.Post("/sessions/" + id + "/rounds", json{{"k", 3}}.dump(), "application/json");
    REQUIRE(round);
    CHECK(round->status == 200);
    auto cands = json::parse(round->body)["candidates"];
    CHECK(cands.size() == 3);

    auto patch = client.Patch("/sessions/" + id + "/nodes/" + cands[0]["id"].get<std::string>(),
                              json{{"text", "Edited."}}.dump(), "application/json");
    REQUIRE(patch);
    CHECK(patch->status == 200);

    auto pre = client.Options("/sessions");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("PATCH") != std::string::npos);

    auto missing = client.Get("/sessions/none");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body)["code"] == "not_found");

    server.stop();
    t.join();
    CHECK_FALSE(server.running());
}
