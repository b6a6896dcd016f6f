#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "qw/model.hpp"

// Canonical JSON form of the corpus schema. Keys are emitted sorted, with
// two-space indentation, UTF-8 text and a trailing LF.
namespace qw {

using json = nlohmann::json;

void to_json(json& j, const Statement& s);
void from_json(const json& j, Statement& s);
void to_json(json& j, const Objective& o);
void from_json(const json& j, Objective& o);
void to_json(json& j, const QuestSpec& q);
void from_json(const json& j, QuestSpec& q);
void to_json(json& j, const BiographyPassage& b);
void from_json(const json& j, BiographyPassage& b);
void to_json(json& j, const Participant& p);
void from_json(const json& j, Participant& p);
void to_json(json& j, const DialogueSpec& s);
void from_json(const json& j, DialogueSpec& s);
void to_json(json& j, const FactRef& f);
void from_json(const json& j, FactRef& f);
void to_json(json& j, const UtteranceNode& n);
void from_json(const json& j, UtteranceNode& n);
void to_json(json& j, const Edge& e);
void from_json(const json& j, Edge& e);
void to_json(json& j, const DialogueTree& t);
void from_json(const json& j, DialogueTree& t);
void to_json(json& j, const Dialogue& d);
void from_json(const json& j, Dialogue& d);
void to_json(json& j, const Corpus& c);
void from_json(const json& j, Corpus& c);

void to_json(json& j, const Finding& f);
void to_json(json& j, const ValidationReport& r);
void to_json(json& j, const StatsReport& s);

// Canonical text of any JSON value.
std::string canonical(const json& j);

std::string canonical_json(const Corpus& corpus);

// Parse helpers rethrow schema problems as Error(parse_error).
Corpus parse_corpus(const std::string& text);
Corpus load_corpus(const std::filesystem::path& path);
DialogueSpec parse_spec(const json& j);
json parse_json(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace qw
