#pragma once

// JSON encodings: the dictionary interchange document and the record
// shapes used on the wire and in the event log.

#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "sym/core.hpp"
#include "sym/lexicon.hpp"

namespace sym {

using json = nlohmann::json;

namespace detail {

inline const json& require_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::validation, where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::validation, where + ": missing field '" + key + "'");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_string()) fail(ErrorCode::validation, where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const json& obj, const char* key,
                                                  const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) fail(ErrorCode::validation, where + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

inline std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number_integer()) {
    fail(ErrorCode::validation, where + ": field '" + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

inline double require_number(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number()) fail(ErrorCode::validation, where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline const json& require_array(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_array()) fail(ErrorCode::validation, where + ": field '" + key + "' must be an array");
  return v;
}

// Saturates outside int so out-of-range coordinates survive for validation.
inline int saturate_axis(std::int64_t v) {
  constexpr std::int64_t lim = 1'000'000;
  return static_cast<int>(std::clamp<std::int64_t>(v, -lim, lim));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dictionary interchange
// ---------------------------------------------------------------------------

/// Parses an interchange document without checking dictionary invariants.
inline Dictionary parse_dictionary(const json& doc) {
  Dictionary d;
  d.dictionary_id = detail::require_string(doc, "dictionary_id", "dictionary");
  d.context_label = detail::require_string(doc, "context_label", "dictionary");
  d.parent_id = detail::optional_string(doc, "parent_id", "dictionary");
  if (auto it = doc.find("version"); it != doc.end() && it->is_number_integer()) {
    d.version = it->get<int>();
  }
  std::size_t i = 0;
  for (const auto& t : detail::require_array(doc, "terms", "dictionary")) {
    const std::string where = "terms[" + std::to_string(i++) + "]";
    MoodTerm term;
    term.term_id = detail::require_string(t, "id", where);
    term.text = detail::require_string(t, "text", where);
    term.lexical_class = parse_enum<LexicalClass>(detail::require_string(t, "lexical_class", where));
    term.concept_id = detail::require_string(t, "concept_id", where);
    term.position.valence = detail::saturate_axis(detail::require_int(t, "valence", where));
    term.position.arousal = detail::saturate_axis(detail::require_int(t, "arousal", where));
    d.terms.push_back(std::move(term));
  }
  i = 0;
  for (const auto& c : detail::require_array(doc, "concepts", "dictionary")) {
    const std::string where = "concepts[" + std::to_string(i++) + "]";
    d.concepts.push_back({detail::require_string(c, "id", where),
                          detail::require_string(c, "label", where),
                          {}});
  }
  i = 0;
  for (const auto& l : detail::require_array(doc, "links", "dictionary")) {
    const std::string where = "links[" + std::to_string(i++) + "]";
    d.links.push_back({detail::require_string(l, "a", where), detail::require_string(l, "b", where),
                       detail::require_number(l, "weight", where)});
  }
  rebuild_memberships(d);
  return d;
}

/// Parses and validates; any violation rejects the document.
inline Dictionary load_dictionary(const json& doc) {
  Dictionary d = parse_dictionary(doc);
  auto violations = validate_dictionary(d);
  if (!violations.empty()) {
    std::vector<std::string> detail;
    for (const auto& v : violations) detail.push_back(v.describe());
    fail(ErrorCode::validation, "dictionary document rejected", detail);
  }
  return d;
}

inline json dictionary_to_json(const Dictionary& d, bool with_version = true) {
  json doc = json::object();
  doc["dictionary_id"] = d.dictionary_id;
  doc["context_label"] = d.context_label;
  doc["parent_id"] = d.parent_id ? json(*d.parent_id) : json(nullptr);
  if (with_version) doc["version"] = d.version;
  json terms = json::array();
  for (const auto& t : d.terms) {
    terms.push_back({{"id", t.term_id},
                     {"text", t.text},
                     {"lexical_class", to_string(t.lexical_class)},
                     {"concept_id", t.concept_id},
                     {"valence", t.position.valence},
                     {"arousal", t.position.arousal}});
  }
  doc["terms"] = std::move(terms);
  json concepts = json::array();
  for (const auto& c : d.concepts) concepts.push_back({{"id", c.concept_id}, {"label", c.label}});
  doc["concepts"] = std::move(concepts);
  json links = json::array();
  for (const auto& l : d.links) links.push_back({{"a", l.concept_a}, {"b", l.concept_b}, {"weight", l.weight}});
  doc["links"] = std::move(links);
  return doc;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

inline json to_json(MoodPoint p) { return {{"valence", p.valence}, {"arousal", p.arousal}}; }

inline MoodPoint point_from_json(const json& j, const std::string& where) {
  return MoodPoint::checked(detail::require_int(j, "valence", where),
                            detail::require_int(j, "arousal", where));
}

inline json to_json(const SuggestionRound& r) {
  return {{"offered_term_ids", r.offered_term_ids}, {"refused_term_ids", r.refused_term_ids}};
}

inline json to_json(const SpotRecord& r) {
  json rounds = json::array();
  for (const auto& round : r.rounds) rounds.push_back(to_json(round));
  return {{"spot_id", r.spot_id},
          {"session_id", r.session_id},
          {"phase", to_string(r.phase)},
          {"kind", to_string(r.kind)},
          {"stimulus_id", r.stimulus_id ? json(*r.stimulus_id) : json(nullptr)},
          {"point", to_json(r.point)},
          {"t_ms", r.t_ms},
          {"wall_clock", format_timestamp(r.wall_clock)},
          {"rounds", std::move(rounds)},
          {"chosen_term_id", r.chosen_term_id ? json(*r.chosen_term_id) : json(nullptr)},
          {"status", to_string(r.status)},
          {"dictionary_version", r.dictionary_version}};
}

inline SpotRecord spot_from_json(const json& j) {
  const std::string where = "spot";
  SpotRecord r;
  r.spot_id = detail::require_string(j, "spot_id", where);
  r.session_id = detail::require_string(j, "session_id", where);
  r.phase = parse_enum<Phase>(detail::require_string(j, "phase", where));
  r.kind = parse_enum<SpotKind>(detail::require_string(j, "kind", where));
  r.stimulus_id = detail::optional_string(j, "stimulus_id", where);
  r.point = point_from_json(detail::require_field(j, "point", where), where);
  r.t_ms = detail::require_int(j, "t_ms", where);
  r.wall_clock = parse_timestamp(detail::require_string(j, "wall_clock", where));
  for (const auto& round : detail::require_array(j, "rounds", where)) {
    r.rounds.push_back({round.at("offered_term_ids").get<std::vector<TermId>>(),
                        round.at("refused_term_ids").get<std::vector<TermId>>()});
  }
  r.chosen_term_id = detail::optional_string(j, "chosen_term_id", where);
  r.status = parse_enum<SpotStatus>(detail::require_string(j, "status", where));
  r.dictionary_version = static_cast<int>(detail::require_int(j, "dictionary_version", where));
  return r;
}

inline json to_json(const Session& s) {
  return {{"session_id", s.session_id},
          {"experiment_id", s.experiment_id},
          {"participant_pseudonym", s.participant_pseudonym},
          {"suggestions_enabled", s.suggestions_enabled},
          {"dictionary_id", s.dictionary_id},
          {"dictionary_version", s.dictionary_version},
          {"started_at", format_timestamp(s.started_at)},
          {"state", to_string(s.state)},
          {"creation_index", s.creation_index}};
}

inline Session session_from_json(const json& j) {
  const std::string where = "session";
  Session s;
  s.session_id = detail::require_string(j, "session_id", where);
  s.experiment_id = detail::require_string(j, "experiment_id", where);
  s.participant_pseudonym = detail::require_string(j, "participant_pseudonym", where);
  s.suggestions_enabled = detail::require_field(j, "suggestions_enabled", where).get<bool>();
  s.dictionary_id = detail::require_string(j, "dictionary_id", where);
  s.dictionary_version = static_cast<int>(detail::require_int(j, "dictionary_version", where));
  s.started_at = parse_timestamp(detail::require_string(j, "started_at", where));
  s.state = parse_enum<SessionState>(detail::require_string(j, "state", where));
  s.creation_index = static_cast<int>(detail::require_int(j, "creation_index", where));
  return s;
}

inline json to_json(const AssignmentPolicy& p) {
  switch (p.mode) {
    case AssignmentPolicy::Mode::alternate: return "ALTERNATE";
    case AssignmentPolicy::Mode::all_on: return "ALL_ON";
    case AssignmentPolicy::Mode::all_off: return "ALL_OFF";
    case AssignmentPolicy::Mode::random: return {{"RANDOM", p.seed}};
  }
  return "ALTERNATE";
}

/// Accepts "ALTERNATE", "ALL_ON", "ALL_OFF", "RANDOM" (seed 0) or {"RANDOM": seed}.
inline AssignmentPolicy policy_from_json(const json& j) {
  AssignmentPolicy p;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "ALTERNATE") p.mode = AssignmentPolicy::Mode::alternate;
    else if (s == "ALL_ON") p.mode = AssignmentPolicy::Mode::all_on;
    else if (s == "ALL_OFF") p.mode = AssignmentPolicy::Mode::all_off;
    else if (s == "RANDOM") p.mode = AssignmentPolicy::Mode::random;
    else fail(ErrorCode::validation, "unknown assignment policy '" + s + "'");
    return p;
  }
  if (j.is_object() && j.size() == 1 && j.contains("RANDOM") && j["RANDOM"].is_number_unsigned()) {
    p.mode = AssignmentPolicy::Mode::random;
    p.seed = j["RANDOM"].get<std::uint64_t>();
    return p;
  }
  fail(ErrorCode::validation, "malformed assignment policy");
}

inline json to_json(const Experiment& e) {
  json phases = json::array();
  for (auto p : e.suggestion_phases) phases.push_back(to_string(p));
  return {{"experiment_id", e.experiment_id},
          {"name", e.name},
          {"dictionary_id", e.dictionary_id},
          {"during_kind", to_string(e.during_kind)},
          {"assignment_policy", to_json(e.assignment_policy)},
          {"k_suggestions", e.k_suggestions},
          {"suggestion_phases", std::move(phases)}};
}

inline Experiment experiment_from_json(const json& j) {
  const std::string where = "experiment";
  Experiment e;
  e.experiment_id = detail::require_string(j, "experiment_id", where);
  e.name = detail::require_string(j, "name", where);
  e.dictionary_id = detail::require_string(j, "dictionary_id", where);
  e.during_kind = parse_enum<DuringKind>(detail::require_string(j, "during_kind", where));
  e.assignment_policy = policy_from_json(detail::require_field(j, "assignment_policy", where));
  e.k_suggestions = static_cast<int>(detail::require_int(j, "k_suggestions", where));
  e.suggestion_phases.clear();
  for (const auto& p : detail::require_array(j, "suggestion_phases", where)) {
    e.suggestion_phases.push_back(parse_enum<Phase>(p.get<std::string>()));
  }
  return e;
}

inline json to_json(const Marker& m) {
  return {{"marker_id", m.marker_id}, {"scope_id", m.scope_id}, {"label", m.label}, {"t_ms", m.t_ms}};
}

inline Marker marker_from_json(const json& j) {
  const std::string where = "marker";
  return {detail::require_string(j, "marker_id", where), detail::require_string(j, "scope_id", where),
          detail::require_string(j, "label", where), detail::require_int(j, "t_ms", where)};
}

inline json error_body(const Error& e) {
  json body = {{"code", to_string(e.code())}, {"message", e.what()}};
  if (!e.detail().empty()) body["detail"] = e.detail();
  return body;
}

}  // namespace sym
