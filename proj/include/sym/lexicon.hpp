#pragma once

// Dictionary engine: validation, k-closest lookup, custom-dictionary
// derivation, concept-net queries and the feedback-driven position update.

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sym/core.hpp"

namespace sym {

struct MoodTerm {
  TermId term_id;
  std::string text;
  LexicalClass lexical_class = LexicalClass::adjective;
  ConceptId concept_id;
  MoodPoint position;

  friend bool operator==(const MoodTerm&, const MoodTerm&) = default;
};

struct Concept {
  ConceptId concept_id;
  std::string label;
  std::vector<TermId> member_term_ids;  // sorted

  friend bool operator==(const Concept&, const Concept&) = default;
};

struct ConceptLink {
  ConceptId concept_a;
  ConceptId concept_b;
  double weight = 1.0;

  friend bool operator==(const ConceptLink&, const ConceptLink&) = default;
};

struct Dictionary {
  std::string dictionary_id;
  int version = 0;  // 0 until published
  std::optional<std::string> parent_id;
  std::string context_label;
  std::vector<MoodTerm> terms;
  std::vector<Concept> concepts;
  std::vector<ConceptLink> links;

  const MoodTerm* find_term(const TermId& id) const {
    for (const auto& t : terms) {
      if (t.term_id == id) return &t;
    }
    return nullptr;
  }

  const Concept* find_concept(const ConceptId& id) const {
    for (const auto& c : concepts) {
      if (c.concept_id == id) return &c;
    }
    return nullptr;
  }

  friend bool operator==(const Dictionary&, const Dictionary&) = default;
};

/// Recomputes every concept's member list from the terms' concept ids.
inline void rebuild_memberships(Dictionary& d) {
  for (auto& c : d.concepts) c.member_term_ids.clear();
  for (const auto& t : d.terms) {
    for (auto& c : d.concepts) {
      if (c.concept_id == t.concept_id) c.member_term_ids.push_back(t.term_id);
    }
  }
  for (auto& c : d.concepts) std::sort(c.member_term_ids.begin(), c.member_term_ids.end());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind {
  empty_id,
  duplicate_id,
  duplicate_term,
  invalid_text,
  range,
  unknown_concept,
  concept_membership,
  self_link,
  duplicate_link,
  link_weight,
  unknown_link_concept,
  not_in_parent,
};

inline std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::empty_id: return "EMPTY_ID";
    case ViolationKind::duplicate_id: return "DUPLICATE_ID";
    case ViolationKind::duplicate_term: return "DUPLICATE_TERM";
    case ViolationKind::invalid_text: return "INVALID_TEXT";
    case ViolationKind::range: return "RANGE";
    case ViolationKind::unknown_concept: return "UNKNOWN_CONCEPT";
    case ViolationKind::concept_membership: return "CONCEPT_MEMBERSHIP";
    case ViolationKind::self_link: return "SELF_LINK";
    case ViolationKind::duplicate_link: return "DUPLICATE_LINK";
    case ViolationKind::link_weight: return "LINK_WEIGHT";
    case ViolationKind::unknown_link_concept: return "UNKNOWN_LINK_CONCEPT";
    case ViolationKind::not_in_parent: return "NOT_IN_PARENT";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::string subject;  // offending id
  std::string message;

  std::string describe() const { return std::string(to_string(kind)) + " " + subject + ": " + message; }
};

namespace detail {

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t j = 1; j < len; ++j) {
      const auto cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMinForLen[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLen[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

// Term texts end up in CSV cells joined by '|', so that character and
// control characters are rejected.
inline std::optional<std::string> text_problem(std::string_view text) {
  if (text.empty()) return "empty text";
  if (!valid_utf8(text)) return "text is not valid UTF-8";
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x20 || c == 0x7F) return "text contains a control character";
    if (ch == '|') return "text contains the reserved '|' character";
  }
  return std::nullopt;
}

}  // namespace detail

/// Returns one violation per breached dictionary invariant; empty iff valid.
/// When `parent` is given, the custom-dictionary subset rule is checked too.
inline std::vector<Violation> validate_dictionary(const Dictionary& d,
                                                  const Dictionary* parent = nullptr) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind k, std::string subject, std::string msg) {
    out.push_back({k, std::move(subject), std::move(msg)});
  };

  if (d.dictionary_id.empty()) add(ViolationKind::empty_id, "<dictionary>", "dictionary_id is empty");

  std::set<std::string> concept_ids;
  for (const auto& c : d.concepts) {
    if (c.concept_id.empty()) {
      add(ViolationKind::empty_id, "<concept>", "concept with empty id");
    } else if (!concept_ids.insert(c.concept_id).second) {
      add(ViolationKind::duplicate_id, c.concept_id, "concept id appears twice");
    }
  }

  std::set<std::string> term_ids;
  std::set<std::pair<std::string, LexicalClass>> term_keys;
  for (const auto& t : d.terms) {
    if (t.term_id.empty()) {
      add(ViolationKind::empty_id, "<term>", "term with empty id");
    } else if (!term_ids.insert(t.term_id).second) {
      add(ViolationKind::duplicate_id, t.term_id, "term id appears twice");
    }
    if (auto problem = detail::text_problem(t.text)) {
      add(ViolationKind::invalid_text, t.term_id, *problem);
    }
    if (!term_keys.insert({t.text, t.lexical_class}).second) {
      add(ViolationKind::duplicate_term, t.term_id,
          "duplicate (text, lexical_class) = (" + t.text + ", " +
              std::string(to_string(t.lexical_class)) + ")");
    }
    if (!t.position.in_range()) {
      add(ViolationKind::range, t.term_id,
          "position (" + std::to_string(t.position.valence) + ", " +
              std::to_string(t.position.arousal) + ") outside [-100, 100]");
    }
    if (!concept_ids.contains(t.concept_id)) {
      add(ViolationKind::unknown_concept, t.term_id, "unknown concept '" + t.concept_id + "'");
    }
  }

  for (const auto& c : d.concepts) {
    std::vector<TermId> expected;
    for (const auto& t : d.terms) {
      if (t.concept_id == c.concept_id) expected.push_back(t.term_id);
    }
    std::sort(expected.begin(), expected.end());
    auto members = c.member_term_ids;
    std::sort(members.begin(), members.end());
    if (members != expected) {
      add(ViolationKind::concept_membership, c.concept_id,
          "member list disagrees with the terms' concept ids");
    }
  }

  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& l : d.links) {
    const std::string subject = l.concept_a + "~" + l.concept_b;
    if (l.concept_a == l.concept_b) add(ViolationKind::self_link, subject, "link to itself");
    if (!concept_ids.contains(l.concept_a) || !concept_ids.contains(l.concept_b)) {
      add(ViolationKind::unknown_link_concept, subject, "link references an unknown concept");
    }
    if (!(l.weight > 0.0 && l.weight <= 1.0)) {
      add(ViolationKind::link_weight, subject, "weight must lie in (0, 1]");
    }
    auto key = std::minmax(l.concept_a, l.concept_b);
    if (!pairs.insert({key.first, key.second}).second) {
      add(ViolationKind::duplicate_link, subject, "more than one link for this pair");
    }
  }

  if (parent != nullptr) {
    for (const auto& t : d.terms) {
      if (parent->find_term(t.term_id) == nullptr) {
        add(ViolationKind::not_in_parent, t.term_id,
            "term absent from master '" + parent->dictionary_id + "'");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Suggestions
// ---------------------------------------------------------------------------

/// Candidate order: distance to the query, then code-point order of the text
/// (byte order of UTF-8), then term id.
inline bool closer_to(MoodPoint query, const MoodTerm& a, const MoodTerm& b) {
  const auto da = squared_distance(a.position, query);
  const auto db = squared_distance(b.position, query);
  if (da != db) return da < db;
  if (a.text != b.text) return a.text < b.text;
  return a.term_id < b.term_id;
}

/// The min(k, |terms \ excluded|) closest terms not in `excluded`.
template <typename ExcludedSet>
std::vector<MoodTerm> suggest_terms(const Dictionary& dictionary, MoodPoint point,
                                    const ExcludedSet& excluded, int k) {
  if (k < 1) fail(ErrorCode::validation, "k must be at least 1");
  std::vector<const MoodTerm*> candidates;
  candidates.reserve(dictionary.terms.size());
  for (const auto& t : dictionary.terms) {
    if (!excluded.contains(t.term_id)) candidates.push_back(&t);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
  auto cmp = [point](const MoodTerm* a, const MoodTerm* b) { return closer_to(point, *a, *b); };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), cmp);
  std::vector<MoodTerm> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(*candidates[i]);
  return out;
}

inline std::vector<MoodTerm> suggest_terms(const Dictionary& dictionary, MoodPoint point, int k) {
  return suggest_terms(dictionary, point, std::set<TermId>{}, k);
}

// ---------------------------------------------------------------------------
// Custom dictionaries
// ---------------------------------------------------------------------------

inline Dictionary derive_custom_dictionary(const Dictionary& master, const std::set<TermId>& keep,
                                           const std::map<TermId, MoodPoint>& overrides,
                                           const std::string& context_label,
                                           std::string dictionary_id = {}) {
  std::vector<std::string> offenders;
  for (const auto& id : keep) {
    if (master.find_term(id) == nullptr) offenders.push_back(id);
  }
  if (!offenders.empty()) {
    fail(ErrorCode::validation, "kept terms are not in the master dictionary", offenders);
  }
  for (const auto& [id, p] : overrides) {
    if (!keep.contains(id)) offenders.push_back(id);
    if (!p.in_range()) offenders.push_back(id + " (position out of range)");
  }
  if (!offenders.empty()) {
    fail(ErrorCode::validation, "invalid position overrides", offenders);
  }

  Dictionary out;
  out.dictionary_id =
      dictionary_id.empty() ? master.dictionary_id + "/" + context_label : std::move(dictionary_id);
  out.version = 1;
  out.parent_id = master.dictionary_id;
  out.context_label = context_label;
  std::set<ConceptId> live_concepts;
  for (const auto& t : master.terms) {
    if (!keep.contains(t.term_id)) continue;
    MoodTerm copy = t;
    if (auto it = overrides.find(t.term_id); it != overrides.end()) copy.position = it->second;
    live_concepts.insert(copy.concept_id);
    out.terms.push_back(std::move(copy));
  }
  for (const auto& c : master.concepts) {
    if (live_concepts.contains(c.concept_id)) out.concepts.push_back({c.concept_id, c.label, {}});
  }
  for (const auto& l : master.links) {
    if (live_concepts.contains(l.concept_a) && live_concepts.contains(l.concept_b)) {
      out.links.push_back(l);
    }
  }
  rebuild_memberships(out);
  return out;
}

// ---------------------------------------------------------------------------
// Concept net
// ---------------------------------------------------------------------------

inline std::vector<std::pair<Concept, double>> concept_neighbors(const Dictionary& d,
                                                                 const ConceptId& concept_id,
                                                                 double min_weight) {
  if (d.find_concept(concept_id) == nullptr) {
    fail(ErrorCode::not_found, "unknown concept '" + concept_id + "'");
  }
  std::vector<std::pair<Concept, double>> out;
  for (const auto& l : d.links) {
    const ConceptId* other = nullptr;
    if (l.concept_a == concept_id) other = &l.concept_b;
    if (l.concept_b == concept_id) other = &l.concept_a;
    if (other == nullptr || l.weight < min_weight) continue;
    if (const Concept* c = d.find_concept(*other)) out.emplace_back(*c, l.weight);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first.concept_id < b.first.concept_id;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Folksonomy update
// ---------------------------------------------------------------------------

struct UpdateParams {
  double alpha = 0.2;
  int min_samples = 5;
  /// Only the most recent `max_events` feedback events count.
  std::optional<std::size_t> max_events;
  /// Only events no older than this, relative to the newest event, count.
  std::optional<std::chrono::milliseconds> max_age;
  /// With no feedback at all, publish an unchanged v+1 instead of a no-op.
  bool bump_on_empty = false;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorCode::validation, "alpha must lie in (0, 1]");
    if (min_samples < 1) fail(ErrorCode::validation, "min_samples must be at least 1");
  }
};

/// Moves each term with enough accepted feedback a fraction alpha of the way
/// toward the centroid of its accepted points. Refusals never move terms.
/// Feedback is expected in chronological order (relevant to windowing only).
inline Dictionary folksonomy_update(const Dictionary& dictionary,
                                    std::span<const FeedbackEvent> feedback,
                                    const UpdateParams& params) {
  params.validate();
  std::vector<std::string> foreign;
  for (const auto& e : feedback) {
    if (dictionary.find_term(e.term_id) == nullptr) {
      foreign.push_back(e.term_id);
    } else if (!e.dictionary_id.empty() && e.dictionary_id != dictionary.dictionary_id) {
      foreign.push_back(e.term_id + " (dictionary " + e.dictionary_id + ")");
    } else if (!e.point.in_range()) {
      foreign.push_back(e.term_id + " (point out of range)");
    }
  }
  if (!foreign.empty()) {
    fail(ErrorCode::validation, "feedback references terms outside this dictionary", foreign);
  }
  if (feedback.empty()) {
    Dictionary same = dictionary;
    if (params.bump_on_empty) ++same.version;
    return same;
  }

  std::size_t first = 0;
  if (params.max_events && *params.max_events < feedback.size()) {
    first = feedback.size() - *params.max_events;
  }
  std::optional<Timestamp> cutoff;
  if (params.max_age) {
    Timestamp newest = feedback[first].wall_clock;
    for (std::size_t i = first; i < feedback.size(); ++i) newest = std::max(newest, feedback[i].wall_clock);
    cutoff = newest - *params.max_age;
  }

  struct Sum {
    double valence = 0.0;
    double arousal = 0.0;
    int n = 0;
  };
  std::unordered_map<TermId, Sum> sums;
  for (std::size_t i = first; i < feedback.size(); ++i) {
    const auto& e = feedback[i];
    if (!e.accepted) continue;
    if (cutoff && e.wall_clock < *cutoff) continue;
    auto& s = sums[e.term_id];
    s.valence += e.point.valence;
    s.arousal += e.point.arousal;
    ++s.n;
  }

  Dictionary next = dictionary;
  next.version = dictionary.version + 1;
  for (auto& t : next.terms) {
    auto it = sums.find(t.term_id);
    if (it == sums.end() || it->second.n < params.min_samples) continue;
    const double cv = it->second.valence / it->second.n;
    const double ca = it->second.arousal / it->second.n;
    // old + alpha * (c - old) keeps c == old an exact fixed point.
    const double v = t.position.valence + params.alpha * (cv - t.position.valence);
    const double a = t.position.arousal + params.alpha * (ca - t.position.arousal);
    t.position = clamp_point(v, a);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Registry of published versions
// ---------------------------------------------------------------------------

/// Published dictionary versions, each immutable once stored.
class DictionaryRegistry {
 public:
  using Handle = std::shared_ptr<const Dictionary>;

  /// Stores `d` under the next version number for its id after validation.
  int publish(Dictionary d) {
    const Dictionary* parent = nullptr;
    if (d.parent_id) {
      auto p = latest(*d.parent_id);
      if (!p) fail(ErrorCode::not_found, "unknown master dictionary '" + *d.parent_id + "'");
      parent = p.get();
    }
    rebuild_memberships(d);
    auto violations = validate_dictionary(d, parent);
    if (!violations.empty()) {
      std::vector<std::string> detail;
      for (const auto& v : violations) detail.push_back(v.describe());
      fail(ErrorCode::validation, "dictionary '" + d.dictionary_id + "' is invalid", detail);
    }
    auto& versions = versions_[d.dictionary_id];
    d.version = static_cast<int>(versions.size()) + 1;
    versions.push_back(std::make_shared<const Dictionary>(std::move(d)));
    return static_cast<int>(versions.size());
  }

  Handle latest(const std::string& id) const {
    auto it = versions_.find(id);
    if (it == versions_.end() || it->second.empty()) return nullptr;
    return it->second.back();
  }

  Handle get(const std::string& id, int version) const {
    auto it = versions_.find(id);
    if (it == versions_.end()) fail(ErrorCode::not_found, "unknown dictionary '" + id + "'");
    if (version < 1 || version > static_cast<int>(it->second.size())) {
      fail(ErrorCode::not_found,
           "dictionary '" + id + "' has no version " + std::to_string(version));
    }
    return it->second[static_cast<std::size_t>(version - 1)];
  }

  bool contains(const std::string& id) const { return versions_.contains(id); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : versions_) out.push_back(id);
    return out;
  }

  const std::map<std::string, std::vector<Handle>>& all() const { return versions_; }

 private:
  std::map<std::string, std::vector<Handle>> versions_;
};

/// suggest_terms against a published version held by a registry.
template <typename ExcludedSet>
std::vector<MoodTerm> suggest_terms(const DictionaryRegistry& registry, const std::string& id,
                                    int version, MoodPoint point, const ExcludedSet& excluded,
                                    int k) {
  return suggest_terms(*registry.get(id, version), point, excluded, k);
}

}  // namespace sym
