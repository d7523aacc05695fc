#pragma once

// Domain types and elementary geometry shared by the lexicon, store,
// service and analytics layers.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sym {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode { not_found, validation, protocol, conflict, busy, incomplete_session };

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return "NOT_FOUND";
    case ErrorCode::validation: return "VALIDATION";
    case ErrorCode::protocol: return "PROTOCOL";
    case ErrorCode::conflict: return "CONFLICT";
    case ErrorCode::busy: return "BUSY";
    case ErrorCode::incomplete_session: return "INCOMPLETE_SESSION";
  }
  return "VALIDATION";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::vector<std::string> detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::vector<std::string> detail = {}) {
  throw Error(code, message, std::move(detail));
}

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

inline constexpr int kAxisMin = -100;
inline constexpr int kAxisMax = 100;

/// One discretized location on the valence-arousal diagram. Valence is the
/// horizontal axis, arousal the vertical one; both live in [-100, 100].
///
/// The aggregate form lets loaders materialize out-of-range candidates so that
/// validation can report them; every constructor path in this library that
/// takes user input goes through clamp_point() or checked().
struct MoodPoint {
  int valence = 0;
  int arousal = 0;

  static MoodPoint checked(long long valence, long long arousal) {
    if (valence < kAxisMin || valence > kAxisMax || arousal < kAxisMin || arousal > kAxisMax) {
      fail(ErrorCode::validation, "mood point (" + std::to_string(valence) + ", " +
                                      std::to_string(arousal) + ") outside [-100, 100]");
    }
    return {static_cast<int>(valence), static_cast<int>(arousal)};
  }

  constexpr bool in_range() const noexcept {
    return valence >= kAxisMin && valence <= kAxisMax && arousal >= kAxisMin &&
           arousal <= kAxisMax;
  }

  friend constexpr bool operator==(const MoodPoint&, const MoodPoint&) = default;
};

namespace detail {

inline int round_and_clamp_axis(double v) {
  // std::round is half-away-from-zero.
  const double r = std::round(v);
  if (r < kAxisMin) return kAxisMin;
  if (r > kAxisMax) return kAxisMax;
  return static_cast<int>(r);
}

}  // namespace detail

/// Maps raw client coordinates (nominally in [-100, 100]) onto the stored grid.
inline MoodPoint clamp_point(double x_raw, double y_raw) {
  if (!std::isfinite(x_raw) || !std::isfinite(y_raw)) {
    fail(ErrorCode::validation, "coordinates must be finite");
  }
  return {detail::round_and_clamp_axis(x_raw), detail::round_and_clamp_axis(y_raw)};
}

inline std::int64_t squared_distance(MoodPoint a, MoodPoint b) noexcept {
  const std::int64_t dv = a.valence - b.valence;
  const std::int64_t da = a.arousal - b.arousal;
  return dv * dv + da * da;
}

inline double distance(MoodPoint a, MoodPoint b) noexcept {
  return std::sqrt(static_cast<double>(squared_distance(a, b)));
}

/// Real-valued point used by analytics and the position blend.
struct RealPoint {
  double valence = 0.0;
  double arousal = 0.0;
  friend constexpr bool operator==(const RealPoint&, const RealPoint&) = default;
};

inline double distance(RealPoint a, RealPoint b) noexcept {
  return std::hypot(a.valence - b.valence, a.arousal - b.arousal);
}

inline RealPoint to_real(MoodPoint p) noexcept {
  return {static_cast<double>(p.valence), static_cast<double>(p.arousal)};
}

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class LexicalClass { noun, verb, adverb, adjective, expression };
enum class Phase { pre, during, post };
enum class SpotKind { self, stimulus };
enum class DuringKind { self, stimulus, both };

/// PENDING marks a spot whose suggestion loop is still open.
enum class SpotStatus { point_only, pending, accepted, exhausted, declined };

enum class SessionState { created, pre_done, running, post_done, closed };

namespace detail {

template <typename E, std::size_t N>
struct EnumNames {
  E value;
  std::string_view name;
};

template <typename E, std::size_t N>
std::string_view enum_name(const EnumNames<E, N> (&table)[N], E value) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> enum_parse(const EnumNames<E, N> (&table)[N], std::string_view name) {
  for (const auto& entry : table) {
    if (entry.name == name) return entry.value;
  }
  return std::nullopt;
}

inline constexpr EnumNames<LexicalClass, 5> kLexicalClassNames[] = {
    {LexicalClass::noun, "NOUN"},           {LexicalClass::verb, "VERB"},
    {LexicalClass::adverb, "ADVERB"},       {LexicalClass::adjective, "ADJECTIVE"},
    {LexicalClass::expression, "EXPRESSION"}};
inline constexpr EnumNames<Phase, 3> kPhaseNames[] = {
    {Phase::pre, "PRE"}, {Phase::during, "DURING"}, {Phase::post, "POST"}};
inline constexpr EnumNames<SpotKind, 2> kSpotKindNames[] = {{SpotKind::self, "SELF"},
                                                            {SpotKind::stimulus, "STIMULUS"}};
inline constexpr EnumNames<DuringKind, 3> kDuringKindNames[] = {
    {DuringKind::self, "SELF"}, {DuringKind::stimulus, "STIMULUS"}, {DuringKind::both, "BOTH"}};
inline constexpr EnumNames<SpotStatus, 5> kSpotStatusNames[] = {
    {SpotStatus::point_only, "POINT_ONLY"},
    {SpotStatus::pending, "PENDING"},
    {SpotStatus::accepted, "ACCEPTED"},
    {SpotStatus::exhausted, "EXHAUSTED"},
    {SpotStatus::declined, "DECLINED"}};
inline constexpr EnumNames<SessionState, 5> kSessionStateNames[] = {
    {SessionState::created, "CREATED"},
    {SessionState::pre_done, "PRE_DONE"},
    {SessionState::running, "RUNNING"},
    {SessionState::post_done, "POST_DONE"},
    {SessionState::closed, "CLOSED"}};

}  // namespace detail

inline std::string_view to_string(LexicalClass v) { return detail::enum_name(detail::kLexicalClassNames, v); }
inline std::string_view to_string(Phase v) { return detail::enum_name(detail::kPhaseNames, v); }
inline std::string_view to_string(SpotKind v) { return detail::enum_name(detail::kSpotKindNames, v); }
inline std::string_view to_string(DuringKind v) { return detail::enum_name(detail::kDuringKindNames, v); }
inline std::string_view to_string(SpotStatus v) { return detail::enum_name(detail::kSpotStatusNames, v); }
inline std::string_view to_string(SessionState v) { return detail::enum_name(detail::kSessionStateNames, v); }

template <typename E>
E parse_enum(std::string_view name);

#define SYM_DEFINE_PARSE(Type, table)                                                   \
  template <>                                                                           \
  inline Type parse_enum<Type>(std::string_view name) {                                 \
    if (auto v = detail::enum_parse(detail::table, name)) return *v;                    \
    fail(ErrorCode::validation, "unknown " #Type " '" + std::string(name) + "'");       \
  }

SYM_DEFINE_PARSE(LexicalClass, kLexicalClassNames)
SYM_DEFINE_PARSE(Phase, kPhaseNames)
SYM_DEFINE_PARSE(SpotKind, kSpotKindNames)
SYM_DEFINE_PARSE(DuringKind, kDuringKindNames)
SYM_DEFINE_PARSE(SpotStatus, kSpotStatusNames)
SYM_DEFINE_PARSE(SessionState, kSessionStateNames)

#undef SYM_DEFINE_PARSE

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// Formats as `YYYY-MM-DDTHH:MM:SS.mmmZ`.
inline std::string format_timestamp(Timestamp t) {
  const auto ms_total = t.time_since_epoch().count();
  auto secs = static_cast<std::time_t>(ms_total / 1000);
  auto ms = static_cast<int>(ms_total % 1000);
  if (ms < 0) {
    ms += 1000;
    --secs;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
  return buf;
}

inline Timestamp parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, ms = 0;
  char z = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3d%c", &y, &mo, &d, &h, &mi, &s, &ms,
                  &z) != 8 ||
      z != 'Z') {
    fail(ErrorCode::validation, "malformed timestamp '" + text + "'");
  }
  using namespace std::chrono;
  const year_month_day date{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) fail(ErrorCode::validation, "malformed timestamp '" + text + "'");
  return Timestamp{duration_cast<milliseconds>(sys_days{date}.time_since_epoch()) + hours{h} + minutes{mi} +
                   seconds{s} + milliseconds{ms}};
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

using TermId = std::string;
using ConceptId = std::string;

struct SuggestionRound {
  std::vector<TermId> offered_term_ids;
  std::vector<TermId> refused_term_ids;
  friend bool operator==(const SuggestionRound&, const SuggestionRound&) = default;
};

/// One spotting act: the persisted (x, y, word) tuple plus its refusal trail.
struct SpotRecord {
  std::string spot_id;
  std::string session_id;
  Phase phase = Phase::pre;
  SpotKind kind = SpotKind::self;
  std::optional<std::string> stimulus_id;
  MoodPoint point;
  std::int64_t t_ms = 0;
  Timestamp wall_clock{};
  std::vector<SuggestionRound> rounds;
  std::optional<TermId> chosen_term_id;
  SpotStatus status = SpotStatus::point_only;
  int dictionary_version = 0;

  friend bool operator==(const SpotRecord&, const SpotRecord&) = default;
};

/// Checks the SpotRecord invariants; returns a description per breach.
inline std::vector<std::string> spot_violations(const SpotRecord& r) {
  std::vector<std::string> out;
  if (!r.point.in_range()) out.push_back("point out of range");
  if (r.t_ms < 0) out.push_back("negative t_ms");
  if ((r.kind == SpotKind::stimulus) != r.stimulus_id.has_value()) {
    out.push_back("stimulus_id must be present iff kind is STIMULUS");
  }
  if ((r.status == SpotStatus::accepted) != r.chosen_term_id.has_value()) {
    out.push_back("chosen term must be present iff status is ACCEPTED");
  }
  if ((r.status == SpotStatus::point_only) != r.rounds.empty()) {
    out.push_back("rounds must be empty iff status is POINT_ONLY");
  }
  std::vector<TermId> seen;
  for (const auto& round : r.rounds) {
    if (round.offered_term_ids.empty()) out.push_back("empty suggestion round");
    for (const auto& id : round.offered_term_ids) {
      for (const auto& s : seen) {
        if (s == id) out.push_back("term " + id + " offered twice");
      }
      seen.push_back(id);
    }
    for (const auto& id : round.refused_term_ids) {
      bool offered = false;
      for (const auto& o : round.offered_term_ids) offered = offered || o == id;
      if (!offered) out.push_back("refused term " + id + " was not offered");
      if (r.chosen_term_id && *r.chosen_term_id == id) {
        out.push_back("chosen term " + id + " was refused");
      }
    }
  }
  if (r.chosen_term_id) {
    bool in_last = false;
    if (!r.rounds.empty()) {
      for (const auto& o : r.rounds.back().offered_term_ids) in_last = in_last || o == *r.chosen_term_id;
    }
    if (!in_last) out.push_back("chosen term not in the last round");
  }
  return out;
}

struct Session {
  std::string session_id;
  std::string experiment_id;
  std::string participant_pseudonym;
  bool suggestions_enabled = false;
  std::string dictionary_id;
  int dictionary_version = 0;
  Timestamp started_at{};
  SessionState state = SessionState::created;
  int creation_index = 0;

  friend bool operator==(const Session&, const Session&) = default;
};

struct AssignmentPolicy {
  enum class Mode { alternate, random, all_on, all_off };
  Mode mode = Mode::alternate;
  std::uint64_t seed = 0;

  friend bool operator==(const AssignmentPolicy&, const AssignmentPolicy&) = default;
};

struct Experiment {
  std::string experiment_id;
  std::string name;
  std::string dictionary_id;
  DuringKind during_kind = DuringKind::both;
  AssignmentPolicy assignment_policy;
  int k_suggestions = 3;
  /// Phases in which an enabled session runs the suggestion loop.
  std::vector<Phase> suggestion_phases{Phase::pre, Phase::during, Phase::post};

  friend bool operator==(const Experiment&, const Experiment&) = default;
};

struct FeedbackEvent {
  TermId term_id;
  MoodPoint point;
  bool accepted = false;
  Timestamp wall_clock{};
  std::string dictionary_id;
};

struct Marker {
  std::string marker_id;
  std::string scope_id;
  std::string label;
  std::int64_t t_ms = 0;

  friend bool operator==(const Marker&, const Marker&) = default;
};

}  // namespace sym
