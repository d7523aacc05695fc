#pragma once

// Session lifecycle and the spot -> suggest -> accept/refuse loop, on top of
// the event store. All writes go through one exclusive lock; reads share it.

#include <cctype>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <type_traits>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "sym/analytics.hpp"
#include "sym/core.hpp"
#include "sym/json.hpp"
#include "sym/lexicon.hpp"
#include "sym/store.hpp"

namespace sym {

using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

struct ServiceConfig {
  int default_k = 3;
  UpdateParams update;
  std::chrono::milliseconds update_interval = std::chrono::hours(24);
};

/// Parameters of a new experiment. Unset k falls back to the service default.
struct ExperimentSpec {
  std::string name;
  std::string dictionary_id;
  DuringKind during_kind = DuringKind::both;
  AssignmentPolicy assignment_policy;
  std::optional<int> k_suggestions;
  std::optional<std::vector<Phase>> suggestion_phases;
};

struct SpotRequest {
  std::string session_id;
  Phase phase = Phase::pre;
  SpotKind kind = SpotKind::self;
  std::optional<std::string> stimulus_id;
  double x_raw = 0.0;
  double y_raw = 0.0;
  std::int64_t t_ms = 0;
};

struct Decision {
  DecisionKind kind = DecisionKind::decline;
  std::optional<TermId> term_id;

  static Decision accept(TermId id) { return {DecisionKind::accept, std::move(id)}; }
  static Decision refuse() { return {DecisionKind::refuse, std::nullopt}; }
  static Decision decline() { return {DecisionKind::decline, std::nullopt}; }
};

struct OfferedTerm {
  TermId term_id;
  std::string text;
  friend bool operator==(const OfferedTerm&, const OfferedTerm&) = default;
};

/// The current state of a spot and, while its loop is open, the round the
/// participant has to decide on.
struct SpotOutcome {
  SpotRecord spot;
  std::optional<std::vector<OfferedTerm>> round;
};

struct UpdateOutcome {
  std::string dictionary_id;
  int version = 0;
  bool changed = false;
};

namespace detail {

inline std::string fingerprint(const json& request) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : request.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline bool is_uuid(std::string_view s) {
  if (s.size() != 36) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (i == 8 || i == 13 || i == 18 || i == 23) {
      if (c != '-') return false;
    } else if (!std::isxdigit(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

inline std::string random_uuid() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const std::uint64_t hi = rng(), lo = rng();
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08llx-%04llx-4%03llx-%04llx-%012llx",
                static_cast<unsigned long long>(hi >> 32),
                static_cast<unsigned long long>((hi >> 16) & 0xFFFF),
                static_cast<unsigned long long>(hi & 0x0FFF),
                static_cast<unsigned long long>(0x8000 | ((lo >> 48) & 0x3FFF)),
                static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

inline json offered_json(const std::vector<OfferedTerm>& terms) {
  json out = json::array();
  for (const auto& t : terms) out.push_back({{"term_id", t.term_id}, {"text", t.text}});
  return out;
}

}  // namespace detail

/// Whether a session at a given creation index gets word suggestions.
inline bool assign_suggestions(const AssignmentPolicy& policy, int creation_index) {
  switch (policy.mode) {
    case AssignmentPolicy::Mode::alternate: return creation_index % 2 == 0;
    case AssignmentPolicy::Mode::all_on: return true;
    case AssignmentPolicy::Mode::all_off: return false;
    case AssignmentPolicy::Mode::random: {
      std::mt19937_64 engine(policy.seed + static_cast<std::uint64_t>(creation_index));
      return (engine() >> 63) == 0;
    }
  }
  return false;
}

inline std::vector<OfferedTerm> current_round(const StoreState& state, const SpotRecord& r) {
  std::vector<OfferedTerm> out;
  if (r.status != SpotStatus::pending || r.rounds.empty()) return out;
  const auto& s = state.session(r.session_id);
  for (const auto& id : r.rounds.back().offered_term_ids) {
    out.push_back({id, state.term_text(s, r.dictionary_version, id)});
  }
  return out;
}

inline json spot_outcome_json(const StoreState& state, const std::string& spot_id) {
  const auto& r = state.spot(spot_id);
  json round = nullptr;
  if (r.status == SpotStatus::pending) {
    round = {{"index", r.rounds.size()}, {"offered", detail::offered_json(current_round(state, r))}};
  }
  return {{"spot", to_json(r)}, {"round", std::move(round)}};
}

inline SpotOutcome spot_outcome_from_json(const json& j) {
  SpotOutcome out;
  out.spot = spot_from_json(j.at("spot"));
  if (!j.at("round").is_null()) {
    std::vector<OfferedTerm> terms;
    for (const auto& t : j["round"].at("offered")) {
      terms.push_back({t.at("term_id").get<std::string>(), t.at("text").get<std::string>()});
    }
    out.round = std::move(terms);
  }
  return out;
}

/// The response cached for each command, derived from post-apply state.
inline json command_response(const StoreState& state, const std::vector<Event>& events) {
  if (events.empty()) return nullptr;
  return std::visit(
      [&](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ExperimentCreated>) {
          return to_json(state.experiment(p.experiment.experiment_id));
        } else if constexpr (std::is_same_v<T, SessionCreated>) {
          return to_json(p.session);
        } else if constexpr (std::is_same_v<T, SpotSubmitted>) {
          return spot_outcome_json(state, p.spot.spot_id);
        } else if constexpr (std::is_same_v<T, SuggestionDecided>) {
          return spot_outcome_json(state, p.spot_id);
        } else if constexpr (std::is_same_v<T, MarkerIngested>) {
          return to_json(p.marker);
        } else if constexpr (std::is_same_v<T, DictionaryPublished>) {
          return {{"dictionary_id", p.dictionary.dictionary_id},
                  {"version", p.dictionary.version},
                  {"changed", true}};
        } else {
          return nullptr;
        }
      },
      events.front().payload);
}

class Service {
 public:
  explicit Service(StoreOptions store_options = {}, ServiceConfig config = {}, Clock clock = system_now)
      : config_(config),
        clock_(std::move(clock)),
        store_(std::move(store_options), command_response) {
    if (config_.default_k < 1) fail(ErrorCode::validation, "default_k must be at least 1");
    config_.update.validate();
  }

  const ServiceConfig& config() const { return config_; }

  /// Runs `f(const StoreState&)` under the shared lock.
  template <typename F>
  auto read(F&& f) const {
    std::shared_lock lock(mutex_);
    return f(store_.state());
  }

  // --- admin -----------------------------------------------------------------

  UpdateOutcome publish_dictionary(Dictionary d, std::optional<std::string> key = {}) {
    const json request = {{"op", "publish_dictionary"}, {"dictionary", dictionary_to_json(d, false)}};
    return run_command(key, request, [&](const StoreState& s) -> std::vector<EventPayload> {
      const Dictionary* parent = nullptr;
      DictionaryRegistry::Handle parent_handle;
      if (d.parent_id) {
        parent_handle = s.dictionaries().latest(*d.parent_id);
        if (!parent_handle) fail(ErrorCode::not_found, "unknown master dictionary '" + *d.parent_id + "'");
        parent = parent_handle.get();
      }
      rebuild_memberships(d);
      auto violations = validate_dictionary(d, parent);
      if (!violations.empty()) {
        std::vector<std::string> detail;
        for (const auto& v : violations) detail.push_back(v.describe());
        fail(ErrorCode::validation, "dictionary '" + d.dictionary_id + "' is invalid", detail);
      }
      const auto prev = s.dictionaries().latest(d.dictionary_id);
      d.version = prev ? prev->version + 1 : 1;
      return {DictionaryPublished{d, s.feedback_through_seq(d.dictionary_id)}};
    }, [](const json& j) { return update_outcome_from_json(j); });
  }

  /// Gathers feedback since the last run and publishes moved positions.
  /// A concurrent run on the same dictionary fails with BUSY.
  UpdateOutcome run_update(const std::string& dictionary_id, std::optional<std::string> key = {}) {
    if (key) {
      std::shared_lock lock(mutex_);
      if (auto cached = cached_for(*key, update_request(dictionary_id))) return update_outcome_from_json(*cached);
    }
    Claim claim(*this, dictionary_id);

    DictionaryRegistry::Handle base;
    std::vector<FeedbackEvent> feedback;
    std::int64_t through = 0;
    {
      std::shared_lock lock(mutex_);
      const auto& s = store_.state();
      base = s.dictionaries().latest(dictionary_id);
      if (!base) fail(ErrorCode::not_found, "unknown dictionary '" + dictionary_id + "'");
      feedback = s.feedback_since(dictionary_id, s.feedback_through_seq(dictionary_id));
      through = s.last_seq();
    }
    if (update_hook_) update_hook_(dictionary_id);
    if (feedback.empty() && !config_.update.bump_on_empty) return {dictionary_id, base->version, false};

    Dictionary next = folksonomy_update(*base, feedback, config_.update);
    return run_command(key, update_request(dictionary_id), [&](const StoreState& s) -> std::vector<EventPayload> {
      if (s.dictionaries().latest(dictionary_id)->version != base->version) {
        fail(ErrorCode::conflict, "dictionary '" + dictionary_id + "' changed during the update");
      }
      return {DictionaryPublished{next, through}};
    }, [](const json& j) { return update_outcome_from_json(j); });
  }

  /// Test seam: called while a run_update holds its claim.
  void set_update_hook(std::function<void(const std::string&)> hook) { update_hook_ = std::move(hook); }

  // --- experiments and sessions -----------------------------------------------

  Experiment create_experiment(const ExperimentSpec& spec, std::optional<std::string> key = {}) {
    json request = {{"op", "create_experiment"},
                    {"name", spec.name},
                    {"dictionary_id", spec.dictionary_id},
                    {"during_kind", to_string(spec.during_kind)},
                    {"assignment_policy", to_json(spec.assignment_policy)},
                    {"k", spec.k_suggestions ? json(*spec.k_suggestions) : json(nullptr)}};
    if (spec.suggestion_phases) {
      for (auto p : *spec.suggestion_phases) request["phases"].push_back(to_string(p));
    }
    return run_command(key, request, [&](const StoreState& s) -> std::vector<EventPayload> {
      if (!s.dictionaries().latest(spec.dictionary_id)) {
        fail(ErrorCode::not_found, "unknown dictionary '" + spec.dictionary_id + "'");
      }
      Experiment e;
      e.experiment_id = s.next_experiment_id();
      e.name = spec.name;
      e.dictionary_id = spec.dictionary_id;
      e.during_kind = spec.during_kind;
      e.assignment_policy = spec.assignment_policy;
      e.k_suggestions = spec.k_suggestions.value_or(config_.default_k);
      if (e.k_suggestions < 1) fail(ErrorCode::validation, "k_suggestions must be at least 1");
      if (spec.suggestion_phases) {
        std::set<Phase> unique(spec.suggestion_phases->begin(), spec.suggestion_phases->end());
        e.suggestion_phases.assign(unique.begin(), unique.end());
      }
      return {ExperimentCreated{e}};
    }, [](const json& j) { return experiment_from_json(j); });
  }

  Session create_session(const std::string& experiment_id, const std::string& pseudonym,
                         std::optional<std::string> key = {}) {
    const json request = {{"op", "create_session"}, {"experiment_id", experiment_id}, {"participant_pseudonym", pseudonym}};
    return run_command(key, request, [&](const StoreState& s) -> std::vector<EventPayload> {
      const auto& e = s.experiment(experiment_id);
      if (pseudonym.empty() || !detail::valid_utf8(pseudonym)) {
        fail(ErrorCode::validation, "participant_pseudonym must be a non-empty UTF-8 string");
      }
      Session session;
      session.session_id = s.next_session_id();
      session.experiment_id = experiment_id;
      session.participant_pseudonym = pseudonym;
      session.creation_index = static_cast<int>(s.sessions_of(experiment_id).size());
      session.suggestions_enabled = assign_suggestions(e.assignment_policy, session.creation_index);
      session.dictionary_id = e.dictionary_id;
      session.dictionary_version = s.dictionaries().latest(e.dictionary_id)->version;
      session.started_at = clock_();
      session.state = SessionState::created;
      return {SessionCreated{session}};
    }, [](const json& j) { return session_from_json(j); });
  }

  // --- the spotting loop ------------------------------------------------------

  SpotOutcome submit_spot(const SpotRequest& req, std::optional<std::string> key = {}) {
    const json request = {{"op", "submit_spot"},
                          {"session_id", req.session_id},
                          {"phase", to_string(req.phase)},
                          {"kind", to_string(req.kind)},
                          {"stimulus_id", req.stimulus_id ? json(*req.stimulus_id) : json(nullptr)},
                          {"x", std::isfinite(req.x_raw) ? json(req.x_raw) : json("non-finite")},
                          {"y", std::isfinite(req.y_raw) ? json(req.y_raw) : json("non-finite")},
                          {"t_ms", req.t_ms}};
    return run_command(key, request, [&](const StoreState& s) -> std::vector<EventPayload> {
      const auto& session = s.session(req.session_id);
      const auto& experiment = s.experiment(session.experiment_id);
      check_phase(s, session, req);
      if (req.t_ms < 0) fail(ErrorCode::validation, "t_ms must be non-negative");

      SpotRecord r;
      r.spot_id = s.next_spot_id();
      r.session_id = session.session_id;
      r.phase = req.phase;
      r.kind = req.kind;
      r.stimulus_id = req.stimulus_id;
      r.point = clamp_point(req.x_raw, req.y_raw);
      r.t_ms = req.t_ms;
      r.wall_clock = clock_();
      r.dictionary_version = session.dictionary_version;

      const bool eligible =
          session.suggestions_enabled &&
          std::find(experiment.suggestion_phases.begin(), experiment.suggestion_phases.end(), req.phase) !=
              experiment.suggestion_phases.end();
      std::vector<EventPayload> events;
      if (eligible) {
        auto terms = suggest_terms(s.dictionaries(), session.dictionary_id, session.dictionary_version,
                                   r.point, std::set<TermId>{}, experiment.k_suggestions);
        if (!terms.empty()) {
          events.push_back(SpotSubmitted{r, true});
          events.push_back(SuggestionsIssued{r.spot_id, ids_of(terms)});
          return events;
        }
      }
      events.push_back(SpotSubmitted{r, false});
      return events;
    }, [](const json& j) { return spot_outcome_from_json(j); });
  }

  SpotOutcome decide_suggestion(const std::string& spot_id, const Decision& decision,
                                std::optional<std::string> key = {}) {
    const json request = {{"op", "decide"},
                          {"spot_id", spot_id},
                          {"decision", to_string(decision.kind)},
                          {"term_id", decision.term_id ? json(*decision.term_id) : json(nullptr)}};
    return run_command(key, request, [&](const StoreState& s) -> std::vector<EventPayload> {
      const auto& r = s.spot(spot_id);
      if (r.status != SpotStatus::pending) {
        fail(ErrorCode::conflict, "suggestion loop of spot '" + spot_id + "' is closed");
      }
      const auto& offered = r.rounds.back().offered_term_ids;
      SuggestionDecided d{spot_id, decision.kind, std::nullopt, false};
      switch (decision.kind) {
        case DecisionKind::accept:
          if (!decision.term_id ||
              std::find(offered.begin(), offered.end(), *decision.term_id) == offered.end()) {
            fail(ErrorCode::validation, "term '" + decision.term_id.value_or("") +
                                            "' is not in the current round");
          }
          d.term_id = decision.term_id;
          return {d};
        case DecisionKind::decline:
          return {d};
        case DecisionKind::refuse: {
          const auto& session = s.session(r.session_id);
          const auto& experiment = s.experiment(session.experiment_id);
          std::set<TermId> excluded;
          for (const auto& round : r.rounds) excluded.insert(round.offered_term_ids.begin(), round.offered_term_ids.end());
          auto terms = suggest_terms(s.dictionaries(), session.dictionary_id, r.dictionary_version, r.point,
                                     excluded, experiment.k_suggestions);
          if (terms.empty()) {
            d.exhausted = true;
            return {d};
          }
          return {d, SuggestionsIssued{spot_id, ids_of(terms)}};
        }
      }
      return {};
    }, [](const json& j) { return spot_outcome_from_json(j); });
  }

  /// Markers are accepted for any existing session or experiment, closed
  /// sessions included.
  Marker ingest_marker(const std::string& scope_id, const std::string& label, std::int64_t t_ms,
                       std::optional<std::string> key = {}) {
    const json request = {{"op", "marker"}, {"scope_id", scope_id}, {"label", label}, {"t_ms", t_ms}};
    return run_command(key, request, [&](const StoreState& s) -> std::vector<EventPayload> {
      if (!s.has_session(scope_id) && !s.has_experiment(scope_id)) {
        fail(ErrorCode::not_found, "unknown marker scope '" + scope_id + "'");
      }
      if (label.empty() || !detail::valid_utf8(label)) fail(ErrorCode::validation, "label must be non-empty UTF-8");
      if (t_ms < 0) fail(ErrorCode::validation, "t_ms must be non-negative");
      return {MarkerIngested{{s.next_marker_id(), scope_id, label, t_ms}}};
    }, [](const json& j) { return marker_from_json(j); });
  }

  // --- reads ------------------------------------------------------------------

  Session session(const std::string& id) const {
    return read([&](const StoreState& s) { return s.session(id); });
  }

  SpotRecord spot(const std::string& id) const {
    return read([&](const StoreState& s) { return s.spot(id); });
  }

  std::vector<Marker> markers(const std::string& scope_id) const {
    return read([&](const StoreState& s) {
      if (!s.has_session(scope_id) && !s.has_experiment(scope_id)) {
        fail(ErrorCode::not_found, "unknown marker scope '" + scope_id + "'");
      }
      return s.markers_of(scope_id);
    });
  }

  std::string export_csv(const ExportFilter& filter) const {
    return read([&](const StoreState& s) { return sym::export_csv(s, filter); });
  }

  /// The full session view served by GET /v1/sessions/{id}.
  json session_view(const std::string& id) const {
    return read([&](const StoreState& s) {
      const auto& session = s.session(id);
      json spots = json::array();
      for (const auto* r : s.spots_of(id)) spots.push_back(to_json(*r));
      json markers = json::array();
      for (const auto& m : s.markers_of(id)) markers.push_back(to_json(m));
      json delta = nullptr;
      try {
        const auto d = mood_delta(s, id);
        delta = {{"valence", d.valence}, {"arousal", d.arousal}};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::incomplete_session) throw;
      }
      return json{{"session", to_json(session)}, {"spots", std::move(spots)}, {"markers", std::move(markers)},
                  {"delta", std::move(delta)}};
    });
  }

  std::vector<LogRecord> read_log() const {
    std::shared_lock lock(mutex_);
    return store_.read_log();
  }

  json snapshot() const {
    return read([](const StoreState& s) { return s.to_snapshot(); });
  }

  void write_snapshot() {
    std::unique_lock lock(mutex_);
    store_.write_snapshot();
  }

 private:
  class Claim {
   public:
    Claim(Service& svc, std::string id) : svc_(svc), id_(std::move(id)) {
      std::lock_guard lock(svc_.claims_mutex_);
      if (!svc_.claims_.insert(id_).second) {
        fail(ErrorCode::busy, "an update of '" + id_ + "' is already running");
      }
    }
    ~Claim() {
      std::lock_guard lock(svc_.claims_mutex_);
      svc_.claims_.erase(id_);
    }
    Claim(const Claim&) = delete;
    Claim& operator=(const Claim&) = delete;

   private:
    Service& svc_;
    std::string id_;
  };

  static json update_request(const std::string& id) { return {{"op", "run_update"}, {"dictionary_id", id}}; }

  static UpdateOutcome update_outcome_from_json(const json& j) {
    return {j.at("dictionary_id").get<std::string>(), j.at("version").get<int>(), j.at("changed").get<bool>()};
  }

  static std::vector<TermId> ids_of(const std::vector<MoodTerm>& terms) {
    std::vector<TermId> ids;
    for (const auto& t : terms) ids.push_back(t.term_id);
    return ids;
  }

  static void check_phase(const StoreState& s, const Session& session, const SpotRequest& req) {
    for (const auto* r : s.spots_of(session.session_id)) {
      if (r->status == SpotStatus::pending) {
        fail(ErrorCode::protocol, "spot '" + r->spot_id + "' still awaits a suggestion decision");
      }
    }
    const auto state = session.state;
    switch (req.phase) {
      case Phase::pre:
        if (state != SessionState::created) fail(ErrorCode::protocol, "PRE spot must be the first and only one");
        break;
      case Phase::during:
        if (state != SessionState::pre_done && state != SessionState::running) {
          fail(ErrorCode::protocol, "DURING spots must follow PRE and precede POST");
        }
        break;
      case Phase::post:
        if (state != SessionState::pre_done && state != SessionState::running) {
          fail(ErrorCode::protocol, "POST spot must follow PRE and come only once");
        }
        break;
    }
    const auto& experiment = s.experiment(session.experiment_id);
    if (req.phase != Phase::during && req.kind != SpotKind::self) {
      fail(ErrorCode::protocol, "PRE and POST spots record the participant's own mood (SELF)");
    }
    if (req.phase == Phase::during) {
      const bool allowed = experiment.during_kind == DuringKind::both ||
                           (experiment.during_kind == DuringKind::self) == (req.kind == SpotKind::self);
      if (!allowed) {
        fail(ErrorCode::protocol, std::string(to_string(req.kind)) + " spots are not part of this experiment");
      }
    }
    if ((req.kind == SpotKind::stimulus) != req.stimulus_id.has_value()) {
      fail(ErrorCode::validation, "stimulus_id is required for STIMULUS spots and only for them");
    }
    if (req.stimulus_id && (req.stimulus_id->empty() || !detail::valid_utf8(*req.stimulus_id))) {
      fail(ErrorCode::validation, "stimulus_id must be non-empty UTF-8");
    }
  }

  std::optional<json> cached_for(const std::string& key, const json& request) const {
    const auto* cached = store_.state().cached_response(key);
    if (cached == nullptr) return std::nullopt;
    if (cached->digest != detail::fingerprint(request)) {
      fail(ErrorCode::conflict, "Idempotency-Key '" + key + "' was used for a different request");
    }
    return std::optional<json>(std::in_place, cached->response);
  }

  template <typename Build, typename Decode>
  std::invoke_result_t<Decode&, const json&> run_command(std::optional<std::string> key, const json& request,
                                                         Build&& build, Decode&& decode) {
    if (key && !detail::is_uuid(*key)) fail(ErrorCode::validation, "Idempotency-Key must be a UUID");
    std::unique_lock lock(mutex_);
    const std::string k = key.value_or(detail::random_uuid());
    if (auto cached = cached_for(k, request)) return decode(*cached);
    auto events = build(store_.state());
    const json response = store_.append_command({k, detail::fingerprint(request)}, std::move(events), clock_());
    return decode(response);
  }

  ServiceConfig config_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  Store store_;
  std::mutex claims_mutex_;
  std::set<std::string> claims_;
  std::function<void(const std::string&)> update_hook_;
};

/// Calls run_update for every dictionary on a fixed interval until destroyed.
class UpdateScheduler {
 public:
  UpdateScheduler(Service& service, std::chrono::milliseconds interval,
                  std::function<void(const UpdateOutcome&)> on_update = {})
      : service_(service), interval_(interval), on_update_(std::move(on_update)),
        thread_([this](std::stop_token st) { loop(st); }) {}

  ~UpdateScheduler() {
    thread_.request_stop();
    cv_.notify_all();
  }

 private:
  void loop(std::stop_token st) {
    std::unique_lock lock(m_);
    while (!st.stop_requested()) {
      if (cv_.wait_for(lock, st, interval_, [] { return false; })) break;
      if (st.stop_requested()) break;
      lock.unlock();
      const auto ids = service_.read([](const StoreState& s) { return s.dictionaries().ids(); });
      for (const auto& id : ids) {
        try {
          auto outcome = service_.run_update(id);
          if (on_update_ && outcome.changed) on_update_(outcome);
        } catch (const Error&) {
          // BUSY or a concurrent publish; the next tick retries.
        }
      }
      lock.lock();
    }
  }

  Service& service_;
  std::chrono::milliseconds interval_;
  std::function<void(const UpdateOutcome&)> on_update_;
  std::mutex m_;
  std::condition_variable_any cv_;
  std::jthread thread_;
};

}  // namespace sym
