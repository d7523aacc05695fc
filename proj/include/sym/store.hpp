#pragma once

// Append-only event store. Every state change is an Event; StoreState is the
// deterministic fold of the log. The on-disk form is a single log file of
// length-prefixed, CRC-checked records plus an optional state snapshot.

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <boost/crc.hpp>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "sym/core.hpp"
#include "sym/csv.hpp"
#include "sym/json.hpp"
#include "sym/lexicon.hpp"

namespace sym {

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

struct ExperimentCreated {
  Experiment experiment;
};

struct SessionCreated {
  Session session;
};

/// The initial record of a spot. `loop_open` is true when a suggestion round
/// follows in the same batch.
struct SpotSubmitted {
  SpotRecord spot;
  bool loop_open = false;
};

struct SuggestionsIssued {
  std::string spot_id;
  std::vector<TermId> offered_term_ids;
};

enum class DecisionKind { accept, refuse, decline };

inline std::string_view to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::accept: return "ACCEPT";
    case DecisionKind::refuse: return "REFUSE";
    case DecisionKind::decline: return "DECLINE";
  }
  return "?";
}

inline DecisionKind parse_decision(std::string_view s) {
  if (s == "ACCEPT") return DecisionKind::accept;
  if (s == "REFUSE") return DecisionKind::refuse;
  if (s == "DECLINE") return DecisionKind::decline;
  fail(ErrorCode::validation, "unknown decision '" + std::string(s) + "'");
}

/// A REFUSE with `exhausted` set closes the loop; otherwise a
/// SuggestionsIssued follows in the same batch.
struct SuggestionDecided {
  std::string spot_id;
  DecisionKind decision = DecisionKind::decline;
  std::optional<TermId> term_id;
  bool exhausted = false;
};

struct MarkerIngested {
  Marker marker;
};

/// `feedback_through_seq`: feedback with seq at or below this value has been
/// consumed by position updates of this dictionary.
struct DictionaryPublished {
  Dictionary dictionary;
  std::int64_t feedback_through_seq = 0;
};

using EventPayload = std::variant<ExperimentCreated, SessionCreated, SpotSubmitted,
                                  SuggestionsIssued, SuggestionDecided, MarkerIngested,
                                  DictionaryPublished>;

struct Event {
  std::string event_id;  // idempotency key
  std::int64_t seq = 0;  // assigned on append
  Timestamp wall_clock{};
  EventPayload payload;
};

/// Metadata of a client command that produced a batch of events.
struct CommandInfo {
  std::string key;     // Idempotency-Key
  std::string digest;  // fingerprint of the request
};

inline std::string payload_type(const EventPayload& p) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ExperimentCreated>) return "ExperimentCreated";
        if constexpr (std::is_same_v<T, SessionCreated>) return "SessionCreated";
        if constexpr (std::is_same_v<T, SpotSubmitted>) return "SpotSubmitted";
        if constexpr (std::is_same_v<T, SuggestionsIssued>) return "SuggestionsIssued";
        if constexpr (std::is_same_v<T, SuggestionDecided>) return "SuggestionDecided";
        if constexpr (std::is_same_v<T, MarkerIngested>) return "MarkerIngested";
        if constexpr (std::is_same_v<T, DictionaryPublished>) return "DictionaryPublished";
      },
      p);
}

inline json payload_to_json(const EventPayload& p) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ExperimentCreated>) return to_json(v.experiment);
        if constexpr (std::is_same_v<T, SessionCreated>) return to_json(v.session);
        if constexpr (std::is_same_v<T, SpotSubmitted>) {
          return {{"spot", to_json(v.spot)}, {"loop_open", v.loop_open}};
        }
        if constexpr (std::is_same_v<T, SuggestionsIssued>) {
          return {{"spot_id", v.spot_id}, {"offered_term_ids", v.offered_term_ids}};
        }
        if constexpr (std::is_same_v<T, SuggestionDecided>) {
          return {{"spot_id", v.spot_id},
                  {"decision", to_string(v.decision)},
                  {"term_id", v.term_id ? json(*v.term_id) : json(nullptr)},
                  {"exhausted", v.exhausted}};
        }
        if constexpr (std::is_same_v<T, MarkerIngested>) return to_json(v.marker);
        if constexpr (std::is_same_v<T, DictionaryPublished>) {
          return {{"dictionary", dictionary_to_json(v.dictionary)},
                  {"feedback_through_seq", v.feedback_through_seq}};
        }
      },
      p);
}

inline EventPayload payload_from_json(const std::string& type, const json& j) {
  if (type == "ExperimentCreated") return ExperimentCreated{experiment_from_json(j)};
  if (type == "SessionCreated") return SessionCreated{session_from_json(j)};
  if (type == "SpotSubmitted") return SpotSubmitted{spot_from_json(j.at("spot")), j.at("loop_open").get<bool>()};
  if (type == "SuggestionsIssued") {
    return SuggestionsIssued{j.at("spot_id").get<std::string>(),
                             j.at("offered_term_ids").get<std::vector<TermId>>()};
  }
  if (type == "SuggestionDecided") {
    SuggestionDecided d;
    d.spot_id = j.at("spot_id").get<std::string>();
    d.decision = parse_decision(j.at("decision").get<std::string>());
    if (!j.at("term_id").is_null()) d.term_id = j.at("term_id").get<std::string>();
    d.exhausted = j.at("exhausted").get<bool>();
    return d;
  }
  if (type == "MarkerIngested") return MarkerIngested{marker_from_json(j)};
  if (type == "DictionaryPublished") {
    return DictionaryPublished{parse_dictionary(j.at("dictionary")),
                               j.at("feedback_through_seq").get<std::int64_t>()};
  }
  fail(ErrorCode::validation, "unknown event type '" + type + "'");
}

inline json event_to_json(const Event& e) {
  return {{"event_id", e.event_id},
          {"seq", e.seq},
          {"wall_clock", format_timestamp(e.wall_clock)},
          {"type", payload_type(e.payload)},
          {"payload", payload_to_json(e.payload)}};
}

inline Event event_from_json(const json& j) {
  Event e;
  e.event_id = j.at("event_id").get<std::string>();
  e.seq = j.at("seq").get<std::int64_t>();
  e.wall_clock = parse_timestamp(j.at("wall_clock").get<std::string>());
  e.payload = payload_from_json(j.at("type").get<std::string>(), j.at("payload"));
  return e;
}

// ---------------------------------------------------------------------------
// State projection
// ---------------------------------------------------------------------------

struct FeedbackEntry {
  std::int64_t seq = 0;
  FeedbackEvent event;
};

struct CachedResponse {
  std::string digest;
  json response;
};

namespace detail {

inline std::string make_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%08zu", prefix, n);
  return buf;
}

}  // namespace detail

/// Everything reconstructible from the log. Not synchronized; the owner
/// serializes writers.
class StoreState {
 public:
  // --- identifiers for the next created entity -----------------------------
  std::string next_experiment_id() const { return detail::make_id("exp", experiments_.size() + 1); }
  std::string next_session_id() const { return detail::make_id("ses", sessions_.size() + 1); }
  std::string next_spot_id() const { return detail::make_id("spt", spots_.size() + 1); }
  std::string next_marker_id() const { return detail::make_id("mrk", markers_.size() + 1); }

  // --- lookups -------------------------------------------------------------
  const Experiment& experiment(const std::string& id) const {
    auto it = experiments_.find(id);
    if (it == experiments_.end()) fail(ErrorCode::not_found, "unknown experiment '" + id + "'");
    return it->second;
  }
  const Session& session(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorCode::not_found, "unknown session '" + id + "'");
    return it->second;
  }
  const SpotRecord& spot(const std::string& id) const {
    auto it = spots_.find(id);
    if (it == spots_.end()) fail(ErrorCode::not_found, "unknown spot '" + id + "'");
    return it->second;
  }
  bool has_experiment(const std::string& id) const { return experiments_.contains(id); }
  bool has_session(const std::string& id) const { return sessions_.contains(id); }

  const std::map<std::string, Experiment>& experiments() const { return experiments_; }
  const std::map<std::string, Session>& sessions() const { return sessions_; }
  /// Spots keyed by id; ids sort in creation order.
  const std::map<std::string, SpotRecord>& spots() const { return spots_; }

  std::vector<const Session*> sessions_of(const std::string& experiment_id) const {
    std::vector<const Session*> out;
    for (const auto& [_, s] : sessions_) {
      if (s.experiment_id == experiment_id) out.push_back(&s);
    }
    return out;
  }

  std::vector<const SpotRecord*> spots_of(const std::string& session_id) const {
    std::vector<const SpotRecord*> out;
    for (const auto& id : session_spots_.count(session_id) ? session_spots_.at(session_id)
                                                           : std::vector<std::string>{}) {
      out.push_back(&spots_.at(id));
    }
    return out;
  }

  /// Markers of one scope ordered by t_ms, arrival order among equal times.
  std::vector<Marker> markers_of(const std::string& scope_id) const {
    std::vector<Marker> out;
    for (const auto& m : markers_) {
      if (m.scope_id == scope_id) out.push_back(m);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Marker& a, const Marker& b) { return a.t_ms < b.t_ms; });
    return out;
  }

  const DictionaryRegistry& dictionaries() const { return registry_; }

  std::int64_t feedback_through_seq(const std::string& dictionary_id) const {
    auto it = feedback_through_.find(dictionary_id);
    return it == feedback_through_.end() ? 0 : it->second;
  }

  /// Feedback for one dictionary with seq strictly greater than `after`.
  std::vector<FeedbackEvent> feedback_since(const std::string& dictionary_id,
                                            std::int64_t after) const {
    std::vector<FeedbackEvent> out;
    for (const auto& f : feedback_) {
      if (f.seq > after && f.event.dictionary_id == dictionary_id) out.push_back(f.event);
    }
    return out;
  }

  const std::vector<FeedbackEntry>& feedback() const { return feedback_; }

  std::int64_t last_seq() const { return last_seq_; }

  std::optional<std::int64_t> seq_of(const std::string& event_id) const {
    auto it = event_seq_.find(event_id);
    if (it == event_seq_.end()) return std::nullopt;
    return it->second;
  }

  const CachedResponse* cached_response(const std::string& key) const {
    auto it = responses_.find(key);
    return it == responses_.end() ? nullptr : &it->second;
  }

  void cache_response(const std::string& key, CachedResponse r) { responses_[key] = std::move(r); }

  /// Text of a term in the version a spot was served from.
  std::string term_text(const Session& s, int version, const TermId& id) const {
    if (auto d = registry_.get(s.dictionary_id, version)) {
      if (const auto* t = d->find_term(id)) return t->text;
    }
    return id;
  }

  // --- fold ------------------------------------------------------------------
  void apply(const Event& e) {
    std::visit([&](const auto& p) { apply_payload(e, p); }, e.payload);
    event_seq_[e.event_id] = e.seq;
    last_seq_ = e.seq;
  }

  // --- snapshot ---------------------------------------------------------------
  json to_snapshot() const {
    json j;
    j["last_seq"] = last_seq_;
    j["experiments"] = json::array();
    for (const auto& [_, e] : experiments_) j["experiments"].push_back(to_json(e));
    j["sessions"] = json::array();
    for (const auto& [_, s] : sessions_) j["sessions"].push_back(to_json(s));
    j["spots"] = json::array();
    for (const auto& [_, s] : spots_) j["spots"].push_back(to_json(s));
    j["markers"] = json::array();
    for (const auto& m : markers_) j["markers"].push_back(to_json(m));
    j["dictionaries"] = json::array();
    for (const auto& [id, versions] : registry_.all()) {
      for (const auto& d : versions) j["dictionaries"].push_back(dictionary_to_json(*d));
    }
    j["feedback_through"] = feedback_through_;
    j["feedback"] = json::array();
    for (const auto& f : feedback_) {
      j["feedback"].push_back({{"seq", f.seq},
                               {"term_id", f.event.term_id},
                               {"point", to_json(f.event.point)},
                               {"accepted", f.event.accepted},
                               {"wall_clock", format_timestamp(f.event.wall_clock)},
                               {"dictionary_id", f.event.dictionary_id}});
    }
    j["event_seq"] = event_seq_;
    j["responses"] = json::object();
    for (const auto& [k, r] : responses_) {
      j["responses"][k] = {{"digest", r.digest}, {"response", r.response}};
    }
    return j;
  }

  static StoreState from_snapshot(const json& j) {
    StoreState s;
    s.last_seq_ = j.at("last_seq").get<std::int64_t>();
    for (const auto& e : j.at("experiments")) {
      auto x = experiment_from_json(e);
      s.experiments_.emplace(x.experiment_id, x);
    }
    for (const auto& e : j.at("sessions")) {
      auto x = session_from_json(e);
      s.sessions_.emplace(x.session_id, x);
    }
    for (const auto& e : j.at("spots")) {
      auto x = spot_from_json(e);
      s.session_spots_[x.session_id].push_back(x.spot_id);
      s.spots_.emplace(x.spot_id, x);
    }
    for (const auto& e : j.at("markers")) s.markers_.push_back(marker_from_json(e));
    for (const auto& d : j.at("dictionaries")) s.registry_.publish(parse_dictionary(d));
    s.feedback_through_ = j.at("feedback_through").get<std::map<std::string, std::int64_t>>();
    for (const auto& f : j.at("feedback")) {
      s.feedback_.push_back({f.at("seq").get<std::int64_t>(),
                             {f.at("term_id").get<std::string>(),
                              point_from_json(f.at("point"), "feedback"),
                              f.at("accepted").get<bool>(),
                              parse_timestamp(f.at("wall_clock").get<std::string>()),
                              f.at("dictionary_id").get<std::string>()}});
    }
    s.event_seq_ = j.at("event_seq").get<std::map<std::string, std::int64_t>>();
    for (const auto& [k, r] : j.at("responses").items()) {
      s.responses_[k] = {r.at("digest").get<std::string>(), r.at("response")};
    }
    return s;
  }

 private:
  void apply_payload(const Event&, const ExperimentCreated& p) {
    experiments_[p.experiment.experiment_id] = p.experiment;
  }

  void apply_payload(const Event&, const SessionCreated& p) {
    sessions_[p.session.session_id] = p.session;
  }

  void apply_payload(const Event&, const SpotSubmitted& p) {
    SpotRecord r = p.spot;
    r.status = p.loop_open ? SpotStatus::pending : SpotStatus::point_only;
    auto& session = sessions_.at(r.session_id);
    switch (r.phase) {
      case Phase::pre: session.state = SessionState::pre_done; break;
      case Phase::during: session.state = SessionState::running; break;
      case Phase::post: session.state = SessionState::post_done; break;
    }
    close_if_final(session, r);
    session_spots_[r.session_id].push_back(r.spot_id);
    spots_[r.spot_id] = std::move(r);
  }

  void apply_payload(const Event&, const SuggestionsIssued& p) {
    spots_.at(p.spot_id).rounds.push_back({p.offered_term_ids, {}});
  }

  void apply_payload(const Event& e, const SuggestionDecided& p) {
    auto& r = spots_.at(p.spot_id);
    auto& session = sessions_.at(r.session_id);
    auto& round = r.rounds.back();
    switch (p.decision) {
      case DecisionKind::accept:
        r.chosen_term_id = p.term_id;
        r.status = SpotStatus::accepted;
        feedback_.push_back({e.seq, {*p.term_id, r.point, true, e.wall_clock, session.dictionary_id}});
        break;
      case DecisionKind::refuse:
        round.refused_term_ids = round.offered_term_ids;
        for (const auto& id : round.refused_term_ids) {
          feedback_.push_back({e.seq, {id, r.point, false, e.wall_clock, session.dictionary_id}});
        }
        if (p.exhausted) r.status = SpotStatus::exhausted;
        break;
      case DecisionKind::decline:
        r.status = SpotStatus::declined;
        break;
    }
    close_if_final(session, r);
  }

  void apply_payload(const Event&, const MarkerIngested& p) { markers_.push_back(p.marker); }

  void apply_payload(const Event&, const DictionaryPublished& p) {
    const int v = registry_.publish(p.dictionary);
    if (v != p.dictionary.version && p.dictionary.version != 0) {
      fail(ErrorCode::validation, "published version mismatch for '" + p.dictionary.dictionary_id + "'");
    }
    feedback_through_[p.dictionary.dictionary_id] = p.feedback_through_seq;
  }

  static void close_if_final(Session& session, const SpotRecord& r) {
    if (r.phase == Phase::post && r.status != SpotStatus::pending) session.state = SessionState::closed;
  }

  std::map<std::string, Experiment> experiments_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, SpotRecord> spots_;
  std::map<std::string, std::vector<std::string>> session_spots_;
  std::vector<Marker> markers_;
  DictionaryRegistry registry_;
  std::map<std::string, std::int64_t> feedback_through_;
  std::vector<FeedbackEntry> feedback_;
  std::map<std::string, std::int64_t> event_seq_;
  std::map<std::string, CachedResponse> responses_;
  std::int64_t last_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Log file
// ---------------------------------------------------------------------------

inline constexpr char kLogMagic[8] = {'S', 'Y', 'M', 'L', 'O', 'G', '0', '1'};

/// One durable write: the events of a single command.
struct LogRecord {
  std::optional<CommandInfo> command;
  std::vector<Event> events;
};

inline json record_to_json(const LogRecord& r) {
  json j;
  j["command"] = r.command ? json{{"key", r.command->key}, {"digest", r.command->digest}} : json(nullptr);
  j["events"] = json::array();
  for (const auto& e : r.events) j["events"].push_back(event_to_json(e));
  return j;
}

inline LogRecord record_from_json(const json& j) {
  LogRecord r;
  if (!j.at("command").is_null()) {
    r.command = CommandInfo{j["command"].at("key").get<std::string>(),
                            j["command"].at("digest").get<std::string>()};
  }
  for (const auto& e : j.at("events")) r.events.push_back(event_from_json(e));
  return r;
}

/// Single-writer append-only file: 8-byte magic, then records of
/// [u32 length][u32 crc32][JSON bytes], integers little-endian.
class EventLogFile {
 public:
  EventLogFile() = default;
  EventLogFile(const EventLogFile&) = delete;
  EventLogFile& operator=(const EventLogFile&) = delete;
  ~EventLogFile() { close(); }

  /// Reads every intact record. A torn final record is dropped (and truncated
  /// away when writable); a corrupt record elsewhere is an error.
  std::vector<LogRecord> open(const std::filesystem::path& path, bool writable, bool sync) {
    close();
    sync_ = sync;
    std::vector<LogRecord> out;
    std::string bytes;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::size_t good = 0;
    if (!bytes.empty()) {
      if (bytes.size() < sizeof kLogMagic || std::memcmp(bytes.data(), kLogMagic, sizeof kLogMagic) != 0) {
        fail(ErrorCode::validation, "'" + path.string() + "' is not an event log");
      }
      std::size_t pos = sizeof kLogMagic;
      good = pos;
      while (pos + 8 <= bytes.size()) {
        const auto len = read_u32(bytes, pos);
        const auto crc = read_u32(bytes, pos + 4);
        if (pos + 8 + len > bytes.size()) break;  // torn tail
        const std::string_view body(bytes.data() + pos + 8, len);
        if (crc32(body) != crc) {
          if (pos + 8 + len == bytes.size()) break;  // torn tail
          fail(ErrorCode::validation, "corrupt record at offset " + std::to_string(pos));
        }
        out.push_back(record_from_json(json::parse(body)));
        pos += 8 + len;
        good = pos;
      }
    }
    if (writable) {
      fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
      if (fd_ < 0) fail(ErrorCode::validation, "cannot open '" + path.string() + "': " + std::strerror(errno));
      if (bytes.empty()) {
        write_all(std::string_view(kLogMagic, sizeof kLogMagic));
      } else if (good < bytes.size()) {
        if (::ftruncate(fd_, static_cast<off_t>(good)) != 0) {
          fail(ErrorCode::validation, "cannot truncate torn log tail");
        }
      }
      ::lseek(fd_, 0, SEEK_END);
      flush();
    }
    return out;
  }

  void append(const LogRecord& record) {
    if (fd_ < 0) fail(ErrorCode::conflict, "event log is not open for writing");
    const std::string body = record_to_json(record).dump();
    std::string frame;
    frame.reserve(body.size() + 8);
    put_u32(frame, static_cast<std::uint32_t>(body.size()));
    put_u32(frame, crc32(body));
    frame += body;
    write_all(frame);
    flush();
  }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  static std::uint32_t crc32(std::string_view s) {
    boost::crc_32_type crc;
    crc.process_bytes(s.data(), s.size());
    return crc.checksum();
  }
  static std::uint32_t read_u32(const std::string& b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<std::size_t>(i)]);
    return v;
  }
  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void write_all(std::string_view data) {
    while (!data.empty()) {
      const auto n = ::write(fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::validation, std::string("log write failed: ") + std::strerror(errno));
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }
  void flush() {
    if (sync_ && ::fsync(fd_) != 0) fail(ErrorCode::validation, "fsync failed");
  }

  int fd_ = -1;
  bool sync_ = true;
};

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

struct StoreOptions {
  /// Empty: in-memory only.
  std::filesystem::path data_dir;
  bool read_only = false;
  bool sync = true;
  /// Write a snapshot every N records; 0 disables snapshots.
  std::size_t snapshot_every = 1000;
};

/// Computes the response cached for a command from the state right after
/// its events were applied. Must be a pure function of its inputs so that
/// replay rebuilds the same cache.
using Responder = std::function<json(const StoreState&, const std::vector<Event>&)>;

class Store {
 public:
  explicit Store(StoreOptions options = {}, Responder responder = {})
      : options_(std::move(options)), responder_(std::move(responder)) {
    if (options_.data_dir.empty()) return;
    std::filesystem::create_directories(options_.data_dir);
    if (!options_.read_only) acquire_lock();
    const auto snap_path = options_.data_dir / "snapshot.json";
    if (std::filesystem::exists(snap_path)) {
      std::ifstream in(snap_path);
      state_ = StoreState::from_snapshot(json::parse(in));
    }
    auto records = log_.open(options_.data_dir / "events.log", !options_.read_only, options_.sync);
    for (auto& r : records) {
      if (!r.events.empty() && r.events.back().seq <= state_.last_seq()) continue;
      apply_record(r);
      ++records_since_snapshot_;
    }
  }

  ~Store() {
    log_.close();
    if (lock_fd_ >= 0) ::close(lock_fd_);
  }

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const StoreState& state() const { return state_; }

  /// Appends one event; a duplicate event_id is a no-op returning the
  /// original seq. Validation happens before anything is written.
  std::int64_t append_event(Event event) {
    if (auto seq = state_.seq_of(event.event_id)) return *seq;
    LogRecord record;
    record.events.push_back(std::move(event));
    commit(record);
    return record.events.front().seq;
  }

  /// Appends the events of one command atomically and caches its response.
  /// Event ids are derived from the command key.
  json append_command(const CommandInfo& command, std::vector<EventPayload> payloads,
                      Timestamp wall_clock) {
    LogRecord record;
    record.command = command;
    for (std::size_t i = 0; i < payloads.size(); ++i) {
      Event e;
      e.event_id = i == 0 ? command.key : command.key + "/" + std::to_string(i);
      e.wall_clock = wall_clock;
      e.payload = std::move(payloads[i]);
      record.events.push_back(std::move(e));
    }
    commit(record);
    const auto* cached = state_.cached_response(command.key);
    return cached ? cached->response : json(nullptr);
  }

  /// Every record written so far, in order (for replay checks and tooling).
  std::vector<LogRecord> read_log() const {
    if (options_.data_dir.empty()) return memory_log_;
    EventLogFile reader;
    return reader.open(options_.data_dir / "events.log", false, false);
  }

  void write_snapshot() {
    if (options_.data_dir.empty() || options_.read_only) return;
    const auto tmp = options_.data_dir / "snapshot.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << state_.to_snapshot().dump();
    }
    std::filesystem::rename(tmp, options_.data_dir / "snapshot.json");
    records_since_snapshot_ = 0;
  }

  /// Folds a record sequence into a fresh state.
  static StoreState replay(const std::vector<LogRecord>& records, const Responder& responder) {
    StoreState s;
    for (const auto& r : records) apply_to(s, r, responder);
    return s;
  }

 private:
  void commit(LogRecord& record) {
    if (options_.read_only) fail(ErrorCode::conflict, "store opened read-only");
    auto next = state_.last_seq();
    for (auto& e : record.events) e.seq = ++next;
    // Dry run on a copy so a bad payload never reaches the log.
    if (!record.events.empty()) {
      StoreState probe = state_;
      apply_to(probe, record, responder_);
      if (options_.data_dir.empty()) {
        memory_log_.push_back(record);
      } else {
        log_.append(record);
      }
      state_ = std::move(probe);
    }
    if (options_.snapshot_every != 0 && ++records_since_snapshot_ >= options_.snapshot_every) {
      write_snapshot();
    }
  }

  void apply_record(const LogRecord& r) {
    apply_to(state_, r, responder_);
    if (options_.data_dir.empty()) memory_log_.push_back(r);
  }

  static void apply_to(StoreState& s, const LogRecord& r, const Responder& responder) {
    for (const auto& e : r.events) s.apply(e);
    if (r.command && responder) s.cache_response(r.command->key, {r.command->digest, responder(s, r.events)});
  }

  void acquire_lock() {
    const auto path = options_.data_dir / "LOCK";
    lock_fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (lock_fd_ < 0 || ::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      fail(ErrorCode::busy, "data directory '" + options_.data_dir.string() + "' is locked by another writer");
    }
  }

  StoreOptions options_;
  Responder responder_;
  StoreState state_;
  EventLogFile log_;
  std::vector<LogRecord> memory_log_;
  std::size_t records_since_snapshot_ = 0;
  int lock_fd_ = -1;
};

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

struct ExportFilter {
  enum class Scope { all, experiment, session };
  Scope scope = Scope::all;
  std::string id;

  static ExportFilter all() { return {}; }
  static ExportFilter experiment(std::string id) { return {Scope::experiment, std::move(id)}; }
  static ExportFilter session(std::string id) { return {Scope::session, std::move(id)}; }
};

inline SpotRow to_row(const StoreState& state, const SpotRecord& r) {
  const auto& s = state.session(r.session_id);
  SpotRow row;
  row.session_id = r.session_id;
  row.participant_id = s.participant_pseudonym;
  row.experiment_id = s.experiment_id;
  row.phase = r.phase;
  row.kind = r.kind;
  row.stimulus_id = r.stimulus_id;
  row.t_ms = r.t_ms;
  row.point = r.point;
  row.status = r.status;
  if (r.chosen_term_id) row.chosen_term = state.term_text(s, r.dictionary_version, *r.chosen_term_id);
  for (const auto& round : r.rounds) {
    for (const auto& id : round.refused_term_ids) {
      row.refused_terms.push_back(state.term_text(s, r.dictionary_version, id));
    }
  }
  row.dictionary_version = r.dictionary_version;
  return row;
}

/// Rows ordered by (session_id, t_ms), submission order among ties.
inline std::vector<SpotRow> export_rows(const StoreState& state, const ExportFilter& filter) {
  if (filter.scope == ExportFilter::Scope::experiment) state.experiment(filter.id);
  if (filter.scope == ExportFilter::Scope::session) state.session(filter.id);
  std::vector<const SpotRecord*> picked;
  for (const auto& [_, r] : state.spots()) {
    const auto& s = state.session(r.session_id);
    if (filter.scope == ExportFilter::Scope::experiment && s.experiment_id != filter.id) continue;
    if (filter.scope == ExportFilter::Scope::session && r.session_id != filter.id) continue;
    picked.push_back(&r);
  }
  std::stable_sort(picked.begin(), picked.end(), [](const SpotRecord* a, const SpotRecord* b) {
    if (a->session_id != b->session_id) return a->session_id < b->session_id;
    return a->t_ms < b->t_ms;
  });
  std::vector<SpotRow> rows;
  rows.reserve(picked.size());
  for (const auto* r : picked) rows.push_back(to_row(state, *r));
  return rows;
}

inline std::string export_csv(const StoreState& state, const ExportFilter& filter) {
  return write_spot_csv(export_rows(state, filter));
}

inline std::vector<SpotRow> import_csv(std::string_view bytes) { return import_spot_csv(bytes); }

}  // namespace sym
