#pragma once

// Derived measures over a store state: pre/post deltas, stimulus dispersion
// across participants, and the point cloud feeding the researcher view.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sym/core.hpp"
#include "sym/store.hpp"

namespace sym {

struct MoodDelta {
  int valence = 0;
  int arousal = 0;
  friend bool operator==(const MoodDelta&, const MoodDelta&) = default;
};

/// POST point minus PRE point.
inline MoodDelta mood_delta(MoodPoint pre, MoodPoint post) noexcept {
  return {post.valence - pre.valence, post.arousal - pre.arousal};
}

inline MoodDelta mood_delta(const StoreState& state, const std::string& session_id) {
  state.session(session_id);
  const SpotRecord* pre = nullptr;
  const SpotRecord* post = nullptr;
  int n_pre = 0, n_post = 0;
  for (const auto* r : state.spots_of(session_id)) {
    if (r->kind != SpotKind::self) continue;
    if (r->phase == Phase::pre) pre = r, ++n_pre;
    if (r->phase == Phase::post) post = r, ++n_post;
  }
  if (n_pre != 1 || n_post != 1) {
    fail(ErrorCode::incomplete_session,
         "session '" + session_id + "' needs exactly one PRE and one POST self spot");
  }
  return mood_delta(pre->point, post->point);
}

/// Spread of one stimulus' spots across participants.
struct DispersionStat {
  RealPoint centroid;
  double mean_distance = 0.0;  // mean Euclidean distance to the centroid
  std::size_t n = 0;
  double sd_valence = 0.0;  // population standard deviation per axis
  double sd_arousal = 0.0;
};

/// Dispersion of a point set. Input order does not affect the result: points
/// are summed in a canonical order.
inline DispersionStat dispersion(std::vector<MoodPoint> points) {
  if (points.empty()) fail(ErrorCode::not_found, "no points");
  std::sort(points.begin(), points.end(), [](MoodPoint a, MoodPoint b) {
    return a.valence != b.valence ? a.valence < b.valence : a.arousal < b.arousal;
  });
  DispersionStat out;
  out.n = points.size();
  std::int64_t sv = 0, sa = 0;
  for (auto p : points) {
    sv += p.valence;
    sa += p.arousal;
  }
  const double n = static_cast<double>(out.n);
  out.centroid = {static_cast<double>(sv) / n, static_cast<double>(sa) / n};
  double dist = 0.0, vv = 0.0, va = 0.0;
  for (auto p : points) {
    dist += distance(to_real(p), out.centroid);
    vv += (p.valence - out.centroid.valence) * (p.valence - out.centroid.valence);
    va += (p.arousal - out.centroid.arousal) * (p.arousal - out.centroid.arousal);
  }
  out.mean_distance = dist / n;
  out.sd_valence = std::sqrt(vv / n);
  out.sd_arousal = std::sqrt(va / n);
  return out;
}

/// One point per participant (their last spot of the stimulus).
inline DispersionStat stimulus_dispersion(const StoreState& state, const std::string& experiment_id,
                                          const std::string& stimulus_id) {
  state.experiment(experiment_id);
  std::map<std::string, MoodPoint> last_by_participant;
  // Spot ids sort in submission order, so later spots overwrite earlier ones.
  for (const auto& [_, r] : state.spots()) {
    if (r.kind != SpotKind::stimulus || r.stimulus_id != stimulus_id) continue;
    const auto& s = state.session(r.session_id);
    if (s.experiment_id != experiment_id) continue;
    last_by_participant[s.participant_pseudonym] = r.point;
  }
  if (last_by_participant.empty()) {
    fail(ErrorCode::not_found, "no spots for stimulus '" + stimulus_id + "' in '" + experiment_id + "'");
  }
  std::vector<MoodPoint> points;
  for (const auto& [_, p] : last_by_participant) points.push_back(p);
  return dispersion(std::move(points));
}

struct CloudPoint {
  std::string participant_pseudonym;
  std::string session_id;
  Phase phase = Phase::pre;
  SpotKind kind = SpotKind::self;
  std::optional<std::string> stimulus_id;
  MoodPoint point;
  std::int64_t t_ms = 0;
  std::optional<std::string> chosen_term;

  friend bool operator==(const CloudPoint&, const CloudPoint&) = default;
};

/// Matching spots ordered by (participant, t_ms).
inline std::vector<CloudPoint> cloud_points(const StoreState& state, const std::string& experiment_id,
                                            std::optional<Phase> phase = std::nullopt,
                                            std::optional<SpotKind> kind = std::nullopt) {
  state.experiment(experiment_id);
  std::vector<CloudPoint> out;
  for (const auto& [_, r] : state.spots()) {
    const auto& s = state.session(r.session_id);
    if (s.experiment_id != experiment_id) continue;
    if (phase && r.phase != *phase) continue;
    if (kind && r.kind != *kind) continue;
    CloudPoint c{s.participant_pseudonym, r.session_id, r.phase, r.kind, r.stimulus_id, r.point, r.t_ms, {}};
    if (r.chosen_term_id) c.chosen_term = state.term_text(s, r.dictionary_version, *r.chosen_term_id);
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const CloudPoint& a, const CloudPoint& b) {
    if (a.participant_pseudonym != b.participant_pseudonym) {
      return a.participant_pseudonym < b.participant_pseudonym;
    }
    return a.t_ms < b.t_ms;
  });
  return out;
}

inline json to_json(const CloudPoint& c) {
  return {{"participant_pseudonym", c.participant_pseudonym},
          {"session_id", c.session_id},
          {"phase", to_string(c.phase)},
          {"kind", to_string(c.kind)},
          {"stimulus_id", c.stimulus_id ? json(*c.stimulus_id) : json(nullptr)},
          {"point", to_json(c.point)},
          {"t_ms", c.t_ms},
          {"chosen_term", c.chosen_term ? json(*c.chosen_term) : json(nullptr)}};
}

inline json to_json(const DispersionStat& d) {
  return {{"centroid", {{"valence", d.centroid.valence}, {"arousal", d.centroid.arousal}}},
          {"mean_distance", d.mean_distance},
          {"n", d.n},
          {"sd_valence", d.sd_valence},
          {"sd_arousal", d.sd_arousal}};
}

/// Experiment summary used by `sym stats`. Self deltas are listed per
/// session only; they are never aggregated across participants.
struct ExperimentStats {
  std::string experiment_id;
  std::size_t sessions = 0;
  std::size_t spots = 0;
  std::size_t accepted = 0;
  std::map<std::string, DispersionStat> stimuli;
  std::vector<std::pair<std::string, std::optional<MoodDelta>>> session_deltas;
};

inline ExperimentStats experiment_stats(const StoreState& state, const std::string& experiment_id) {
  state.experiment(experiment_id);
  ExperimentStats out;
  out.experiment_id = experiment_id;
  std::set<std::string> stimuli;
  for (const auto* s : state.sessions_of(experiment_id)) {
    ++out.sessions;
    for (const auto* r : state.spots_of(s->session_id)) {
      ++out.spots;
      if (r->status == SpotStatus::accepted) ++out.accepted;
      if (r->stimulus_id) stimuli.insert(*r->stimulus_id);
    }
    std::optional<MoodDelta> delta;
    try {
      delta = mood_delta(state, s->session_id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::incomplete_session) throw;
    }
    out.session_deltas.emplace_back(s->session_id, delta);
  }
  for (const auto& id : stimuli) out.stimuli.emplace(id, stimulus_dispersion(state, experiment_id, id));
  return out;
}

inline json to_json(const ExperimentStats& s) {
  json stimuli = json::object();
  for (const auto& [id, d] : s.stimuli) stimuli[id] = to_json(d);
  json deltas = json::array();
  for (const auto& [id, d] : s.session_deltas) {
    deltas.push_back({{"session_id", id},
                      {"delta", d ? json{{"valence", d->valence}, {"arousal", d->arousal}} : json(nullptr)}});
  }
  return {{"experiment_id", s.experiment_id},
          {"sessions", s.sessions},
          {"spots", s.spots},
          {"accepted", s.accepted},
          {"stimuli", std::move(stimuli)},
          {"session_deltas", std::move(deltas)}};
}

}  // namespace sym
