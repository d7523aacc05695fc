#pragma once

// Shared test fixtures: deterministic clock and keys, small dictionaries,
// and a three-session scenario used by the export and acceptance suites.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "sym/service.hpp"

namespace sym::testing {

inline std::string key(int n) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "00000000-0000-4000-8000-%012d", n);
  return buf;
}

/// 2026-01-01T00:00:00Z, advancing one second per call.
class SteppingClock {
 public:
  Timestamp operator()() {
    using namespace std::chrono;
    const auto base = sys_days{year{2026} / January / 1};
    return Timestamp{duration_cast<milliseconds>(base.time_since_epoch()) + seconds{tick_->fetch_add(1)}};
  }

 private:
  std::shared_ptr<std::atomic<int>> tick_ = std::make_shared<std::atomic<int>>(0);
};

inline MoodTerm term(std::string id, std::string text, int v, int a, std::string concept_id = "c1",
                     LexicalClass cls = LexicalClass::adjective) {
  return {std::move(id), std::move(text), cls, std::move(concept_id), {v, a}};
}

inline Dictionary dictionary(std::string id, std::vector<MoodTerm> terms) {
  Dictionary d;
  d.dictionary_id = std::move(id);
  d.context_label = "test";
  std::set<std::string> concepts;
  for (const auto& t : terms) concepts.insert(t.concept_id);
  for (const auto& c : concepts) d.concepts.push_back({c, c, {}});
  d.terms = std::move(terms);
  rebuild_memberships(d);
  return d;
}

/// A@(0,0) B@(10,0) C@(0,20) D@(-50,-50) E@(100,100).
inline Dictionary five_terms(std::string id = "five") {
  return dictionary(std::move(id), {term("A", "a", 0, 0), term("B", "b", 10, 0), term("C", "c", 0, 20),
                                    term("D", "d", -50, -50), term("E", "e", 100, 100)});
}

/// Distances from (-20, 30): calm 1, tired 2, gloomy 3, tense 5, anxious 10.
inline Dictionary refusal_dictionary(std::string id = "moods") {
  return dictionary(std::move(id), {term("t-calm", "calm", -20, 31), term("t-tired", "tired", -22, 30),
                                    term("t-gloomy", "gloomy", -20, 27), term("t-tense", "tense", -25, 30),
                                    term("t-anxious", "anxious", -20, 40)});
}

inline std::filesystem::path temp_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("sym-test-" + name + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline ExperimentSpec spec(std::string dictionary_id, AssignmentPolicy::Mode mode = AssignmentPolicy::Mode::all_on) {
  ExperimentSpec s;
  s.name = "test";
  s.dictionary_id = std::move(dictionary_id);
  s.assignment_policy.mode = mode;
  return s;
}

/// Three sessions exercising every export column:
///  - ses 1 (p01, suggestions on): PRE refused once then accepted, POST point only
///  - ses 2 (p02, suggestions off): PRE, a STIMULUS spot whose label needs
///    quoting, POST
///  - ses 3 (p03, suggestions on): PRE declined, DURING exhausted, POST point
///    only (POST is outside the experiment's suggestion phases)
inline void build_three_session_fixture(Service& svc) {
  int k = 1;
  svc.publish_dictionary(refusal_dictionary(), key(k++));
  ExperimentSpec e = spec("moods", AssignmentPolicy::Mode::alternate);
  e.name = "three sessions";
  e.suggestion_phases = std::vector<Phase>{Phase::pre, Phase::during};
  const auto exp = svc.create_experiment(e, key(k++));

  const auto s1 = svc.create_session(exp.experiment_id, "p01", key(k++));
  auto o = svc.submit_spot({s1.session_id, Phase::pre, SpotKind::self, std::nullopt, -20.2, 29.6, 1000}, key(k++));
  o = svc.decide_suggestion(o.spot.spot_id, Decision::refuse(), key(k++));
  svc.decide_suggestion(o.spot.spot_id, Decision::accept("t-tense"), key(k++));
  svc.submit_spot({s1.session_id, Phase::post, SpotKind::self, std::nullopt, 40, -10, 90000}, key(k++));

  const auto s2 = svc.create_session(exp.experiment_id, "p02", key(k++));
  svc.submit_spot({s2.session_id, Phase::pre, SpotKind::self, std::nullopt, 5, 5, 0}, key(k++));
  svc.submit_spot({s2.session_id, Phase::during, SpotKind::stimulus, std::string("Suite \"No. 1\", prelude"),
                   61.5, 70.49, 30500},
                  key(k++));
  svc.submit_spot({s2.session_id, Phase::post, SpotKind::self, std::nullopt, -100.7, 100.2, 60000}, key(k++));

  const auto s3 = svc.create_session(exp.experiment_id, "p03", key(k++));
  o = svc.submit_spot({s3.session_id, Phase::pre, SpotKind::self, std::nullopt, 0, 0, 10}, key(k++));
  svc.decide_suggestion(o.spot.spot_id, Decision::decline(), key(k++));
  o = svc.submit_spot({s3.session_id, Phase::during, SpotKind::self, std::nullopt, -20, 30, 20}, key(k++));
  o = svc.decide_suggestion(o.spot.spot_id, Decision::refuse(), key(k++));
  svc.decide_suggestion(o.spot.spot_id, Decision::refuse(), key(k++));
  svc.submit_spot({s3.session_id, Phase::post, SpotKind::self, std::nullopt, 12, -3, 40}, key(k++));
}

/// Hand-written, byte-exact export of build_three_session_fixture.
inline std::filesystem::path three_session_golden() {
  return std::filesystem::path(SYM_TEST_DATA_DIR) / "golden" / "three_sessions.csv";
}

}  // namespace sym::testing
