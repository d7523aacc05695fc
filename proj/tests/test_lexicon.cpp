#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "sym/json.hpp"
#include "sym/lexicon.hpp"

using namespace sym;
using sym::testing::dictionary;
using sym::testing::five_terms;
using sym::testing::term;

namespace {

std::vector<std::string> ids(const std::vector<MoodTerm>& terms) {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(t.term_id);
  return out;
}

// Sort every candidate by real distance, text, id; take k.
std::vector<std::string> brute_force_closest(const Dictionary& d, MoodPoint p, const std::set<TermId>& excluded, int k) {
  std::vector<MoodTerm> all;
  for (const auto& t : d.terms) {
    if (!excluded.count(t.term_id)) all.push_back(t);
  }
  std::sort(all.begin(), all.end(), [&](const MoodTerm& a, const MoodTerm& b) {
    const double da = std::hypot(a.position.valence - p.valence, a.position.arousal - p.arousal);
    const double db = std::hypot(b.position.valence - p.valence, b.position.arousal - p.arousal);
    if (da != db) return da < db;
    if (a.text != b.text) return a.text < b.text;
    return a.term_id < b.term_id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
  return ids(all);
}

Dictionary random_dictionary(std::mt19937& rng, int span) {
  std::uniform_int_distribution<int> n_terms(0, 64);
  std::uniform_int_distribution<int> axis(-span, span);
  std::uniform_int_distribution<int> letter(0, 3);
  const int n = n_terms(rng);
  std::vector<MoodTerm> terms;
  for (int i = 0; i < n; ++i) {
    // Few distinct texts and a small coordinate span force ties at every level.
    const std::string text(1, static_cast<char>('a' + letter(rng)));
    terms.push_back(term("id" + std::to_string(i), text + std::to_string(i % 7), axis(rng), axis(rng)));
  }
  return dictionary("r", std::move(terms));
}

}  // namespace

// --- suggest_terms ------------------------------------------------------------

TEST(SuggestTerms, SingleCandidate) {
  auto d = dictionary("x", {term("A", "a", 0, 0)});
  EXPECT_EQ(ids(suggest_terms(d, {50, 50}, std::set<TermId>{}, 3)), std::vector<std::string>{"A"});
}

TEST(SuggestTerms, ThreeClosest) {
  const auto d = five_terms();
  // Oracle values: d(A)=1.41, d(B)=9.06, d(C)=19.03, d(D)=72.1, d(E)=140.0.
  EXPECT_EQ(brute_force_closest(d, {1, 1}, {}, 3), (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(ids(suggest_terms(d, {1, 1}, std::set<TermId>{}, 3)), (std::vector<std::string>{"A", "B", "C"}));
}

TEST(SuggestTerms, ExclusionExhaustsCandidates) {
  const auto d = five_terms();
  EXPECT_TRUE(suggest_terms(d, {1, 1}, std::set<TermId>{"A", "B", "C", "D", "E"}, 3).empty());
}

TEST(SuggestTerms, TiesBreakOnTextThenId) {
  auto d = dictionary("x", {term("z1", "beta", 10, 0), term("z2", "alpha", 0, 10), term("a9", "alpha", -10, 0),
                            term("m", "alpha", 0, -10)});
  EXPECT_EQ(ids(suggest_terms(d, {0, 0}, std::set<TermId>{}, 4)), (std::vector<std::string>{"a9", "m", "z2", "z1"}));
}

TEST(SuggestTerms, CodePointOrderForNonAscii) {
  // U+00E9 (é) sorts after every ASCII letter and before U+4E00.
  auto d = dictionary("x", {term("1", "\xe4\xb8\x80", 1, 0), term("2", "\xc3\xa9mu", 0, 1), term("3", "zen", -1, 0)});
  EXPECT_EQ(ids(suggest_terms(d, {0, 0}, std::set<TermId>{}, 3)), (std::vector<std::string>{"3", "2", "1"}));
}

TEST(SuggestTerms, RejectsNonPositiveK) {
  EXPECT_THROW(suggest_terms(five_terms(), {0, 0}, std::set<TermId>{}, 0), Error);
}

TEST(SuggestTerms, RegistryLookupErrors) {
  DictionaryRegistry reg;
  reg.publish(five_terms("five"));
  EXPECT_EQ(suggest_terms(reg, "five", 1, {1, 1}, std::set<TermId>{}, 1).size(), 1u);
  try {
    suggest_terms(reg, "five", 2, {1, 1}, std::set<TermId>{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
  EXPECT_THROW(suggest_terms(reg, "nope", 1, {1, 1}, std::set<TermId>{}, 1), Error);
}

TEST(SuggestTerms, MatchesBruteForceOracle) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> axis(-100, 100);
  std::uniform_int_distribution<int> kdist(1, 8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto d = random_dictionary(rng, trial % 2 ? 100 : 6);
    const MoodPoint p{axis(rng) % (trial % 2 ? 101 : 7), axis(rng) % (trial % 2 ? 101 : 7)};
    std::set<TermId> excluded;
    for (const auto& t : d.terms) {
      if (rng() % 4 == 0) excluded.insert(t.term_id);
    }
    const int k = kdist(rng);
    ASSERT_EQ(ids(suggest_terms(d, p, excluded, k)), brute_force_closest(d, p, excluded, k)) << "trial " << trial;
  }
}

TEST(SuggestTerms, MonotoneUnderExclusion) {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> axis(-100, 100);
  for (int trial = 0; trial < 300; ++trial) {
    const auto d = random_dictionary(rng, 20);
    const MoodPoint p{axis(rng) / 5, axis(rng) / 5};
    std::set<TermId> small, large;
    for (const auto& t : d.terms) {
      const auto r = rng() % 3;
      if (r == 0) small.insert(t.term_id);
      if (r <= 1) large.insert(t.term_id);
    }
    const auto before = suggest_terms(d, p, small, 3);
    const auto after = suggest_terms(d, p, large, 3);
    ASSERT_LE(after.size(), before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
      ASSERT_EQ(large.count(after[i].term_id), 0u);
      // The i-th pick can only get worse (farther, or later in the tie order).
      ASSERT_FALSE(closer_to(p, after[i], before[i])) << "trial " << trial << " rank " << i;
    }
  }
}

// --- derive_custom_dictionary ------------------------------------------------

TEST(DeriveCustom, IdentityFilter) {
  const auto master = five_terms("master");
  const auto custom = derive_custom_dictionary(master, {"A", "B", "C", "D", "E"}, {}, "music");
  EXPECT_EQ(custom.parent_id, std::optional<std::string>("master"));
  EXPECT_EQ(custom.version, 1);
  EXPECT_EQ(custom.terms, master.terms);
  EXPECT_EQ(custom.concepts, master.concepts);
}

TEST(DeriveCustom, DropsAngerForMusic) {
  auto master = dictionary("master", {term("t-anger", "anger", -65, 75, "c-anger", LexicalClass::noun),
                                      term("t-calm", "calm", 55, -60, "c-serenity"),
                                      term("t-sad", "sad", -70, -35, "c-sadness")});
  master.links = {{"c-anger", "c-sadness", 0.4}, {"c-serenity", "c-sadness", 0.2}};
  const auto music = derive_custom_dictionary(master, {"t-calm", "t-sad"}, {}, "music");
  EXPECT_EQ(music.context_label, "music");
  EXPECT_EQ(music.find_term("t-anger"), nullptr);
  EXPECT_EQ(music.terms.size(), 2u);
  EXPECT_EQ(music.find_concept("c-anger"), nullptr);
  ASSERT_EQ(music.links.size(), 1u);
  EXPECT_EQ(music.links[0].concept_a, "c-serenity");
  EXPECT_TRUE(validate_dictionary(music, &master).empty());
  EXPECT_NE(master.find_term("t-anger"), nullptr);
}

TEST(DeriveCustom, PositionOverride) {
  const auto custom = derive_custom_dictionary(five_terms(), {"A"}, {{"A", MoodPoint{12, -7}}}, "museum");
  ASSERT_EQ(custom.terms.size(), 1u);
  EXPECT_EQ(custom.find_term("A")->position, (MoodPoint{12, -7}));
}

TEST(DeriveCustom, RejectsForeignTerms) {
  try {
    derive_custom_dictionary(five_terms(), {"A", "Q", "Z"}, {}, "music");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_EQ(e.detail(), (std::vector<std::string>{"Q", "Z"}));
  }
  EXPECT_THROW(derive_custom_dictionary(five_terms(), {"A"}, {{"B", MoodPoint{0, 0}}}, "music"), Error);
}

// --- folksonomy_update ----------------------------------------------------------

namespace {

FeedbackEvent accepted(const std::string& id, MoodPoint p) { return {id, p, true, {}, ""}; }

UpdateParams params(double alpha, int min_samples) {
  UpdateParams u;
  u.alpha = alpha;
  u.min_samples = min_samples;
  return u;
}

}  // namespace

TEST(FolksonomyUpdate, EmptyFeedbackIsNoOp) {
  const auto d = five_terms();
  const auto out = folksonomy_update(d, {}, params(0.2, 1));
  EXPECT_EQ(out, d);
  UpdateParams bump = params(0.2, 1);
  bump.bump_on_empty = true;
  const auto bumped = folksonomy_update(d, {}, bump);
  EXPECT_EQ(bumped.version, d.version + 1);
  EXPECT_EQ(bumped.terms, d.terms);
}

TEST(FolksonomyUpdate, FixedPointOfBlend) {
  auto d = dictionary("x", {term("T", "t", -40, 40)});
  std::vector<FeedbackEvent> fb(4, accepted("T", {-40, 40}));
  EXPECT_EQ(folksonomy_update(d, fb, params(0.2, 1)).find_term("T")->position, (MoodPoint{-40, 40}));
}

TEST(FolksonomyUpdate, CentroidBlendExample) {
  auto d = dictionary("x", {term("T", "t", 0, 0), term("U", "u", 50, 50)});
  d.version = 4;
  const std::vector<FeedbackEvent> fb{accepted("T", {10, 0}), accepted("T", {20, 0}), accepted("T", {0, 6})};
  // Hand computation: centroid (10, 2); 0.8*(0,0) + 0.2*(10,2) = (2, 0.4) -> (2, 0).
  const auto out = folksonomy_update(d, fb, params(0.2, 3));
  EXPECT_EQ(out.version, 5);
  EXPECT_EQ(out.find_term("T")->position, (MoodPoint{2, 0}));
  EXPECT_EQ(out.find_term("U")->position, (MoodPoint{50, 50}));
}

TEST(FolksonomyUpdate, MinSamplesAndRefusals) {
  auto d = dictionary("x", {term("T", "t", 0, 0)});
  std::vector<FeedbackEvent> fb{accepted("T", {50, 50}), accepted("T", {50, 50})};
  EXPECT_EQ(folksonomy_update(d, fb, params(0.5, 3)).find_term("T")->position, (MoodPoint{0, 0}));
  for (int i = 0; i < 10; ++i) fb.push_back({"T", {-90, -90}, false, {}, ""});
  EXPECT_EQ(folksonomy_update(d, fb, params(0.5, 2)).find_term("T")->position, (MoodPoint{25, 25}));
}

TEST(FolksonomyUpdate, WindowByCount) {
  auto d = dictionary("x", {term("T", "t", 0, 0)});
  std::vector<FeedbackEvent> fb{accepted("T", {100, 0}), accepted("T", {0, 40}), accepted("T", {0, 60})};
  UpdateParams u = params(0.5, 1);
  u.max_events = 2;
  // Only the last two count: centroid (0, 50), half way -> (0, 25).
  EXPECT_EQ(folksonomy_update(d, fb, u).find_term("T")->position, (MoodPoint{0, 25}));
}

TEST(FolksonomyUpdate, WindowByAge) {
  using namespace std::chrono;
  auto d = dictionary("x", {term("T", "t", 0, 0)});
  const Timestamp t0{};
  std::vector<FeedbackEvent> fb{{"T", {100, 0}, true, t0, ""},
                                {"T", {0, 40}, true, t0 + hours{48}, ""},
                                {"T", {0, 60}, true, t0 + hours{50}, ""}};
  UpdateParams u = params(0.5, 1);
  u.max_age = hours{24};
  EXPECT_EQ(folksonomy_update(d, fb, u).find_term("T")->position, (MoodPoint{0, 25}));
}

TEST(FolksonomyUpdate, RejectsForeignTermsAndBadParams) {
  auto d = dictionary("x", {term("T", "t", 0, 0)});
  try {
    folksonomy_update(d, std::vector<FeedbackEvent>{accepted("nope", {0, 0})}, params(0.2, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_EQ(e.detail(), std::vector<std::string>{"nope"});
  }
  EXPECT_THROW(folksonomy_update(d, {}, params(0.0, 1)), Error);
  EXPECT_THROW(folksonomy_update(d, {}, params(1.5, 1)), Error);
  EXPECT_THROW(folksonomy_update(d, {}, params(0.5, 0)), Error);
}

TEST(FolksonomyUpdate, PreservesTermsAndRange) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> axis(-100, 100);
  for (int trial = 0; trial < 200; ++trial) {
    auto d = random_dictionary(rng, 100);
    if (d.terms.empty()) continue;
    std::vector<FeedbackEvent> fb;
    for (int i = 0; i < 50; ++i) {
      const auto& t = d.terms[rng() % d.terms.size()];
      fb.push_back({t.term_id, {axis(rng), axis(rng)}, rng() % 3 != 0, {}, ""});
    }
    const auto out = folksonomy_update(d, fb, params(0.05 + 0.95 * (rng() % 100) / 100.0, 1 + static_cast<int>(rng() % 3)));
    ASSERT_EQ(out.terms.size(), d.terms.size());
    for (std::size_t i = 0; i < d.terms.size(); ++i) {
      ASSERT_EQ(out.terms[i].term_id, d.terms[i].term_id);
      ASSERT_TRUE(out.terms[i].position.in_range());
    }
    ASSERT_EQ(out.concepts, d.concepts);
    ASSERT_EQ(out.links, d.links);
    ASSERT_EQ(folksonomy_update(d, fb, params(0.3, 2)), folksonomy_update(d, fb, params(0.3, 2)));
  }
}

TEST(FolksonomyUpdate, ContractsTowardCentroid) {
  std::mt19937 rng(17);
  std::uniform_int_distribution<int> axis(-100, 100);
  for (int trial = 0; trial < 200; ++trial) {
    const MoodPoint c{axis(rng), axis(rng)};
    auto d = dictionary("x", {term("T", "t", axis(rng), axis(rng))});
    const double alpha = 0.1 + 0.9 * (rng() % 1000) / 1000.0;
    const std::vector<FeedbackEvent> fb{accepted("T", c)};
    for (int round = 0; round < 200; ++round) {
      const auto before = d.find_term("T")->position;
      d = folksonomy_update(d, fb, params(alpha, 1));
      const auto after = d.find_term("T")->position;
      ASSERT_LE(distance(after, c), (1.0 - alpha) * distance(before, c) + 1.0);
    }
    // Rounding stalls once alpha * |gap| < 0.5 on both axes.
    const auto end = d.find_term("T")->position;
    ASSERT_LT(std::abs(end.valence - c.valence), 0.5 / alpha + 1e-9);
    ASSERT_LT(std::abs(end.arousal - c.arousal), 0.5 / alpha + 1e-9);
  }
}

// --- concept_neighbors -----------------------------------------------------------

TEST(ConceptNeighbors, EmptyNet) {
  auto d = dictionary("x", {term("a", "a", 0, 0, "c1"), term("b", "b", 0, 0, "c2")});
  EXPECT_TRUE(concept_neighbors(d, "c1", 0.0).empty());
}

TEST(ConceptNeighbors, FilterAndSort) {
  auto d = dictionary("x", {term("a", "a", 0, 0, "c1"), term("b", "b", 0, 0, "c2"), term("c", "c", 0, 0, "c3"),
                            term("d", "d", 0, 0, "c4")});
  d.links = {{"c1", "c2", 0.9}, {"c3", "c1", 0.4}, {"c2", "c4", 1.0}};
  auto strong = concept_neighbors(d, "c1", 0.5);
  ASSERT_EQ(strong.size(), 1u);
  EXPECT_EQ(strong[0].first.concept_id, "c2");
  EXPECT_DOUBLE_EQ(strong[0].second, 0.9);

  auto all = concept_neighbors(d, "c1", 0.0);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].first.concept_id, "c2");
  EXPECT_EQ(all[1].first.concept_id, "c3");
  EXPECT_DOUBLE_EQ(all[1].second, 0.4);
  EXPECT_EQ(all[1].first.member_term_ids, std::vector<std::string>{"c"});

  d.links.push_back({"c1", "c4", 0.9});
  auto tied = concept_neighbors(d, "c1", 0.5);
  ASSERT_EQ(tied.size(), 2u);
  EXPECT_EQ(tied[0].first.concept_id, "c2");
  EXPECT_EQ(tied[1].first.concept_id, "c4");
}

TEST(ConceptNeighbors, UnknownConcept) {
  try {
    concept_neighbors(five_terms(), "nope", 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

// --- validate_dictionary ---------------------------------------------------------

namespace {

std::vector<ViolationKind> kinds(const std::vector<Violation>& v) {
  std::vector<ViolationKind> out;
  for (const auto& x : v) out.push_back(x.kind);
  return out;
}

json seed_document() {
  std::ifstream in(std::filesystem::path(SYM_TEST_DATA_DIR).parent_path() / "data" / "seed_dictionary.json");
  return json::parse(in);
}

}  // namespace

TEST(ValidateDictionary, SeedFileIsWellFormed) {
  const auto d = load_dictionary(seed_document());
  EXPECT_TRUE(validate_dictionary(d).empty());
  EXPECT_GE(d.terms.size(), 40u);
  EXPECT_NE(d.find_term("t-anger"), nullptr);
}

TEST(ValidateDictionary, DuplicateTerm) {
  auto d = dictionary("x", {term("1", "calm", 0, 0), term("2", "calm", 5, 5)});
  const auto v = validate_dictionary(d);
  ASSERT_EQ(kinds(v), std::vector<ViolationKind>{ViolationKind::duplicate_term});
  EXPECT_EQ(v[0].subject, "2");
  auto other_class = dictionary("x", {term("1", "calm", 0, 0), term("2", "calm", 5, 5, "c1", LexicalClass::noun)});
  EXPECT_TRUE(validate_dictionary(other_class).empty());
}

TEST(ValidateDictionary, RangeViolationFromFile) {
  auto doc = seed_document();
  doc["terms"][3]["valence"] = 0;
  doc["terms"][3]["arousal"] = 200;
  const auto d = parse_dictionary(doc);
  const auto v = validate_dictionary(d);
  ASSERT_EQ(kinds(v), std::vector<ViolationKind>{ViolationKind::range});
  EXPECT_EQ(v[0].subject, doc["terms"][3]["id"].get<std::string>());
  EXPECT_THROW(load_dictionary(doc), Error);
}

TEST(ValidateDictionary, StructuralBreaches) {
  auto d = dictionary("x", {term("1", "a", 0, 0, "c1"), term("2", "b|c", 0, 0, "c1"), term("1", "d", 0, 0, "c1")});
  d.terms.push_back(term("4", "e", 0, 0, "ghost"));
  d.links = {{"c1", "c1", 0.5}, {"c1", "c9", 0.5}, {"c1", "c9", 1.5}};
  const auto v = kinds(validate_dictionary(d));
  for (auto expected : {ViolationKind::duplicate_id, ViolationKind::invalid_text, ViolationKind::unknown_concept,
                        ViolationKind::self_link,
                        ViolationKind::unknown_link_concept, ViolationKind::link_weight, ViolationKind::duplicate_link}) {
    EXPECT_NE(std::find(v.begin(), v.end(), expected), v.end()) << to_string(expected);
  }
}

TEST(ValidateDictionary, StaleMembership) {
  auto d = dictionary("x", {term("1", "a", 0, 0, "c1"), term("2", "b", 0, 0, "c2")});
  d.concepts[0].member_term_ids.push_back("2");
  EXPECT_EQ(kinds(validate_dictionary(d)), std::vector<ViolationKind>{ViolationKind::concept_membership});
}

TEST(ValidateDictionary, CustomMustBeSubsetOfMaster) {
  const auto master = five_terms("master");
  auto custom = dictionary("custom", {term("A", "a", 0, 0), term("Z", "z", 0, 0)});
  custom.parent_id = "master";
  EXPECT_EQ(kinds(validate_dictionary(custom, &master)), std::vector<ViolationKind>{ViolationKind::not_in_parent});
}

TEST(DictionaryJson, InterchangeRoundTrip) {
  auto doc = seed_document();
  const auto d = load_dictionary(doc);
  EXPECT_EQ(parse_dictionary(dictionary_to_json(d)), d);
}

TEST(DictionaryJson, MalformedDocuments) {
  EXPECT_THROW(parse_dictionary(json::parse(R"({"dictionary_id": "x"})")), Error);
  auto doc = seed_document();
  doc["terms"][0]["lexical_class"] = "PRONOUN";
  EXPECT_THROW(parse_dictionary(doc), Error);
  doc = seed_document();
  doc["terms"][0]["valence"] = 1.5;
  EXPECT_THROW(parse_dictionary(doc), Error);
}

TEST(DictionaryRegistry, VersionsAreImmutableAndIncreasing) {
  DictionaryRegistry reg;
  EXPECT_EQ(reg.publish(five_terms("d")), 1);
  auto v1 = reg.get("d", 1);
  auto next = folksonomy_update(*v1, std::vector<FeedbackEvent>{accepted("A", {100, 100})}, params(1.0, 1));
  EXPECT_EQ(reg.publish(next), 2);
  EXPECT_EQ(reg.get("d", 1)->find_term("A")->position, (MoodPoint{0, 0}));
  EXPECT_EQ(reg.latest("d")->find_term("A")->position, (MoodPoint{100, 100}));
  EXPECT_EQ(reg.latest("d")->version, 2);

  auto custom = derive_custom_dictionary(*reg.latest("d"), {"A", "B"}, {}, "music", "d-music");
  EXPECT_EQ(reg.publish(custom), 1);
  auto orphan = custom;
  orphan.parent_id = "missing";
  EXPECT_THROW(reg.publish(orphan), Error);
}
