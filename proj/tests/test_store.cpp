#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "sym/store.hpp"

using namespace sym;
using namespace sym::testing;

namespace {

Event experiment_event(const std::string& event_id, const std::string& experiment_id) {
  Experiment e;
  e.experiment_id = experiment_id;
  e.name = "n";
  e.dictionary_id = "d";
  return {event_id, 0, {}, ExperimentCreated{e}};
}

Event marker_event(const std::string& event_id, const std::string& scope, std::int64_t t_ms) {
  return {event_id, 0, {}, MarkerIngested{{"m-" + event_id, scope, "label", t_ms}}};
}

// Spot submission into a session that does not exist: apply throws.
Event broken_event(const std::string& event_id) {
  SpotRecord r;
  r.spot_id = "spt-x";
  r.session_id = "no-such-session";
  return {event_id, 0, {}, SpotSubmitted{r, false}};
}

}  // namespace

TEST(Store, SequenceNumbersStartAtOne) {
  Store store;
  EXPECT_EQ(store.append_event(experiment_event("e1", "exp-1")), 1);
  EXPECT_EQ(store.append_event(experiment_event("e2", "exp-2")), 2);
  EXPECT_EQ(store.append_event(marker_event("e3", "exp-1", 5)), 3);
  EXPECT_EQ(store.state().last_seq(), 3);
}

TEST(Store, DuplicateEventIdIsNoOp) {
  Store store;
  store.append_event(experiment_event("e1", "exp-1"));
  EXPECT_EQ(store.append_event(experiment_event("e1", "exp-other")), 1);
  EXPECT_EQ(store.read_log().size(), 1u);
  EXPECT_FALSE(store.state().has_experiment("exp-other"));
}

TEST(Store, FailedApplyLeavesLogUntouched) {
  const auto dir = temp_dir("store-fail");
  Store store({dir, false, false, 0});
  store.append_event(experiment_event("e1", "exp-1"));
  const auto before = read_file(dir / "events.log");
  EXPECT_THROW(store.append_event(broken_event("e2")), std::exception);
  EXPECT_EQ(read_file(dir / "events.log"), before);
  EXPECT_EQ(store.state().last_seq(), 1);
  EXPECT_EQ(store.append_event(marker_event("e3", "exp-1", 1)), 2);
}

TEST(Store, ReopenRestoresState) {
  const auto dir = temp_dir("store-reopen");
  {
    Store store({dir, false, false, 0});
    store.append_event(experiment_event("e1", "exp-1"));
    store.append_event(marker_event("e2", "exp-1", 500));
    store.append_event(marker_event("e3", "exp-1", 100));
  }
  Store reopened({dir, true, false, 0});
  EXPECT_EQ(reopened.state().last_seq(), 3);
  const auto markers = reopened.state().markers_of("exp-1");
  ASSERT_EQ(markers.size(), 2u);
  EXPECT_EQ(markers[0].t_ms, 100);
  EXPECT_EQ(markers[1].t_ms, 500);
  EXPECT_THROW(reopened.append_event(marker_event("e4", "exp-1", 1)), Error);
}

TEST(Store, SecondWriterIsLockedOut) {
  const auto dir = temp_dir("store-lock");
  Store first({dir, false, false, 0});
  try {
    Store second({dir, false, false, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::busy);
  }
  Store reader({dir, true, false, 0});
  EXPECT_EQ(reader.state().last_seq(), 0);
}

TEST(Store, TornTailIsDropped) {
  const auto dir = temp_dir("store-torn");
  {
    Store store({dir, false, false, 0});
    store.append_event(experiment_event("e1", "exp-1"));
    store.append_event(experiment_event("e2", "exp-2"));
  }
  const auto intact = read_file(dir / "events.log");
  {
    std::ofstream out(dir / "events.log", std::ios::binary | std::ios::app);
    out << std::string("\x40\x00\x00\x00\x01\x02\x03\x04{\"command\":nu", 18);
  }
  Store store({dir, false, false, 0});
  EXPECT_EQ(store.state().last_seq(), 2);
  EXPECT_EQ(read_file(dir / "events.log"), intact);
  EXPECT_EQ(store.append_event(experiment_event("e3", "exp-3")), 3);
}

TEST(Store, CorruptMiddleRecordIsAnError) {
  const auto dir = temp_dir("store-corrupt");
  {
    Store store({dir, false, false, 0});
    store.append_event(experiment_event("e1", "exp-1"));
    store.append_event(experiment_event("e2", "exp-2"));
  }
  auto bytes = read_file(dir / "events.log");
  bytes[20] ^= 0x20;
  {
    std::ofstream out(dir / "events.log", std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  EXPECT_THROW(Store({dir, true, false, 0}), Error);
}

TEST(Store, SnapshotPlusTailEqualsFullReplay) {
  const auto dir = temp_dir("store-snap");
  {
    Service svc({dir, false, false, 5}, {}, SteppingClock{});
    build_three_session_fixture(svc);
    svc.ingest_marker("ses-00000001", "applause", 77, key(900));
  }
  ASSERT_TRUE(std::filesystem::exists(dir / "snapshot.json"));
  Service reopened({dir, true, false, 0}, {}, SteppingClock{});
  const auto full = Store::replay(reopened.read_log(), command_response);
  EXPECT_EQ(reopened.snapshot(), full.to_snapshot());
  EXPECT_EQ(StoreState::from_snapshot(full.to_snapshot()).to_snapshot(), full.to_snapshot());
}

// --- CSV --------------------------------------------------------------------------

TEST(Csv, ThreeSessionExportMatchesGolden) {
  Service svc({}, {}, SteppingClock{});
  build_three_session_fixture(svc);
  const auto golden = read_file(three_session_golden());
  ASSERT_FALSE(golden.empty());
  EXPECT_EQ(svc.export_csv(ExportFilter::experiment("exp-00000001")), golden);
  EXPECT_EQ(svc.export_csv(ExportFilter::all()), golden);
}

TEST(Csv, SingleAcceptedSpot) {
  Service svc({}, {}, SteppingClock{});
  svc.publish_dictionary(five_terms("five"), key(1));
  const auto exp = svc.create_experiment(spec("five"), key(2));
  const auto s = svc.create_session(exp.experiment_id, "p", key(3));
  auto o = svc.submit_spot({s.session_id, Phase::pre, SpotKind::self, std::nullopt, 1, 1, 250}, key(4));
  svc.decide_suggestion(o.spot.spot_id, Decision::accept("B"), key(5));
  EXPECT_EQ(svc.export_csv(ExportFilter::session(s.session_id)),
            std::string(kCsvHeader) + "\n" + "ses-00000001,p,exp-00000001,PRE,SELF,,250,1,1,ACCEPTED,b,,1\n");
}

TEST(Csv, EmptyExportIsHeaderOnly) {
  Service svc({}, {}, SteppingClock{});
  svc.publish_dictionary(five_terms("five"), key(1));
  const auto exp = svc.create_experiment(spec("five"), key(2));
  const auto csv = svc.export_csv(ExportFilter::experiment(exp.experiment_id));
  EXPECT_EQ(csv, std::string(kCsvHeader) + "\n");
  EXPECT_TRUE(import_csv(csv).empty());
  EXPECT_THROW(svc.export_csv(ExportFilter::experiment("exp-99999999")), Error);
}

TEST(Csv, OutOfRangeValenceNamesTheLine) {
  const std::string bad = std::string(kCsvHeader) + "\n" + "ses-1,p,exp-1,PRE,SELF,,0,150,0,POINT_ONLY,,,1\n";
  try {
    import_csv(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("valence"), std::string::npos) << e.what();
  }
}

TEST(Csv, MalformedInputs) {
  const std::string h = std::string(kCsvHeader) + "\n";
  EXPECT_THROW(import_csv("a,b\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,p,exp-1,PRE,SELF,,0,0,0,POINT_ONLY,,\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,p,exp-1,NOW,SELF,,0,0,0,POINT_ONLY,,,1\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,p,exp-1,PRE,SELF,,0,0,0,ACCEPTED,,,1\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,p,exp-1,DURING,STIMULUS,,0,0,0,POINT_ONLY,,,1\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,p,exp-1,PRE,SELF,,0,0,0,POINT_ONLY,,,1,extra\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,\"p,exp-1,PRE,SELF,,0,0,0,POINT_ONLY,,,1\n"), Error);
  EXPECT_THROW(import_csv(h + "ses-1,p,exp-1,PRE,SELF,,0,1.5,0,POINT_ONLY,,,1\n"), Error);
}

TEST(Csv, LenientLineEndings) {
  auto golden = read_file(three_session_golden());
  const auto rows = import_csv(golden);
  std::string crlf;
  for (char c : golden) {
    if (c == '\n') crlf += '\r';
    crlf += c;
  }
  EXPECT_EQ(import_csv(crlf), rows);
  golden.pop_back();
  EXPECT_EQ(import_csv(golden), rows);
}

TEST(Csv, RoundTripIsAFixedPoint) {
  Service svc({}, {}, SteppingClock{});
  build_three_session_fixture(svc);
  const auto bytes = svc.export_csv(ExportFilter::all());
  const auto rows = import_csv(bytes);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(write_spot_csv(rows), bytes);
  EXPECT_EQ(rows[3].stimulus_id, std::optional<std::string>("Suite \"No. 1\", prelude"));
  EXPECT_EQ(rows[6].refused_terms, (std::vector<std::string>{"calm", "tired", "gloomy", "tense", "anxious"}));
}

TEST(Csv, ExportInvariants) {
  Service svc({}, {}, SteppingClock{});
  build_three_session_fixture(svc);
  const auto rows = import_csv(svc.export_csv(ExportFilter::all()));
  for (const auto& r : rows) {
    EXPECT_TRUE(r.point.in_range());
    EXPECT_EQ(r.status == SpotStatus::accepted, r.chosen_term.has_value());
    EXPECT_EQ(r.kind == SpotKind::stimulus, r.stimulus_id.has_value());
    if (r.chosen_term) {
      EXPECT_EQ(std::count(r.refused_terms.begin(), r.refused_terms.end(), *r.chosen_term), 0);
    }
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    EXPECT_TRUE(a.session_id < b.session_id || (a.session_id == b.session_id && a.t_ms <= b.t_ms));
  }
}

TEST(Csv, FieldQuoting) {
  std::string out;
  csv::append_field(out, "plain");
  out += ',';
  csv::append_field(out, "a,b");
  out += ',';
  csv::append_field(out, "say \"hi\"");
  out += ',';
  csv::append_field(out, "two\nlines");
  EXPECT_EQ(out, "plain,\"a,b\",\"say \"\"hi\"\"\",\"two\nlines\"");
  const auto records = csv::parse(out + "\n");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].fields, (std::vector<std::string>{"plain", "a,b", "say \"hi\"", "two\nlines"}));
}
