#pragma once

// RFC 4180 spot export: one row per spot, UTF-8, LF line endings.

#include <charconv>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sym/core.hpp"

namespace sym {

inline constexpr std::string_view kCsvHeader =
    "session_id,participant_id,experiment_id,phase,kind,stimulus_id,t_ms,valence,arousal,status,"
    "chosen_term,refused_terms,dictionary_version";

/// A spot as it appears in the export: term ids resolved to their texts and
/// the refusal trail flattened across rounds.
struct SpotRow {
  std::string session_id;
  std::string participant_id;
  std::string experiment_id;
  Phase phase = Phase::pre;
  SpotKind kind = SpotKind::self;
  std::optional<std::string> stimulus_id;
  std::int64_t t_ms = 0;
  MoodPoint point;
  SpotStatus status = SpotStatus::point_only;
  std::optional<std::string> chosen_term;
  std::vector<std::string> refused_terms;
  int dictionary_version = 0;

  friend bool operator==(const SpotRow&, const SpotRow&) = default;
};

namespace csv {

inline void append_field(std::string& out, std::string_view field) {
  const bool quote = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!quote) {
    out.append(field);
    return;
  }
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

inline void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    append_field(out, fields[i]);
  }
  out.push_back('\n');
}

struct Record {
  std::size_t line = 0;  // physical line where the record starts
  std::vector<std::string> fields;
};

/// Splits RFC 4180 text into records. Accepts LF or CRLF terminators and a
/// missing final terminator.
inline std::vector<Record> parse(std::string_view text) {
  std::vector<Record> records;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    Record rec;
    rec.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (i < text.size() && text[i] == '"') {
        const std::size_t open_line = line;
        ++i;
        while (true) {
          if (i >= text.size()) {
            fail(ErrorCode::validation, "line " + std::to_string(open_line) + ": unterminated quoted field");
          }
          const char c = text[i++];
          if (c == '"') {
            if (i < text.size() && text[i] == '"') {
              field.push_back('"');
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
          }
        }
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          fail(ErrorCode::validation, "line " + std::to_string(line) + ": garbage after quoted field");
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          if (text[i] == '"') {
            fail(ErrorCode::validation, "line " + std::to_string(line) + ": stray quote in unquoted field");
          }
          field.push_back(text[i++]);
        }
      }
      rec.fields.push_back(field);
      if (i >= text.size()) {
        done = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') {
          ++i;
          if (i >= text.size() || text[i] != '\n') {
            fail(ErrorCode::validation, "line " + std::to_string(line) + ": bare CR");
          }
        }
        ++i;
        ++line;
        done = true;
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace csv

inline std::string write_spot_csv(const std::vector<SpotRow>& rows) {
  std::string out(kCsvHeader);
  out.push_back('\n');
  for (const auto& r : rows) {
    std::string refused;
    for (std::size_t i = 0; i < r.refused_terms.size(); ++i) {
      if (i) refused.push_back('|');
      refused += r.refused_terms[i];
    }
    csv::append_row(out, {r.session_id, r.participant_id, r.experiment_id,
                          std::string(to_string(r.phase)), std::string(to_string(r.kind)),
                          r.stimulus_id.value_or(""), std::to_string(r.t_ms),
                          std::to_string(r.point.valence), std::to_string(r.point.arousal),
                          std::string(to_string(r.status)), r.chosen_term.value_or(""), refused,
                          std::to_string(r.dictionary_version)});
  }
  return out;
}

namespace detail {

inline std::int64_t parse_csv_int(const std::string& s, const char* column, std::size_t line) {
  std::int64_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) {
    fail(ErrorCode::validation,
         "line " + std::to_string(line) + ": " + column + " '" + s + "' is not an integer");
  }
  return v;
}

template <typename E>
E parse_csv_enum(const std::string& s, const char* column, std::size_t line) {
  try {
    return parse_enum<E>(s);
  } catch (const Error&) {
    fail(ErrorCode::validation,
         "line " + std::to_string(line) + ": " + column + " '" + s + "' is not recognized");
  }
}

}  // namespace detail

/// Inverse of write_spot_csv. Every error names the offending line.
inline std::vector<SpotRow> import_spot_csv(std::string_view bytes) {
  auto records = csv::parse(bytes);
  if (records.empty()) fail(ErrorCode::validation, "line 1: missing header");
  {
    std::string header;
    const auto& f = records.front().fields;
    for (std::size_t i = 0; i < f.size(); ++i) header += (i ? "," : "") + f[i];
    if (header != kCsvHeader) fail(ErrorCode::validation, "line 1: header mismatch");
  }
  std::vector<SpotRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto line = rec.line;
    auto bad = [line](const std::string& what) {
      fail(ErrorCode::validation, "line " + std::to_string(line) + ": " + what);
    };
    if (rec.fields.size() != 13) {
      bad("expected 13 fields, found " + std::to_string(rec.fields.size()));
    }
    const auto& f = rec.fields;
    SpotRow row;
    row.session_id = f[0];
    row.participant_id = f[1];
    row.experiment_id = f[2];
    if (row.session_id.empty()) bad("empty session_id");
    row.phase = detail::parse_csv_enum<Phase>(f[3], "phase", line);
    row.kind = detail::parse_csv_enum<SpotKind>(f[4], "kind", line);
    if (!f[5].empty()) row.stimulus_id = f[5];
    row.t_ms = detail::parse_csv_int(f[6], "t_ms", line);
    if (row.t_ms < 0) bad("negative t_ms");
    const auto valence = detail::parse_csv_int(f[7], "valence", line);
    const auto arousal = detail::parse_csv_int(f[8], "arousal", line);
    if (valence < kAxisMin || valence > kAxisMax) {
      bad("valence " + std::to_string(valence) + " outside [-100, 100]");
    }
    if (arousal < kAxisMin || arousal > kAxisMax) {
      bad("arousal " + std::to_string(arousal) + " outside [-100, 100]");
    }
    row.point = {static_cast<int>(valence), static_cast<int>(arousal)};
    row.status = detail::parse_csv_enum<SpotStatus>(f[9], "status", line);
    if (!f[10].empty()) row.chosen_term = f[10];
    if (!f[11].empty()) {
      std::string_view rest = f[11];
      while (true) {
        auto bar = rest.find('|');
        auto item = rest.substr(0, bar);
        if (item.empty()) bad("empty entry in refused_terms");
        row.refused_terms.emplace_back(item);
        if (bar == std::string_view::npos) break;
        rest.remove_prefix(bar + 1);
      }
    }
    const auto version = detail::parse_csv_int(f[12], "dictionary_version", line);
    if (version < 0 || version > std::numeric_limits<int>::max()) bad("dictionary_version out of range");
    row.dictionary_version = static_cast<int>(version);

    if ((row.kind == SpotKind::stimulus) != row.stimulus_id.has_value()) {
      bad("stimulus_id must be present iff kind is STIMULUS");
    }
    if ((row.status == SpotStatus::accepted) != row.chosen_term.has_value()) {
      bad("chosen_term must be present iff status is ACCEPTED");
    }
    if (row.status == SpotStatus::point_only && !row.refused_terms.empty()) {
      bad("POINT_ONLY row carries refused terms");
    }
    std::set<std::string> seen;
    for (const auto& t : row.refused_terms) {
      if (!seen.insert(t).second) bad("term '" + t + "' refused twice");
      if (row.chosen_term && *row.chosen_term == t) bad("chosen term '" + t + "' also refused");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace sym
