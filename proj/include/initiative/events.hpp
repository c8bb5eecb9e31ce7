#pragma once

#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "initiative/util.hpp"

namespace initiative {

using PersonId = std::string;

enum class Channel : std::uint8_t { call, text };

inline const char* to_string(Channel c) { return c == Channel::call ? "call" : "text"; }

inline std::optional<Channel> channel_from(std::string_view s) {
  if (s == "call") return Channel::call;
  if (s == "text") return Channel::text;
  return std::nullopt;
}

// One timestamped directed communication event.
struct Event {
  std::int64_t ts = 0;  // seconds since the Unix epoch
  PersonId from;
  PersonId to;
  Channel channel = Channel::call;

  friend bool operator==(const Event&, const Event&) = default;
};

// Unordered person pair in canonical order: a is the lexicographically
// smaller id, so (u, v) and (v, u) name the same link.
struct LinkKey {
  PersonId a;
  PersonId b;

  friend auto operator<=>(const LinkKey&, const LinkKey&) = default;
};

inline LinkKey canonical_link(const PersonId& u, const PersonId& v) {
  if (u == v) throw std::invalid_argument("canonical_link: self-loop on '" + u + "'");
  return u < v ? LinkKey{u, v} : LinkKey{v, u};
}

inline PersonId other_endpoint(const LinkKey& link, const PersonId& p) {
  return p == link.a ? link.b : link.a;
}

inline constexpr std::array<const char*, 5> kTraitNames = {
    "agreeableness", "conscientiousness", "extraversion", "neuroticism", "openness"};

struct TraitRecord {
  PersonId person;
  double agreeableness = 0;
  double conscientiousness = 0;
  double extraversion = 0;
  double neuroticism = 0;
  double openness = 0;
};

inline double trait_value(const TraitRecord& t, std::size_t index) {
  switch (index) {
    case 0: return t.agreeableness;
    case 1: return t.conscientiousness;
    case 2: return t.extraversion;
    case 3: return t.neuroticism;
    case 4: return t.openness;
    default: throw std::invalid_argument("trait_value: index out of range");
  }
}

struct EventFormat {
  char delimiter = '\t';
  bool strict = true;  // lenient mode skips malformed rows and records them
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t kept = 0;
  std::size_t deduplicated = 0;
  std::size_t rejected = 0;
  std::vector<RejectedRow> rejects;
};

// Immutable event collection grouped by canonical link. Events within a
// link are non-decreasing in timestamp with input order preserved on ties.
// Safe for concurrent reads once built.
struct Dataset {
  std::vector<LinkKey> links;                   // ascending
  std::vector<std::vector<Event>> link_events;  // parallel to links
  std::vector<PersonId> persons;                // ascending, distinct
  std::size_t total_events = 0;

  std::size_t link_count() const { return links.size(); }

  std::optional<std::size_t> link_index(const LinkKey& key) const {
    const auto it = std::lower_bound(links.begin(), links.end(), key);
    if (it == links.end() || *it != key) return std::nullopt;
    return static_cast<std::size_t>(it - links.begin());
  }

  const std::vector<Event>* events_for(const LinkKey& key) const {
    const auto idx = link_index(key);
    return idx ? &link_events[*idx] : nullptr;
  }
};

// Group validated events by canonical link, drop exact duplicates
// (same timestamp, from, to, channel), and time-sort each link. This is
// the single construction path for datasets, so generated and ingested
// data share the same invariants.
inline Dataset build_dataset(const std::vector<Event>& events, std::size_t* dedup_count = nullptr) {
  std::set<std::tuple<std::int64_t, PersonId, PersonId, std::uint8_t>> seen;
  std::map<LinkKey, std::vector<Event>> by_link;
  std::set<PersonId> persons;
  std::size_t dedups = 0;
  for (const Event& e : events) {
    const auto key = std::make_tuple(e.ts, e.from, e.to, static_cast<std::uint8_t>(e.channel));
    if (!seen.insert(key).second) {
      ++dedups;
      continue;
    }
    by_link[canonical_link(e.from, e.to)].push_back(e);
    persons.insert(e.from);
    persons.insert(e.to);
  }
  Dataset ds;
  ds.links.reserve(by_link.size());
  ds.link_events.reserve(by_link.size());
  for (auto& [link, evs] : by_link) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event& x, const Event& y) { return x.ts < y.ts; });
    ds.total_events += evs.size();
    ds.links.push_back(link);
    ds.link_events.push_back(std::move(evs));
  }
  ds.persons.assign(persons.begin(), persons.end());
  if (dedup_count) *dedup_count = dedups;
  return ds;
}

namespace detail {

inline bool has_whitespace(std::string_view s) {
  for (unsigned char c : s)
    if (std::isspace(c)) return true;
  return false;
}

inline std::string expected_event_header(char delim) {
  std::string h = "ts";
  h += delim;
  h += "from";
  h += delim;
  h += "to";
  h += delim;
  h += "channel";
  return h;
}

inline std::string expected_trait_header(char delim) {
  std::string h = "person";
  for (const char* name : kTraitNames) {
    h += delim;
    h += name;
  }
  return h;
}

inline void chomp_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

// Returns the parsed event or a rejection reason.
inline std::optional<std::string> parse_event_row(std::string_view line, char delim, Event& out) {
  const auto fields = split_fields(line, delim);
  if (fields.size() != 4) return "expected 4 fields, got " + std::to_string(fields.size());
  const auto ts = parse_i64(fields[0]);
  if (!ts) return "bad timestamp '" + std::string(fields[0]) + "'";
  if (*ts < 0) return "negative timestamp";
  if (fields[1].empty() || fields[2].empty()) return "empty person id";
  if (has_whitespace(fields[1]) || has_whitespace(fields[2])) return "whitespace in person id";
  if (fields[1] == fields[2]) return "self-loop";
  const auto ch = channel_from(fields[3]);
  if (!ch) return "unknown channel '" + std::string(fields[3]) + "'";
  out.ts = *ts;
  out.from = std::string(fields[1]);
  out.to = std::string(fields[2]);
  out.channel = *ch;
  return std::nullopt;
}

}  // namespace detail

// Read an event table: header `ts<d>from<d>to<d>channel`, one event per
// row. An empty stream yields an empty dataset. In strict mode the first
// malformed row aborts with its line number; in lenient mode malformed
// rows are skipped and listed in the report.
inline Dataset ingest_events(std::istream& in, const EventFormat& fmt = {},
                             IngestReport* report = nullptr) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep = IngestReport{};

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp_cr(line);
    if (!have_header) {
      if (line.empty()) continue;  // blank-only input counts as an empty source
      const std::string expected = detail::expected_event_header(fmt.delimiter);
      if (line != expected)
        throw InputError("line " + std::to_string(line_no) + ": expected header '" + expected + "'");
      have_header = true;
      continue;
    }
    ++rep.rows_read;
    Event e;
    if (auto reason = detail::parse_event_row(line, fmt.delimiter, e)) {
      if (fmt.strict)
        throw InputError("line " + std::to_string(line_no) + ": " + *reason);
      ++rep.rejected;
      rep.rejects.push_back({line_no, *reason});
      continue;
    }
    events.push_back(std::move(e));
  }
  std::size_t dedups = 0;
  Dataset ds = build_dataset(events, &dedups);
  rep.deduplicated = dedups;
  rep.kept = ds.total_events;
  return ds;
}

// Read the personality table. Always strict: the header and all five
// scores are required, scores must be finite, and person ids must be
// unique. Persons absent from the event data are retained for later joins.
inline std::map<PersonId, TraitRecord> ingest_traits(std::istream& in, char delimiter = '\t') {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::map<PersonId, TraitRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp_cr(line);
    if (!have_header) {
      const std::string expected = detail::expected_trait_header(delimiter);
      if (line != expected)
        throw InputError("line " + std::to_string(line_no) + ": expected header '" + expected + "'");
      have_header = true;
      continue;
    }
    const auto fields = detail::split_fields(line, delimiter);
    if (fields.size() != 6)
      throw InputError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                       std::to_string(fields.size()));
    if (fields[0].empty() || detail::has_whitespace(fields[0]))
      throw InputError("line " + std::to_string(line_no) + ": bad person id");
    TraitRecord rec;
    rec.person = std::string(fields[0]);
    double scores[5];
    for (std::size_t i = 0; i < 5; ++i) {
      const auto v = detail::parse_real(fields[i + 1]);
      if (!v)
        throw InputError("line " + std::to_string(line_no) + ": bad " +
                         std::string(kTraitNames[i]) + " score");
      if (!std::isfinite(*v))
        throw InputError("line " + std::to_string(line_no) + ": non-finite " +
                         std::string(kTraitNames[i]) + " score");
      scores[i] = *v;
    }
    rec.agreeableness = scores[0];
    rec.conscientiousness = scores[1];
    rec.extraversion = scores[2];
    rec.neuroticism = scores[3];
    rec.openness = scores[4];
    if (!out.emplace(rec.person, rec).second)
      throw InputError("line " + std::to_string(line_no) + ": duplicate person '" + rec.person + "'");
  }
  if (!have_header) throw InputError("trait table: missing header");
  return out;
}

inline void write_events_tsv(std::ostream& os, const std::vector<Event>& events, char delim = '\t') {
  os << detail::expected_event_header(delim) << '\n';
  for (const Event& e : events)
    os << e.ts << delim << e.from << delim << e.to << delim << to_string(e.channel) << '\n';
}

}  // namespace initiative
