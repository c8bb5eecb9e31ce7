#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <tuple>
#include <vector>

#include "initiative/initiatives.hpp"
#include "initiative/util.hpp"

namespace initiative {

// Current run length at each position: the number of consecutive
// initiatives by the same actor ending there. Resets to 1 on every
// change of direction.
inline std::vector<std::uint32_t> run_length_annotate(const LinkInitiatives& seq) {
  std::vector<std::uint32_t> out;
  out.reserve(seq.records.size());
  std::uint32_t run = 0;
  const PersonId* prev = nullptr;
  for (const InitiativeRecord& r : seq.records) {
    run = (prev && *prev == r.actor) ? run + 1 : 1;
    out.push_back(run);
    prev = &r.actor;
  }
  return out;
}

struct TurnCurvePoint {
  std::size_t x = 0;             // run length
  std::uint64_t observations = 0;  // initiatives at this run length with a successor
  std::uint64_t turns = 0;         // successors taken by the other endpoint
  double probability = 0;
};

struct TurnCurve {
  std::vector<TurnCurvePoint> points;  // x = 1..max observed, contiguous
};

// Empirical probability of the initiative changing direction as a
// function of the current run length, pooled over sequences.
inline TurnCurve turn_probability_curve(const InitiativeLog& log,
                                        std::size_t min_length_filter = 0) {
  std::vector<std::uint64_t> obs, turns;
  for (const LinkInitiatives& seq : log) {
    if (seq.records.size() < min_length_filter) continue;
    if (seq.records.size() < 2) continue;
    const auto runs = run_length_annotate(seq);
    for (std::size_t i = 0; i + 1 < seq.records.size(); ++i) {
      const std::size_t x = runs[i];
      if (x >= obs.size()) {
        obs.resize(x + 1, 0);
        turns.resize(x + 1, 0);
      }
      ++obs[x];
      if (seq.records[i + 1].actor != seq.records[i].actor) ++turns[x];
    }
  }
  TurnCurve curve;
  for (std::size_t x = 1; x < obs.size(); ++x) {
    TurnCurvePoint p;
    p.x = x;
    p.observations = obs[x];
    p.turns = turns[x];
    p.probability = obs[x] ? static_cast<double>(turns[x]) / static_cast<double>(obs[x]) : 0.0;
    curve.points.push_back(p);
  }
  return curve;
}

struct ExpFit {
  double a = 0;
  double b = 0;
  double residual_norm = 0;              // weighted RMS residual in log space
  std::vector<std::size_t> lengths_used;
  std::vector<std::size_t> zero_points_excluded;  // qualifying x with y = 0
};

// Weighted least squares of log y(x) = log a + x log b over curve points
// with enough observations. Points with zero turns cannot enter the log
// fit; they are excluded and reported.
inline ExpFit fit_exponential(const TurnCurve& curve, std::uint64_t min_observations_per_point = 30) {
  ExpFit fit;
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (const TurnCurvePoint& p : curve.points) {
    if (p.observations < min_observations_per_point) continue;
    if (p.turns == 0) {
      fit.zero_points_excluded.push_back(p.x);
      continue;
    }
    const double w = static_cast<double>(p.observations);
    const double x = static_cast<double>(p.x);
    const double y = std::log(p.probability);
    sw += w;
    swx += w * x;
    swy += w * y;
    swxx += w * x * x;
    swxy += w * x * y;
    fit.lengths_used.push_back(p.x);
  }
  if (fit.lengths_used.size() < 2)
    throw std::invalid_argument("fit_exponential: fewer than 2 qualifying curve points");
  const double denom = sw * swxx - swx * swx;
  if (denom == 0.0) throw std::invalid_argument("fit_exponential: degenerate abscissa");
  const double slope = (sw * swxy - swx * swy) / denom;
  const double intercept = (swy - slope * swx) / sw;
  fit.a = std::exp(intercept);
  fit.b = std::exp(slope);
  double ss = 0;
  for (const TurnCurvePoint& p : curve.points) {
    if (p.observations < min_observations_per_point || p.turns == 0) continue;
    const double r = std::log(p.probability) - (intercept + slope * static_cast<double>(p.x));
    ss += static_cast<double>(p.observations) * r * r;
  }
  fit.residual_norm = std::sqrt(ss / sw);
  return fit;
}

struct LinkDiscontinuation {
  LinkKey link;
  bool eligible = false;      // enough initiatives and history to evaluate
  bool discontinued = false;
  bool triggered_a = false;   // endpoint a's outside activity tripped the rule
  bool triggered_b = false;
  std::uint32_t final_run_length = 0;
};

struct DiscontinuationReport {
  std::vector<LinkDiscontinuation> links;
  std::size_t eligible_count = 0;
  std::size_t discontinued_count = 0;
  std::optional<double> mean_final_run_length;  // over discontinued links
  double factor = 10.0;
  std::uint64_t min_initiatives = 15;
};

// Restrict a log to links with at least one initiative in each direction.
inline InitiativeLog reciprocal_sequences(const InitiativeLog& log) {
  InitiativeLog out;
  for (const LinkInitiatives& seq : log) {
    bool a = false, b = false;
    for (const InitiativeRecord& r : seq.records) (r.actor == seq.link.a ? a : b) = true;
    if (a && b) out.push_back(seq);
  }
  return out;
}

// A relation counts as discontinued when one endpoint has taken more
// initiatives with other people since the last contact than `factor`
// times the average number of such initiatives between past contacts.
// Contacts are all events on the link (initiative or follow-up); outside
// initiatives are counted strictly between contact timestamps. Both
// endpoints are evaluated and either can trip the rule. Outside activity
// is always counted over the full log; `reciprocal_only` affects only
// which links are eligible for flagging.
inline DiscontinuationReport detect_discontinuations(const Dataset& ds, const InitiativeLog& log,
                                                     double factor = 10.0,
                                                     std::uint64_t min_initiatives = 15,
                                                     std::uint64_t min_history_gaps = 3,
                                                     bool reciprocal_only = true) {
  if (!(factor > 0.0)) throw std::invalid_argument("detect_discontinuations: factor must be > 0");

  // Per-person timestamps of outgoing initiatives, tagged by link so a
  // link's own initiatives can be excluded from its separation counts.
  std::map<PersonId, std::vector<std::pair<std::int64_t, std::size_t>>> outgoing;
  for (std::size_t li = 0; li < log.size(); ++li)
    for (const InitiativeRecord& r : log[li].records) outgoing[r.actor].emplace_back(r.ts, li);
  for (auto& [person, stream] : outgoing) std::sort(stream.begin(), stream.end());

  const auto count_outside_between = [&](const PersonId& p, std::size_t own_link,
                                         std::int64_t after, std::int64_t before) {
    // Initiatives by p on other links with after < ts < before.
    const auto it = outgoing.find(p);
    if (it == outgoing.end()) return std::uint64_t{0};
    const auto& stream = it->second;
    auto lo = std::upper_bound(stream.begin(), stream.end(),
                               std::make_pair(after, std::numeric_limits<std::size_t>::max()));
    std::uint64_t n = 0;
    for (; lo != stream.end() && lo->first < before; ++lo)
      if (lo->second != own_link) ++n;
    return n;
  };

  DiscontinuationReport rep;
  rep.factor = factor;
  rep.min_initiatives = min_initiatives;
  rep.links.reserve(log.size());
  for (std::size_t li = 0; li < log.size(); ++li) {
    const LinkInitiatives& seq = log[li];
    LinkDiscontinuation d;
    d.link = seq.link;
    if (!seq.records.empty()) {
      const auto runs = run_length_annotate(seq);
      d.final_run_length = runs.back();
    }
    bool reciprocal = false;
    {
      bool a = false, b = false;
      for (const InitiativeRecord& r : seq.records) (r.actor == seq.link.a ? a : b) = true;
      reciprocal = a && b;
    }
    const auto idx = ds.link_index(seq.link);
    const std::vector<Event>* events = idx ? &ds.link_events[*idx] : nullptr;
    if (seq.records.size() >= min_initiatives && events && events->size() >= min_history_gaps + 1 &&
        (reciprocal || !reciprocal_only)) {
      d.eligible = true;
      const std::int64_t last_contact = events->back().ts;
      for (int side = 0; side < 2; ++side) {
        const PersonId& p = side == 0 ? seq.link.a : seq.link.b;
        double hist_sum = 0;
        const std::size_t gaps = events->size() - 1;
        for (std::size_t k = 0; k + 1 < events->size(); ++k)
          hist_sum += static_cast<double>(
              count_outside_between(p, li, (*events)[k].ts, (*events)[k + 1].ts));
        const double hist_mean = hist_sum / static_cast<double>(gaps);
        const std::uint64_t since_last = count_outside_between(
            p, li, last_contact, std::numeric_limits<std::int64_t>::max());
        if (static_cast<double>(since_last) > factor * hist_mean) {
          d.discontinued = true;
          (side == 0 ? d.triggered_a : d.triggered_b) = true;
        }
      }
    }
    rep.links.push_back(std::move(d));
  }

  double sum_final = 0;
  for (const LinkDiscontinuation& d : rep.links) {
    if (d.eligible) ++rep.eligible_count;
    if (d.discontinued) {
      ++rep.discontinued_count;
      sum_final += static_cast<double>(d.final_run_length);
    }
  }
  if (rep.discontinued_count > 0)
    rep.mean_final_run_length = sum_final / static_cast<double>(rep.discontinued_count);
  return rep;
}

struct EndingCurvePoint {
  std::size_t x = 0;
  std::uint64_t runs_reaching = 0;  // maximal runs of length >= x on eligible links
  std::uint64_t endings = 0;        // discontinued links whose final run length is exactly x
  double probability = 0;
};

struct EndingCurve {
  std::vector<EndingCurvePoint> points;
  std::optional<double> mean_final_run_length;
  bool empty_marker = false;  // no discontinued links
};

// Probability of a relationship ending at a given run length: among all
// maximal runs on eligible links that reach length x, the fraction that
// are the final run of a discontinued link of exactly that length.
inline EndingCurve ending_probability_curve(const DiscontinuationReport& report,
                                            const InitiativeLog& log) {
  std::map<LinkKey, const LinkDiscontinuation*> by_link;
  for (const LinkDiscontinuation& d : report.links) by_link[d.link] = &d;

  std::vector<std::uint64_t> run_count;   // runs of length exactly x
  std::vector<std::uint64_t> end_count;   // discontinuations at final run length x
  for (const LinkInitiatives& seq : log) {
    const auto it = by_link.find(seq.link);
    if (it == by_link.end() || !it->second->eligible) continue;
    const auto runs = run_length_annotate(seq);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const bool run_ends = i + 1 == runs.size() || runs[i + 1] == 1;
      if (!run_ends) continue;
      const std::size_t len = runs[i];
      if (len >= run_count.size()) run_count.resize(len + 1, 0);
      ++run_count[len];
    }
    if (it->second->discontinued) {
      const std::size_t len = it->second->final_run_length;
      if (len >= end_count.size()) end_count.resize(len + 1, 0);
      ++end_count[len];
    }
  }

  EndingCurve curve;
  curve.mean_final_run_length = report.mean_final_run_length;
  if (report.discontinued_count == 0) {
    curve.empty_marker = true;
    return curve;
  }
  // runs_reaching(x) = number of maximal runs with length >= x
  std::uint64_t reaching = 0;
  for (std::size_t x = run_count.size(); x-- > 1;) {
    reaching += run_count[x];
    EndingCurvePoint p;
    p.x = x;
    p.runs_reaching = reaching;
    p.endings = x < end_count.size() ? end_count[x] : 0;
    p.probability =
        reaching ? static_cast<double>(p.endings) / static_cast<double>(reaching) : 0.0;
    curve.points.push_back(p);
  }
  std::reverse(curve.points.begin(), curve.points.end());
  return curve;
}

inline void write_turn_curve_tsv(std::ostream& os, const TurnCurve& curve, char delim = '\t') {
  os << "x" << delim << "observations" << delim << "turns" << delim << "probability" << '\n';
  for (const TurnCurvePoint& p : curve.points)
    os << p.x << delim << p.observations << delim << p.turns << delim
       << detail::format_g(p.probability) << '\n';
}

inline void write_ending_curve_tsv(std::ostream& os, const EndingCurve& curve, char delim = '\t') {
  os << "x" << delim << "ending_probability" << '\n';
  for (const EndingCurvePoint& p : curve.points)
    os << p.x << delim << detail::format_g(p.probability) << '\n';
}

}  // namespace initiative
