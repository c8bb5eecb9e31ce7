#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "initiative/events.hpp"
#include "initiative/util.hpp"

namespace initiative {

// 24 hours, the default separation between follow-up and initiative.
inline constexpr std::int64_t kDefaultThresholdSeconds = 86400;

struct InitiativeRecord {
  LinkKey link;
  PersonId actor;
  std::int64_t ts = 0;
  std::size_t ordinal = 0;  // 0-based position among the link's initiatives
};

// Time-ordered initiatives of one link.
struct LinkInitiatives {
  LinkKey link;
  std::vector<InitiativeRecord> records;

  std::size_t size() const { return records.size(); }
};

using InitiativeLog = std::vector<LinkInitiatives>;

// Classify each event as initiative or follow-up. The first event on a
// link is always an initiative; a later event is an initiative iff its
// gap to the immediately preceding event on the same link is strictly
// greater than the threshold. Follow-ups are dropped from the stream.
inline InitiativeLog extract_initiatives(const Dataset& ds,
                                         std::int64_t threshold_seconds = kDefaultThresholdSeconds) {
  InitiativeLog out;
  out.reserve(ds.links.size());
  for (std::size_t li = 0; li < ds.links.size(); ++li) {
    LinkInitiatives seq;
    seq.link = ds.links[li];
    bool first = true;
    std::int64_t prev_ts = 0;
    std::size_t ordinal = 0;
    for (const Event& e : ds.link_events[li]) {
      const bool is_initiative = first || (e.ts - prev_ts > threshold_seconds);
      prev_ts = e.ts;
      first = false;
      if (is_initiative) seq.records.push_back({seq.link, e.from, e.ts, ordinal++});
    }
    out.push_back(std::move(seq));
  }
  return out;
}

struct LinkCounts {
  LinkKey link;
  std::uint64_t n_a = 0;  // initiatives taken by endpoint a
  std::uint64_t n_b = 0;

  std::uint64_t total() const { return n_a + n_b; }
};

// Per-link initiative tallies. Links with no initiatives are omitted.
inline std::vector<LinkCounts> link_counts(const InitiativeLog& log) {
  std::vector<LinkCounts> out;
  out.reserve(log.size());
  for (const LinkInitiatives& seq : log) {
    if (seq.records.empty()) continue;
    LinkCounts c;
    c.link = seq.link;
    for (const InitiativeRecord& r : seq.records) {
      if (r.actor == seq.link.a)
        ++c.n_a;
      else
        ++c.n_b;
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Keep only links with at least one initiative in each direction.
inline std::vector<LinkCounts> reciprocal_only(std::vector<LinkCounts> counts) {
  std::erase_if(counts, [](const LinkCounts& c) { return c.n_a == 0 || c.n_b == 0; });
  return counts;
}

struct InterEventStats {
  std::vector<std::int64_t> gaps;  // seconds, pooled across links, ascending
  std::optional<double> alpha;     // power-law exponent once fitted
  std::optional<double> fraction_below_threshold;
};

// Pool the waiting times between consecutive events on the same link.
// fraction_below_threshold is the share of gaps that would classify the
// later event as a follow-up (gap <= threshold).
inline InterEventStats interevent_gaps(const Dataset& ds,
                                       std::int64_t threshold_seconds = kDefaultThresholdSeconds) {
  InterEventStats stats;
  for (const auto& evs : ds.link_events)
    for (std::size_t i = 1; i < evs.size(); ++i) stats.gaps.push_back(evs[i].ts - evs[i - 1].ts);
  std::sort(stats.gaps.begin(), stats.gaps.end());
  if (!stats.gaps.empty()) {
    std::size_t below = 0;
    for (const std::int64_t g : stats.gaps)
      if (g <= threshold_seconds) ++below;
    stats.fraction_below_threshold =
        static_cast<double>(below) / static_cast<double>(stats.gaps.size());
  }
  return stats;
}

namespace detail {

// log of the normalization of t^alpha on [tmin, tmax], i.e.
// log integral_tmin^tmax t^alpha dt, stable across alpha = -1.
inline double log_power_law_norm(double alpha, double log_tmin, double log_tmax) {
  const double u = alpha + 1.0;
  const double width = log_tmax - log_tmin;
  if (std::fabs(u * width) < 1e-12) return log_tmin * u + std::log(width * (1.0 + 0.5 * u * width));
  // (e^{u*L2} - e^{u*L1}) / u = e^{u*L1} * expm1(u*width) / u, positive for all u != 0
  return u * log_tmin + std::log(std::expm1(u * width) / u);
}

}  // namespace detail

// Continuous maximum-likelihood exponent of a truncated power law
// p(t) ~ t^alpha on [t_min, t_max], fitted on the gaps that fall inside
// the range. The sign convention is that of the density itself, so
// heavy-tailed waiting times give negative alpha.
inline double fit_power_law(std::span<const double> gaps, double t_min, double t_max) {
  if (!(t_min > 0.0)) throw std::invalid_argument("fit_power_law: t_min must be positive");
  if (!(t_max > t_min)) throw std::invalid_argument("fit_power_law: empty range");
  double sum_log = 0.0;
  std::size_t n = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const double t : gaps) {
    if (t < t_min || t > t_max) continue;
    sum_log += std::log(t);
    ++n;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (n < 100)
    throw std::invalid_argument("fit_power_law: insufficient data (" + std::to_string(n) +
                                " gaps in range, need 100)");
  if (!(hi > lo)) throw std::invalid_argument("fit_power_law: degenerate input (all in-range gaps equal)");

  const double log_tmin = std::log(t_min);
  const double log_tmax = std::log(t_max);
  const auto loglik = [&](double alpha) {
    return alpha * sum_log -
           static_cast<double>(n) * detail::log_power_law_norm(alpha, log_tmin, log_tmax);
  };
  // The log-likelihood is concave in alpha (exponential family), so a
  // golden-section search converges to the maximum.
  double a = -30.0, b = 10.0;
  const double gr = 0.6180339887498949;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = loglik(x1), f2 = loglik(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-11; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = loglik(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = loglik(x1);
    }
  }
  return 0.5 * (a + b);
}

inline double fit_power_law(std::span<const std::int64_t> gaps, double t_min, double t_max) {
  std::vector<double> g(gaps.begin(), gaps.end());
  return fit_power_law(std::span<const double>(g), t_min, t_max);
}

struct LogBin {
  double lo = 0;
  double hi = 0;
  std::size_t count = 0;
  double density = 0;  // count / (width * total in range)
};

// Log-spaced histogram of the gap distribution, for plotting and for the
// least-squares diagnostic fit.
inline std::vector<LogBin> log_binned_density(std::span<const std::int64_t> gaps, std::size_t bins,
                                              double t_min, double t_max) {
  if (bins == 0) throw std::invalid_argument("log_binned_density: need at least one bin");
  if (!(t_min > 0.0) || !(t_max > t_min)) throw std::invalid_argument("log_binned_density: bad range");
  std::vector<LogBin> out(bins);
  const double llo = std::log(t_min), lhi = std::log(t_max);
  const double step = (lhi - llo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lo = std::exp(llo + step * static_cast<double>(i));
    out[i].hi = std::exp(llo + step * static_cast<double>(i + 1));
  }
  std::size_t total = 0;
  for (const std::int64_t g : gaps) {
    const double t = static_cast<double>(g);
    if (t < t_min || t > t_max) continue;
    auto idx = static_cast<std::size_t>((std::log(t) - llo) / step);
    if (idx >= bins) idx = bins - 1;
    ++out[idx].count;
    ++total;
  }
  if (total > 0)
    for (LogBin& b : out)
      b.density = static_cast<double>(b.count) / ((b.hi - b.lo) * static_cast<double>(total));
  return out;
}

// Least-squares slope of log density vs log t over non-empty bins.
// Diagnostic only; the MLE above is the primary estimate.
inline std::optional<double> fit_power_law_logbinned(std::span<const LogBin> bins) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const LogBin& b : bins) {
    if (b.count == 0) continue;
    const double x = std::log(std::sqrt(b.lo * b.hi));
    const double y = std::log(b.density);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::nullopt;
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

inline void write_initiatives_tsv(std::ostream& os, const InitiativeLog& log, char delim = '\t') {
  os << "link_a" << delim << "link_b" << delim << "actor" << delim << "ts" << delim << "ordinal"
     << '\n';
  for (const LinkInitiatives& seq : log)
    for (const InitiativeRecord& r : seq.records)
      os << seq.link.a << delim << seq.link.b << delim << r.actor << delim << r.ts << delim
         << r.ordinal << '\n';
}

}  // namespace initiative
