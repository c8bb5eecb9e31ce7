#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "initiative/events.hpp"
#include "initiative/initiatives.hpp"
#include "initiative/mixture.hpp"
#include "initiative/rng.hpp"
#include "initiative/util.hpp"

namespace initiative {

struct PersonEstimate {
  PersonId person;
  std::uint64_t outgoing = 0;  // initiatives the person authored
  std::uint64_t total = 0;     // initiatives on any of the person's links
  std::optional<double> mu_p;  // outgoing / total, unset when total = 0
  bool eligible = false;       // total >= the configured threshold
};

// Point-estimate initiative ratios for every person seen in the log.
inline std::vector<PersonEstimate> person_estimates(const InitiativeLog& log,
                                                    std::uint64_t eligibility_threshold = 200) {
  std::map<PersonId, PersonEstimate> by_person;
  for (const LinkInitiatives& seq : log) {
    for (const InitiativeRecord& r : seq.records) {
      auto& actor = by_person[r.actor];
      actor.person = r.actor;
      ++actor.outgoing;
      ++actor.total;
      const PersonId other = other_endpoint(seq.link, r.actor);
      auto& peer = by_person[other];
      peer.person = other;
      ++peer.total;
    }
  }
  std::vector<PersonEstimate> out;
  out.reserve(by_person.size());
  for (auto& [id, est] : by_person) {
    if (est.total > 0)
      est.mu_p = static_cast<double>(est.outgoing) / static_cast<double>(est.total);
    est.eligible = est.total >= eligibility_threshold;
    out.push_back(std::move(est));
  }
  return out;
}

inline std::vector<PersonCounts> person_mixture_counts(std::span<const PersonEstimate> estimates) {
  std::vector<PersonCounts> out;
  out.reserve(estimates.size());
  for (const PersonEstimate& e : estimates)
    if (e.total > 0) out.push_back({e.outgoing, e.total});
  return out;
}

// Mean number of distinct counterparties over every contiguous window of
// `window` consecutive incoming initiatives (stride 1). Unset when the
// person has fewer incoming initiatives than the window.
inline std::optional<double> friend_abundance(std::span<const PersonId> incoming_counterparties,
                                              std::size_t window = 20) {
  if (window == 0) throw std::invalid_argument("friend_abundance: window must be >= 1");
  const std::size_t n = incoming_counterparties.size();
  if (n < window) return std::nullopt;
  std::unordered_map<PersonId, std::uint32_t> in_window;
  std::size_t distinct = 0;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (++in_window[incoming_counterparties[i]] == 1) ++distinct;
    if (i + 1 >= window) {
      sum += distinct;
      const PersonId& leaving = incoming_counterparties[i + 1 - window];
      if (--in_window[leaving] == 0) --distinct;
    }
  }
  return static_cast<double>(sum) / static_cast<double>(n - window + 1);
}

struct AbundancePoint {
  PersonId person;
  double abundance = 0;
  std::size_t window = 20;
};

// Incoming initiative streams (time-ordered counterparty ids) per person.
inline std::map<PersonId, std::vector<PersonId>> incoming_streams(const InitiativeLog& log) {
  std::map<PersonId, std::vector<std::tuple<std::int64_t, PersonId, std::size_t>>> raw;
  for (const LinkInitiatives& seq : log)
    for (const InitiativeRecord& r : seq.records)
      raw[other_endpoint(seq.link, r.actor)].emplace_back(r.ts, r.actor, r.ordinal);
  std::map<PersonId, std::vector<PersonId>> out;
  for (auto& [person, stream] : raw) {
    std::sort(stream.begin(), stream.end());
    auto& ids = out[person];
    ids.reserve(stream.size());
    for (auto& [ts, actor, ord] : stream) ids.push_back(std::move(actor));
  }
  return out;
}

inline std::vector<AbundancePoint> friend_abundances(const InitiativeLog& log,
                                                     std::size_t window = 20) {
  std::vector<AbundancePoint> out;
  for (const auto& [person, stream] : incoming_streams(log))
    if (const auto a = friend_abundance(stream, window))
      out.push_back({person, *a, window});
  return out;
}

struct BinnedPoint {
  double center = 0;
  std::optional<double> mean;  // unset for empty bins
  std::size_t count = 0;
};

// Mean of y within equal-width bins over [min x, max x].
inline std::vector<BinnedPoint> binned_means(std::span<const double> x, std::span<const double> y,
                                             std::size_t bins) {
  if (x.size() != y.size()) throw std::invalid_argument("binned_means: length mismatch");
  if (x.empty()) throw std::invalid_argument("binned_means: empty input");
  if (bins < 1) throw std::invalid_argument("binned_means: need at least one bin");
  double lo = x[0], hi = x[0];
  for (const double v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> sums(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t idx = 0;
    if (width > 0.0) idx = std::min(bins - 1, static_cast<std::size_t>((x[i] - lo) / width));
    sums[idx] += y[i];
    ++counts[idx];
  }
  std::vector<BinnedPoint> out(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].center = width > 0.0 ? lo + width * (static_cast<double>(i) + 0.5) : lo;
    out[i].count = counts[i];
    if (counts[i] > 0) out[i].mean = sums[i] / static_cast<double>(counts[i]);
  }
  return out;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
  const double mx = detail::mean_of(x), my = detail::mean_of(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: degenerate (zero variance)");
  return sxy / std::sqrt(sxx * syy);
}

struct CorrelationResult {
  double r = 0;
  double std_error = 0;  // standard deviation of r over bootstrap resamples
  std::size_t n = 0;
  std::size_t bootstrap_rounds = 0;
};

// Pearson r with a bootstrap standard error: resample pairs with
// replacement, recompute r, report the spread. Deterministic for a fixed
// seed. Resamples that collapse to zero variance are skipped.
inline CorrelationResult pearson_with_bootstrap(std::span<const double> x, std::span<const double> y,
                                                std::size_t rounds = 1000, std::uint64_t seed = 0) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_with_bootstrap: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("pearson_with_bootstrap: need at least 3 samples");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("pearson_with_bootstrap: non-finite sample");
  if (rounds < 2) throw std::invalid_argument("pearson_with_bootstrap: need at least 2 rounds");

  CorrelationResult res;
  res.r = pearson(x, y);
  res.n = x.size();
  res.bootstrap_rounds = rounds;

  Rng rng = Rng::stream(seed, 0);
  const std::size_t n = x.size();
  std::vector<double> bx(n), by(n), rs;
  rs.reserve(rounds);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(rng.below(n));
      bx[i] = x[k];
      by[i] = y[k];
    }
    try {
      rs.push_back(pearson(bx, by));
    } catch (const std::invalid_argument&) {
      // degenerate resample; skip
    }
  }
  if (rs.size() < 2) throw NumericError("pearson_with_bootstrap: too few valid resamples");
  res.std_error = detail::sample_sd(rs);
  return res;
}

struct TraitCorrelations {
  std::array<CorrelationResult, 5> by_trait;  // order follows kTraitNames
  std::size_t join_size = 0;
};

// Inner-join person estimates with the trait table and correlate mu_p
// against each of the five trait scores.
inline TraitCorrelations trait_correlations(std::span<const PersonEstimate> estimates,
                                            const std::map<PersonId, TraitRecord>& traits,
                                            std::size_t bootstrap_rounds = 1000,
                                            std::uint64_t seed = 0) {
  std::vector<double> mu;
  std::array<std::vector<double>, 5> cols;
  for (const PersonEstimate& e : estimates) {
    if (!e.mu_p) continue;
    const auto it = traits.find(e.person);
    if (it == traits.end()) continue;
    mu.push_back(*e.mu_p);
    for (std::size_t t = 0; t < 5; ++t) cols[t].push_back(trait_value(it->second, t));
  }
  if (mu.size() < 3)
    throw std::invalid_argument("trait_correlations: join too small (" + std::to_string(mu.size()) +
                                " persons)");
  TraitCorrelations out;
  out.join_size = mu.size();
  for (std::size_t t = 0; t < 5; ++t)
    out.by_trait[t] = pearson_with_bootstrap(mu, cols[t], bootstrap_rounds, seed + t);
  return out;
}

inline void write_persons_tsv(std::ostream& os, std::span<const PersonEstimate> estimates,
                              const std::map<PersonId, std::vector<PersonId>>& incoming,
                              std::size_t window = 20, char delim = '\t') {
  os << "person" << delim << "outgoing" << delim << "total" << delim << "mu_p" << delim
     << "friend_abundance" << delim << "eligible" << '\n';
  for (const PersonEstimate& e : estimates) {
    std::optional<double> abundance;
    const auto it = incoming.find(e.person);
    if (it != incoming.end()) abundance = friend_abundance(it->second, window);
    os << e.person << delim << e.outgoing << delim << e.total << delim
       << (e.mu_p ? detail::format_g(*e.mu_p) : "nan") << delim
       << (abundance ? detail::format_g(*abundance) : "nan") << delim << (e.eligible ? 1 : 0)
       << '\n';
  }
}

}  // namespace initiative
