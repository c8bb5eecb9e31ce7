#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "initiative/mixture.hpp"
#include "initiative/rng.hpp"
#include "initiative/util.hpp"

namespace initiative {

// Recipe for re-simulated datasets: the link sizes are carried over from
// the source data while the initiative directions are redrawn from the
// given distribution.
struct ReplicaSpec {
  MixtureDistribution source;
  std::vector<std::uint64_t> sizes;  // one total per link
  std::size_t replicas = 100;
  std::uint64_t seed = 0;

  void validate() const {
    source.validate();
    if (replicas < 1) throw std::invalid_argument("ReplicaSpec: need at least 1 replica");
    if (sizes.empty()) throw std::invalid_argument("ReplicaSpec: empty size list");
    for (const std::uint64_t n : sizes)
      if (n == 0) throw std::invalid_argument("ReplicaSpec: link size must be >= 1");
  }
};

inline std::vector<std::uint64_t> link_sizes(std::span<const LinkCounts> counts) {
  std::vector<std::uint64_t> sizes;
  sizes.reserve(counts.size());
  for (const LinkCounts& c : counts) sizes.push_back(c.total());
  return sizes;
}

namespace detail {

inline LinkKey synthetic_link(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%08zu", index);
  return LinkKey{std::string(buf) + ".a", std::string(buf) + ".b"};
}

inline double sample_mixture(const MixtureDistribution& dist, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t j = 0; j < dist.grid.size(); ++j) {
    acc += dist.weights[j];
    if (u < acc) return dist.grid.points[j];
  }
  return dist.grid.points.back();
}

}  // namespace detail

// One synthetic dataset: for each link draw mu from the source
// distribution, draw the low-side count from Binomial(N_i, mu), and
// assign that side to a uniformly random endpoint. Deterministic given
// (seed, replica index); replicas own independent streams.
inline std::vector<LinkCounts> generate_replica(const ReplicaSpec& spec, std::size_t replica_index) {
  spec.validate();
  Rng rng = Rng::stream(spec.seed, replica_index);
  std::vector<LinkCounts> out;
  out.reserve(spec.sizes.size());
  for (std::size_t i = 0; i < spec.sizes.size(); ++i) {
    const std::uint64_t total = spec.sizes[i];
    const double mu = detail::sample_mixture(spec.source, rng);
    const std::uint64_t n = rng.binomial(total, mu);
    const bool low_side_is_a = rng.bernoulli(0.5);
    LinkCounts c;
    c.link = detail::synthetic_link(i);
    c.n_a = low_side_is_a ? n : total - n;
    c.n_b = total - c.n_a;
    out.push_back(std::move(c));
  }
  return out;
}

struct BootstrapReport {
  std::size_t replicas = 0;
  std::size_t succeeded = 0;
  std::vector<std::size_t> failed;       // replica indices whose estimate failed
  std::vector<double> bin_mean;          // per grid point, across successful replicas
  std::vector<double> bin_sd;
  double mean_mu_mean = 0;               // mean over replicas of the per-replica mean mu
  double mean_mu_spread = 0;             // standard deviation of the per-replica mean mu
  double mean_mu_error = 0;              // spread / sqrt(successes)
  bool bias_flag = false;                // some bin deviates from the source by > 2 spreads
};

// Re-estimate the mixture on R synthetic datasets drawn from `fitted` and
// report per-bin spread and bias. The per-replica estimates reuse the
// fitted grid.
inline BootstrapReport bootstrap_validate(const MixtureDistribution& fitted,
                                          const std::vector<std::uint64_t>& sizes, std::size_t r_count,
                                          std::uint64_t seed, const EstimatorOptions& opts = {}) {
  fitted.validate();
  if (r_count < 2) throw std::invalid_argument("bootstrap_validate: need at least 2 replicas");
  ReplicaSpec spec{fitted, sizes, r_count, seed};
  spec.validate();

  const std::size_t j_count = fitted.grid.size();
  std::vector<std::vector<double>> weights(r_count);
  std::vector<double> means(r_count, 0.0);
  std::vector<char> ok(r_count, 0);
  detail::parallel_chunks(r_count, opts.threads, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      try {
        const auto counts = generate_replica(spec, r);
        auto [dist, report] = estimate_link_mixture(counts, fitted.grid, opts);
        weights[r] = std::move(dist.weights);
        means[r] = report.summary.mean;
        ok[r] = 1;
      } catch (const std::exception&) {
        ok[r] = 0;
      }
    }
  });

  BootstrapReport rep;
  rep.replicas = r_count;
  for (std::size_t r = 0; r < r_count; ++r)
    if (ok[r])
      ++rep.succeeded;
    else
      rep.failed.push_back(r);
  if (rep.succeeded * 5 < r_count * 4)
    throw NumericError("bootstrap_validate: more than 20% of replicas failed (" +
                       std::to_string(rep.failed.size()) + "/" + std::to_string(r_count) + ")");

  rep.bin_mean.assign(j_count, 0.0);
  rep.bin_sd.assign(j_count, 0.0);
  std::vector<double> mu_means;
  mu_means.reserve(rep.succeeded);
  for (std::size_t r = 0; r < r_count; ++r)
    if (ok[r]) mu_means.push_back(means[r]);
  for (std::size_t j = 0; j < j_count; ++j) {
    std::vector<double> col;
    col.reserve(rep.succeeded);
    for (std::size_t r = 0; r < r_count; ++r)
      if (ok[r]) col.push_back(weights[r][j]);
    rep.bin_mean[j] = detail::mean_of(col);
    rep.bin_sd[j] = detail::sample_sd(col);
    const double dev = std::fabs(rep.bin_mean[j] - fitted.weights[j]);
    if (dev > 2.0 * rep.bin_sd[j]) rep.bias_flag = true;
  }
  rep.mean_mu_mean = detail::mean_of(mu_means);
  rep.mean_mu_spread = detail::sample_sd(mu_means);
  rep.mean_mu_error = rep.mean_mu_spread / std::sqrt(static_cast<double>(rep.succeeded));
  return rep;
}

// Actor sequences driven by run-length feedback: after x consecutive
// initiatives by one endpoint the next initiative switches sides with
// probability a * b^x. The first actor of each sequence is uniform.
// Initiatives are spaced two days apart so the records are valid
// initiatives under the default threshold.
inline InitiativeLog generate_feedback_sequences(double a, double b, std::size_t total_initiatives,
                                                 std::uint64_t seed,
                                                 std::size_t sequence_length = 1000) {
  if (!(a > 0.0) || !(b > 0.0) || b > 1.0)
    throw std::invalid_argument("generate_feedback_sequences: need a > 0 and 0 < b <= 1");
  if (a * b > 1.0)
    throw std::invalid_argument("generate_feedback_sequences: a*b > 1 is not a valid switch probability");
  if (sequence_length == 0) throw std::invalid_argument("generate_feedback_sequences: zero sequence length");

  InitiativeLog log;
  std::size_t emitted = 0;
  std::size_t seq_index = 0;
  constexpr std::int64_t kSpacing = 2 * kDefaultThresholdSeconds;
  while (emitted < total_initiatives) {
    const std::size_t len = std::min(sequence_length, total_initiatives - emitted);
    Rng rng = Rng::stream(seed, seq_index);
    LinkInitiatives seq;
    seq.link = detail::synthetic_link(seq_index);
    seq.records.reserve(len);
    bool actor_is_a = rng.bernoulli(0.5);
    std::size_t run = 0;
    for (std::size_t i = 0; i < len; ++i) {
      if (run > 0 && rng.bernoulli(a * std::pow(b, static_cast<double>(run)))) {
        actor_is_a = !actor_is_a;
        run = 1;
      } else {
        ++run;
      }
      seq.records.push_back({seq.link, actor_is_a ? seq.link.a : seq.link.b,
                             static_cast<std::int64_t>(i) * kSpacing, i});
    }
    log.push_back(std::move(seq));
    emitted += len;
    ++seq_index;
  }
  return log;
}

// Inverse-CDF draw from a truncated power law p(t) ~ t^alpha on
// [t_min, t_max].
inline double sample_truncated_power_law(Rng& rng, double alpha, double t_min, double t_max) {
  if (!(t_min > 0.0) || !(t_max > t_min))
    throw std::invalid_argument("sample_truncated_power_law: bad range");
  const double u = rng.uniform01();
  const double a1 = alpha + 1.0;
  if (std::fabs(a1) < 1e-12) {
    const double ratio = std::log(t_max / t_min);
    return t_min * std::exp(u * ratio);
  }
  const double lo = std::pow(t_min, a1);
  const double hi = std::pow(t_max, a1);
  return std::pow(lo + u * (hi - lo), 1.0 / a1);
}

inline void write_link_counts_tsv(std::ostream& os, std::span<const LinkCounts> counts,
                                  char delim = '\t') {
  os << "a" << delim << "b" << delim << "n_a" << delim << "n_b" << '\n';
  for (const LinkCounts& c : counts)
    os << c.link.a << delim << c.link.b << delim << c.n_a << delim << c.n_b << '\n';
}

inline std::vector<LinkCounts> read_link_counts_tsv(std::istream& in, char delim = '\t') {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<LinkCounts> out;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp_cr(line);
    if (!have_header) {
      if (line.empty()) continue;
      std::string expected = "a";
      expected += delim;
      expected += "b";
      expected += delim;
      expected += "n_a";
      expected += delim;
      expected += "n_b";
      if (line != expected)
        throw InputError("line " + std::to_string(line_no) + ": expected header '" + expected + "'");
      have_header = true;
      continue;
    }
    const auto fields = detail::split_fields(line, delim);
    if (fields.size() != 4)
      throw InputError("line " + std::to_string(line_no) + ": expected 4 fields");
    auto na = detail::parse_u64(fields[2]);
    auto nb = detail::parse_u64(fields[3]);
    if (fields[0].empty() || fields[1].empty() || !na || !nb)
      throw InputError("line " + std::to_string(line_no) + ": malformed link counts row");
    PersonId pa(fields[0]), pb(fields[1]);
    if (pa == pb) throw InputError("line " + std::to_string(line_no) + ": self-loop");
    if (pa > pb) {
      std::swap(pa, pb);
      std::swap(na, nb);  // counts follow their endpoints
    }
    out.push_back(LinkCounts{LinkKey{std::move(pa), std::move(pb)}, *na, *nb});
  }
  return out;
}

}  // namespace initiative
