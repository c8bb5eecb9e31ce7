#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "initiative/initiatives.hpp"
#include "initiative/util.hpp"

namespace initiative {

// Ordered support points for a discretized mixing distribution.
struct Grid {
  std::vector<double> points;

  static Grid uniform(double lo, double hi, std::size_t n) {
    if (n < 2) throw std::invalid_argument("Grid: need at least 2 points");
    if (!(hi > lo)) throw std::invalid_argument("Grid: empty domain");
    Grid g;
    g.points.resize(n);
    for (std::size_t j = 0; j < n; ++j)
      g.points[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
    g.points.front() = lo;
    g.points.back() = hi;
    return g;
  }

  std::size_t size() const { return points.size(); }

  void validate() const {
    if (points.size() < 2) throw std::invalid_argument("Grid: need at least 2 points");
    for (std::size_t j = 1; j < points.size(); ++j)
      if (!(points[j] > points[j - 1]))
        throw std::invalid_argument("Grid: points must be strictly increasing");
  }

  std::size_t nearest(double x) const {
    const auto it = std::lower_bound(points.begin(), points.end(), x);
    if (it == points.begin()) return 0;
    if (it == points.end()) return points.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - points.begin());
    return (x - points[hi - 1] <= points[hi] - x) ? hi - 1 : hi;
  }
};

inline Grid link_grid(std::size_t n = 51) { return Grid::uniform(0.0, 0.5, n); }
inline Grid person_grid(std::size_t n = 51) { return Grid::uniform(0.0, 1.0, n); }

// Probability weights over a grid; weights sum to one.
struct MixtureDistribution {
  Grid grid;
  std::vector<double> weights;

  void validate() const {
    grid.validate();
    if (weights.size() != grid.size())
      throw std::invalid_argument("MixtureDistribution: weight/grid size mismatch");
    double sum = 0.0;
    for (const double w : weights) {
      if (!(w >= 0.0) || w > 1.0 + 1e-12)
        throw std::invalid_argument("MixtureDistribution: weight outside [0, 1]");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("MixtureDistribution: weights do not sum to 1");
  }
};

enum class InitMode { histogram, uniform };

struct EstimatorOptions {
  std::size_t max_iterations = 10000;
  double tolerance = 1e-8;       // absolute log-likelihood change per iteration
  std::uint64_t min_total = 1;   // observations with fewer events are dropped
  bool normal_approx = false;    // normal pdf instead of exact pmf for totals > 100
  InitMode init = InitMode::histogram;
  unsigned threads = 1;

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("EstimatorOptions: max_iterations < 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("EstimatorOptions: tolerance must be > 0");
  }
};

struct MixtureSummary {
  double mean = 0;
  double zero_bin_weight = 0;                   // weight on the smallest grid point
  std::optional<double> mean_excluding_zero;    // unset when all mass sits in the zero bin
};

struct EstimatorReport {
  double log_likelihood = 0;
  std::size_t iterations = 0;    // accepted ascent steps (EM and refinement)
  std::vector<double> trace;     // log-likelihood after each accepted step
  bool converged = false;        // stationarity certificate met
  double kkt_gap = 0;            // relative gap between support gradients and the max gradient
  MixtureSummary summary;
  std::size_t rows_used = 0;
  std::size_t rows_filtered = 0;
};

// Per-person initiative tallies feeding the person-level estimator.
struct PersonCounts {
  std::uint64_t out = 0;
  std::uint64_t total = 0;
};

namespace detail {

inline double log_choose(std::uint64_t n, std::uint64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

inline double log_binomial_pmf(std::uint64_t n, std::uint64_t total, double p) {
  if (p <= 0.0) return n == 0 ? 0.0 : kNegInf;
  if (p >= 1.0) return n == total ? 0.0 : kNegInf;
  return log_choose(total, n) + static_cast<double>(n) * std::log(p) +
         static_cast<double>(total - n) * std::log1p(-p);
}

// Normal approximation to the binomial pmf, usable when the exact
// product of a huge coefficient and tiny powers would be awkward.
inline double log_binomial_pmf_normal(std::uint64_t n, std::uint64_t total, double p) {
  if (p <= 0.0) return n == 0 ? 0.0 : kNegInf;
  if (p >= 1.0) return n == total ? 0.0 : kNegInf;
  const double mean = static_cast<double>(total) * p;
  const double var = mean * (1.0 - p);
  const double d = static_cast<double>(n) - mean;
  return -0.5 * std::log(6.283185307179586 * var) - d * d / (2.0 * var);
}

inline double bin_log_pmf(std::uint64_t n, std::uint64_t total, double p, bool normal_approx) {
  if (normal_approx && total > 100) return log_binomial_pmf_normal(n, total, p);
  return log_binomial_pmf(n, total, p);
}

// Deduplicated observation matrix: one row per distinct count pattern,
// carrying its multiplicity. logc holds log per-component likelihoods,
// scaled holds exp(logc - row max) for stable linear-space sums.
struct Rows {
  std::vector<double> weight;
  std::vector<double> logc;     // rows x cols
  std::vector<double> row_max;
  std::vector<double> scaled;   // rows x cols
  std::size_t rows = 0;
  std::size_t cols = 0;
  double total_weight = 0;

  double logc_at(std::size_t u, std::size_t j) const { return logc[u * cols + j]; }
};

inline void finish_rows(Rows& rows, unsigned threads) {
  rows.row_max.assign(rows.rows, kNegInf);
  rows.scaled.assign(rows.rows * rows.cols, 0.0);
  parallel_chunks(rows.rows, threads, 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t u = lo; u < hi; ++u) {
      double m = kNegInf;
      for (std::size_t j = 0; j < rows.cols; ++j) m = std::max(m, rows.logc_at(u, j));
      if (m == kNegInf)
        throw NumericError("mixture: an observation has zero likelihood at every grid point");
      rows.row_max[u] = m;
      for (std::size_t j = 0; j < rows.cols; ++j) {
        const double lc = rows.logc_at(u, j);
        rows.scaled[u * rows.cols + j] = lc == kNegInf ? 0.0 : std::exp(lc - m);
      }
    }
  });
  for (const double w : rows.weight) rows.total_weight += w;
}

// Folded per-link component likelihood: both identities of the
// less-initiating endpoint enter with prior 1/2, so
// c_j = (B(n_a; N, mu_j) + B(n_b; N, mu_j)) / 2. The two terms are kept
// even when n_a = n_b.
inline double folded_log_component(std::uint64_t n_a, std::uint64_t n_b, double mu,
                                   bool normal_approx) {
  const std::uint64_t total = n_a + n_b;
  const double la = bin_log_pmf(n_a, total, mu, normal_approx);
  const double lb = bin_log_pmf(n_b, total, mu, normal_approx);
  return log_sum_exp(la, lb) + std::log(0.5);
}

inline Rows build_folded_rows(std::span<const LinkCounts> links, const Grid& grid,
                              bool normal_approx, std::uint64_t min_total, unsigned threads,
                              std::size_t* filtered_out) {
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> dedup;  // (min count, total) -> weight
  std::size_t filtered = 0;
  for (const LinkCounts& c : links) {
    const std::uint64_t total = c.total();
    if (total == 0) throw std::invalid_argument("mixture: link with zero initiatives");
    if (total < min_total) {
      ++filtered;
      continue;
    }
    dedup[{std::min(c.n_a, c.n_b), total}] += 1.0;
  }
  if (filtered_out) *filtered_out = filtered;
  Rows rows;
  rows.rows = dedup.size();
  rows.cols = grid.size();
  rows.weight.reserve(rows.rows);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> keys;
  keys.reserve(rows.rows);
  for (const auto& [key, w] : dedup) {
    keys.push_back(key);
    rows.weight.push_back(w);
  }
  rows.logc.assign(rows.rows * rows.cols, 0.0);
  parallel_chunks(rows.rows, threads, 32, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t u = lo; u < hi; ++u) {
      const auto [n_min, total] = keys[u];
      for (std::size_t j = 0; j < rows.cols; ++j)
        rows.logc[u * rows.cols + j] =
            folded_log_component(n_min, total - n_min, grid.points[j], normal_approx);
    }
  });
  finish_rows(rows, threads);
  return rows;
}

inline Rows build_person_rows(std::span<const PersonCounts> persons, const Grid& grid,
                              bool normal_approx, std::uint64_t min_total, unsigned threads,
                              std::size_t* filtered_out) {
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> dedup;  // (out, total) -> weight
  std::size_t filtered = 0;
  for (const PersonCounts& c : persons) {
    if (c.total == 0) throw std::invalid_argument("mixture: person with zero initiatives");
    if (c.out > c.total) throw std::invalid_argument("mixture: out count exceeds total");
    if (c.total < min_total) {
      ++filtered;
      continue;
    }
    dedup[{c.out, c.total}] += 1.0;
  }
  if (filtered_out) *filtered_out = filtered;
  Rows rows;
  rows.rows = dedup.size();
  rows.cols = grid.size();
  std::vector<std::pair<std::uint64_t, std::uint64_t>> keys;
  keys.reserve(rows.rows);
  for (const auto& [key, w] : dedup) {
    keys.push_back(key);
    rows.weight.push_back(w);
  }
  rows.logc.assign(rows.rows * rows.cols, 0.0);
  parallel_chunks(rows.rows, threads, 32, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t u = lo; u < hi; ++u) {
      const auto [out, total] = keys[u];
      for (std::size_t j = 0; j < rows.cols; ++j)
        rows.logc[u * rows.cols + j] = bin_log_pmf(out, total, grid.points[j], normal_approx);
    }
  });
  finish_rows(rows, threads);
  return rows;
}

// Log-likelihood of free non-negative weights (no simplex requirement).
inline double rows_log_likelihood(const Rows& rows, std::span<const double> f) {
  double ll = 0.0;
  for (std::size_t u = 0; u < rows.rows; ++u) {
    double lu = 0.0;
    const double* c = &rows.scaled[u * rows.cols];
    for (std::size_t j = 0; j < rows.cols; ++j) lu += c[j] * f[j];
    if (!(lu > 0.0)) return kNegInf;
    ll += rows.weight[u] * (rows.row_max[u] + std::log(lu));
  }
  return ll;
}

// Log-likelihood and its gradient with respect to the weights.
inline double rows_log_likelihood_gradient(const Rows& rows, std::span<const double> f,
                                           std::vector<double>& grad) {
  grad.assign(rows.cols, 0.0);
  double ll = 0.0;
  for (std::size_t u = 0; u < rows.rows; ++u) {
    double lu = 0.0;
    const double* c = &rows.scaled[u * rows.cols];
    for (std::size_t j = 0; j < rows.cols; ++j) lu += c[j] * f[j];
    if (!(lu > 0.0)) return kNegInf;
    ll += rows.weight[u] * (rows.row_max[u] + std::log(lu));
    const double wl = rows.weight[u] / lu;
    for (std::size_t j = 0; j < rows.cols; ++j) grad[j] += wl * c[j];
  }
  return ll;
}

inline void normalize_weights(std::vector<double>& f) {
  double s = 0.0;
  for (const double v : f) s += v;
  if (!(s > 0.0)) throw NumericError("mixture: weight vector collapsed to zero");
  for (double& v : f) v /= s;
}

inline std::vector<double> initial_weights(const std::vector<std::pair<double, double>>& ratios,
                                           const Grid& grid, InitMode mode) {
  const std::size_t j_count = grid.size();
  std::vector<double> f(j_count, 1.0 / static_cast<double>(j_count));
  if (mode == InitMode::uniform) return f;
  // Histogram of observed ratios over well-sampled observations, projected
  // onto the grid. A small uniform blend keeps every grid point reachable
  // by the multiplicative updates.
  std::vector<double> hist(j_count, 0.0);
  double total = 0.0;
  for (const auto& [ratio, weight] : ratios) {
    hist[grid.nearest(ratio)] += weight;
    total += weight;
  }
  if (total <= 0.0) return f;  // nothing passed the filter: fall back to uniform
  constexpr double kBlend = 1e-3;
  for (std::size_t j = 0; j < j_count; ++j)
    f[j] = (1.0 - kBlend) * hist[j] / total + kBlend / static_cast<double>(j_count);
  return f;
}

struct MaximizeResult {
  std::vector<double> weights;
  EstimatorReport report;
};

// Maximize the mixture log-likelihood over the simplex.
//
// Phase 1 is plain EM (multiplicative update by posterior
// responsibilities): monotone and constraint-preserving, it carries the
// weights close to the optimum. Phase 2 is an active-set polish: Newton
// steps on the current support with a line search, dropping points that
// reach the boundary and pulling in off-support points whose gradient
// exceeds the support level. The polish drives the stationarity gap far
// below the 1e-6 certificate while never accepting a step that lowers
// the log-likelihood.
inline MaximizeResult maximize_mixture(const Rows& rows, const EstimatorOptions& opts,
                                       std::vector<double> f) {
  const std::size_t j_count = rows.cols;
  const double w_total = rows.total_weight;
  MaximizeResult res;
  EstimatorReport& rep = res.report;
  rep.rows_used = static_cast<std::size_t>(w_total + 0.5);

  normalize_weights(f);
  std::vector<double> grad;
  double ll = rows_log_likelihood_gradient(rows, f, grad);
  rep.trace.push_back(ll);

  const auto kkt_gap = [&](const std::vector<double>& fw, const std::vector<double>& g) {
    double gmax = 0.0;
    for (const double v : g) gmax = std::max(gmax, v);
    double gmin_support = gmax;
    for (std::size_t j = 0; j < j_count; ++j)
      if (fw[j] > 0.0) gmin_support = std::min(gmin_support, g[j]);
    return gmax > 0.0 ? (gmax - gmin_support) / gmax : 0.0;
  };

  constexpr double kKktTarget = 1e-8;   // internal target, well under the 1e-6 certificate
  constexpr double kAcceptSlack = 0.0;  // accepted steps must not lower the log-likelihood

  // ---- Phase 1: EM ----
  // The multiplicative updates crawl near the optimum, so the warm start
  // is capped and the active-set polish finishes the job.
  constexpr std::size_t kEmWarmStartCap = 600;
  std::size_t consecutive_small = 0;
  std::vector<double> f_next(j_count);
  for (std::size_t it = 0; it < std::min(opts.max_iterations, kEmWarmStartCap); ++it) {
    for (std::size_t j = 0; j < j_count; ++j) f_next[j] = f[j] * grad[j] / w_total;
    normalize_weights(f_next);
    std::vector<double> grad_next;
    const double ll_next = rows_log_likelihood_gradient(rows, f_next, grad_next);
    if (ll_next < ll - kAcceptSlack) break;  // stalled at float resolution
    const double delta = ll_next - ll;
    f.swap(f_next);
    grad.swap(grad_next);
    ll = ll_next;
    rep.trace.push_back(ll);
    ++rep.iterations;
    consecutive_small = delta < opts.tolerance ? consecutive_small + 1 : 0;
    if (consecutive_small >= 3) break;
    if (kkt_gap(f, grad) <= kKktTarget) break;
  }

  // ---- Phase 2: active-set polish ----
  const auto restricted_newton_direction = [&](const std::vector<std::size_t>& support,
                                               const std::vector<double>& g) {
    const std::size_t s = support.size();
    std::vector<double> h(s * s, 0.0);
    for (std::size_t u = 0; u < rows.rows; ++u) {
      const double* c = &rows.scaled[u * rows.cols];
      double lu = 0.0;
      for (std::size_t j = 0; j < j_count; ++j) lu += c[j] * f[j];
      const double wl = rows.weight[u] / (lu * lu);
      for (std::size_t p = 0; p < s; ++p) {
        const double cp = c[support[p]];
        if (cp == 0.0) continue;
        for (std::size_t q = p; q < s; ++q) h[p * s + q] -= wl * cp * c[support[q]];
      }
    }
    for (std::size_t p = 0; p < s; ++p)
      for (std::size_t q = 0; q < p; ++q) h[p * s + q] = h[q * s + p];
    double max_diag = 0.0;
    for (std::size_t p = 0; p < s; ++p) max_diag = std::max(max_diag, std::fabs(h[p * s + p]));
    // KKT system for the equality-constrained Newton step.
    const std::size_t m = s + 1;
    std::vector<double> sys(m * m, 0.0), rhs(m, 0.0);
    // Proportional ridge keeps the whole trajectory invariant under a
    // uniform rescaling of the observation weights.
    const double ridge = 1e-11 * max_diag;
    for (std::size_t p = 0; p < s; ++p) {
      for (std::size_t q = 0; q < s; ++q) sys[p * m + q] = h[p * s + q];
      sys[p * m + p] -= ridge;
      sys[p * m + s] = -1.0;
      sys[s * m + p] = 1.0;
      rhs[p] = -g[support[p]];
    }
    return solve_linear(std::move(sys), std::move(rhs));
  };

  // Zero out vanishing weights whose gradient sits strictly below the
  // support level. To first order that raises the log-likelihood by
  // sum f_j (W - g_j) > 0; the explicit evaluation guards the rest.
  const auto try_prune = [&]() -> bool {
    bool any = false;
    f_next = f;
    for (std::size_t j = 0; j < j_count; ++j)
      if (f[j] > 0.0 && f[j] < 1e-8 && grad[j] < w_total * (1.0 - 1e-12)) {
        f_next[j] = 0.0;
        any = true;
      }
    if (!any) return false;
    normalize_weights(f_next);
    std::vector<double> grad_next;
    const double ll_next = rows_log_likelihood_gradient(rows, f_next, grad_next);
    if (ll_next < ll) return false;
    f.swap(f_next);
    grad.swap(grad_next);
    if (ll_next > ll) {
      ll = ll_next;
      rep.trace.push_back(ll);
      ++rep.iterations;
    }
    return true;
  };

  constexpr std::size_t kMaxOuterRounds = 400;
  constexpr std::size_t kMaxNewtonSteps = 200;
  for (std::size_t round = 0; round < kMaxOuterRounds; ++round) {
    const bool pruned = try_prune();

    // Newton loop on the current support.
    for (std::size_t step = 0; step < kMaxNewtonSteps; ++step) {
      std::vector<std::size_t> support;
      for (std::size_t j = 0; j < j_count; ++j)
        if (f[j] > 0.0) support.push_back(j);
      if (support.size() <= 1) break;
      double g_lo = grad[support[0]], g_hi = g_lo;
      for (const std::size_t j : support) {
        g_lo = std::min(g_lo, grad[j]);
        g_hi = std::max(g_hi, grad[j]);
      }
      if ((g_hi - g_lo) <= 1e-11 * w_total) break;  // support gradients already level

      std::vector<double> sol;
      try {
        sol = restricted_newton_direction(support, grad);
      } catch (const NumericError&) {
        break;  // singular even with ridge: leave polishing to the exchange step
      }
      // Cap the step where the first weight reaches zero.
      double alpha = 1.0;
      for (std::size_t p = 0; p < support.size(); ++p)
        if (sol[p] < 0.0) alpha = std::min(alpha, -f[support[p]] / sol[p]);
      if (!(alpha > 0.0)) break;

      bool accepted = false;
      for (int bt = 0; bt < 60 && !accepted; ++bt) {
        f_next = f;
        for (std::size_t p = 0; p < support.size(); ++p) {
          double v = f[support[p]] + alpha * sol[p];
          if (v < 1e-15) v = 0.0;
          f_next[support[p]] = v;
        }
        normalize_weights(f_next);
        std::vector<double> grad_next;
        const double ll_next = rows_log_likelihood_gradient(rows, f_next, grad_next);
        if (ll_next >= ll - kAcceptSlack) {
          f.swap(f_next);
          grad.swap(grad_next);
          if (ll_next > ll) {
            ll = ll_next;
            rep.trace.push_back(ll);
            ++rep.iterations;
          }
          accepted = true;
        } else {
          alpha *= 0.5;
        }
      }
      if (!accepted) break;
    }

    // Exchange step: pull in the best off-support point, if any.
    double gmax = 0.0;
    std::size_t jmax = 0;
    for (std::size_t j = 0; j < j_count; ++j)
      if (grad[j] > gmax) {
        gmax = grad[j];
        jmax = j;
      }
    if (kkt_gap(f, grad) <= kKktTarget) break;
    if (f[jmax] > 0.0) {
      // The gap sits inside the support and Newton stalled. Nudge with EM
      // steps; if even those cannot raise the likelihood, we are done.
      bool progressed = false;
      for (int e = 0; e < 100; ++e) {
        for (std::size_t j = 0; j < j_count; ++j) f_next[j] = f[j] * grad[j] / w_total;
        normalize_weights(f_next);
        std::vector<double> grad_next;
        const double ll_next = rows_log_likelihood_gradient(rows, f_next, grad_next);
        if (ll_next < ll) break;
        if (ll_next > ll) progressed = true;
        f.swap(f_next);
        grad.swap(grad_next);
        if (ll_next > ll) {
          ll = ll_next;
          rep.trace.push_back(ll);
          ++rep.iterations;
        }
        if (kkt_gap(f, grad) <= kKktTarget) break;
      }
      if (!progressed && !pruned) break;
      continue;
    }

    // Line search on f(delta) = (1-delta) f + delta e_jmax, concave in delta.
    double lo = 0.0, hi = 0.999999;
    for (int it = 0; it < 100; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      const auto eval = [&](double d) {
        f_next = f;
        for (double& v : f_next) v *= 1.0 - d;
        f_next[jmax] += d;
        return rows_log_likelihood(rows, f_next);
      };
      if (eval(m1) < eval(m2))
        lo = m1;
      else
        hi = m2;
    }
    const double delta = 0.5 * (lo + hi);
    f_next = f;
    for (double& v : f_next) v *= 1.0 - delta;
    f_next[jmax] += delta;
    normalize_weights(f_next);
    std::vector<double> grad_next;
    const double ll_next = rows_log_likelihood_gradient(rows, f_next, grad_next);
    if (ll_next < ll - kAcceptSlack) break;  // no measurable improvement left
    f.swap(f_next);
    grad.swap(grad_next);
    if (ll_next > ll) {
      ll = ll_next;
      rep.trace.push_back(ll);
      ++rep.iterations;
    }
  }

  rep.log_likelihood = ll;
  rep.kkt_gap = kkt_gap(f, grad);
  rep.converged = rep.kkt_gap <= 1e-6;
  res.weights = std::move(f);
  return res;
}

}  // namespace detail

// P(X_i | F) for one link under the folded two-sided prior, computed in
// log space so intermediates stay finite for totals up to 1e6.
inline double folded_link_log_likelihood(const LinkCounts& counts, const MixtureDistribution& dist,
                                         bool normal_approx = false) {
  dist.validate();
  if (counts.total() == 0) throw std::invalid_argument("folded_link_likelihood: N = 0");
  double acc = detail::kNegInf;
  for (std::size_t j = 0; j < dist.grid.size(); ++j) {
    if (dist.weights[j] <= 0.0) continue;
    const double term =
        detail::folded_log_component(counts.n_a, counts.n_b, dist.grid.points[j], normal_approx) +
        std::log(dist.weights[j]);
    acc = detail::log_sum_exp(acc, term);
  }
  return acc;
}

inline double folded_link_likelihood(const LinkCounts& counts, const MixtureDistribution& dist,
                                     bool normal_approx = false) {
  return std::exp(folded_link_log_likelihood(counts, dist, normal_approx));
}

struct LogLikelihoodGradient {
  double log_likelihood = 0;
  std::vector<double> gradient;  // d logL / d F_j, weights taken as free coordinates
};

inline LogLikelihoodGradient link_log_likelihood_gradient(std::span<const LinkCounts> links,
                                                          const Grid& grid,
                                                          std::span<const double> weights,
                                                          bool normal_approx = false) {
  grid.validate();
  if (weights.size() != grid.size())
    throw std::invalid_argument("link_log_likelihood_gradient: weight/grid size mismatch");
  const detail::Rows rows = detail::build_folded_rows(links, grid, normal_approx, 1, 1, nullptr);
  LogLikelihoodGradient out;
  out.log_likelihood = detail::rows_log_likelihood_gradient(rows, weights, out.gradient);
  return out;
}

inline LogLikelihoodGradient person_log_likelihood_gradient(std::span<const PersonCounts> persons,
                                                            const Grid& grid,
                                                            std::span<const double> weights,
                                                            bool normal_approx = false) {
  grid.validate();
  if (weights.size() != grid.size())
    throw std::invalid_argument("person_log_likelihood_gradient: weight/grid size mismatch");
  const detail::Rows rows = detail::build_person_rows(persons, grid, normal_approx, 1, 1, nullptr);
  LogLikelihoodGradient out;
  out.log_likelihood = detail::rows_log_likelihood_gradient(rows, weights, out.gradient);
  return out;
}

inline MixtureSummary summarize_mixture(const MixtureDistribution& dist) {
  dist.validate();
  MixtureSummary s;
  for (std::size_t j = 0; j < dist.grid.size(); ++j) s.mean += dist.grid.points[j] * dist.weights[j];
  s.zero_bin_weight = dist.weights.front();
  const double rest = 1.0 - s.zero_bin_weight;
  if (rest > 1e-15) {
    double m = 0.0;
    for (std::size_t j = 1; j < dist.grid.size(); ++j) m += dist.grid.points[j] * dist.weights[j];
    s.mean_excluding_zero = m / rest;
  }
  return s;
}

// Maximum-likelihood mixing distribution of the link asymmetry parameter
// on a grid over [0, 1/2].
inline std::pair<MixtureDistribution, EstimatorReport> estimate_link_mixture(
    std::span<const LinkCounts> links, const Grid& grid, const EstimatorOptions& opts = {}) {
  grid.validate();
  opts.validate();
  if (grid.points.front() < -1e-12 || grid.points.back() > 0.5 + 1e-12)
    throw std::invalid_argument("estimate_link_mixture: grid domain must lie in [0, 0.5]");
  std::size_t filtered = 0;
  const detail::Rows rows =
      detail::build_folded_rows(links, grid, opts.normal_approx, opts.min_total, opts.threads, &filtered);
  if (rows.rows == 0)
    throw std::invalid_argument("estimate_link_mixture: no links pass the minimum-initiative filter");

  std::vector<std::pair<double, double>> ratios;
  for (const LinkCounts& c : links) {
    const std::uint64_t total = c.total();
    if (total > 20 && total >= opts.min_total)
      ratios.emplace_back(static_cast<double>(std::min(c.n_a, c.n_b)) / static_cast<double>(total),
                          1.0);
  }
  auto res = detail::maximize_mixture(rows, opts,
                                      detail::initial_weights(ratios, grid, opts.init));
  res.report.rows_filtered = filtered;
  MixtureDistribution dist{grid, std::move(res.weights)};
  res.report.summary = summarize_mixture(dist);
  return {std::move(dist), std::move(res.report)};
}

// Person-level variant: no fold and no 1/2 prior, grid over [0, 1].
inline std::pair<MixtureDistribution, EstimatorReport> estimate_person_mixture(
    std::span<const PersonCounts> persons, const Grid& grid, const EstimatorOptions& opts = {}) {
  grid.validate();
  opts.validate();
  if (grid.points.front() < -1e-12 || grid.points.back() > 1.0 + 1e-12)
    throw std::invalid_argument("estimate_person_mixture: grid domain must lie in [0, 1]");
  std::size_t filtered = 0;
  const detail::Rows rows =
      detail::build_person_rows(persons, grid, opts.normal_approx, opts.min_total, opts.threads, &filtered);
  if (rows.rows == 0)
    throw std::invalid_argument("estimate_person_mixture: no persons pass the minimum filter");

  std::vector<std::pair<double, double>> ratios;
  for (const PersonCounts& c : persons)
    if (c.total > 20 && c.total >= opts.min_total)
      ratios.emplace_back(static_cast<double>(c.out) / static_cast<double>(c.total), 1.0);
  auto res = detail::maximize_mixture(rows, opts,
                                      detail::initial_weights(ratios, grid, opts.init));
  res.report.rows_filtered = filtered;
  MixtureDistribution dist{grid, std::move(res.weights)};
  res.report.summary = summarize_mixture(dist);
  return {std::move(dist), std::move(res.report)};
}

inline void write_mixture_tsv(std::ostream& os, const MixtureDistribution& dist, char delim = '\t') {
  os << "mu" << delim << "weight" << '\n';
  for (std::size_t j = 0; j < dist.grid.size(); ++j)
    os << detail::format_g(dist.grid.points[j]) << delim << detail::format_g(dist.weights[j])
       << '\n';
}

}  // namespace initiative
