#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "initiative/initiatives.hpp"
#include "initiative/rng.hpp"
#include "initiative/synthetic.hpp"

using namespace initiative;

namespace {

Dataset two_person_dataset(const std::vector<std::pair<std::int64_t, bool>>& rows) {
  // bool = true means A initiates, false means B does.
  std::vector<Event> events;
  for (const auto& [ts, from_a] : rows)
    events.push_back({ts, from_a ? "A" : "B", from_a ? "B" : "A", Channel::call});
  return build_dataset(events);
}

}  // namespace

TEST_CASE("extract_initiatives applies the separation rule", "[initiatives]") {
  // 1 h gap is a follow-up, 30 h gap is an initiative.
  const Dataset ds = two_person_dataset({{0, true}, {3600, false}, {108000, true}});
  const auto log = extract_initiatives(ds, 86400);
  REQUIRE(log.size() == 1);
  REQUIRE(log[0].records.size() == 2);
  CHECK(log[0].records[0].actor == "A");
  CHECK(log[0].records[0].ts == 0);
  CHECK(log[0].records[1].actor == "A");
  CHECK(log[0].records[1].ts == 108000);
  CHECK(log[0].records[1].ordinal == 1);
}

TEST_CASE("a single event is always an initiative", "[initiatives]") {
  const auto log = extract_initiatives(two_person_dataset({{500, false}}));
  REQUIRE(log.size() == 1);
  REQUIRE(log[0].records.size() == 1);
  CHECK(log[0].records[0].actor == "B");
}

TEST_CASE("the 24 h boundary is strict", "[initiatives]") {
  // Exactly 86400 s: follow-up. One second more: initiative.
  const auto at_boundary = extract_initiatives(two_person_dataset({{0, true}, {86400, false}}));
  CHECK(at_boundary[0].records.size() == 1);
  const auto past_boundary = extract_initiatives(two_person_dataset({{0, true}, {86401, false}}));
  CHECK(past_boundary[0].records.size() == 2);
}

TEST_CASE("initiatives plus follow-ups account for every event", "[initiatives]") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::pair<std::int64_t, bool>> rows;
    std::int64_t t = 0;
    const int n = 2 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) {
      t += 1 + static_cast<std::int64_t>(rng.below(200000));
      rows.push_back({t, rng.bernoulli(0.5)});
    }
    const Dataset ds = two_person_dataset(rows);
    const auto log = extract_initiatives(ds);
    CHECK(log[0].records.size() <= ds.total_events);
    // threshold 0 (all distinct timestamps): every event is an initiative
    CHECK(extract_initiatives(ds, 0)[0].records.size() == ds.total_events);
    // threshold infinity: exactly one initiative per link
    CHECK(extract_initiatives(ds, std::numeric_limits<std::int64_t>::max())[0].records.size() == 1);
  }
}

TEST_CASE("raising the threshold never adds initiatives", "[initiatives]") {
  Rng rng(11);
  std::vector<std::pair<std::int64_t, bool>> rows;
  std::int64_t t = 0;
  for (int i = 0; i < 300; ++i) {
    t += 1 + static_cast<std::int64_t>(rng.below(250000));
    rows.push_back({t, rng.bernoulli(0.5)});
  }
  const Dataset ds = two_person_dataset(rows);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (const std::int64_t thr : {0L, 3600L, 43200L, 86400L, 172800L, 1000000L}) {
    const std::size_t n = extract_initiatives(ds, thr)[0].records.size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("interevent gaps pool per-link consecutive differences", "[initiatives]") {
  const Dataset ds = two_person_dataset({{100, true}, {160, false}});
  const auto stats = interevent_gaps(ds);
  REQUIRE(stats.gaps.size() == 1);
  CHECK(stats.gaps[0] == 60);
  REQUIRE(stats.fraction_below_threshold.has_value());
  CHECK(*stats.fraction_below_threshold == 1.0);
}

TEST_CASE("no gaps means no fraction", "[initiatives]") {
  const Dataset ds = two_person_dataset({{100, true}});
  const auto stats = interevent_gaps(ds);
  CHECK(stats.gaps.empty());
  CHECK(!stats.fraction_below_threshold.has_value());
}

TEST_CASE("fraction below threshold matches a calibrated power law", "[initiatives][slow]") {
  // Pick the exponent whose truncated power law on [60 s, 1 week] puts 88%
  // of its mass below 24 h, then sample and check the empirical fraction.
  const double t_min = 60.0, t_max = 604800.0, t_cut = 86400.0;
  const auto cdf_at_cut = [&](double alpha) {
    const double a1 = alpha + 1.0;
    return (std::pow(t_cut, a1) - std::pow(t_min, a1)) / (std::pow(t_max, a1) - std::pow(t_min, a1));
  };
  double lo = -3.0, hi = -1.01;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf_at_cut(mid) > 0.88 ? lo : hi) = mid;
  }
  const double alpha = 0.5 * (lo + hi);
  REQUIRE(std::fabs(cdf_at_cut(alpha) - 0.88) < 1e-9);

  Rng rng(2024);
  std::vector<Event> events;
  std::int64_t t = 0;
  const int n = 1000000;
  events.reserve(n + 1);
  events.push_back({0, "A", "B", Channel::call});
  for (int i = 0; i < n; ++i) {
    t += static_cast<std::int64_t>(std::llround(sample_truncated_power_law(rng, alpha, t_min, t_max)));
    events.push_back({t, "A", "B", Channel::call});
  }
  const auto stats = interevent_gaps(build_dataset(events));
  REQUIRE(stats.fraction_below_threshold.has_value());
  CHECK(std::fabs(*stats.fraction_below_threshold - 0.88) < 0.01);
}

TEST_CASE("power-law MLE recovers generating exponents", "[initiatives][slow]") {
  const double t_min = 60.0, t_max = 604800.0;
  for (const double alpha : {-1.26, -2.0}) {
    Rng rng(static_cast<std::uint64_t>(alpha * -1000));
    std::vector<double> gaps(200000);
    for (double& g : gaps) g = sample_truncated_power_law(rng, alpha, t_min, t_max);
    const double est = fit_power_law(gaps, t_min, t_max);
    CHECK(std::fabs(est - alpha) < 0.05);
  }
}

TEST_CASE("power-law fit recovers within three standard errors", "[initiatives]") {
  // The asymptotic standard error of the exponent is 1/sqrt(n Var(log T));
  // Var(log T) comes from Simpson quadrature over the generating density.
  const double t_min = 60.0, t_max = 604800.0, alpha = -1.5;
  const double a1 = alpha + 1.0;
  const double norm = (std::pow(t_max, a1) - std::pow(t_min, a1)) / a1;
  const auto density = [&](double t) { return std::pow(t, alpha) / norm; };
  const int steps = 20000;
  const double h = (t_max - t_min) / steps;
  double m1 = 0, m2 = 0;
  for (int i = 0; i <= steps; ++i) {
    const double t = t_min + h * i;
    const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    m1 += w * std::log(t) * density(t);
    m2 += w * std::log(t) * std::log(t) * density(t);
  }
  m1 *= h / 3.0;
  m2 *= h / 3.0;
  const double var_log = m2 - m1 * m1;
  const std::size_t n = 20000;
  const double se = 1.0 / std::sqrt(static_cast<double>(n) * var_log);

  Rng rng(99);
  std::vector<double> gaps(n);
  for (double& g : gaps) g = sample_truncated_power_law(rng, alpha, t_min, t_max);
  const double est = fit_power_law(gaps, t_min, t_max);
  CHECK(std::fabs(est - alpha) < 3.0 * se);
}

TEST_CASE("power-law fit rejects bad input", "[initiatives]") {
  std::vector<double> few(50, 100.0);
  CHECK_THROWS_AS(fit_power_law(few, 60.0, 604800.0), std::invalid_argument);
  std::vector<double> gaps(200, 100.0);
  CHECK_THROWS_AS(fit_power_law(gaps, 0.0, 604800.0), std::invalid_argument);
  // all gaps equal: degenerate
  CHECK_THROWS_WITH(fit_power_law(gaps, 60.0, 604800.0),
                    Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("link_counts tallies per endpoint", "[initiatives]") {
  LinkInitiatives seq;
  seq.link = {"A", "B"};
  seq.records = {{seq.link, "A", 0, 0}, {seq.link, "A", 200000, 1}, {seq.link, "B", 400000, 2}};
  const auto counts = link_counts({seq});
  REQUIRE(counts.size() == 1);
  CHECK(counts[0].n_a == 2);
  CHECK(counts[0].n_b == 1);
  CHECK(counts[0].total() == 3);
}

TEST_CASE("fully one-sided counts", "[initiatives]") {
  LinkInitiatives seq;
  seq.link = {"A", "B"};
  for (int i = 0; i < 5; ++i)
    seq.records.push_back({seq.link, "A", i * 200000, static_cast<std::size_t>(i)});
  const auto counts = link_counts({seq});
  CHECK(counts[0].n_a == 5);
  CHECK(counts[0].n_b == 0);
}

TEST_CASE("link_counts matches a brute-force tally on random streams", "[initiatives]") {
  Rng rng(5);
  InitiativeLog log;
  std::map<LinkKey, std::pair<std::uint64_t, std::uint64_t>> expected;
  for (int l = 0; l < 40; ++l) {
    LinkInitiatives seq;
    seq.link = {"p" + std::to_string(l), "q" + std::to_string(l)};
    const int n = 1 + static_cast<int>(rng.below(25));
    for (int i = 0; i < n; ++i) {
      const bool a = rng.bernoulli(0.3);
      seq.records.push_back(
          {seq.link, a ? seq.link.a : seq.link.b, i * 200000, static_cast<std::size_t>(i)});
      auto& e = expected[seq.link];
      if (a)
        ++e.first;
      else
        ++e.second;
    }
    log.push_back(std::move(seq));
  }
  for (const LinkCounts& c : link_counts(log)) {
    CHECK(c.n_a == expected[c.link].first);
    CHECK(c.n_b == expected[c.link].second);
  }
}

TEST_CASE("reciprocal filter drops one-sided links", "[initiatives]") {
  std::vector<LinkCounts> counts = {{{"a", "b"}, 3, 0}, {{"c", "d"}, 2, 5}, {{"e", "f"}, 0, 1}};
  const auto kept = reciprocal_only(counts);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].link == LinkKey{"c", "d"});
}
