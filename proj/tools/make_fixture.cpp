// Generates the bundled synthetic fixture: a communication event log with
// bursty episode structure, a mix of symmetric, asymmetric, one-sided,
// and ghosted relationships, plus a trait table whose extraversion score
// tracks the latent sociability that drives initiative-taking.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "initiative/initiative.hpp"

using namespace initiative;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kBase = 1356998400;         // 2013-01-01
constexpr std::int64_t kHorizon = kBase + 583 * kDay;  // ~83 weeks

std::string person_name(bool participant, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03zu", participant ? 'P' : 'X', i);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_dir = "data";
  std::uint64_t seed = 20130101;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--out-dir")
      out_dir = argv[i + 1];
    else if (flag == "--seed")
      seed = std::stoull(argv[i + 1]);
    else {
      std::cerr << "usage: make_fixture [--out-dir DIR] [--seed N]\n";
      return 2;
    }
  }

  const std::size_t n_participants = 80;
  const std::size_t n_external = 60;
  Rng master(seed);

  std::vector<double> sociability(n_participants);
  for (double& s : sociability) s = master.uniform01();

  // Partner selection: participants favor other participants but also
  // talk to externals.
  std::set<LinkKey> link_set;
  for (std::size_t p = 0; p < n_participants; ++p) {
    const std::size_t n_partners = 3 + master.below(3) + static_cast<std::size_t>(sociability[p] * 3);
    for (std::size_t k = 0; k < n_partners; ++k) {
      std::string other;
      if (master.bernoulli(0.6)) {
        std::size_t q = master.below(n_participants);
        if (q == p) q = (q + 1) % n_participants;
        other = person_name(true, q);
      } else {
        other = person_name(false, master.below(n_external));
      }
      link_set.insert(canonical_link(person_name(true, p), other));
    }
  }
  const std::vector<LinkKey> links(link_set.begin(), link_set.end());

  const auto sociability_of = [&](const PersonId& id) {
    if (id[0] != 'P') return 0.35;  // externals: below-average initiative
    return sociability[static_cast<std::size_t>(std::stoul(id.substr(1)))];
  };

  std::vector<Event> events;
  for (std::size_t li = 0; li < links.size(); ++li) {
    const LinkKey& link = links[li];
    Rng rng = Rng::stream(seed, li + 1000);

    const bool one_sided = rng.bernoulli(0.10);  // service-style feeds
    const bool a_leads = sociability_of(link.a) >= sociability_of(link.b);
    const PersonId& major = a_leads ? link.a : link.b;
    const PersonId& minor = a_leads ? link.b : link.a;
    double mu;  // probability that the minor side initiates
    if (one_sided) {
      mu = 0.0;
    } else {
      const double u = rng.uniform01();
      mu = u < 0.25 ? 0.22 : u < 0.75 ? 0.35 : 0.45;
    }
    const bool ghost = !one_sided && rng.bernoulli(0.08);

    // Active links fill the observation window; ghosted links fall silent
    // partway through while their initiator stays active elsewhere.
    const std::int64_t start = kBase + static_cast<std::int64_t>(rng.below(60 * kDay));
    const std::int64_t link_end =
        ghost ? kBase + 200 * kDay + static_cast<std::int64_t>(rng.below(180 * kDay))
              : kHorizon - static_cast<std::int64_t>(rng.below(30 * kDay));

    std::int64_t t = start;
    while (t < link_end) {
      const PersonId& actor = rng.bernoulli(mu) ? minor : major;
      const PersonId& other = actor == link.a ? link.b : link.a;
      events.push_back({t, actor, other, rng.bernoulli(0.22) ? Channel::call : Channel::text});

      std::int64_t t_last = t;
      const std::size_t follow_ups = rng.below(5);
      bool reply_from_other = true;
      for (std::size_t f = 0; f < follow_ups; ++f) {
        t_last += static_cast<std::int64_t>(
            std::llround(sample_truncated_power_law(rng, -1.26, 60.0, 72000.0)));
        const PersonId& ffrom = reply_from_other ? other : actor;
        const PersonId& fto = reply_from_other ? actor : other;
        events.push_back({t_last, ffrom, fto, rng.bernoulli(0.15) ? Channel::call : Channel::text});
        reply_from_other = rng.bernoulli(0.6) ? !reply_from_other : reply_from_other;
      }
      t = t_last + static_cast<std::int64_t>(
                       std::llround(sample_truncated_power_law(rng, -1.3, 1.5 * kDay, 40.0 * kDay)));
    }
    if (ghost) {
      // Closing one-sided run: the initiator keeps reaching out, nobody
      // answers, then the link goes quiet well before the horizon.
      const std::size_t tail = 1 + rng.below(5);
      for (std::size_t k = 0; k < tail; ++k) {
        events.push_back({t, major, minor, rng.bernoulli(0.22) ? Channel::call : Channel::text});
        t += static_cast<std::int64_t>(
            std::llround(sample_truncated_power_law(rng, -1.3, 1.5 * kDay, 10.0 * kDay)));
      }
    }
  }

  std::stable_sort(events.begin(), events.end(), [](const Event& x, const Event& y) {
    if (x.ts != y.ts) return x.ts < y.ts;
    if (x.from != y.from) return x.from < y.from;
    return x.to < y.to;
  });

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "events.tsv", std::ios::binary);
    write_events_tsv(out, events);
  }
  {
    std::ofstream out(fs::path(out_dir) / "traits.tsv", std::ios::binary);
    out << "person\tagreeableness\tconscientiousness\textraversion\tneuroticism\topenness\n";
    Rng rng = Rng::stream(seed, 7);
    for (std::size_t p = 0; p < n_participants; ++p) {
      const double s = sociability[p];
      out << person_name(true, p) << '\t' << detail::format_g(rng.normal(3.5, 0.7), 6) << '\t'
          << detail::format_g(rng.normal(3.4, 0.6), 6) << '\t'
          << detail::format_g(3.0 + 1.2 * s + rng.normal(0.0, 0.3), 6) << '\t'
          << detail::format_g(3.1 - 0.3 * s + rng.normal(0.0, 0.6), 6) << '\t'
          << detail::format_g(rng.normal(3.6, 0.5), 6) << '\n';
    }
  }

  std::cout << "fixture: " << events.size() << " events, " << links.size() << " links, "
            << n_participants << " participants -> " << out_dir << "\n";
  return 0;
}
