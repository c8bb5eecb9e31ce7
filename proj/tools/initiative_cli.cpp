// Command-line front end for the initiative analytics library: ingestion
// checks, initiative extraction, mixture estimation, synthetic data,
// relationship dynamics, person metrics, and the composite `run` pipeline
// with a reproducible manifest.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "initiative/initiative.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace initiative;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;

char parse_delimiter(const std::string& s) {
  if (s == "\\t" || s == "tab" || s == "\t") return '\t';
  if (s.size() == 1) return s[0];
  throw InputError("unsupported delimiter '" + s + "'");
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

Dataset load_events(const fs::path& path, char delim, bool lenient, IngestReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open events file '" + path.string() + "'");
  EventFormat fmt;
  fmt.delimiter = delim;
  fmt.strict = !lenient;
  return ingest_events(in, fmt, report);
}

std::map<PersonId, TraitRecord> load_traits(const fs::path& path, char delim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open traits file '" + path.string() + "'");
  return ingest_traits(in, delim);
}

MixtureDistribution load_mixture_tsv(const fs::path& path, char delim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open distribution file '" + path.string() + "'");
  std::string line;
  bool have_header = false;
  Grid grid;
  std::vector<double> weights;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp_cr(line);
    if (!have_header) {
      if (line.empty()) continue;
      have_header = true;
      continue;  // `mu	weight`
    }
    const auto fields = detail::split_fields(line, delim);
    if (fields.size() != 2) throw InputError("line " + std::to_string(line_no) + ": expected 2 fields");
    const auto mu = detail::parse_real(fields[0]);
    const auto w = detail::parse_real(fields[1]);
    if (!mu || !w) throw InputError("line " + std::to_string(line_no) + ": malformed row");
    grid.points.push_back(*mu);
    weights.push_back(*w);
  }
  MixtureDistribution dist{std::move(grid), std::move(weights)};
  // Renormalize away round-tripped formatting error before validating.
  double sum = 0.0;
  for (const double w : dist.weights) sum += w;
  if (sum > 0.0)
    for (double& w : dist.weights) w /= sum;
  dist.validate();
  return dist;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

json ingest_report_json(const IngestReport& rep) {
  json j;
  j["rows_read"] = rep.rows_read;
  j["kept"] = rep.kept;
  j["deduplicated"] = rep.deduplicated;
  j["rejected"] = rep.rejected;
  json rejects = json::array();
  std::size_t shown = 0;
  for (const RejectedRow& r : rep.rejects) {
    if (++shown > 50) break;
    rejects.push_back({{"line", r.line}, {"reason", r.reason}});
  }
  j["rejects"] = rejects;
  return j;
}

json estimator_report_json(const EstimatorReport& rep) {
  json j;
  j["log_likelihood"] = rep.log_likelihood;
  j["iterations"] = rep.iterations;
  j["converged"] = rep.converged;
  j["kkt_gap"] = rep.kkt_gap;
  j["rows_used"] = rep.rows_used;
  j["rows_filtered"] = rep.rows_filtered;
  j["mean"] = rep.summary.mean;
  j["zero_bin_weight"] = rep.summary.zero_bin_weight;
  if (rep.summary.mean_excluding_zero)
    j["mean_excluding_zero"] = *rep.summary.mean_excluding_zero;
  else
    j["mean_excluding_zero"] = nullptr;
  return j;
}

json correlation_json(const CorrelationResult& c) {
  return json{{"r", c.r}, {"std_error", c.std_error}, {"n", c.n}, {"rounds", c.bootstrap_rounds}};
}

json bootstrap_report_json(const BootstrapReport& rep) {
  json j;
  j["replicas"] = rep.replicas;
  j["succeeded"] = rep.succeeded;
  j["failed"] = rep.failed;
  j["bias_flag"] = rep.bias_flag;
  j["mean_mu_mean"] = rep.mean_mu_mean;
  j["mean_mu_spread"] = rep.mean_mu_spread;
  j["mean_mu_error_of_mean"] = rep.mean_mu_error;
  j["bin_mean"] = rep.bin_mean;
  j["bin_sd"] = rep.bin_sd;
  return j;
}

struct EstimatorFlags {
  std::size_t grid_size = 51;
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  std::uint64_t min_initiatives = 1;
  bool reciprocal_only = false;
  bool normal_approx = false;
  std::string init = "histogram";
  unsigned threads = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--grid-size", grid_size, "Number of grid points")->capture_default_str();
    cmd->add_option("--tol", tol, "Log-likelihood convergence tolerance")->capture_default_str();
    cmd->add_option("--max-iter", max_iter, "Maximum EM iterations")->capture_default_str();
    cmd->add_option("--min-initiatives", min_initiatives,
                    "Drop links with fewer initiatives from the likelihood")
        ->capture_default_str();
    cmd->add_flag("--reciprocal-only", reciprocal_only,
                  "Keep only links with at least one initiative each way");
    cmd->add_flag("--normal-approx", normal_approx,
                  "Use the normal approximation to the count distribution for totals > 100");
    cmd->add_option("--init", init, "Weight initialization: histogram or uniform")
        ->check(CLI::IsMember({"histogram", "uniform"}))
        ->capture_default_str();
  }

  EstimatorOptions options() const {
    EstimatorOptions opts;
    opts.max_iterations = max_iter;
    opts.tolerance = tol;
    opts.min_total = min_initiatives;
    opts.normal_approx = normal_approx;
    opts.init = init == "uniform" ? InitMode::uniform : InitMode::histogram;
    opts.threads = threads;
    return opts;
  }
};

std::int64_t threshold_seconds(double hours) {
  return static_cast<std::int64_t>(std::llround(hours * 3600.0));
}

// ---------------------------------------------------------------------------
// run: the composite pipeline with manifest
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string events_path;
  std::string traits_path;
  std::string out_dir = "initiative_out";
  std::string delimiter = "\\t";
  bool lenient = false;
  double threshold_hours = 24.0;
  double fit_tmin = 60.0;
  double fit_tmax = 604800.0;
  std::size_t interevent_bins = 40;
  EstimatorFlags est;
  std::size_t replicas = 20;
  std::uint64_t seed = 1;
  std::uint64_t dyn_min_initiatives = 15;
  double ghost_factor = 10.0;
  std::uint64_t min_curve_obs = 30;
  bool include_nonreciprocal = false;
  std::size_t window_size = 20;
  std::uint64_t min_person_initiatives = 200;
  std::size_t bootstrap_rounds = 1000;
  bool participants_only = false;
  unsigned threads = 1;
  bool skip_mixture = false;
  bool skip_bootstrap = false;
  bool skip_dynamics = false;
  bool skip_persons = false;

  json to_json() const {
    json j;
    j["events"] = events_path;
    j["traits"] = traits_path;
    j["out_dir"] = out_dir;
    j["delimiter"] = delimiter;
    j["lenient"] = lenient;
    j["threshold_hours"] = threshold_hours;
    j["fit_tmin"] = fit_tmin;
    j["fit_tmax"] = fit_tmax;
    j["interevent_bins"] = interevent_bins;
    j["grid_size"] = est.grid_size;
    j["tol"] = est.tol;
    j["max_iter"] = est.max_iter;
    j["min_initiatives"] = est.min_initiatives;
    j["reciprocal_only"] = est.reciprocal_only;
    j["normal_approx"] = est.normal_approx;
    j["init"] = est.init;
    j["replicas"] = replicas;
    j["seed"] = seed;
    j["dyn_min_initiatives"] = dyn_min_initiatives;
    j["ghost_factor"] = ghost_factor;
    j["min_curve_obs"] = min_curve_obs;
    j["include_nonreciprocal"] = include_nonreciprocal;
    j["window_size"] = window_size;
    j["min_person_initiatives"] = min_person_initiatives;
    j["bootstrap_rounds"] = bootstrap_rounds;
    j["participants_only"] = participants_only;
    j["threads"] = threads;
    j["skip_mixture"] = skip_mixture;
    j["skip_bootstrap"] = skip_bootstrap;
    j["skip_dynamics"] = skip_dynamics;
    j["skip_persons"] = skip_persons;
    return j;
  }
};

struct StageRecord {
  std::string name;
  std::string status;  // ok | failed | skipped
  double seconds = 0;
};

int run_pipeline(const RunConfig& cfg) {
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  const char delim = parse_delimiter(cfg.delimiter);
  const std::int64_t threshold = threshold_seconds(cfg.threshold_hours);

  std::vector<StageRecord> stages;
  std::vector<std::string> artifacts;
  json report;
  report["tool"] = {{"name", "initiative"}, {"version", kVersion}};
  report["skipped"] = json::array();

  const auto write_manifest = [&](const std::string& failed_stage) {
    json manifest;
    manifest["tool"] = {{"name", "initiative"}, {"version", kVersion}};
    manifest["config"] = cfg.to_json();
    json inputs = json::array();
    for (const std::string& p : {cfg.events_path, cfg.traits_path}) {
      if (p.empty()) continue;
      json entry;
      entry["path"] = p;
      try {
        entry["sha256"] = sha256_file(p);
        entry["bytes"] = static_cast<std::uint64_t>(fs::file_size(p));
      } catch (const std::exception&) {
        entry["sha256"] = nullptr;
      }
      inputs.push_back(entry);
    }
    manifest["inputs"] = inputs;
    json jstages = json::array();
    for (const StageRecord& s : stages)
      jstages.push_back({{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}});
    manifest["stages"] = jstages;
    manifest["artifacts"] = artifacts;
    manifest["failed_stage"] = failed_stage.empty() ? json(nullptr) : json(failed_stage);
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  };

  Dataset ds;
  std::map<PersonId, TraitRecord> traits;
  InitiativeLog log;
  InitiativeLog analysis_log;  // reciprocal links unless told otherwise
  std::vector<LinkCounts> counts;

  const auto stage = [&](const std::string& name, bool skipped, auto&& fn) {
    if (skipped) {
      stages.push_back({name, "skipped", 0.0});
      report["skipped"].push_back(name);
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (...) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      stages.push_back({name, "failed", secs});
      write_text(out_dir / "report.json", report.dump(2) + "\n");
      write_manifest(name);
      throw;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages.push_back({name, "ok", secs});
  };

  stage("ingest", false, [&] {
    IngestReport rep;
    ds = load_events(cfg.events_path, delim, cfg.lenient, &rep);
    if (!cfg.traits_path.empty()) traits = load_traits(cfg.traits_path, delim);
    json j = ingest_report_json(rep);
    j["links"] = ds.link_count();
    j["persons"] = ds.persons.size();
    j["trait_records"] = traits.size();
    report["ingest"] = j;
  });

  stage("extract", false, [&] {
    log = extract_initiatives(ds, threshold);
    analysis_log = cfg.include_nonreciprocal ? log : reciprocal_sequences(log);
    counts = link_counts(log);
    std::size_t total = 0;
    for (const auto& seq : log) total += seq.records.size();
    report["extract"] = {{"threshold_hours", cfg.threshold_hours},
                         {"initiatives", total},
                         {"links_with_initiatives", counts.size()},
                         {"reciprocal_links", reciprocal_only(counts).size()}};
  });

  stage("interevent", false, [&] {
    const InterEventStats stats = interevent_gaps(ds, threshold);
    json j;
    j["gap_count"] = stats.gaps.size();
    if (stats.fraction_below_threshold)
      j["fraction_below_threshold"] = *stats.fraction_below_threshold;
    else
      j["fraction_below_threshold"] = nullptr;
    const auto bins = log_binned_density(stats.gaps, cfg.interevent_bins, cfg.fit_tmin, cfg.fit_tmax);
    {
      auto out = open_out(out_dir / "interevent.tsv");
      out << "bin_lo\tbin_hi\tcount\tdensity\n";
      for (const LogBin& b : bins)
        out << detail::format_g(b.lo) << '\t' << detail::format_g(b.hi) << '\t' << b.count << '\t'
            << detail::format_g(b.density) << '\n';
      artifacts.push_back("interevent.tsv");
    }
    j["fit_range_seconds"] = {cfg.fit_tmin, cfg.fit_tmax};
    j["alpha_mle"] =
        fit_power_law(std::span<const std::int64_t>(stats.gaps), cfg.fit_tmin, cfg.fit_tmax);
    const auto diag = fit_power_law_logbinned(bins);
    j["alpha_logbinned_diag"] = diag ? json(*diag) : json(nullptr);
    report["interevent"] = j;
  });

  MixtureDistribution link_dist;
  stage("link_mixture", cfg.skip_mixture, [&] {
    const std::vector<LinkCounts> input = cfg.est.reciprocal_only ? reciprocal_only(counts) : counts;
    EstimatorOptions opts = cfg.est.options();
    opts.threads = cfg.threads;
    auto [dist, rep] = estimate_link_mixture(input, link_grid(cfg.est.grid_size), opts);
    link_dist = std::move(dist);
    auto out = open_out(out_dir / "link_mixture.tsv");
    write_mixture_tsv(out, link_dist);
    artifacts.push_back("link_mixture.tsv");
    report["link_mixture"] = estimator_report_json(rep);
    report["link_mixture"]["links_in"] = input.size();
  });

  stage("person_mixture", cfg.skip_mixture, [&] {
    const auto estimates = person_estimates(analysis_log, cfg.min_person_initiatives);
    const auto pcounts = person_mixture_counts(estimates);
    EstimatorOptions opts = cfg.est.options();
    opts.threads = cfg.threads;
    auto [dist, rep] = estimate_person_mixture(pcounts, person_grid(cfg.est.grid_size), opts);
    auto out = open_out(out_dir / "person_mixture.tsv");
    write_mixture_tsv(out, dist);
    artifacts.push_back("person_mixture.tsv");
    report["person_mixture"] = estimator_report_json(rep);
    report["person_mixture"]["persons_in"] = pcounts.size();
  });

  stage("bootstrap", cfg.skip_mixture || cfg.skip_bootstrap, [&] {
    const std::vector<LinkCounts> input = cfg.est.reciprocal_only ? reciprocal_only(counts) : counts;
    EstimatorOptions opts = cfg.est.options();
    opts.threads = cfg.threads;
    const auto rep = bootstrap_validate(link_dist, link_sizes(input), cfg.replicas, cfg.seed, opts);
    report["bootstrap"] = bootstrap_report_json(rep);
  });

  stage("dynamics", cfg.skip_dynamics, [&] {
    const TurnCurve curve = turn_probability_curve(analysis_log);
    {
      auto out = open_out(out_dir / "turn_curve.tsv");
      write_turn_curve_tsv(out, curve);
      artifacts.push_back("turn_curve.tsv");
    }
    json j;
    try {
      const ExpFit fit = fit_exponential(curve, cfg.min_curve_obs);
      j["exp_fit"] = {{"a", fit.a},
                      {"b", fit.b},
                      {"residual_norm", fit.residual_norm},
                      {"lengths_used", fit.lengths_used},
                      {"zero_points_excluded", fit.zero_points_excluded}};
    } catch (const std::invalid_argument& e) {
      j["exp_fit"] = {{"error", e.what()}};
    }
    const auto disc = detect_discontinuations(ds, log, cfg.ghost_factor, cfg.dyn_min_initiatives, 3,
                                              !cfg.include_nonreciprocal);
    const EndingCurve ending = ending_probability_curve(disc, analysis_log);
    {
      auto out = open_out(out_dir / "ending_curve.tsv");
      write_ending_curve_tsv(out, ending);
      artifacts.push_back("ending_curve.tsv");
    }
    j["discontinuations"] = {
        {"eligible", disc.eligible_count},
        {"flagged", disc.discontinued_count},
        {"mean_final_run_length",
         disc.mean_final_run_length ? json(*disc.mean_final_run_length) : json(nullptr)},
        {"factor", disc.factor},
        {"min_initiatives", disc.min_initiatives}};
    report["dynamics"] = j;
  });

  stage("persons", cfg.skip_persons, [&] {
    auto estimates = person_estimates(analysis_log, cfg.min_person_initiatives);
    if (cfg.participants_only && !traits.empty())
      std::erase_if(estimates, [&](const PersonEstimate& e) { return !traits.count(e.person); });
    const auto incoming = incoming_streams(analysis_log);
    {
      auto out = open_out(out_dir / "persons.tsv");
      write_persons_tsv(out, estimates, incoming, cfg.window_size);
      artifacts.push_back("persons.tsv");
    }
    json j;
    j["count"] = estimates.size();
    std::size_t eligible = 0;
    std::vector<double> mu, abundance;
    for (const PersonEstimate& e : estimates) {
      if (!e.eligible || !e.mu_p) continue;
      ++eligible;
      const auto it = incoming.find(e.person);
      if (it == incoming.end()) continue;
      if (const auto a = friend_abundance(it->second, cfg.window_size)) {
        mu.push_back(*e.mu_p);
        abundance.push_back(*a);
      }
    }
    j["eligible"] = eligible;
    j["abundance_pairs"] = mu.size();
    if (mu.size() >= 3) {
      try {
        j["abundance_vs_mu"] =
            correlation_json(pearson_with_bootstrap(mu, abundance, cfg.bootstrap_rounds, cfg.seed));
      } catch (const std::exception& e) {
        j["abundance_vs_mu"] = {{"error", e.what()}};
      }
      json trend = json::array();
      for (const BinnedPoint& b : binned_means(mu, abundance, 10))
        trend.push_back({{"center", b.center},
                         {"mean", b.mean ? json(*b.mean) : json(nullptr)},
                         {"count", b.count}});
      j["abundance_trend"] = trend;
    } else {
      j["abundance_vs_mu"] = nullptr;
      j["abundance_trend"] = json::array();
    }
    if (!traits.empty()) {
      const auto tc = trait_correlations(estimates, traits, cfg.bootstrap_rounds, cfg.seed);
      json jt;
      for (std::size_t t = 0; t < 5; ++t) jt[kTraitNames[t]] = correlation_json(tc.by_trait[t]);
      jt["join_size"] = tc.join_size;
      j["trait_correlations"] = jt;
    } else {
      j["trait_correlations"] = nullptr;
    }
    report["persons"] = j;
  });

  write_text(out_dir / "report.json", report.dump(2) + "\n");
  artifacts.push_back("report.json");
  artifacts.push_back("manifest.json");
  write_manifest("");
  return 0;
}

// ---------------------------------------------------------------------------
// report: render a report.json for reading
// ---------------------------------------------------------------------------

void render_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw InputError("malformed report: " + std::string(e.what()));
  }
  std::ostringstream os;
  os.precision(6);
  if (j.contains("ingest")) {
    const auto& g = j["ingest"];
    os << "Ingest: " << g.value("kept", 0) << " events kept (" << g.value("deduplicated", 0)
       << " duplicates, " << g.value("rejected", 0) << " rejected), " << g.value("links", 0)
       << " links, " << g.value("persons", 0) << " persons\n";
  }
  if (j.contains("interevent")) {
    const auto& g = j["interevent"];
    os << "Inter-event: " << g.value("gap_count", 0) << " gaps";
    if (g.contains("fraction_below_threshold") && !g["fraction_below_threshold"].is_null())
      os << ", fraction below threshold " << g["fraction_below_threshold"].get<double>();
    if (g.contains("alpha_mle")) os << ", alpha (MLE) " << g["alpha_mle"].get<double>();
    os << "\n";
  }
  const auto mixture_line = [&](const char* key, const char* label) {
    if (!j.contains(key) || !j[key].is_object()) return;
    const auto& g = j[key];
    os << label << ": mean " << g.value("mean", 0.0) << ", zero-bin "
       << g.value("zero_bin_weight", 0.0);
    if (g.contains("mean_excluding_zero") && !g["mean_excluding_zero"].is_null())
      os << ", mean excl. zero " << g["mean_excluding_zero"].get<double>();
    os << (g.value("converged", false) ? " (converged)" : " (NOT converged)") << "\n";
  };
  mixture_line("link_mixture", "Link mixture");
  mixture_line("person_mixture", "Person mixture");
  if (j.contains("bootstrap") && j["bootstrap"].is_object()) {
    const auto& g = j["bootstrap"];
    os << "Bootstrap: " << g.value("succeeded", 0) << "/" << g.value("replicas", 0)
       << " replicas, mean-mu spread " << g.value("mean_mu_spread", 0.0)
       << (g.value("bias_flag", false) ? ", BIAS FLAGGED" : ", unbiased") << "\n";
  }
  if (j.contains("dynamics") && j["dynamics"].is_object()) {
    const auto& g = j["dynamics"];
    if (g.contains("exp_fit") && g["exp_fit"].contains("a"))
      os << "Turn curve fit: a " << g["exp_fit"]["a"].get<double>() << ", b "
         << g["exp_fit"]["b"].get<double>() << "\n";
    if (g.contains("discontinuations")) {
      const auto& d = g["discontinuations"];
      os << "Discontinuations: " << d.value("flagged", 0) << " of " << d.value("eligible", 0)
         << " eligible links";
      if (d.contains("mean_final_run_length") && !d["mean_final_run_length"].is_null())
        os << ", mean final run length " << d["mean_final_run_length"].get<double>();
      os << "\n";
    }
  }
  if (j.contains("persons") && j["persons"].is_object()) {
    const auto& g = j["persons"];
    os << "Persons: " << g.value("count", 0) << " total, " << g.value("eligible", 0)
       << " eligible\n";
    if (g.contains("abundance_vs_mu") && g["abundance_vs_mu"].is_object() &&
        g["abundance_vs_mu"].contains("r"))
      os << "  friend abundance vs mu_p: r " << g["abundance_vs_mu"]["r"].get<double>() << " +- "
         << g["abundance_vs_mu"]["std_error"].get<double>() << "\n";
    if (g.contains("trait_correlations") && g["trait_correlations"].is_object())
      for (const char* name : kTraitNames)
        if (g["trait_correlations"].contains(name))
          os << "  mu_p vs " << name << ": r " << g["trait_correlations"][name]["r"].get<double>()
             << " +- " << g["trait_correlations"][name]["std_error"].get<double>() << "\n";
  }
  if (j.contains("skipped") && !j["skipped"].empty()) {
    os << "Skipped stages:";
    for (const auto& s : j["skipped"]) os << " " << s.get<std::string>();
    os << "\n";
  }
  std::cout << os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Initiative dynamics analytics for communication event logs"};
  app.require_subcommand(1);

  std::string delimiter = "\\t";
  app.add_option("--delimiter", delimiter, "Field delimiter for all tabular files")
      ->capture_default_str();

  // ingest ------------------------------------------------------------
  auto* c_ingest = app.add_subcommand("ingest", "Validate event and trait files");
  std::string in_events, in_traits;
  bool in_lenient = false;
  c_ingest->add_option("--events", in_events, "Event log (TSV)")->required();
  c_ingest->add_option("--traits", in_traits, "Trait table (TSV)");
  c_ingest->add_flag("--lenient", in_lenient, "Skip malformed rows instead of aborting");

  // extract -----------------------------------------------------------
  auto* c_extract = app.add_subcommand("extract", "Classify events into initiatives");
  std::string ex_events, ex_out = "initiatives.tsv";
  double ex_hours = 24.0;
  c_extract->add_option("--events", ex_events, "Event log (TSV)")->required();
  c_extract->add_option("--threshold-hours", ex_hours, "Separation threshold in hours")
      ->capture_default_str();
  c_extract->add_option("--out", ex_out, "Initiative stream output")->capture_default_str();

  // estimate ----------------------------------------------------------
  auto* c_estimate = app.add_subcommand("estimate", "Maximum-likelihood mixing distribution");
  std::string es_events, es_counts, es_out_dist = "mixture.tsv", es_out_report;
  double es_hours = 24.0;
  bool es_person = false;
  EstimatorFlags es_flags;
  c_estimate->add_option("--events", es_events, "Event log (TSV)");
  c_estimate->add_option("--counts", es_counts, "Precomputed link counts (a b n_a n_b)");
  c_estimate->add_option("--threshold-hours", es_hours, "Separation threshold in hours")
      ->capture_default_str();
  c_estimate->add_flag("--person", es_person, "Estimate the person-level distribution on [0, 1]");
  c_estimate->add_option("--out-dist", es_out_dist, "Distribution output (mu weight)")
      ->capture_default_str();
  c_estimate->add_option("--out-report", es_out_report, "Estimator report JSON output");
  es_flags.attach(c_estimate);
  c_estimate->add_option("--threads", es_flags.threads, "Worker threads")->capture_default_str();

  // simulate ----------------------------------------------------------
  auto* c_sim = app.add_subcommand("simulate", "Synthetic datasets and feedback sequences");
  std::string sm_dist, sm_sizes_counts, sm_sizes_events, sm_out_dir = "replicas", sm_out;
  std::size_t sm_replicas = 100;
  std::uint64_t sm_seed = 1;
  bool sm_validate = false;
  double sm_a = 0.0, sm_b = 0.0, sm_hours = 24.0;
  std::size_t sm_total = 0;
  EstimatorFlags sm_flags;
  c_sim->add_option("--dist", sm_dist, "Source distribution (mu weight)");
  c_sim->add_option("--sizes-from-counts", sm_sizes_counts, "Take link sizes from a counts file");
  c_sim->add_option("--sizes-from-events", sm_sizes_events, "Take link sizes from an event log");
  c_sim->add_option("--threshold-hours", sm_hours, "Separation threshold in hours")
      ->capture_default_str();
  c_sim->add_option("--replicas", sm_replicas, "Number of replicas")->capture_default_str();
  c_sim->add_option("--seed", sm_seed, "Random seed")->capture_default_str();
  c_sim->add_flag("--validate", sm_validate, "Re-estimate each replica and report spread and bias");
  c_sim->add_option("--out-dir", sm_out_dir, "Directory for replica files")->capture_default_str();
  c_sim->add_option("--feedback-a", sm_a, "Feedback switch amplitude");
  c_sim->add_option("--feedback-b", sm_b, "Feedback switch decay");
  c_sim->add_option("--total", sm_total, "Total initiatives for feedback sequences");
  c_sim->add_option("--out", sm_out, "Output file for feedback sequences");
  sm_flags.attach(c_sim);
  c_sim->add_option("--threads", sm_flags.threads, "Worker threads")->capture_default_str();

  // dynamics ----------------------------------------------------------
  auto* c_dyn = app.add_subcommand("dynamics", "Run-length statistics and discontinuations");
  std::string dy_events, dy_out_dir = "dynamics_out";
  double dy_hours = 24.0, dy_factor = 10.0;
  std::uint64_t dy_min_init = 15, dy_min_obs = 30;
  bool dy_nonreciprocal = false;
  c_dyn->add_option("--events", dy_events, "Event log (TSV)")->required();
  c_dyn->add_option("--threshold-hours", dy_hours, "Separation threshold in hours")
      ->capture_default_str();
  c_dyn->add_option("--min-initiatives", dy_min_init, "Initiative floor for discontinuation checks")
      ->capture_default_str();
  c_dyn->add_option("--ghost-factor", dy_factor, "Outside-activity multiple that flags a link")
      ->capture_default_str();
  c_dyn->add_option("--min-curve-obs", dy_min_obs, "Observation floor per turn-curve point")
      ->capture_default_str();
  c_dyn->add_flag("--include-nonreciprocal", dy_nonreciprocal,
                  "Keep one-sided links in the dynamics analyses");
  c_dyn->add_option("--out-dir", dy_out_dir, "Directory for curve files")->capture_default_str();

  // persons -----------------------------------------------------------
  auto* c_pers = app.add_subcommand("persons", "Per-person ratios, abundance, and correlations");
  std::string pe_events, pe_traits, pe_out = "persons.tsv";
  double pe_hours = 24.0;
  std::size_t pe_window = 20, pe_rounds = 1000;
  std::uint64_t pe_min_init = 200, pe_seed = 1;
  bool pe_participants = false, pe_nonreciprocal = false;
  c_pers->add_option("--events", pe_events, "Event log (TSV)")->required();
  c_pers->add_option("--traits", pe_traits, "Trait table (TSV)");
  c_pers->add_option("--threshold-hours", pe_hours, "Separation threshold in hours")
      ->capture_default_str();
  c_pers->add_option("--window-size", pe_window, "Incoming-initiative window")
      ->capture_default_str();
  c_pers->add_option("--min-person-initiatives", pe_min_init,
                     "Eligibility threshold on total initiatives")
      ->capture_default_str();
  c_pers->add_option("--bootstrap-rounds", pe_rounds, "Bootstrap resamples for correlation errors")
      ->capture_default_str();
  c_pers->add_option("--seed", pe_seed, "Bootstrap seed")->capture_default_str();
  c_pers->add_flag("--participants-only", pe_participants,
                   "Restrict person metrics to persons present in the trait table");
  c_pers->add_flag("--include-nonreciprocal", pe_nonreciprocal,
                   "Keep one-sided links in the person metrics");
  c_pers->add_option("--out", pe_out, "Person table output")->capture_default_str();

  // report ------------------------------------------------------------
  auto* c_report = app.add_subcommand("report", "Render a report.json for reading");
  std::string rp_in = "report.json";
  c_report->add_option("--in", rp_in, "Report file")->capture_default_str();

  // run ---------------------------------------------------------------
  auto* c_run = app.add_subcommand("run", "Full pipeline with manifest");
  RunConfig cfg;
  c_run->add_option("--events", cfg.events_path, "Event log (TSV)")->required();
  c_run->add_option("--traits", cfg.traits_path, "Trait table (TSV)");
  c_run->add_option("--out-dir", cfg.out_dir, "Artifact directory")->capture_default_str();
  c_run->add_flag("--lenient", cfg.lenient, "Skip malformed rows instead of aborting");
  c_run->add_option("--threshold-hours", cfg.threshold_hours, "Separation threshold in hours")
      ->capture_default_str();
  c_run->add_option("--fit-tmin", cfg.fit_tmin, "Power-law fit range start (seconds)")
      ->capture_default_str();
  c_run->add_option("--fit-tmax", cfg.fit_tmax, "Power-law fit range end (seconds)")
      ->capture_default_str();
  c_run->add_option("--interevent-bins", cfg.interevent_bins, "Log bins for the gap histogram")
      ->capture_default_str();
  cfg.est.attach(c_run);
  c_run->add_option("--replicas", cfg.replicas, "Bootstrap replicas")->capture_default_str();
  c_run->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  c_run->add_option("--dyn-min-initiatives", cfg.dyn_min_initiatives,
                    "Initiative floor for discontinuation checks")
      ->capture_default_str();
  c_run->add_option("--ghost-factor", cfg.ghost_factor,
                    "Outside-activity multiple that flags a link")
      ->capture_default_str();
  c_run->add_option("--min-curve-obs", cfg.min_curve_obs, "Observation floor per turn-curve point")
      ->capture_default_str();
  c_run->add_flag("--include-nonreciprocal", cfg.include_nonreciprocal,
                  "Keep one-sided links in the dynamics and person analyses");
  c_run->add_option("--window-size", cfg.window_size, "Incoming-initiative window")
      ->capture_default_str();
  c_run->add_option("--min-person-initiatives", cfg.min_person_initiatives,
                    "Eligibility threshold on total initiatives")
      ->capture_default_str();
  c_run->add_option("--bootstrap-rounds", cfg.bootstrap_rounds,
                    "Bootstrap resamples for correlation errors")
      ->capture_default_str();
  c_run->add_flag("--participants-only", cfg.participants_only,
                  "Restrict person metrics to persons present in the trait table");
  c_run->add_option("--threads", cfg.threads, "Worker threads (1 = bit-exact serial)")
      ->capture_default_str();
  c_run->add_flag("--skip-mixture", cfg.skip_mixture, "Skip mixture estimation and bootstrap");
  c_run->add_flag("--skip-bootstrap", cfg.skip_bootstrap, "Skip bootstrap validation");
  c_run->add_flag("--skip-dynamics", cfg.skip_dynamics, "Skip turn and ending curves");
  c_run->add_flag("--skip-persons", cfg.skip_persons, "Skip person metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const char delim = parse_delimiter(delimiter);

    if (*c_ingest) {
      IngestReport rep;
      const Dataset ds = load_events(in_events, delim, in_lenient, &rep);
      json j = ingest_report_json(rep);
      j["links"] = ds.link_count();
      j["persons"] = ds.persons.size();
      if (!in_traits.empty()) j["trait_records"] = load_traits(in_traits, delim).size();
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_extract) {
      const Dataset ds = load_events(ex_events, delim, false, nullptr);
      const auto log = extract_initiatives(ds, threshold_seconds(ex_hours));
      auto out = open_out(ex_out);
      write_initiatives_tsv(out, log, delim);
      std::size_t total = 0;
      for (const auto& seq : log) total += seq.records.size();
      json j{{"initiatives", total}, {"links", log.size()}, {"out", ex_out}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_estimate) {
      if (es_events.empty() == es_counts.empty())
        throw InputError("estimate: provide exactly one of --events or --counts");
      std::vector<LinkCounts> counts;
      if (!es_events.empty()) {
        const Dataset ds = load_events(es_events, delim, false, nullptr);
        counts = link_counts(extract_initiatives(ds, threshold_seconds(es_hours)));
      } else {
        std::ifstream in(es_counts, std::ios::binary);
        if (!in) throw InputError("cannot open counts file '" + es_counts + "'");
        counts = read_link_counts_tsv(in, delim);
      }
      if (es_flags.reciprocal_only) counts = reciprocal_only(std::move(counts));

      MixtureDistribution dist;
      EstimatorReport rep;
      if (es_person) {
        std::map<PersonId, PersonCounts> by_person;
        for (const LinkCounts& c : counts) {
          by_person[c.link.a].out += c.n_a;
          by_person[c.link.a].total += c.total();
          by_person[c.link.b].out += c.n_b;
          by_person[c.link.b].total += c.total();
        }
        std::vector<PersonCounts> pcounts;
        pcounts.reserve(by_person.size());
        for (const auto& [id, pc] : by_person) pcounts.push_back(pc);
        std::tie(dist, rep) =
            estimate_person_mixture(pcounts, person_grid(es_flags.grid_size), es_flags.options());
      } else {
        std::tie(dist, rep) =
            estimate_link_mixture(counts, link_grid(es_flags.grid_size), es_flags.options());
      }
      auto out = open_out(es_out_dist);
      write_mixture_tsv(out, dist, delim);
      const json j = estimator_report_json(rep);
      if (!es_out_report.empty()) write_text(es_out_report, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_sim) {
      const bool feedback = c_sim->count("--feedback-a") > 0;
      if (feedback) {
        if (sm_total == 0) throw InputError("simulate: feedback mode needs --total");
        if (sm_out.empty()) throw InputError("simulate: feedback mode needs --out");
        const auto log = generate_feedback_sequences(sm_a, sm_b, sm_total, sm_seed);
        auto out = open_out(sm_out);
        write_initiatives_tsv(out, log, delim);
        json j{{"sequences", log.size()}, {"initiatives", sm_total}, {"out", sm_out}};
        std::cout << j.dump(2) << "\n";
        return 0;
      }
      if (sm_dist.empty()) throw InputError("simulate: need --dist");
      const MixtureDistribution dist = load_mixture_tsv(sm_dist, delim);
      std::vector<std::uint64_t> sizes;
      if (!sm_sizes_counts.empty()) {
        std::ifstream in(sm_sizes_counts, std::ios::binary);
        if (!in) throw InputError("cannot open counts file '" + sm_sizes_counts + "'");
        sizes = link_sizes(read_link_counts_tsv(in, delim));
      } else if (!sm_sizes_events.empty()) {
        const Dataset ds = load_events(sm_sizes_events, delim, false, nullptr);
        sizes = link_sizes(link_counts(extract_initiatives(ds, threshold_seconds(sm_hours))));
      } else {
        throw InputError("simulate: need --sizes-from-counts or --sizes-from-events");
      }
      if (sm_validate) {
        const auto rep = bootstrap_validate(dist, sizes, sm_replicas, sm_seed, sm_flags.options());
        std::cout << bootstrap_report_json(rep).dump(2) << "\n";
        return 0;
      }
      fs::create_directories(sm_out_dir);
      ReplicaSpec spec{dist, sizes, sm_replicas, sm_seed};
      for (std::size_t r = 0; r < sm_replicas; ++r) {
        char name[32];
        std::snprintf(name, sizeof name, "replica_%03zu.tsv", r);
        auto out = open_out(fs::path(sm_out_dir) / name);
        write_link_counts_tsv(out, generate_replica(spec, r), delim);
      }
      json j{{"replicas", sm_replicas}, {"links", sizes.size()}, {"out_dir", sm_out_dir}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_dyn) {
      const Dataset ds = load_events(dy_events, delim, false, nullptr);
      const auto log = extract_initiatives(ds, threshold_seconds(dy_hours));
      const auto analysis_log = dy_nonreciprocal ? log : reciprocal_sequences(log);
      fs::create_directories(dy_out_dir);
      const TurnCurve curve = turn_probability_curve(analysis_log);
      {
        auto out = open_out(fs::path(dy_out_dir) / "turn_curve.tsv");
        write_turn_curve_tsv(out, curve, delim);
      }
      json j;
      try {
        const ExpFit fit = fit_exponential(curve, dy_min_obs);
        j["exp_fit"] = {{"a", fit.a}, {"b", fit.b}, {"residual_norm", fit.residual_norm}};
      } catch (const std::invalid_argument& e) {
        j["exp_fit"] = {{"error", e.what()}};
      }
      const auto disc =
          detect_discontinuations(ds, log, dy_factor, dy_min_init, 3, !dy_nonreciprocal);
      const EndingCurve ending = ending_probability_curve(disc, analysis_log);
      {
        auto out = open_out(fs::path(dy_out_dir) / "ending_curve.tsv");
        write_ending_curve_tsv(out, ending, delim);
      }
      j["discontinuations"] = {
          {"eligible", disc.eligible_count},
          {"flagged", disc.discontinued_count},
          {"mean_final_run_length",
           disc.mean_final_run_length ? json(*disc.mean_final_run_length) : json(nullptr)}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_pers) {
      const Dataset ds = load_events(pe_events, delim, false, nullptr);
      const auto log = extract_initiatives(ds, threshold_seconds(pe_hours));
      const auto analysis_log = pe_nonreciprocal ? log : reciprocal_sequences(log);
      std::map<PersonId, TraitRecord> traits;
      if (!pe_traits.empty()) traits = load_traits(pe_traits, delim);
      auto estimates = person_estimates(analysis_log, pe_min_init);
      if (pe_participants && !traits.empty())
        std::erase_if(estimates, [&](const PersonEstimate& e) { return !traits.count(e.person); });
      const auto incoming = incoming_streams(analysis_log);
      {
        auto out = open_out(pe_out);
        write_persons_tsv(out, estimates, incoming, pe_window, delim);
      }
      json j{{"persons", estimates.size()}, {"out", pe_out}};
      if (!traits.empty()) {
        const auto tc = trait_correlations(estimates, traits, pe_rounds, pe_seed);
        json jt;
        for (std::size_t t = 0; t < 5; ++t) jt[kTraitNames[t]] = correlation_json(tc.by_trait[t]);
        jt["join_size"] = tc.join_size;
        j["trait_correlations"] = jt;
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_report) {
      render_report(rp_in);
      return 0;
    }

    if (*c_run) {
      cfg.delimiter = delimiter;
      cfg.est.threads = cfg.threads;
      return run_pipeline(cfg);
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
