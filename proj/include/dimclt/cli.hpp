#pragma once

// Config validation and experiment orchestration behind `dimclt run`.
//
// Exit codes: 0 every test passed, 1 some test failed, 2 invalid config or
// model hypothesis violated, 3 numerical failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dimclt/conformal1d.hpp"
#include "dimclt/io.hpp"
#include "dimclt/sampling_stats.hpp"
#include "dimclt/thermodynamics.hpp"

namespace dimclt {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  std::string mode = "thermo";
  int k = 2, l = 3;
  double a = 0.0, b = 0.0, c = 0.0;
  TorusPoint anchor;
  Json potential_json;
  PotentialSpec potential;
  int depth = 3;
  int est_depth = -1;
  ExperimentConfig experiment;
  std::vector<double> b_grid{0.5, 1.0, 1.5, 2.0};
  int oracle_paths = 100000;
  bool dump_paths = false;
  std::string output_dir = "dimclt_out";
  Json echo;
};

inline const std::set<std::string>& run_modes() {
  static const std::set<std::string> modes{"thermo",      "clt",         "median", "arcsine", "maximum",
                                           "conformal1d", "diagnostics", "all"};
  return modes;
}

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ModelError(std::string("config field \"") + key + "\" has the wrong type");
  }
}

}  // namespace detail

/// Parses and validates a config document; every failure is a ModelError.
inline RunConfig parse_run_config(const Json& j) {
  if (!j.is_object()) throw ModelError("config must be a JSON object");
  static const std::set<std::string> known{
      "schema_version", "mode",       "k",         "a",           "l",        "b",
      "c",              "anchor_x",   "anchor_y",  "potential",   "depth",    "est_depth",
      "eps_list",       "t_grid",     "t_grid_points", "n_samples", "seed",   "process_kind",
      "threads",        "b_grid",     "oracle_paths",  "dump_paths", "output_dir"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ModelError("unknown config field \"" + key + "\"");
  if (detail::get_or<int>(j, "schema_version", -1) != kSchemaVersion)
    throw ModelError("schema_version must be " + std::to_string(kSchemaVersion));

  RunConfig rc;
  rc.echo = j;
  rc.mode = detail::get_or<std::string>(j, "mode", rc.mode);
  if (!run_modes().count(rc.mode)) throw ModelError("unknown mode \"" + rc.mode + "\"");
  rc.k = detail::get_or<int>(j, "k", rc.k);
  rc.a = detail::get_or<double>(j, "a", rc.a);
  rc.l = detail::get_or<int>(j, "l", rc.l);
  rc.b = detail::get_or<double>(j, "b", rc.b);
  rc.c = detail::get_or<double>(j, "c", rc.c);
  rc.anchor = TorusPoint(detail::get_or<double>(j, "anchor_x", 0.0), detail::get_or<double>(j, "anchor_y", 0.0));
  if (!j.contains("potential")) throw ModelError("config needs a \"potential\"");
  rc.potential_json = j.at("potential");
  const bool one_d = rc.mode == "conformal1d";
  // map validation (throws "expansion violated")
  if (one_d) {
    CircleMap(rc.k, rc.a).validate();
  } else {
    (void)SkewMap(rc.k, rc.a, rc.l, rc.b, rc.c);
    CircleMap(rc.k, rc.a).validate();
    CircleMap(rc.l, rc.b).validate();
  }
  try {
    rc.potential = potential_from_json(rc.potential_json, one_d ? 1 : rc.l);
  } catch (const Json::exception& e) {
    throw ModelError(std::string("bad potential: ") + e.what());
  }
  if (one_d)
    validate_potential_1d(CircleMap(rc.k, rc.a), rc.potential);
  else
    validate_potential(SkewMap(rc.k, rc.a, rc.l, rc.b, rc.c), rc.potential);
  rc.depth = detail::get_or<int>(j, "depth", rc.depth);
  if (rc.depth < 2) throw ModelError("depth must be >= 2");
  const double states = std::pow(static_cast<double>(one_d ? rc.k : rc.k * rc.l), rc.depth);
  if (states > 1e7) throw ModelError("cylinder budget exceeded: alphabet^depth > 1e7");
  rc.est_depth = detail::get_or<int>(j, "est_depth", rc.est_depth);
  if (rc.est_depth >= rc.depth || rc.est_depth < -1) throw ModelError("est_depth must be -1 or in [0, depth)");

  auto& ex = rc.experiment;
  ex.eps_list = detail::get_or<std::vector<double>>(j, "eps_list", ex.eps_list);
  if (j.contains("t_grid"))
    ex.t_grid = detail::get_or<std::vector<double>>(j, "t_grid", {});
  else
    ex.t_grid = uniform_grid(std::max(2, detail::get_or<int>(j, "t_grid_points", 101)));
  ex.n_samples = detail::get_or<int>(j, "n_samples", ex.n_samples);
  ex.seed = detail::get_or<std::uint64_t>(j, "seed", ex.seed);
  const auto kind = detail::get_or<std::string>(j, "process_kind", "birkhoff");
  if (kind == "birkhoff")
    ex.kind = ProcessKind::birkhoff;
  else if (kind == "markov")
    ex.kind = ProcessKind::markov;
  else if (kind == "direct")
    ex.kind = ProcessKind::direct;
  else
    throw ModelError("process_kind must be direct, markov or birkhoff");
  ex.threads = detail::get_or<int>(j, "threads", ex.threads);
  ex.validate();
  if (one_d && ex.kind != ProcessKind::birkhoff) throw ModelError("conformal1d runs the birkhoff process only");
  if (ex.kind == ProcessKind::direct) {
    const MarkovPartition part = build_partition(SkewMap(rc.k, rc.a, rc.l, rc.b, rc.c), rc.anchor);
    if (!part.rect_cells_are_boxes())
      throw ModelError("direct process needs c = 0 and an anchor fixed by both circle maps");
  }
  rc.b_grid = detail::get_or<std::vector<double>>(j, "b_grid", rc.b_grid);
  rc.oracle_paths = detail::get_or<int>(j, "oracle_paths", rc.oracle_paths);
  if (rc.oracle_paths < 100) throw ModelError("oracle_paths must be >= 100");
  rc.dump_paths = detail::get_or<bool>(j, "dump_paths", false);
  rc.output_dir = detail::get_or<std::string>(j, "output_dir", rc.output_dir);
  return rc;
}

struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  bool use_cache = true;
};

struct RunOutcome {
  int exit_code = 0;
  std::string reason;
  Json report;
  std::vector<TestReport> tests;
};

// ---------------------------------------------------------------------------

inline Json model_summary(const GibbsModel& g) {
  return {{"raw_pressure", g.raw_pressure}, {"pressure", g.pressure}, {"lambda_u", g.lambda_u},
          {"lambda_uu", g.lambda_uu},       {"h_u", g.h_u},           {"h_uu", g.h_uu},
          {"h_mu_blocks", g.h_mu_blocks},   {"delta_u", g.delta_u},   {"delta_uu", g.delta_uu},
          {"delta", g.delta},               {"Q", matrix_to_json(g.Q)}, {"sigma2", g.sigma2},
          {"gk_terms", g.gk_terms},         {"psi_variation", g.psi.variation_profile}};
}

/// Invariants of a built model, one summary row each.
inline TestReport thermo_report(const GibbsModel& g) {
  TestReport r;
  r.name = "thermo_invariants";
  r.sample_size = static_cast<int>(g.chain.states());
  bool ok = true;
  auto check = [&](const std::string& name, double value, double reference, double lo, double hi) {
    r.rows.push_back({name, value, reference, lo, hi});
    if (!(value >= lo && value <= hi)) ok = false;
  };
  double total = 0.0;
  for (double w : g.mu_weights()) total += w;
  check("mu_total", total, 1.0, 1 - 1e-10, 1 + 1e-10);
  // invariance: mass of a depth-(m-1) word is the same whether it is the prefix
  // or the suffix of the depth-m words
  const auto& pi = g.chain.stationary();
  const std::size_t tail = g.chain.states() / g.chain.alphabet();
  std::vector<double> as_prefix(tail, 0.0), as_suffix(tail, 0.0);
  for (std::size_t w = 0; w < pi.size(); ++w) {
    as_prefix[w / g.chain.alphabet()] += pi[w];
    as_suffix[w % tail] += pi[w];
  }
  double inv = 0.0;
  for (std::size_t u = 0; u < tail; ++u) inv = std::max(inv, std::fabs(as_prefix[u] - as_suffix[u]));
  check("invariance_defect", inv, 0.0, 0.0, 1e-8);
  check("delta_identity", g.delta - (g.h_u / g.lambda_u + g.h_uu / g.lambda_uu), 0.0, -1e-9, 1e-9);
  check("delta", g.delta, g.h_u / g.lambda_u + g.h_uu / g.lambda_uu, 0.0, 2.0 + 1e-9);
  check("h_u", g.h_u, 0.0, -1e-6, 1e9);
  check("h_uu", g.h_uu, 0.0, -1e-6, 1e9);
  check("variational", g.h_mu_blocks + g.chain.expectation(g.phi_state), 0.0, -2e-3, 2e-3);
  check("phi1_mean", g.chain.expectation(g.phi1_state), 0.0, -1e-6, 1e-6);
  check("phi2_mean", g.chain.expectation(g.phi2_state), 0.0, -1e-6, 1e-6);
  const auto e = eigen_symmetric(g.Q);
  check("Q_min_eigenvalue", e.values[1], 0.0, -1e-10, 1e9);
  check("Q_asymmetry", g.Q[0][1] - g.Q[1][0], 0.0, -1e-12, 1e-12);
  check("sigma2", g.sigma2, limit_variance_closed(g.Q, 1 / g.lambda_uu, 1 / g.lambda_u), 0.0, 1e9);
  check("sigma2_closed_vs_eigen",
        limit_variance_eigen(g.Q, 1 / g.lambda_uu, 1 / g.lambda_u) -
            limit_variance_closed(g.Q, 1 / g.lambda_uu, 1 / g.lambda_u),
        0.0, -1e-10, 1e-10);
  r.pass = ok;
  r.empirical = g.delta;
  r.reference = g.sigma2;
  r.note = "empirical = delta, reference = sigma^2";
  return r;
}

inline TestReport degeneracy_report(const GibbsModel& g) {
  const auto v = degeneracy_test(g);
  TestReport r;
  r.name = "degeneracy";
  r.sample_size = static_cast<int>(g.chain.states());
  r.empirical = g.sigma2;
  r.tolerance = 1e-6;
  r.pass = v.consistent;
  r.note = (v.degenerate ? "degenerate (sigma^2 ~ 0)" : "non-degenerate") +
           std::string(v.reason.empty() ? "" : "; " + v.reason);
  r.rows.push_back({"acim_pressure", v.acim_pressure, 0.0, 0.0, 0.0});
  r.rows.push_back({"tv_to_acim", v.total_variation, 0.0, 0.0, 1e-4});
  return r;
}

inline std::string eps_tag(double eps) {
  const double e = -std::log2(eps);
  char buf[40];
  if (std::fabs(e - std::round(e)) < 1e-9)
    std::snprintf(buf, sizeof buf, "eps=2^-%d", static_cast<int>(std::round(e)));
  else
    std::snprintf(buf, sizeof buf, "eps=%.6g", eps);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

/// Corollary tests on path samples (one set per eps).
inline void corollary_reports(const std::string& mode, const std::vector<std::vector<FluctuationPath>>& by_eps,
                              const std::vector<double>& eps_list, const std::vector<double>& t_grid,
                              double sigma2, const std::vector<double>& b_grid, const std::vector<double>& oracle,
                              std::vector<TestReport>& out) {
  const bool all = mode == "all" || mode == "conformal1d";
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    const std::string tag = eps_list.size() > 1 ? "@" + eps_tag(eps_list[e]) : "";
    const auto ends = endpoint_values(by_eps[e]);
    const auto values = path_values(by_eps[e]);
    if (all || mode == "clt") {
      out.push_back(clt_test(ends, sigma2, eps_list[e]));
      out.back().name += tag;
    }
    if (all || mode == "median") {
      out.push_back(median_test(ends, sigma2, eps_list[e]));
      out.back().name += tag;
    }
    if (all || mode == "arcsine") {
      out.push_back(arcsine_test(values, t_grid, sigma2));
      out.back().name += tag;
    }
    if (all || mode == "maximum") {
      out.push_back(maximum_test(values, sigma2, b_grid, oracle));
      out.back().name += tag;
    }
  }
}

/// Hitting-time scaling, slope bound, scale invariance and the surrogate chain.
inline void diagnostic_reports(const GibbsModel& g, const ExperimentConfig& cfg, std::vector<TestReport>& out) {
  const MarkovPartition part = build_partition(g.map, g.anchor);
  const PathEngine engine(g, &part);
  const double eps_min = cfg.eps_list.back();
  const double ell = -std::log(eps_min);
  const int n = std::min(cfg.n_samples, 1000);

  struct PerSample {
    double n_ratio, m_ratio, surrogate_gap;
    std::vector<double> gaps;
    double scale_dev;
  };
  const std::vector<double> half_grid = [&] {
    std::vector<double> h;
    for (double t : cfg.t_grid) h.push_back(0.5 * t);
    return h;
  }();
  auto samples = parallel_map(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t i) {
    auto rng = sample_rng(cfg.seed, i);
    const auto so = engine.sample(rng, eps_min * eps_min);
    const auto s = engine.series(so);
    PerSample ps{};
    // least-squares slopes of n_eps, m_eps against -log eps over [ell/2, ell]
    double sx = 0, sxx = 0, sn = 0, sxn = 0, sm = 0, sxm = 0;
    const int steps = 11;
    for (int j = 0; j < steps; ++j) {
      const double x = ell * (0.5 + 0.5 * j / (steps - 1));
      const auto ht = hitting_times_from_orbit(s.log_fprime, s.log_dgdy, x);
      sx += x;
      sxx += x * x;
      sn += ht.n_eps;
      sxn += x * ht.n_eps;
      sm += ht.m_eps;
      sxm += x * ht.m_eps;
    }
    const double den = steps * sxx - sx * sx;
    ps.n_ratio = (steps * sxn - sx * sn) / den;
    ps.m_ratio = (steps * sxm - sx * sm) / den;
    for (double eps : cfg.eps_list) {
      const auto a = engine.markov(so, s, eps, cfg.t_grid);
      const auto b = engine.birkhoff(so, s, eps, cfg.t_grid);
      double gap = 0.0;
      for (std::size_t k = 0; k < a.values.size(); ++k) gap = std::max(gap, std::fabs(a.values[k] - b.values[k]));
      ps.gaps.push_back(gap * std::sqrt(-std::log(eps)));
    }
    const auto p1 = engine.markov(so, s, cfg.eps_list.front(), cfg.t_grid);
    const auto p2 = engine.markov(so, s, cfg.eps_list.front() * cfg.eps_list.front(), half_grid);
    ps.scale_dev = scale_invariance_check(p1, p2).empirical;
    return ps;
  });

  TestReport ht;
  ht.name = "hitting_time_scaling@" + eps_tag(eps_min);
  ht.sample_size = n;
  double nr = 0.0, mr = 0.0;
  for (const auto& s : samples) {
    nr += s.n_ratio;
    mr += s.m_ratio;
  }
  nr /= n;
  mr /= n;
  ht.tolerance = 0.02;
  const double en = std::fabs(nr * g.lambda_uu - 1.0), em = std::fabs(mr * g.lambda_u - 1.0);
  ht.empirical = std::max(en, em);
  ht.pass = ht.empirical <= ht.tolerance;
  ht.rows.push_back({"slope n_eps vs -log eps", nr, 1 / g.lambda_uu, 0.98 / g.lambda_uu, 1.02 / g.lambda_uu});
  ht.rows.push_back({"slope m_eps vs -log eps", mr, 1 / g.lambda_u, 0.98 / g.lambda_u, 1.02 / g.lambda_u});
  out.push_back(ht);

  TestReport sc;
  sc.name = "scale_invariance";
  sc.sample_size = n;
  sc.tolerance = 1e-12;
  for (const auto& s : samples) sc.empirical = std::max(sc.empirical, s.scale_dev);
  sc.pass = sc.empirical < sc.tolerance;
  out.push_back(sc);

  TestReport sg;
  sg.name = "surrogate_gap_trend";
  sg.sample_size = n;
  sg.tolerance = 0.10;
  std::vector<double> medians;
  for (std::size_t e = 0; e < cfg.eps_list.size(); ++e) {
    std::vector<double> v;
    for (const auto& s : samples) v.push_back(s.gaps[e]);
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    medians.push_back(v[v.size() / 2]);
    sg.rows.push_back({"median sup|N'-N''|*sqrt(-log eps) " + eps_tag(cfg.eps_list[e]), medians.back(), 0.0, 0.0,
                       e == 0 ? medians.back() : medians.front() * 1.1});
  }
  sg.pass = true;
  for (std::size_t e = 1; e < medians.size(); ++e)
    if (medians[e] > medians[e - 1] * (1.0 + sg.tolerance)) sg.pass = false;
  sg.empirical = medians.back();
  sg.note = "non-increasing within 10% between consecutive eps";
  out.push_back(sg);

  TestReport sl;
  sl.name = "slope_bound";
  const double bound = slope_bound(g.map);
  std::mt19937_64 rng(stream_seed(cfg.seed, 0x51095ULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const TorusPoint p(u(rng), u(rng));
    worst = std::max(worst, slope_diagnostic(g.map, p, 50));
  }
  sl.sample_size = 1000;
  sl.empirical = worst;
  sl.reference = bound;
  sl.tolerance = bound;
  sl.pass = std::isinf(bound) || worst <= bound + 1e-12;
  sl.note = std::isinf(bound) ? "no analytic bound (inf dg/dy <= sup f'); reported only" : "";
  out.push_back(sl);
}

// ---------------------------------------------------------------------------

/// Runs one config; never throws for config/model/numerical failures.
inline RunOutcome run(const Json& document, const RunOptions& opt = {}) {
  RunOutcome outcome;
  std::vector<TestReport>& tests = outcome.tests;
  Json model_json;
  Json timing = Json::object();
  RunConfig rc;
  bool cache_hit = false;
  std::filesystem::path out_dir;
  auto clock = [] { return std::chrono::steady_clock::now(); };
  const auto t_start = clock();
  if (opt.out_dir) out_dir = *opt.out_dir;
  try {
    rc = parse_run_config(document);
    if (opt.threads) {
      if (*opt.threads < 1) throw ModelError("threads must be positive");
      rc.experiment.threads = *opt.threads;
    }
    out_dir = opt.out_dir ? *opt.out_dir : rc.output_dir;
    std::filesystem::create_directories(out_dir);
    const auto& cfg = rc.experiment;
    std::vector<std::vector<FluctuationPath>> paths;

    if (rc.mode == "conformal1d") {
      GibbsOptions go;
      go.est_depth = rc.est_depth;
      const auto g = build_gibbs_1d(CircleMap(rc.k, rc.a), rc.potential, rc.depth, rc.anchor.x, go);
      model_json = {{"raw_pressure", g.raw_pressure}, {"lambda", g.lambda}, {"h", g.h},
                    {"h_chain", g.h_chain},          {"delta", g.delta},   {"sigma_u2", g.sigma_u2},
                    {"sigma2", g.sigma2},            {"gk_terms", g.gk_terms}};
      paths = sample_paths_1d(g, cfg);
      auto rng = sample_rng(cfg.seed ^ 0x6f7261636c65ULL, 0);
      const auto oracle = brownian_sup_sample(rng, rc.oracle_paths, cfg.t_grid);
      corollary_reports(rc.mode, paths, cfg.eps_list, cfg.t_grid, g.sigma2, rc.b_grid, oracle, tests);
    } else {
      const SkewMap map(rc.k, rc.a, rc.l, rc.b, rc.c);
      GibbsOptions go;
      go.est_depth = rc.est_depth;
      const auto t0 = clock();
      const GibbsModel g = opt.use_cache
                               ? cached_build_gibbs(out_dir / "cache", map, rc.potential, rc.depth, rc.anchor, go,
                                                    &cache_hit)
                               : build_gibbs(map, rc.potential, rc.depth, rc.anchor, go);
      timing["model_seconds"] = std::chrono::duration<double>(clock() - t0).count();
      timing["cache_hit"] = cache_hit;
      model_json = model_summary(g);
      if (rc.mode == "thermo" || rc.mode == "all") {
        tests.push_back(thermo_report(g));
        tests.push_back(degeneracy_report(g));
      }
      if (rc.mode == "diagnostics") diagnostic_reports(g, cfg, tests);
      if (rc.mode != "thermo" && rc.mode != "diagnostics") {
        if (rc.mode == "arcsine" && cfg.kind != ProcessKind::birkhoff)
          throw ModelError("arcsine test runs on birkhoff paths");
        const MarkovPartition part = build_partition(map, rc.anchor);
        paths = sample_paths(g, &part, cfg);
        for (const auto& per_eps : paths)
          for (const auto& p : per_eps)
            if (p.resolution_failure) throw NumericalError("ball measure resolution failure");
        auto rng = sample_rng(cfg.seed ^ 0x6f7261636c65ULL, 0);
        const auto oracle = brownian_sup_sample(rng, rc.oracle_paths, cfg.t_grid);
        corollary_reports(rc.mode, paths, cfg.eps_list, cfg.t_grid, g.sigma2, rc.b_grid, oracle, tests);
      }
    }

    bool all_pass = true;
    for (const auto& t : tests)
      if (!t.refused && !t.pre_asymptotic && !t.pass) all_pass = false;
    outcome.exit_code = all_pass ? 0 : 1;
    outcome.reason = all_pass ? "ok" : "test failure";

    write_file(out_dir / "summary.csv", render_summary_csv(tests));
    write_file(out_dir / "report.txt", render_text(tests));
    for (const auto& t : tests)
      if (!t.cdf_table.empty()) write_file(out_dir / (t.name + "_cdf.csv"), render_cdf_csv(t));
    if (rc.dump_paths)
      for (std::size_t e = 0; e < paths.size(); ++e)
        write_file(out_dir / ("paths_" + std::to_string(e) + ".csv"), render_paths_csv(paths[e], cfg.t_grid));
  } catch (const ModelError& e) {
    outcome.exit_code = 2;
    outcome.reason = e.what();
  } catch (const Json::exception& e) {
    outcome.exit_code = 2;
    outcome.reason = std::string("config error: ") + e.what();
  } catch (const NumericalError& e) {
    outcome.exit_code = 3;
    outcome.reason = e.what();
  }

  Json tj = Json::array();
  for (const auto& t : tests) tj.push_back(report_to_json(t));
  outcome.report = {{"schema_version", kSchemaVersion},
                    {"config", document},
                    {"mode", rc.mode},
                    {"model", model_json},
                    {"tests", tj},
                    {"exit_code", outcome.exit_code},
                    {"reason", outcome.reason}};
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(outcome.report.dump())));
  outcome.report["artifact_hash"] = hash;
  timing["total_seconds"] = std::chrono::duration<double>(clock() - t_start).count();
  if (!out_dir.empty()) {
    try {
      std::filesystem::create_directories(out_dir);
      write_file(out_dir / "report.json", outcome.report.dump(2) + "\n");
      write_file(out_dir / "timing.json", timing.dump(2) + "\n");
    } catch (const std::exception&) {
      // report stays available in the returned outcome
    }
  }
  return outcome;
}

}  // namespace dimclt
