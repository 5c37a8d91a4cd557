#pragma once

// JSON (de)serialization of configs, models and reports; CSV rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dimclt/sampling_stats.hpp"
#include "dimclt/thermodynamics.hpp"

namespace dimclt {

using Json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

// ---------------------------------------------------------------------------
// Potentials

inline Json potential_to_json(const PotentialSpec& phi) {
  return std::visit(
      [](const auto& v) -> Json {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, TrigPoly>) {
          return {{"type", "trig"}, {"constant", v.constant}, {"cos_x", v.cos_x},
                  {"sin_x", v.sin_x}, {"cos_y", v.cos_y},     {"sin_y", v.sin_y}};
        } else if constexpr (std::is_same_v<V, NegLogDetJacobian>) {
          return {{"type", "neg_log_det"}, {"scale", v.scale}};
        } else {
          return {{"type", "piecewise"}, {"depth", v.depth}, {"values", v.values}};
        }
      },
      phi);
}

/// Accepts "trig", "neg_log_det", "piecewise", and "bernoulli" (weights on the
/// base symbols, uniform on the fiber; needs the fiber degree l, or l = 1 for
/// circle maps).
inline PotentialSpec potential_from_json(const Json& j, int l) {
  if (!j.is_object() || !j.contains("type")) throw ModelError("potential must be an object with a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  if (type == "trig") {
    TrigPoly t;
    t.constant = j.value("constant", 0.0);
    t.cos_x = j.value("cos_x", std::vector<double>{});
    t.sin_x = j.value("sin_x", std::vector<double>{});
    t.cos_y = j.value("cos_y", std::vector<double>{});
    t.sin_y = j.value("sin_y", std::vector<double>{});
    return t;
  }
  if (type == "neg_log_det") return NegLogDetJacobian{j.value("scale", 1.0)};
  if (type == "piecewise") {
    CylinderPiecewiseConstant pc;
    pc.depth = j.at("depth").get<int>();
    pc.values = j.at("values").get<std::vector<double>>();
    return pc;
  }
  if (type == "bernoulli") {
    const auto w = j.at("weights").get<std::vector<double>>();
    double total = 0.0;
    for (double x : w) {
      if (!(x > 0.0)) throw ModelError("bernoulli weights must be positive");
      total += x;
    }
    if (std::fabs(total - 1.0) > 1e-12) throw ModelError("bernoulli weights must sum to 1");
    if (l <= 1) {
      CylinderPiecewiseConstant pc;
      pc.depth = 1;
      for (double x : w) pc.values.push_back(std::log(x));
      return pc;
    }
    return bernoulli_potential(w, l);
  }
  throw ModelError("unknown potential type \"" + type + "\"");
}

// ---------------------------------------------------------------------------
// GibbsModel

inline Json matrix_to_json(const Matrix2& q) { return {{q[0][0], q[0][1]}, {q[1][0], q[1][1]}}; }
inline Matrix2 matrix_from_json(const Json& j) {
  Matrix2 q{};
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) q[i][k] = j.at(i).at(k).get<double>();
  return q;
}

inline Json map_to_json(const SkewMap& m) {
  return {{"k", m.k()}, {"a", m.a()}, {"l", m.l()}, {"b", m.b()}, {"c", m.c()}};
}

/// Content key of a model: map, anchor, potential and discretization.
inline std::string model_key(const SkewMap& m, TorusPoint anchor, const PotentialSpec& phi, int depth,
                             int est_depth) {
  const Json key = {{"map", map_to_json(m)},
                    {"anchor", {anchor.x, anchor.y}},
                    {"potential", potential_to_json(phi)},
                    {"depth", depth},
                    {"est_depth", est_depth},
                    {"format", kModelFormatVersion}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(key.dump())));
  return buf;
}

inline Json model_to_json(const GibbsModel& g) {
  return {{"format", kModelFormatVersion},
          {"map", map_to_json(g.map)},
          {"potential", potential_to_json(g.potential)},
          {"anchor", {g.anchor.x, g.anchor.y}},
          {"depth", g.depth},
          {"raw_potential", g.chain.raw_potential()},
          {"raw_pressure", g.raw_pressure},
          {"right", g.chain.right()},
          {"left", g.chain.left()},
          {"nu_weights", g.nu_weights},
          {"psi_depth", g.psi.depth},
          {"psi_values", g.psi.values},
          {"psi_variation", g.psi.variation_profile},
          {"lambda_u", g.lambda_u},
          {"lambda_uu", g.lambda_uu},
          {"h_u", g.h_u},
          {"h_uu", g.h_uu},
          {"h_mu_blocks", g.h_mu_blocks},
          {"delta_u", g.delta_u},
          {"delta_uu", g.delta_uu},
          {"delta", g.delta},
          {"Q", matrix_to_json(g.Q)},
          {"gk_terms", g.gk_terms},
          {"sigma2", g.sigma2},
          {"phi_state", g.phi_state},
          {"phi1_state", g.phi1_state},
          {"phi2_state", g.phi2_state}};
}

inline GibbsModel model_from_json(const Json& j) {
  if (j.at("format").get<int>() != kModelFormatVersion) throw std::runtime_error("model format mismatch");
  GibbsModel g;
  const auto& m = j.at("map");
  g.map = SkewMap(m.at("k").get<int>(), m.at("a").get<double>(), m.at("l").get<int>(), m.at("b").get<double>(),
                  m.at("c").get<double>());
  g.potential = potential_from_json(j.at("potential"), g.map.l());
  g.anchor = TorusPoint(j.at("anchor").at(0).get<double>(), j.at("anchor").at(1).get<double>());
  g.depth = j.at("depth").get<int>();
  g.raw_pressure = j.at("raw_pressure").get<double>();
  g.chain = BlockChain::restore(g.map.alphabet(), g.depth, j.at("raw_potential").get<std::vector<double>>(),
                                g.raw_pressure, j.at("right").get<std::vector<double>>(),
                                j.at("left").get<std::vector<double>>());
  g.nu_weights = j.at("nu_weights").get<std::vector<double>>();
  g.psi.depth = j.at("psi_depth").get<int>();
  g.psi.values = j.at("psi_values").get<std::vector<double>>();
  g.psi.variation_profile = j.at("psi_variation").get<std::vector<double>>();
  g.lambda_u = j.at("lambda_u").get<double>();
  g.lambda_uu = j.at("lambda_uu").get<double>();
  g.h_u = j.at("h_u").get<double>();
  g.h_uu = j.at("h_uu").get<double>();
  g.h_mu_blocks = j.at("h_mu_blocks").get<double>();
  g.delta_u = j.at("delta_u").get<double>();
  g.delta_uu = j.at("delta_uu").get<double>();
  g.delta = j.at("delta").get<double>();
  g.Q = matrix_from_json(j.at("Q"));
  g.gk_terms = j.at("gk_terms").get<int>();
  g.sigma2 = j.at("sigma2").get<double>();
  g.phi_state = j.at("phi_state").get<std::vector<double>>();
  g.phi1_state = j.at("phi1_state").get<std::vector<double>>();
  g.phi2_state = j.at("phi2_state").get<std::vector<double>>();
  return g;
}

/// Loads the model from `dir` when present, otherwise builds and stores it.
inline GibbsModel cached_build_gibbs(const std::filesystem::path& dir, const SkewMap& map,
                                     const PotentialSpec& phi, int depth, TorusPoint anchor,
                                     const GibbsOptions& opt, bool* hit = nullptr) {
  const auto file = dir / ("model_" + model_key(map, anchor, phi, depth, opt.est_depth) + ".json");
  if (hit) *hit = false;
  if (std::filesystem::exists(file)) {
    try {
      std::ifstream in(file);
      auto g = model_from_json(Json::parse(in));
      if (hit) *hit = true;
      return g;
    } catch (const std::exception&) {
      // unreadable entry: rebuild and overwrite
    }
  }
  auto g = build_gibbs(map, phi, depth, anchor, opt);
  std::filesystem::create_directories(dir);
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << model_to_json(g).dump();
  }
  std::filesystem::rename(tmp, file);
  return g;
}

// ---------------------------------------------------------------------------
// Reports

inline Json report_to_json(const TestReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"statistic", row.statistic},
                    {"empirical", row.empirical},
                    {"reference", row.reference},
                    {"band_low", row.band_low},
                    {"band_high", row.band_high}});
  return {{"name", r.name},         {"empirical", r.empirical},
          {"reference", r.reference}, {"tolerance", r.tolerance},
          {"pass", r.pass},         {"refused", r.refused},
          {"pre_asymptotic", r.pre_asymptotic},
          {"sample_size", r.sample_size}, {"note", r.note},
          {"rows", rows}};
}

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// statistic,empirical,reference,band_low,band_high; one line per summary row.
inline std::string render_summary_csv(const std::vector<TestReport>& reports) {
  std::ostringstream out;
  out << "statistic,empirical,reference,band_low,band_high\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      out << r.name << "." << row.statistic << ',' << csv_number(row.empirical) << ','
          << csv_number(row.reference) << ',' << csv_number(row.band_low) << ',' << csv_number(row.band_high)
          << '\n';
  return out.str();
}

/// empirical,reference; one line per quantile row.
inline std::string render_cdf_csv(const TestReport& r) {
  std::ostringstream out;
  out << "empirical,reference\n";
  for (const auto& [e, ref] : r.cdf_table) out << csv_number(e) << ',' << csv_number(ref) << '\n';
  return out.str();
}

inline std::string render_text(const std::vector<TestReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    out << (r.refused ? "[REFUSED] " : r.pre_asymptotic ? "[REPORT] " : (r.pass ? "[PASS] " : "[FAIL] ")) << r.name;
    if (!r.refused) out << "  empirical=" << csv_number(r.empirical) << "  tolerance=" << csv_number(r.tolerance);
    out << "  n=" << r.sample_size;
    if (!r.note.empty()) out << "  (" << r.note << ")";
    out << '\n';
    for (const auto& row : r.rows)
      out << "    " << row.statistic << ": " << csv_number(row.empirical) << " vs " << csv_number(row.reference)
          << " [" << csv_number(row.band_low) << ", " << csv_number(row.band_high) << "]\n";
  }
  return out.str();
}

inline std::string render_paths_csv(const std::vector<FluctuationPath>& paths, const std::vector<double>& t_grid) {
  std::ostringstream out;
  out << "sample_id,t,value\n";
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t k = 0; k < t_grid.size(); ++k)
      out << i << ',' << csv_number(t_grid[k]) << ',' << csv_number(paths[i].values[k]) << '\n';
  return out.str();
}

}  // namespace dimclt
