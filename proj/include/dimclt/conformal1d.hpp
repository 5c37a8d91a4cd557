#pragma once

// Conformal repellers in dimension one: full-branch circle maps. Dimension
// h / lambda and limit variance sigma_u^2 / lambda, where sigma_u^2 is the
// asymptotic variance of phi + (h / lambda) log f'.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "dimclt/block_chain.hpp"
#include "dimclt/map_models.hpp"
#include "dimclt/markov_partition.hpp"
#include "dimclt/sampling_stats.hpp"

namespace dimclt {

/// Coding by symbol i = floor(F(x) - x0) mod k.
class CircleCoding {
 public:
  CircleCoding() = default;
  CircleCoding(CircleMap f, double anchor) : f_(f), x0_(anchor) {}

  const CircleMap& map() const { return f_; }
  double anchor() const { return x0_; }
  int alphabet() const { return f_.k; }

  int symbol(double x) const {
    int i = static_cast<int>(std::floor(f_.lift(wrap01(x)) - x0_));
    return ((i % f_.k) + f_.k) % f_.k;
  }
  double preimage(int i, double x) const { return wrap01(f_.inverse_lift(x0_ + i + wrap01(x - x0_))); }
  double decode(std::span<const int> word, double seed) const {
    for (auto it = word.rbegin(); it != word.rend(); ++it) seed = preimage(*it, seed);
    return seed;
  }
  double decode(std::span<const int> word) const { return decode(word, wrap01(x0_ + 0.5)); }
  int resolution_depth(int bits = 40) const {
    return static_cast<int>(std::ceil(bits * std::log(2.0) / std::log(f_.min_derivative()))) + 2;
  }

 private:
  CircleMap f_;
  double x0_ = 0.0;
};

/// Potentials on the circle: the TrigPoly x-harmonics, piecewise constants on
/// base words, or NegLogDetJacobian meaning -s log f'.
inline void validate_potential_1d(const CircleMap& f, const PotentialSpec& phi) {
  if (auto* t = std::get_if<TrigPoly>(&phi)) {
    if (!t->cos_y.empty() || !t->sin_y.empty()) throw ModelError("1-d potentials cannot depend on y");
  }
  if (auto* pc = std::get_if<CylinderPiecewiseConstant>(&phi)) {
    if (pc->depth < 1) throw ModelError("piecewise-constant potential depth must be >= 1");
    std::size_t expected = 1;
    for (int i = 0; i < pc->depth; ++i) expected *= f.k;
    if (pc->values.size() != expected) throw ModelError("piecewise-constant potential needs k^depth values");
  }
}

inline double evaluate_potential_1d(const CircleMap& f, const PotentialSpec& phi, double x,
                                    std::span<const int> coding) {
  return std::visit(
      [&](const auto& v) -> double {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, TrigPoly>) {
          return eval_trig(v, x, 0.0);
        } else if constexpr (std::is_same_v<V, NegLogDetJacobian>) {
          return -v.scale * std::log(f.derivative(x));
        } else {
          if (static_cast<int>(coding.size()) < v.depth)
            throw std::invalid_argument("piecewise-constant potential needs a longer coding");
          std::size_t idx = 0;
          for (int i = 0; i < v.depth; ++i) idx = idx * f.k + coding[i];
          return v.values.at(idx);
        }
      },
      phi);
}

struct GibbsModel1d {
  CircleMap map;
  PotentialSpec potential;
  double anchor = 0.0;
  int depth = 2;
  BlockChain chain;
  double raw_pressure = 0.0;
  double lambda = 0.0;
  double h = 0.0;
  double h_chain = 0.0;  // entropy rate of the chain, independent of the potential values
  double delta = 0.0;
  double sigma_u2 = 0.0;
  double sigma2 = 0.0;
  int gk_terms = 0;
  std::vector<double> phi_state, phiu_state;

  CircleCoding coding() const { return CircleCoding(map, anchor); }
};

inline std::vector<double> circle_centers(const CircleCoding& coding, int depth) {
  std::vector<double> level{wrap01(coding.anchor() + 0.5)};
  for (int j = 1; j <= depth; ++j) {
    std::vector<double> next(level.size() * coding.alphabet());
    for (int s = 0; s < coding.alphabet(); ++s)
      for (std::size_t u = 0; u < level.size(); ++u) next[s * level.size() + u] = coding.preimage(s, level[u]);
    level.swap(next);
  }
  return level;
}

inline GibbsModel1d build_gibbs_1d(const CircleMap& f, const PotentialSpec& phi, int depth, double anchor = 0.0,
                                   const GibbsOptions& opt = {}) {
  f.validate();
  validate_potential_1d(f, phi);
  if (depth < 2) throw ModelError("depth must be >= 2");
  if (std::pow(static_cast<double>(f.k), depth) > 1e7) throw ModelError("k^depth exceeds the 1e7 cylinder budget");
  if (potential_coding_depth(phi) > depth) throw ModelError("model depth must be >= the potential's cylinder depth");
  GibbsModel1d g;
  g.map = f;
  g.potential = phi;
  g.anchor = anchor;
  g.depth = depth;
  const CircleCoding coding(f, anchor);
  const auto centers = circle_centers(coding, depth);
  std::vector<double> raw(centers.size());
  std::vector<int> word(depth);
  for (std::size_t w = 0; w < centers.size(); ++w) {
    std::size_t r = w;
    for (int pos = depth - 1; pos >= 0; --pos) {
      word[pos] = static_cast<int>(r % f.k);
      r /= f.k;
    }
    raw[w] = evaluate_potential_1d(f, phi, centers[w], word);
  }
  g.chain = BlockChain(f.k, depth, std::move(raw), opt.power);
  g.raw_pressure = g.chain.pressure();

  g.phi_state.resize(g.chain.states());
  std::vector<double> logd(g.chain.states());
  for (std::size_t w = 0; w < g.chain.states(); ++w) {
    g.phi_state[w] = g.chain.potential(w);
    logd[w] = std::log(f.derivative(centers[w]));
  }
  g.lambda = g.chain.expectation(logd);
  g.h = -g.chain.expectation(g.phi_state);
  g.h_chain = g.chain.entropy_rate();
  g.delta = g.h / g.lambda;

  g.phiu_state.resize(g.chain.states());
  for (std::size_t w = 0; w < g.chain.states(); ++w) g.phiu_state[w] = g.phi_state[w] + g.delta * logd[w];
  const double residual = g.chain.expectation(g.phiu_state);
  if (std::fabs(residual) > 1e-6) throw NumericalError("1-d observable is not centred");

  auto gk = g.chain.green_kubo({g.phiu_state}, opt.max_gk_terms, opt.gk_tol);
  if (!gk.converged) throw NumericalError("correlations did not decay within the Green-Kubo cap");
  g.sigma_u2 = std::max(0.0, gk.matrix[0][0]);
  g.gk_terms = gk.terms;
  g.sigma2 = g.sigma_u2 / g.lambda;
  return g;
}

inline double limit_variance_1d(const GibbsModel1d& g) { return g.sigma_u2 / g.lambda; }

// ---------------------------------------------------------------------------

struct Experiment1d {
  std::vector<std::vector<FluctuationPath>> paths;  // per eps
  TestReport clt, median, arcsine, maximum;
};

/// N''(t) = S_{m(eps^t)} phi_u / sqrt(-log eps) for one sampled orbit.
template <class Rng>
std::vector<FluctuationPath> birkhoff_paths_1d(const GibbsModel1d& g, Rng& rng, const ExperimentConfig& cfg) {
  const CircleCoding coding = g.coding();
  const double eps_min = cfg.eps_list.back();
  const int n = static_cast<int>(std::ceil(-std::log(eps_min) / std::log(g.map.min_derivative()))) + 2;
  const int tail = std::max(coding.resolution_depth(), potential_coding_depth(g.potential));
  const auto word = g.chain.sample_word(rng, n + tail);
  std::span<const int> w(word);
  std::vector<double> xs(n + 1);
  xs[n] = coding.decode(w.subspan(n));
  for (int j = n - 1; j >= 0; --j) xs[j] = coding.preimage(word[j], xs[j + 1]);
  std::vector<double> logd(n), cum(n + 1, 0.0);
  for (int j = 0; j < n; ++j) {
    logd[j] = std::log(g.map.derivative(xs[j]));
    const double phi = evaluate_potential_1d(g.map, g.potential, xs[j], w.subspan(j)) - g.raw_pressure;
    cum[j + 1] = cum[j] + phi + g.delta * logd[j];
  }
  std::vector<FluctuationPath> out;
  for (double eps : cfg.eps_list) {
    const double ell = -std::log(eps);
    FluctuationPath path{TorusPoint(xs[0], 0.0), eps, {}, false};
    for (double t : cfg.t_grid) {
      const int m = largest_time_below(logd, t * ell);
      if (m > n) throw std::out_of_range("1-d orbit too short");
      path.values.push_back(cum[m] / std::sqrt(ell));
    }
    out.push_back(std::move(path));
  }
  return out;
}

inline std::vector<std::vector<FluctuationPath>> sample_paths_1d(const GibbsModel1d& g, const ExperimentConfig& cfg) {
  cfg.validate();
  auto per_sample = parallel_map(static_cast<std::size_t>(cfg.n_samples), cfg.threads, [&](std::size_t i) {
    auto rng = sample_rng(cfg.seed, i);
    return birkhoff_paths_1d(g, rng, cfg);
  });
  std::vector<std::vector<FluctuationPath>> by_eps(cfg.eps_list.size());
  for (auto& s : per_sample)
    for (std::size_t e = 0; e < s.size(); ++e) by_eps[e].push_back(std::move(s[e]));
  return by_eps;
}

/// CLT, median, arc-sine and maximum tests on the smallest eps of cfg.
inline Experiment1d clt_experiment_1d(const GibbsModel1d& g, const ExperimentConfig& cfg,
                                      const std::vector<double>& b_grid = {0.5, 1.0, 1.5, 2.0},
                                      int oracle_paths = 100000) {
  Experiment1d ex;
  ex.paths = sample_paths_1d(g, cfg);
  const auto& last = ex.paths.back();
  const auto ends = endpoint_values(last);
  ex.clt = clt_test(ends, g.sigma2, cfg.eps_list.back());
  ex.median = median_test(ends, g.sigma2, cfg.eps_list.back());
  const auto values = path_values(last);
  ex.arcsine = arcsine_test(values, cfg.t_grid, g.sigma2);
  auto rng = sample_rng(cfg.seed ^ 0x6f7261636c65ULL, 0);
  const auto sups = brownian_sup_sample(rng, oracle_paths, cfg.t_grid);
  ex.maximum = maximum_test(values, g.sigma2, b_grid, sups);
  return ex;
}

}  // namespace dimclt
