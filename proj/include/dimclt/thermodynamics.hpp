#pragma once

// Equilibrium states of skew products on the symbolic (rectangle-cylinder)
// discretization, and every scalar that enters the dimension CLT: exponents,
// intermediate entropies, dimensions, centred observables, covariance Q and
// the limit variance sigma^2.

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dimclt/block_chain.hpp"
#include "dimclt/coding.hpp"

namespace dimclt {

using Matrix2 = std::array<std::array<double, 2>, 2>;

struct ProjectedPotential {
  int depth = 0;                        // psi depends on the first depth+1 base symbols
  std::vector<double> values;           // per base word of length depth+1
  std::vector<double> variation_profile;  // spread over base cylinders of rank 0..depth

  /// psi at a point from its base coding (at least depth+1 symbols).
  template <class BaseAt>
  double at(BaseAt&& base_symbol, int k) const {
    std::size_t idx = 0;
    for (int j = 0; j <= depth; ++j) idx = idx * k + base_symbol(j);
    return values[idx];
  }
};

struct GibbsOptions {
  int est_depth = -1;  // -1: depth - 1
  int max_gk_terms = 1000;
  double gk_tol = 1e-8;
  PowerIterationOptions power;
};

struct GibbsModel {
  SkewMap map;
  PotentialSpec potential;
  TorusPoint anchor;
  int depth = 2;

  BlockChain chain;
  double raw_pressure = 0.0;
  double pressure = 0.0;  // after normalization

  std::vector<double> nu_weights;
  ProjectedPotential psi;

  double lambda_u = 0.0, lambda_uu = 0.0;
  double h_u = 0.0, h_uu = 0.0;
  double h_mu_blocks = 0.0;  // block-entropy difference, independent of psi
  double delta_u = 0.0, delta_uu = 0.0, delta = 0.0;
  Matrix2 Q{};
  int gk_terms = 0;
  double sigma2 = 0.0;

  // state observables on depth-m cylinders (cylinder-centre evaluation)
  std::vector<double> phi_state;   // normalized potential
  std::vector<double> phi1_state;
  std::vector<double> phi2_state;

  RectCoding coding() const { return RectCoding(map, anchor); }
  const std::vector<double>& mu_weights() const { return chain.stationary(); }
  const std::vector<double>& density() const { return chain.right(); }
  int alphabet() const { return map.alphabet(); }
};

// ---------------------------------------------------------------------------

/// Centre points of all depth-m rectangle cylinders (index order of BlockChain).
inline std::vector<TorusPoint> cylinder_centers(const RectCoding& coding, int depth) {
  const int A = coding.alphabet();
  // centers of words of length j are preimages of centers of their length-(j-1) suffixes
  std::vector<TorusPoint> level{coding.center_seed()};
  std::size_t count = 1;
  for (int j = 1; j <= depth; ++j) {
    std::vector<TorusPoint> next(count * A);
    for (int s = 0; s < A; ++s)
      for (std::size_t u = 0; u < count; ++u) next[s * count + u] = coding.preimage(s, level[u]);
    level.swap(next);
    count *= A;
  }
  return level;
}

inline std::vector<int> state_word(const BlockChain& chain, std::size_t w) {
  std::vector<int> word(chain.depth());
  for (int pos = chain.depth() - 1; pos >= 0; --pos) {
    word[pos] = static_cast<int>(w % chain.alphabet());
    w /= chain.alphabet();
  }
  return word;
}

inline std::vector<double> potential_on_cylinders(const SkewMap& map, const PotentialSpec& phi,
                                                  const std::vector<TorusPoint>& centers, int depth) {
  const int A = map.alphabet();
  const int need = potential_coding_depth(phi);
  if (need > depth) throw ModelError("model depth must be >= the potential's cylinder depth");
  std::vector<double> out(centers.size());
  std::vector<int> word(depth);
  for (std::size_t w = 0; w < centers.size(); ++w) {
    std::size_t r = w;
    for (int pos = depth - 1; pos >= 0; --pos) {
      word[pos] = static_cast<int>(r % A);
      r /= A;
    }
    out[w] = evaluate_potential(map, phi, centers[w], word);
  }
  return out;
}

inline void check_model_budget(const SkewMap& map, int depth) {
  if (depth < 2) throw ModelError("depth must be >= 2");
  double states = std::pow(static_cast<double>(map.alphabet()), depth);
  if (states > 1e7) throw ModelError("(k*l)^depth exceeds the 1e7 cylinder budget");
}

/// log of the leading eigenvalue of the depth-m transfer matrix.
inline double pressure(const SkewMap& map, const PotentialSpec& phi, int depth, TorusPoint anchor = {},
                       const PowerIterationOptions& opt = {}) {
  check_model_budget(map, depth);
  validate_potential(map, phi);
  const RectCoding coding(map, anchor);
  const auto centers = cylinder_centers(coding, depth);
  BlockChain chain(map.alphabet(), depth, potential_on_cylinders(map, phi, centers, depth), opt);
  return chain.pressure();
}

/// nu(base word) = sum of mu over rectangle words projecting to it.
inline std::vector<double> project_measure(const BlockChain& chain, int k, int l) {
  std::vector<double> nu;
  std::size_t nb = 1;
  for (int i = 0; i < chain.depth(); ++i) nb *= k;
  nu.assign(nb, 0.0);
  const auto& pi = chain.stationary();
  for (std::size_t w = 0; w < chain.states(); ++w) {
    std::size_t r = w, b = 0, mult = 1;
    for (int pos = 0; pos < chain.depth(); ++pos) {
      const int s = static_cast<int>(r % chain.alphabet());
      r /= chain.alphabet();
      b += (s / l) * mult;
      mult *= k;
    }
    nu[b] += pi[w];
  }
  return nu;
}
inline std::vector<double> project_measure(const GibbsModel& g) {
  return project_measure(g.chain, g.map.k(), g.map.l());
}

/// Measures of base words of length len <= depth, from the depth-m base marginal.
inline std::vector<double> base_marginals(const std::vector<double>& nu, int k, int depth, int len) {
  std::size_t cut = 1, n = 1;
  for (int i = len; i < depth; ++i) cut *= k;
  for (int i = 0; i < len; ++i) n *= k;
  std::vector<double> out(n, 0.0);
  for (std::size_t b = 0; b < nu.size(); ++b) out[b / cut] += nu[b];
  return out;
}

/// psi(b_0 ... b_n) = log nu(b_0 ... b_n) - log nu(b_1 ... b_n), n = est_depth.
inline ProjectedPotential projected_potential(const std::vector<double>& nu, int k, int depth, int est_depth) {
  if (est_depth < 0 || est_depth >= depth)
    throw std::invalid_argument("projected_potential: need 0 <= est_depth < depth");
  ProjectedPotential pp;
  pp.depth = est_depth;
  const auto head = base_marginals(nu, k, depth, est_depth + 1);
  const auto tail = base_marginals(nu, k, depth, est_depth);
  const std::size_t tail_count = tail.size();
  pp.values.resize(head.size());
  for (std::size_t b = 0; b < head.size(); ++b) {
    const double denom = tail[b % tail_count];
    if (!(head[b] > 0.0) || !(denom > 0.0)) throw NumericalError("zero-measure base cylinder");
    pp.values[b] = std::log(head[b]) - std::log(denom);
  }
  for (int j = 0; j <= est_depth; ++j) {
    std::size_t group = 1;
    for (int i = j; i <= est_depth; ++i) group *= k;
    double worst = 0.0;
    for (std::size_t start = 0; start < pp.values.size(); start += group) {
      double lo = pp.values[start], hi = lo;
      for (std::size_t b = start; b < start + group; ++b) {
        lo = std::min(lo, pp.values[b]);
        hi = std::max(hi, pp.values[b]);
      }
      worst = std::max(worst, hi - lo);
    }
    pp.variation_profile.push_back(worst);
  }
  return pp;
}
inline ProjectedPotential projected_potential(const GibbsModel& g, int est_depth) {
  return projected_potential(g.nu_weights, g.map.k(), g.depth, est_depth);
}

/// psi as a function of the depth-m state.
inline std::vector<double> psi_on_states(const BlockChain& chain, const ProjectedPotential& psi, int k, int l) {
  std::vector<double> out(chain.states());
  std::size_t cut = 1;
  for (int i = psi.depth + 1; i < chain.depth(); ++i) cut *= chain.alphabet();
  for (std::size_t w = 0; w < chain.states(); ++w) {
    std::size_t prefix = w / cut, idx = 0, mult = 1;
    for (int pos = 0; pos <= psi.depth; ++pos) {
      idx += static_cast<std::size_t>((prefix % chain.alphabet()) / l) * mult;
      prefix /= chain.alphabet();
      mult *= k;
    }
    out[w] = psi.values[idx];
  }
  return out;
}

struct LyapunovExponents {
  double lambda_u;
  double lambda_uu;
};

inline LyapunovExponents lyapunov_exponents(const BlockChain& chain, const SkewMap& map,
                                            const std::vector<TorusPoint>& centers) {
  LyapunovExponents le{0.0, 0.0};
  const auto& pi = chain.stationary();
  for (std::size_t w = 0; w < chain.states(); ++w) {
    le.lambda_u += pi[w] * std::log(map.base().derivative(centers[w].x));
    le.lambda_uu += pi[w] * std::log(map.fiber_shape().derivative(centers[w].y));
  }
  return le;
}
inline LyapunovExponents lyapunov_exponents(const GibbsModel& g) { return {g.lambda_u, g.lambda_uu}; }

struct Entropies {
  double h_u;
  double h_uu;
};

/// h^u = -int psi o pi dmu, h^uu = -int (phi - psi o pi) dmu.
inline Entropies entropies(const BlockChain& chain, const std::vector<double>& phi_state,
                           const std::vector<double>& psi_state) {
  const double int_phi = chain.expectation(phi_state);
  const double int_psi = chain.expectation(psi_state);
  return {-int_psi, -(int_phi - int_psi)};
}
inline Entropies entropies(const GibbsModel& g) { return {g.h_u, g.h_uu}; }

struct Dimensions {
  double delta_u;
  double delta_uu;
  double delta;
};

inline Dimensions dimension(double h_u, double h_uu, double lambda_u, double lambda_uu) {
  Dimensions d{h_u / lambda_u, h_uu / lambda_uu, 0.0};
  d.delta = d.delta_u + d.delta_uu;
  return d;
}
inline Dimensions dimension(const GibbsModel& g) { return {g.delta_u, g.delta_uu, g.delta}; }

// ---------------------------------------------------------------------------
// Limit variance

struct Eigen2 {
  std::array<double, 2> values;  // descending
  Matrix2 vectors;               // columns: vectors[row][col]
};

/// Symmetric 2x2 eigendecomposition by a single Jacobi rotation.
inline Eigen2 eigen_symmetric(const Matrix2& q) {
  const double a = q[0][0], b = 0.5 * (q[0][1] + q[1][0]), d = q[1][1];
  const double theta = 0.5 * std::atan2(2.0 * b, a - d);
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen2 e;
  e.values = {c * c * a + 2 * c * s * b + s * s * d, s * s * a - 2 * c * s * b + c * c * d};
  e.vectors = {{{c, -s}, {s, c}}};
  return e;
}

/// Variance of X(1) = B_1(theta_1) + B_2(theta_2) written through Q = U diag(s1^2, s2^2) U^T.
inline double limit_variance_eigen(const Matrix2& q, double theta1, double theta2) {
  const auto e = eigen_symmetric(q);
  const double s1 = std::sqrt(std::max(0.0, e.values[0]));
  const double s2 = std::sqrt(std::max(0.0, e.values[1]));
  const double u11 = e.vectors[0][0], u12 = e.vectors[0][1], u21 = e.vectors[1][0], u22 = e.vectors[1][1];
  const double gap = theta2 - theta1;
  return std::pow((u11 + u21) * s1, 2) * theta1 + std::pow((u12 + u22) * s2, 2) * theta1 +
         std::pow(u21 * s1, 2) * gap + std::pow(u22 * s2, 2) * gap;
}

/// Same quantity via Cov(B_1(s), B_2(t)) = min(s, t) Q_12.
inline double limit_variance_closed(const Matrix2& q, double theta1, double theta2) {
  return theta1 * q[0][0] + theta2 * q[1][1] + 2.0 * theta1 * q[0][1];
}

/// sigma^2 with theta_1 = 1/lambda_uu, theta_2 = 1/lambda_u; both forms must agree.
inline double limit_variance(const Matrix2& q, double lambda_u, double lambda_uu) {
  if (!(lambda_u < lambda_uu)) throw ModelError("exponents must satisfy lambda_u < lambda_uu");
  const double t1 = 1.0 / lambda_uu, t2 = 1.0 / lambda_u;
  const double v1 = limit_variance_eigen(q, t1, t2);
  const double v2 = limit_variance_closed(q, t1, t2);
  if (std::fabs(v1 - v2) > 1e-8 * std::max(1.0, std::fabs(v2)))
    throw NumericalError("limit variance: eigen and closed forms disagree");
  return std::max(0.0, v2);
}

/// Nearest PSD matrix (negative eigenvalues clipped).
inline Matrix2 project_psd(const Matrix2& q) {
  const auto e = eigen_symmetric(q);
  Matrix2 out{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int r = 0; r < 2; ++r)
        out[i][j] += e.vectors[i][r] * std::max(0.0, e.values[r]) * e.vectors[j][r];
  return out;
}

// ---------------------------------------------------------------------------
// Centred observables

/// phi_1 = phi - psi o pi + delta_uu log dg/dy, phi_2 = psi o pi + delta_u log f' o pi,
/// evaluated at a point with (at least) its first max(potential depth, psi depth + 1)
/// rectangle symbols.
struct CenteredObservables {
  const GibbsModel* model = nullptr;

  int coding_depth() const {
    return std::max(potential_coding_depth(model->potential), model->psi.depth + 1);
  }
  double psi(std::span<const int> coding) const {
    const int l = model->map.l();
    return model->psi.at([&](int j) { return coding[j] / l; }, model->map.k());
  }
  double phi(const TorusPoint& p, std::span<const int> coding) const {
    return evaluate_potential(model->map, model->potential, p, coding) - model->raw_pressure;
  }
  double phi1(const TorusPoint& p, std::span<const int> coding) const {
    return phi(p, coding) - psi(coding) + model->delta_uu * std::log(model->map.fiber_shape().derivative(p.y));
  }
  double phi2(const TorusPoint& p, std::span<const int> coding) const {
    return psi(coding) + model->delta_u * std::log(model->map.base().derivative(p.x));
  }
};

inline CenteredObservables centered_observables(const GibbsModel& g) { return {&g}; }

struct CovarianceInfo {
  Matrix2 Q;
  int terms;
  bool converged;
};

inline CovarianceInfo covariance_matrix(const GibbsModel& g, int n_terms = 1000, double rel_tol = 1e-8) {
  auto gk = g.chain.green_kubo({g.phi1_state, g.phi2_state}, n_terms, rel_tol);
  if (!gk.converged) throw NumericalError("correlations did not decay within the Green-Kubo cap");
  Matrix2 q{{{gk.matrix[0][0], 0.5 * (gk.matrix[0][1] + gk.matrix[1][0])},
             {0.5 * (gk.matrix[0][1] + gk.matrix[1][0]), gk.matrix[1][1]}}};
  const auto e = eigen_symmetric(q);
  if (e.values[1] < 0.0) q = project_psd(q);
  return {q, gk.terms, true};
}

// ---------------------------------------------------------------------------

inline GibbsModel build_gibbs(const SkewMap& map, const PotentialSpec& phi, int depth, TorusPoint anchor = {},
                              const GibbsOptions& opt = {}) {
  check_model_budget(map, depth);
  validate_potential(map, phi);
  GibbsModel g;
  g.map = map;
  g.potential = phi;
  g.anchor = anchor;
  g.depth = depth;
  const RectCoding coding(map, anchor);
  const auto centers = cylinder_centers(coding, depth);
  g.chain = BlockChain(map.alphabet(), depth, potential_on_cylinders(map, phi, centers, depth), opt.power);
  g.raw_pressure = g.chain.pressure();
  g.pressure = 0.0;

  const auto le = lyapunov_exponents(g.chain, map, centers);
  g.lambda_u = le.lambda_u;
  g.lambda_uu = le.lambda_uu;
  if (!(g.lambda_u < g.lambda_uu))
    throw ModelError("hypothesis violated: lambda_u >= lambda_uu (exponents must increase)");

  g.nu_weights = project_measure(g.chain, map.k(), map.l());
  const int est = opt.est_depth < 0 ? depth - 1 : opt.est_depth;
  g.psi = projected_potential(g.nu_weights, map.k(), depth, est);

  g.phi_state.resize(g.chain.states());
  for (std::size_t w = 0; w < g.chain.states(); ++w) g.phi_state[w] = g.chain.potential(w);
  const auto psi_state = psi_on_states(g.chain, g.psi, map.k(), map.l());
  const auto en = entropies(g.chain, g.phi_state, psi_state);
  g.h_u = en.h_u;
  g.h_uu = en.h_uu;
  g.h_mu_blocks = g.chain.block_entropy(depth + 1) - g.chain.block_entropy(depth);

  const auto dims = dimension(g.h_u, g.h_uu, g.lambda_u, g.lambda_uu);
  g.delta_u = dims.delta_u;
  g.delta_uu = dims.delta_uu;
  g.delta = dims.delta;

  g.phi1_state.resize(g.chain.states());
  g.phi2_state.resize(g.chain.states());
  for (std::size_t w = 0; w < g.chain.states(); ++w) {
    g.phi1_state[w] =
        g.phi_state[w] - psi_state[w] + g.delta_uu * std::log(map.fiber_shape().derivative(centers[w].y));
    g.phi2_state[w] = psi_state[w] + g.delta_u * std::log(map.base().derivative(centers[w].x));
  }

  const auto cov = covariance_matrix(g, opt.max_gk_terms, opt.gk_tol);
  g.Q = cov.Q;
  g.gk_terms = cov.terms;
  g.sigma2 = limit_variance(g.Q, g.lambda_u, g.lambda_uu);
  return g;
}

struct DegeneracyVerdict {
  bool degenerate = false;
  bool acim_check_ran = false;
  double acim_pressure = 0.0;     // pressure of -log|det DT| at the same depth
  double total_variation = 0.0;   // between mu_phi and the acim discretization
  bool consistent = true;
  std::string reason;
};

/// sigma^2 ~ 0 versus "mu_phi is the acim" (pressure of -log|det DT| equals that of phi
/// and the two equilibrium measures coincide).
inline DegeneracyVerdict degeneracy_test(const GibbsModel& g, double tol = 1e-6) {
  DegeneracyVerdict v;
  v.degenerate = g.sigma2 < tol;
  const RectCoding coding(g.map, g.anchor);
  const auto centers = cylinder_centers(coding, g.depth);
  BlockChain acim(g.map.alphabet(), g.depth,
                  potential_on_cylinders(g.map, NegLogDetJacobian{1.0}, centers, g.depth));
  v.acim_check_ran = true;
  v.acim_pressure = acim.pressure();
  double tv = 0.0;
  for (std::size_t w = 0; w < acim.states(); ++w) tv += std::fabs(acim.stationary()[w] - g.mu_weights()[w]);
  v.total_variation = 0.5 * tv;
  const bool acim_like = v.total_variation < 1e-4;
  v.consistent = (acim_like == v.degenerate);
  if (!v.consistent)
    v.reason = v.degenerate ? "sigma^2 ~ 0 but mu_phi differs from the acim"
                            : "mu_phi matches the acim but sigma^2 > tolerance";
  return v;
}

}  // namespace dimclt
