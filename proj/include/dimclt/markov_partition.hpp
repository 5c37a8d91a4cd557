#pragma once

// Fibered Markov partition of a skew product, its refinements, hitting times and
// the multi-temporal Markov approximation C_eps of balls.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "dimclt/block_chain.hpp"
#include "dimclt/coding.hpp"

namespace dimclt {

/// Closed interval in lift coordinates (may extend past 1; contains its points mod 1).
struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
  bool contains_mod1(double x) const {
    const double shifted = lo + wrap01(x - lo);
    return shifted <= hi;
  }
};

/// Horizontal boundary curve eta(x) of a rectangle, in lift coordinates,
/// sampled on a uniform x-grid and evaluated by 4-point Lagrange interpolation.
class BoundaryCurve {
 public:
  BoundaryCurve() = default;

  template <class Fn>
  BoundaryCurve(Interval span, Fn&& eta, int points = 257, double tol = 1e-10) : span_(span) {
    for (int n = points;; n = 2 * n - 1) {
      sample(eta, n);
      double worst = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        const double x = span_.lo + (i + 0.5) * step_;
        worst = std::max(worst, std::fabs((*this)(x)-eta(x)));
      }
      residual_ = worst;
      if (worst < tol || n > (1 << 16)) break;
    }
  }

  double operator()(double x) const {
    const int n = static_cast<int>(ys_.size());
    double t = (x - span_.lo) / step_;
    int i = std::clamp(static_cast<int>(std::floor(t)) - 1, 0, n - 4);
    double out = 0.0;
    for (int a = 0; a < 4; ++a) {
      double basis = 1.0;
      for (int b = 0; b < 4; ++b)
        if (b != a) basis *= (t - (i + b)) / static_cast<double>(a - b);
      out += basis * ys_[i + a];
    }
    return out;
  }

  int samples() const { return static_cast<int>(ys_.size()); }
  double residual() const { return residual_; }
  const Interval& span() const { return span_; }

 private:
  template <class Fn>
  void sample(Fn& eta, int n) {
    step_ = span_.length() / (n - 1);
    ys_.resize(n);
    for (int i = 0; i < n; ++i) ys_[i] = eta(span_.lo + i * step_);
  }

  Interval span_;
  double step_ = 1.0;
  std::vector<double> ys_;
  double residual_ = 0.0;
};

struct RectCell {
  int symbol = 0;
  int base_index = 0;
  int fiber_index = 0;
  BoundaryCurve lower;  // g(x, lower(x)) = y0
  BoundaryCurve upper;  // g(x, upper(x)) = y0, one fiber branch up
};

class MarkovPartition {
 public:
  MarkovPartition() = default;
  explicit MarkovPartition(const RectCoding& coding) : coding_(coding) {}

  const RectCoding& coding() const { return coding_; }
  const SkewMap& map() const { return coding_.map(); }
  const TorusPoint& anchor() const { return coding_.anchor(); }

  std::vector<Interval> base_cells;
  std::vector<RectCell> rect_cells;

  /// Inverse branch of T onto R_s.
  TorusPoint branch(int s, const TorusPoint& q) const { return coding_.preimage(s, q); }

  /// Base cylinders are intervals (and rectangle cylinders are products of
  /// intervals) only when the anchor is fixed by the relevant maps.
  bool base_anchor_fixed() const {
    return circle_distance(map().base()(anchor().x), anchor().x) < 1e-12;
  }
  bool rect_cells_are_boxes() const {
    return map().c() == 0.0 && base_anchor_fixed() &&
           circle_distance(map().fiber_shape()(anchor().y), anchor().y) < 1e-12;
  }

 private:
  RectCoding coding_;
};

inline MarkovPartition build_partition(const SkewMap& map, TorusPoint anchor = {}) {
  MarkovPartition part{RectCoding(map, anchor)};
  const auto& coding = part.coding();
  for (int i = 0; i < map.k(); ++i)
    part.base_cells.push_back({coding.base_preimage_lift(i, 0.0), coding.base_preimage_lift(i, 1.0)});
  for (int i = 0; i < map.k(); ++i)
    for (int j = 0; j < map.l(); ++j) {
      RectCell cell;
      cell.symbol = i * map.l() + j;
      cell.base_index = i;
      cell.fiber_index = j;
      const Interval span = part.base_cells[i];
      cell.lower = BoundaryCurve(span, [&](double x) { return coding.fiber_preimage_lift(x, j, 0.0); });
      cell.upper = BoundaryCurve(span, [&](double x) { return coding.fiber_preimage_lift(x, j, 1.0); });
      part.rect_cells.push_back(std::move(cell));
    }
  return part;
}

struct BaseCylinder {
  Word word;
  Interval interval;
  bool boundary = false;  // x within 1e-14 of an endpoint
};

namespace detail {

// Pulls the full circle (offsets [0,1] from the anchor) back along `word`.
inline Interval pull_back_base(const RectCoding& coding, std::span<const int> word) {
  const double x0 = coding.anchor().x;
  double lo_r = 0.0, hi_r = 1.0;
  Interval iv{0.0, 1.0};
  for (int j = static_cast<int>(word.size()) - 1; j >= 0; --j) {
    iv.lo = coding.base_preimage_lift(word[j], lo_r);
    iv.hi = coding.base_preimage_lift(word[j], hi_r);
    lo_r = iv.lo - x0 - std::floor(iv.lo - x0 + 1e-15);
    if (lo_r < 0) lo_r = 0;
    hi_r = lo_r + (iv.hi - iv.lo);
  }
  return iv;
}

inline Interval pull_back_fiber_fixed(const RectCoding& coding, std::span<const int> fiber_word) {
  const double y0 = coding.anchor().y;
  const auto& g = coding.map().fiber_shape();
  double lo_r = 0.0, hi_r = 1.0;
  Interval iv{0.0, 1.0};
  for (int j = static_cast<int>(fiber_word.size()) - 1; j >= 0; --j) {
    iv.lo = g.inverse_lift(y0 + fiber_word[j] + lo_r);
    iv.hi = g.inverse_lift(y0 + fiber_word[j] + hi_r);
    lo_r = iv.lo - y0 - std::floor(iv.lo - y0 + 1e-15);
    if (lo_r < 0) lo_r = 0;
    hi_r = lo_r + (iv.hi - iv.lo);
  }
  return iv;
}

}  // namespace detail

inline BaseCylinder base_cylinder(const MarkovPartition& part, double x, int n) {
  if (n < 0) throw std::invalid_argument("base_cylinder: n must be >= 0");
  BaseCylinder out;
  out.word = part.coding().base_code(x, n);
  if (n == 0) return out;
  if (n >= 2 && !part.base_anchor_fixed())
    throw std::domain_error("base cylinders of depth >= 2 are intervals only for an f-fixed anchor");
  out.interval = detail::pull_back_base(part.coding(), out.word);
  const double xl = out.interval.lo + wrap01(x - out.interval.lo);
  out.boundary = std::fabs(xl - out.interval.lo) < 1e-14 || std::fabs(out.interval.hi - xl) < 1e-14;
  return out;
}

/// Exact interval of the fiber word when fiber cylinders do not depend on x.
inline Interval fiber_interval(const MarkovPartition& part, std::span<const int> fiber_word) {
  if (!part.rect_cells_are_boxes())
    throw std::domain_error("fiber cylinders are intervals only for decoupled maps with fixed anchor");
  return detail::pull_back_fiber_fixed(part.coding(), fiber_word);
}

inline Interval base_interval(const MarkovPartition& part, std::span<const int> base_word) {
  if (base_word.empty()) return {0.0, 1.0};
  if (base_word.size() >= 2 && !part.base_anchor_fixed())
    throw std::domain_error("base cylinders of depth >= 2 are intervals only for an f-fixed anchor");
  return detail::pull_back_base(part.coding(), base_word);
}

struct RectCylinder {
  Word word;
  bool boundary = false;
};

inline RectCylinder rect_cylinder(const MarkovPartition& part, TorusPoint p, int n) {
  if (n < 0) throw std::invalid_argument("rect_cylinder: n must be >= 0");
  RectCylinder out;
  const auto& map = part.map();
  const auto& a = part.anchor();
  for (int j = 0; j < n; ++j) {
    out.word.push_back(part.coding().symbol(p));
    const double u = map.base().lift(p.x) - a.x;
    const double v = map.fiber_shape().lift(p.y) + map.coupling(p.x) - a.y;
    auto near_int = [](double t) { return std::fabs(t - std::round(t)) < 1e-14 * std::max(1.0, std::fabs(t)); };
    if (near_int(u) || near_int(v)) out.boundary = true;
    p = map.apply(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hitting times

struct HittingTimes {
  int n_eps = 0;  // largest n with G_n eps <= 1
  int m_eps = 0;  // largest m with F_m eps <= 1
  bool flagged = false;
};

/// Largest n with sum_{j<n} log_rate[j] <= scale (scale = -log eps). Returns
/// log_rate.size() + 1 when the supply of rates is exhausted.
inline int largest_time_below(std::span<const double> log_rate, double scale) {
  const double tol = 1e-12 * std::max(1.0, std::fabs(scale));
  double acc = 0.0;
  for (std::size_t j = 0; j < log_rate.size(); ++j) {
    acc += log_rate[j];
    if (acc > scale + tol) return static_cast<int>(j);
  }
  return static_cast<int>(log_rate.size()) + 1;
}

/// Hitting times from orbit derivative logs at scale -log eps = `scale`.
inline HittingTimes hitting_times_from_orbit(std::span<const double> log_fprime, std::span<const double> log_dgdy,
                                             double scale) {
  HittingTimes ht;
  if (!(scale > 0.0)) {
    ht.flagged = true;
    return ht;
  }
  ht.n_eps = largest_time_below(log_dgdy, scale);
  ht.m_eps = largest_time_below(log_fprime, scale);
  if (ht.n_eps > static_cast<int>(log_dgdy.size()) || ht.m_eps > static_cast<int>(log_fprime.size()))
    throw std::out_of_range("hitting times exceed the supplied orbit");
  return ht;
}

inline HittingTimes hitting_times(const SkewMap& map, TorusPoint p, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("hitting_times: eps must be > 0");
  if (eps >= 1.0) return {0, 0, true};
  const double scale = -std::log(eps);
  const int need = static_cast<int>(std::ceil(scale / std::log(std::min(map.base().min_derivative(),
                                                                            map.fiber_shape().min_derivative())))) + 2;
  std::vector<double> lf, lg;
  for (int j = 0; j < need; ++j) {
    const auto jf = map.jacobian_factors(p);
    lf.push_back(std::log(jf.fprime));
    lg.push_back(std::log(jf.dg_dy));
    p = map.apply(p);
  }
  return hitting_times_from_orbit(lf, lg, scale);
}

// ---------------------------------------------------------------------------
// Multi-temporal Markov approximation C_eps = R_{n_eps} ∩ pi^{-1} P_{m_eps}

struct MarkovBall {
  Word rect_word;  // depth n_eps
  Word base_word;  // depth m_eps
  HittingTimes times;
  bool boundary = false;
};

/// Builds C_eps from a precomputed coding (at least max(n, m) symbols) and times.
inline MarkovBall markov_ball_from_coding(const RectCoding& coding, std::span<const int> rect_coding,
                                          const HittingTimes& ht) {
  MarkovBall mb;
  mb.times = ht;
  if (static_cast<int>(rect_coding.size()) < std::max(ht.n_eps, ht.m_eps))
    throw std::out_of_range("markov_ball: coding too short");
  mb.rect_word.assign(rect_coding.begin(), rect_coding.begin() + ht.n_eps);
  for (int j = 0; j < ht.m_eps; ++j) mb.base_word.push_back(coding.base_of(rect_coding[j]));
  return mb;
}

inline MarkovBall markov_ball(const MarkovPartition& part, TorusPoint p, double eps) {
  const auto ht = hitting_times(part.map(), p, eps);
  const auto rc = rect_cylinder(part, p, std::max(ht.n_eps, ht.m_eps));
  auto mb = markov_ball_from_coding(part.coding(), rc.word, ht);
  mb.boundary = rc.boundary || ht.flagged;
  return mb;
}

/// Symbol pattern of C_eps over the rectangle alphabet: exact rectangle symbols
/// for the first n positions, base symbol with free fiber afterwards.
inline std::vector<SymbolSet> markov_ball_pattern(const RectCoding& coding, const MarkovBall& mb) {
  const int l = coding.map().l();
  const int n = static_cast<int>(mb.rect_word.size());
  const int m = static_cast<int>(mb.base_word.size());
  std::vector<SymbolSet> pat;
  for (int j = 0; j < std::max(n, m); ++j) {
    if (j < n)
      pat.push_back(SymbolSet::exactly(mb.rect_word[j]));
    else
      pat.push_back({mb.base_word[j] * l, l, 1});
  }
  return pat;
}

// ---------------------------------------------------------------------------

/// |U_n(p)| = |sum_{k<n} F_k / G_{k+1} * dg/dx(T^k p)|, the slope of the
/// horizontal boundary direction after n steps.
inline double slope_diagnostic(const SkewMap& map, TorusPoint p, int n) {
  if (n < 1) throw std::invalid_argument("slope_diagnostic: n must be >= 1");
  double log_f = 0.0, log_g = 0.0, u = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto jf = map.jacobian_factors(p);
    log_g += std::log(jf.dg_dy);  // now log G_{k+1}
    u += std::exp(log_f - log_g) * jf.dg_dx;
    log_f += std::log(jf.fprime);
    p = map.apply(p);
  }
  return std::fabs(u);
}

/// sup|dg/dx| / (inf dg/dy - sup f'), or +inf when the denominator is not positive.
inline double slope_bound(const SkewMap& map) {
  const double den = map.fiber_shape().min_derivative() - map.base().max_derivative();
  if (den <= 0) return std::numeric_limits<double>::infinity();
  return std::fabs(map.c()) / den;
}

}  // namespace dimclt
