#pragma once

// Skew-product expanding maps of the 2-torus
//
//   T(x, y) = (f(x), g(x, y)),
//   f(x)    = k x + (a / 2pi) sin(2 pi x)                        mod 1
//   g(x, y) = l y + (b / 2pi) sin(2 pi y) + (c / 2pi) sin(2 pi x) mod 1
//
// together with their derivative oracles, orbit products and inverse branches.

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dimclt/core.hpp"

namespace dimclt {

/// Degree-k circle map x -> k x + (a/2pi) sin(2 pi x). Used as the base of a
/// skew product, as the fiber shape, and on its own by the 1-d pipeline.
struct CircleMap {
  int k = 2;
  double a = 0.0;

  CircleMap() = default;
  CircleMap(int degree, double amplitude) : k(degree), a(amplitude) { validate(); }

  void validate() const {
    if (k < 2) throw ModelError("degree must be >= 2");
    if (!(std::fabs(a) < k - 1)) throw ModelError("expansion violated: |amplitude| >= degree - 1");
  }

  /// Lift to R, increasing, lift(x + 1) = lift(x) + k.
  double lift(double x) const { return k * x + a / kTwoPi * std::sin(kTwoPi * x); }
  double operator()(double x) const { return wrap01(lift(x)); }
  double derivative(double x) const { return k + a * std::cos(kTwoPi * x); }
  double min_derivative() const { return k - std::fabs(a); }
  double max_derivative() const { return k + std::fabs(a); }

  /// Solves lift(x) = v for real v. Bracketed bisection to 1e-13 followed by
  /// three Newton steps on the monotone lift.
  double inverse_lift(double v) const {
    const double period = std::floor(v / k);
    const double w = v - period * k;  // in [0, k)
    const double spread = std::fabs(a) / kTwoPi;
    double lo = std::max(0.0, (w - spread) / k);
    double hi = std::min(1.0, (w + spread) / k);
    // lift is increasing, so [lo, hi] brackets the root
    while (hi - lo > 1e-13) {
      const double mid = 0.5 * (lo + hi);
      if (lift(mid) < w)
        lo = mid;
      else
        hi = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 3; ++i) {
      const double step = (lift(x) - w) / derivative(x);
      x -= step;
    }
    if (!(std::fabs(lift(x) - w) < 1e-11 * std::max(1.0, w)))
      throw NumericalError("circle map inversion did not converge (invalid parameters?)");
    return period + x;
  }

  /// All k solutions of f(xi) = x, ascending in [0,1).
  std::vector<double> preimages(double x) const {
    std::vector<double> out;
    out.reserve(k);
    const double x0 = wrap01(x);
    for (int m = 0; m < k; ++m) out.push_back(wrap01(inverse_lift(x0 + m)));
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct JacobianFactors {
  double fprime;
  double dg_dx;
  double dg_dy;
};

class SkewMap {
 public:
  SkewMap() : SkewMap(2, 0.0, 3, 0.0, 0.0) {}
  SkewMap(int k, double a, int l, double b, double c) : base_(k, a), fiber_(l, b), c_(c) {}

  int k() const { return base_.k; }
  int l() const { return fiber_.k; }
  double a() const { return base_.a; }
  double b() const { return fiber_.a; }
  double c() const { return c_; }
  int alphabet() const { return k() * l(); }

  const CircleMap& base() const { return base_; }
  /// y -> l y + (b/2pi) sin(2 pi y); g(x, y) = fiber_shape().lift(y) + coupling(x).
  const CircleMap& fiber_shape() const { return fiber_; }
  double coupling(double x) const { return c_ / kTwoPi * std::sin(kTwoPi * x); }

  TorusPoint operator()(const TorusPoint& p) const { return apply(p); }
  TorusPoint apply(const TorusPoint& p) const {
    return TorusPoint(base_.lift(p.x), fiber_.lift(p.y) + coupling(p.x));
  }

  JacobianFactors jacobian_factors(const TorusPoint& p) const {
    return {base_.derivative(p.x), c_ * std::cos(kTwoPi * p.x), fiber_.derivative(p.y)};
  }
  double log_det_jacobian(const TorusPoint& p) const {
    return std::log(base_.derivative(p.x)) + std::log(fiber_.derivative(p.y));
  }

  std::vector<double> inverse_branches_base(double x) const { return base_.preimages(x); }

  /// All l solutions eta of g(x_pre, eta) = y, ascending in [0,1).
  std::vector<double> inverse_branches_fiber(double x_pre, double y) const {
    return fiber_.preimages(wrap01(y - coupling(x_pre)));
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "skew(k=" << k() << ",a=" << a() << ",l=" << l() << ",b=" << b() << ",c=" << c_ << ")";
    return os.str();
  }

 private:
  CircleMap base_;
  CircleMap fiber_;
  double c_;
};

/// Orbit products F_n and G_n, carried in log space.
struct BirkhoffProducts {
  double log_F = 0.0;
  double log_G = 0.0;
  double F() const { return std::exp(log_F); }
  double G() const { return std::exp(log_G); }
};

inline BirkhoffProducts birkhoff_products(const SkewMap& map, TorusPoint p, int n) {
  if (n < 0) throw std::invalid_argument("birkhoff_products: n must be >= 0");
  BirkhoffProducts out;
  for (int j = 0; j < n; ++j) {
    const auto jf = map.jacobian_factors(p);
    out.log_F += std::log(jf.fprime);
    out.log_G += std::log(jf.dg_dy);
    p = map.apply(p);
  }
  return out;
}

template <class Observable>
double birkhoff_sum(const SkewMap& map, Observable&& phi, TorusPoint p, int n) {
  if (n < 0) throw std::invalid_argument("birkhoff_sum: n must be >= 0");
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    s += phi(p);
    p = map.apply(p);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Potentials

/// phi(x, y) = constant + sum_n [cos_x[n] cos(2pi(n+1)x) + sin_x[n] sin(2pi(n+1)x)
///                              + cos_y[n] cos(2pi(n+1)y) + sin_y[n] sin(2pi(n+1)y)]
struct TrigPoly {
  double constant = 0.0;
  std::vector<double> cos_x, sin_x, cos_y, sin_y;
};

/// One value per depth-d rectangle word (first symbol most significant).
struct CylinderPiecewiseConstant {
  int depth = 1;
  std::vector<double> values;
};

/// -scale * log|det DT|.
struct NegLogDetJacobian {
  double scale = 1.0;
};

using PotentialSpec = std::variant<TrigPoly, CylinderPiecewiseConstant, NegLogDetJacobian>;

/// Depth-1 piecewise-constant potential whose equilibrium state is
/// Bernoulli(p, 1-p, ...) on the base symbols times uniform on the fiber:
/// value log(weights[i]) - log(l) on every rectangle with base symbol i.
inline CylinderPiecewiseConstant bernoulli_potential(const std::vector<double>& base_weights, int l) {
  CylinderPiecewiseConstant pc;
  pc.depth = 1;
  for (double w : base_weights)
    for (int j = 0; j < l; ++j) pc.values.push_back(std::log(w) - std::log(static_cast<double>(l)));
  return pc;
}

inline double eval_trig(const TrigPoly& t, double x, double y) {
  double v = t.constant;
  auto harm = [](const std::vector<double>& coef, double u, bool use_cos) {
    double s = 0.0;
    for (std::size_t n = 0; n < coef.size(); ++n) {
      const double arg = kTwoPi * static_cast<double>(n + 1) * u;
      s += coef[n] * (use_cos ? std::cos(arg) : std::sin(arg));
    }
    return s;
  };
  v += harm(t.cos_x, x, true) + harm(t.sin_x, x, false);
  v += harm(t.cos_y, y, true) + harm(t.sin_y, y, false);
  return v;
}

inline int potential_coding_depth(const PotentialSpec& phi) {
  if (auto* pc = std::get_if<CylinderPiecewiseConstant>(&phi)) return pc->depth;
  return 0;
}

/// Evaluates the potential at p; `coding` must hold at least
/// potential_coding_depth(phi) rectangle symbols of p.
inline double evaluate_potential(const SkewMap& map, const PotentialSpec& phi, const TorusPoint& p,
                                 std::span<const int> coding) {
  return std::visit(
      [&](const auto& v) -> double {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, TrigPoly>) {
          return eval_trig(v, p.x, p.y);
        } else if constexpr (std::is_same_v<V, NegLogDetJacobian>) {
          return -v.scale * map.log_det_jacobian(p);
        } else {
          if (static_cast<int>(coding.size()) < v.depth)
            throw std::invalid_argument("piecewise-constant potential needs a longer coding");
          std::size_t idx = 0;
          for (int i = 0; i < v.depth; ++i) idx = idx * map.alphabet() + coding[i];
          return v.values.at(idx);
        }
      },
      phi);
}

inline void validate_potential(const SkewMap& map, const PotentialSpec& phi) {
  if (auto* pc = std::get_if<CylinderPiecewiseConstant>(&phi)) {
    if (pc->depth < 1) throw ModelError("piecewise-constant potential depth must be >= 1");
    std::size_t expected = 1;
    for (int i = 0; i < pc->depth; ++i) expected *= map.alphabet();
    if (pc->values.size() != expected)
      throw ModelError("piecewise-constant potential needs (k*l)^depth values");
    for (double v : pc->values)
      if (!std::isfinite(v)) throw ModelError("potential values must be finite");
  }
}

}  // namespace dimclt
