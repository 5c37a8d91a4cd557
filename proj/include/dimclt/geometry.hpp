#pragma once

// Geometric ball measures and the ball/Markov-ball sandwich. Both need
// rectangle cylinders that are honest axis-parallel boxes, i.e. a decoupled map
// (c = 0) with an anchor fixed by f and by the fiber shape.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "dimclt/markov_partition.hpp"
#include "dimclt/thermodynamics.hpp"

namespace dimclt {

/// Circle distances from x to the closest and farthest points of [lo, hi].
struct AxisDistances {
  double near;
  double far;
};

inline AxisDistances axis_distances(double x, const Interval& iv) {
  const double len = iv.length();
  if (len >= 1.0) return {0.0, 0.5};
  const double d = wrap01(x - iv.lo);
  AxisDistances out{};
  out.near = d <= len ? 0.0 : std::min(d - len, 1.0 - d);
  out.far = wrap01(x + 0.5 - iv.lo) <= len ? 0.5
                                           : std::max(circle_distance(x, iv.lo), circle_distance(x, iv.hi));
  return out;
}

struct BallMeasure {
  double lower = 0.0;
  double upper = 0.0;
  double mid = 0.0;
  double rel_width = 0.0;
  bool resolved = true;  // rel_width <= 0.3
  long nodes = 0;
};

namespace detail {

using SparseMass = std::vector<std::pair<std::size_t, double>>;

inline double total_mass(const SparseMass& v) {
  double s = 0.0;
  for (const auto& e : v) s += e.second;
  return s;
}

// Restricts (position < depth) or propagates (position >= depth) the forward
// mass to symbol s at `pos`.
inline SparseMass extend_mass(const BlockChain& chain, const SparseMass& v, int pos, int s) {
  SparseMass out;
  if (pos < chain.depth()) {
    for (const auto& e : v)
      if (chain.symbol_at(e.first, pos) == s) out.push_back(e);
    return out;
  }
  out.reserve(v.size());
  for (const auto& e : v) {
    const double p = chain.transition(e.first, s);
    if (p > 0.0) out.emplace_back(chain.successor(e.first, s), e.second * p);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseMass merged;
  for (const auto& e : out) {
    if (!merged.empty() && merged.back().first == e.first)
      merged.back().second += e.second;
    else
      merged.push_back(e);
  }
  return merged;
}

struct BallSearch {
  const BlockChain& chain;
  const MarkovPartition& part;
  TorusPoint p;
  double r2;
  double target;
  BallMeasure out;

  void descend(const Word& base, const Word& fiber, const SparseMass& mass, int pos) {
    ++out.nodes;
    const Interval bx = base_interval(part, base);
    const Interval fy = fiber_interval(part, fiber);
    const auto ax = axis_distances(p.x, bx);
    const auto ay = axis_distances(p.y, fy);
    if (ax.near * ax.near + ay.near * ay.near >= r2) return;
    const double m = total_mass(mass);
    if (ax.far * ax.far + ay.far * ay.far <= r2) {
      out.lower += m;
      out.upper += m;
      return;
    }
    // a side is refined only while its word is contiguous up to `pos`
    const bool refine_base = static_cast<int>(base.size()) == pos && bx.length() > target;
    const bool refine_fiber = static_cast<int>(fiber.size()) == pos && fy.length() > target;
    if (!refine_base && !refine_fiber) {
      out.upper += m;
      return;
    }
    const int k = part.map().k(), l = part.map().l();
    Word nb = base, nf = fiber;
    if (refine_base) nb.push_back(0);
    if (refine_fiber) nf.push_back(0);
    for (int i = 0; i < (refine_base ? k : 1); ++i) {
      if (refine_base) nb.back() = i;
      for (int j = 0; j < (refine_fiber ? l : 1); ++j) {
        if (refine_fiber) nf.back() = j;
        // symbols allowed at `pos`: fixed base/fiber or free
        SparseMass child;
        for (int bi = 0; bi < k; ++bi) {
          if (refine_base && bi != i) continue;
          for (int fj = 0; fj < l; ++fj) {
            if (refine_fiber && fj != j) continue;
            auto part_mass = extend_mass(chain, mass, pos, bi * l + fj);
            child.insert(child.end(), part_mass.begin(), part_mass.end());
          }
        }
        if (!refine_base || !refine_fiber) {
          std::sort(child.begin(), child.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
          SparseMass merged;
          for (const auto& e : child) {
            if (!merged.empty() && merged.back().first == e.first)
              merged.back().second += e.second;
            else
              merged.push_back(e);
          }
          child.swap(merged);
        }
        if (!child.empty()) descend(nb, nf, child, pos + 1);
      }
    }
  }
};

}  // namespace detail

/// mu(B(p, r)) bracketed by the mass of depth-adaptive cylinders inside the
/// disk (lower) and of those meeting it (upper). Cylinder sides are refined
/// down to r / resolution.
inline BallMeasure ball_measure(const BlockChain& chain, const MarkovPartition& part, TorusPoint p, double r,
                                double resolution = 32.0) {
  if (!(r > 0.0)) throw std::invalid_argument("ball_measure: radius must be > 0");
  if (!part.rect_cells_are_boxes())
    throw std::domain_error("ball_measure needs box-shaped cylinders (decoupled map, fixed anchor)");
  BallMeasure out;
  if (r >= std::sqrt(0.5)) {
    out.lower = out.upper = out.mid = 1.0;
    return out;
  }
  detail::SparseMass root;
  root.reserve(chain.states());
  for (std::size_t w = 0; w < chain.states(); ++w) root.emplace_back(w, chain.stationary()[w]);
  detail::BallSearch search{chain, part, p, r * r, r / resolution, {}};
  search.descend({}, {}, root, 0);
  out = search.out;
  out.upper = std::min(out.upper, 1.0);
  out.mid = 0.5 * (out.lower + out.upper);
  out.rel_width = out.mid > 0.0 ? (out.upper - out.lower) / out.mid : std::numeric_limits<double>::infinity();
  out.resolved = out.rel_width <= 0.3;
  return out;
}

inline BallMeasure ball_measure(const GibbsModel& g, const MarkovPartition& part, TorusPoint p, double r,
                                double resolution = 32.0) {
  return ball_measure(g.chain, part, p, r, resolution);
}

// ---------------------------------------------------------------------------

struct MarkovBox {
  Interval x;
  Interval y;
};

inline MarkovBox markov_box(const MarkovPartition& part, const MarkovBall& mb) {
  Word fiber;
  for (int s : mb.rect_word) fiber.push_back(part.coding().fiber_of(s));
  return {base_interval(part, mb.base_word), fiber_interval(part, fiber)};
}

struct SandwichResult {
  double c_low = 1.0;  // largest grid c <= 1 with C_{c eps} inside B(p, eps)
  double c_up = 1.0;   // smallest grid c >= 1 with B(p, eps) inside C_{c eps}
  bool low_found = true;
  bool up_found = true;
  /// max(log(1/c_low), log c_up), the log of the sandwich constant.
  double log_cbar() const { return std::max(-std::log(c_low), std::log(c_up)); }
};

/// Multiplicative scan c = 2^{+-j/8}. Exhausted searches return c = 2^{-64}
/// (lower) or 2^{64} (upper) with the found flag cleared.
inline SandwichResult sandwich_check(const MarkovPartition& part, TorusPoint p, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("sandwich_check: eps must lie in (0, 1)");
  if (!part.rect_cells_are_boxes())
    throw std::domain_error("sandwich_check needs box-shaped cylinders (decoupled map, fixed anchor)");
  const double step = std::pow(2.0, 0.125);
  const int max_steps = 64 * 8;
  SandwichResult res;

  auto box_at = [&](double c) { return markov_box(part, markov_ball(part, p, std::min(c * eps, 0.999999))); };

  res.low_found = false;
  double c = 1.0;
  for (int j = 0; j <= max_steps; ++j, c /= step) {
    const auto b = box_at(c);
    const auto ax = axis_distances(p.x, b.x), ay = axis_distances(p.y, b.y);
    if (ax.far * ax.far + ay.far * ay.far <= eps * eps) {
      res.c_low = c;
      res.low_found = true;
      break;
    }
  }
  if (!res.low_found) res.c_low = std::pow(2.0, -64);

  res.up_found = false;
  c = 1.0;
  for (int j = 0; j <= max_steps; ++j, c *= step) {
    const auto b = box_at(c);
    auto covers = [&](double x, const Interval& iv) {
      if (iv.length() >= 1.0) return true;
      const double d = wrap01(x - iv.lo);
      return d <= iv.length() && d >= eps && iv.length() - d >= eps;
    };
    if (covers(p.x, b.x) && covers(p.y, b.y)) {
      res.c_up = c;
      res.up_found = true;
      break;
    }
  }
  if (!res.up_found) res.c_up = std::pow(2.0, 64);
  return res;
}

}  // namespace dimclt
