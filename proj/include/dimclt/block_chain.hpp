#pragma once

// Transfer operator of a potential that depends on the first `depth` symbols of
// a full shift, presented on the higher-block states (words of length `depth`).
//
// Right eigenvector r, left eigenvector l and eigenvalue lambda of
//   (A r)(w) = exp(phi(w)) * sum_s r(w_1 ... w_{m-1} s)
// give the equilibrium state as the Markov chain
//   P(w -> w_1 ... w_{m-1} s) = exp(phi(w) - log lambda) r(w') / r(w),
//   pi(w) = l(w) r(w) / <l, r>.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "dimclt/core.hpp"

namespace dimclt {

/// Symbols first + t * stride, t < count, allowed at one position of a pattern.
struct SymbolSet {
  int first = 0;
  int count = 1;
  int stride = 1;

  static SymbolSet exactly(int s) { return {s, 1, 1}; }
  int operator[](int t) const { return first + t * stride; }
};

struct PowerIterationOptions {
  int max_iterations = 100000;
  double eigenvalue_tol = 1e-13;
  double vector_tol = 1e-11;
};

struct CovarianceResult {
  std::vector<std::vector<double>> matrix;
  int terms = 0;
  bool converged = true;
};

class BlockChain {
 public:
  BlockChain() = default;

  BlockChain(int alphabet, int depth, std::vector<double> raw_potential,
             const PowerIterationOptions& opt = {})
      : alphabet_(alphabet), depth_(depth), potential_(std::move(raw_potential)) {
    if (alphabet_ < 2 || depth_ < 1) throw std::invalid_argument("BlockChain: bad shape");
    states_ = 1;
    for (int i = 0; i < depth_; ++i) states_ *= static_cast<std::size_t>(alphabet_);
    if (potential_.size() != states_) throw std::invalid_argument("BlockChain: potential size");
    tail_ = states_ / alphabet_;
    solve(opt);
  }

  /// Rebuilds a chain from stored eigendata without iterating.
  static BlockChain restore(int alphabet, int depth, std::vector<double> raw_potential, double pressure,
                            std::vector<double> right, std::vector<double> left) {
    BlockChain c;
    c.alphabet_ = alphabet;
    c.depth_ = depth;
    c.states_ = raw_potential.size();
    c.tail_ = c.states_ / alphabet;
    c.potential_ = std::move(raw_potential);
    c.pressure_ = pressure;
    c.right_ = std::move(right);
    c.left_ = std::move(left);
    if (c.right_.size() != c.states_ || c.left_.size() != c.states_)
      throw std::invalid_argument("BlockChain::restore: size mismatch");
    c.finalize();
    return c;
  }

  int alphabet() const { return alphabet_; }
  int depth() const { return depth_; }
  std::size_t states() const { return states_; }

  /// log of the leading eigenvalue of the raw operator.
  double pressure() const { return pressure_; }
  /// Potential re-centred so that its pressure is zero.
  double potential(std::size_t w) const { return potential_[w] - pressure_; }
  const std::vector<double>& raw_potential() const { return potential_; }
  const std::vector<double>& right() const { return right_; }
  const std::vector<double>& left() const { return left_; }
  const std::vector<double>& stationary() const { return pi_; }
  int iterations() const { return iterations_; }

  std::size_t successor(std::size_t w, int s) const { return (w % tail_) * alphabet_ + s; }
  std::size_t predecessor(int s, std::size_t w) const { return s * tail_ + w / alphabet_; }
  int symbol_at(std::size_t w, int pos) const {
    std::size_t div = 1;
    for (int i = pos + 1; i < depth_; ++i) div *= alphabet_;
    return static_cast<int>((w / div) % alphabet_);
  }
  std::size_t index_of(std::span<const int> word) const {
    std::size_t idx = 0;
    for (int i = 0; i < depth_; ++i) idx = idx * alphabet_ + word[i];
    return idx;
  }

  double transition(std::size_t w, int s) const { return trans_[w * alphabet_ + s]; }

  /// (P v)(w) = sum_s P(w, s) v(succ(w, s)).
  std::vector<double> apply_transition(const std::vector<double>& v) const {
    std::vector<double> out(states_);
    for (std::size_t w = 0; w < states_; ++w) {
      const std::size_t base = (w % tail_) * alphabet_;
      const double* p = &trans_[w * alphabet_];
      double acc = 0.0;
      for (int s = 0; s < alphabet_; ++s) acc += p[s] * v[base + s];
      out[w] = acc;
    }
    return out;
  }

  double expectation(const std::vector<double>& f) const {
    double acc = 0.0;
    for (std::size_t w = 0; w < states_; ++w) acc += pi_[w] * f[w];
    return acc;
  }

  /// Measures of all words of length len <= depth.
  std::vector<double> word_marginals(int len) const {
    if (len < 0 || len > depth_) throw std::invalid_argument("word_marginals: bad length");
    std::size_t cut = 1, n = 1;
    for (int i = len; i < depth_; ++i) cut *= alphabet_;
    for (int i = 0; i < len; ++i) n *= alphabet_;
    std::vector<double> out(n, 0.0);
    for (std::size_t w = 0; w < states_; ++w) out[w / cut] += pi_[w];
    return out;
  }

  /// Kolmogorov-Sinai entropy of the chain, -sum pi P log P.
  double entropy_rate() const {
    double h = 0.0;
    for (std::size_t w = 0; w < states_; ++w)
      for (int s = 0; s < alphabet_; ++s) {
        const double p = trans_[w * alphabet_ + s];
        if (p > 0) h -= pi_[w] * p * std::log(p);
      }
    return h;
  }

  /// Block entropy -sum mu(C) log mu(C) over cylinders of length len <= depth + 1.
  double block_entropy(int len) const {
    double h = 0.0;
    if (len <= depth_) {
      for (double m : word_marginals(len))
        if (m > 0) h -= m * std::log(m);
      return h;
    }
    if (len != depth_ + 1) throw std::invalid_argument("block_entropy: len <= depth + 1");
    for (std::size_t w = 0; w < states_; ++w)
      for (int s = 0; s < alphabet_; ++s) {
        const double m = pi_[w] * trans_[w * alphabet_ + s];
        if (m > 0) h -= m * std::log(m);
      }
    return h;
  }

  /// Measure of the set of sequences whose j-th symbol lies in pattern[j].
  double pattern_measure(std::span<const SymbolSet> pattern) const {
    const int len = static_cast<int>(pattern.size());
    if (len == 0) return 1.0;
    // initial distribution over states consistent with the first min(len, depth) slots
    std::vector<std::pair<std::size_t, double>> dist;
    const int head = std::min(len, depth_);
    std::vector<int> digit(depth_, 0);
    auto slot_count = [&](int pos) { return pos < head ? pattern[pos].count : alphabet_; };
    auto slot_symbol = [&](int pos, int t) { return pos < head ? pattern[pos][t] : t; };
    while (true) {
      std::size_t idx = 0;
      for (int pos = 0; pos < depth_; ++pos) idx = idx * alphabet_ + slot_symbol(pos, digit[pos]);
      dist.emplace_back(idx, pi_[idx]);
      int pos = depth_ - 1;
      while (pos >= 0 && ++digit[pos] == slot_count(pos)) digit[pos--] = 0;
      if (pos < 0) break;
    }
    for (int j = depth_; j < len; ++j) {
      std::vector<std::pair<std::size_t, double>> next;
      next.reserve(dist.size() * pattern[j].count);
      for (auto [w, p] : dist)
        for (int t = 0; t < pattern[j].count; ++t) {
          const int s = pattern[j][t];
          next.emplace_back(successor(w, s), p * transition(w, s));
        }
      std::sort(next.begin(), next.end(),
                [](const auto& u, const auto& v) { return u.first < v.first; });
      dist.clear();
      for (const auto& e : next) {
        if (!dist.empty() && dist.back().first == e.first)
          dist.back().second += e.second;
        else
          dist.push_back(e);
      }
    }
    double total = 0.0;
    for (const auto& e : dist) total += e.second;
    return total;
  }

  /// Draws a word of the given length from the stationary chain.
  template <class Rng>
  std::vector<int> sample_word(Rng& rng, int length) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u0 = unif(rng);
    auto it = std::upper_bound(cum_pi_.begin(), cum_pi_.end(), u0 * cum_pi_.back());
    std::size_t w = std::min<std::size_t>(it - cum_pi_.begin(), states_ - 1);
    std::vector<int> word;
    word.reserve(std::max(length, depth_));
    for (int pos = 0; pos < depth_; ++pos) word.push_back(symbol_at(w, pos));
    while (static_cast<int>(word.size()) < length) {
      const double u = unif(rng);
      const double* p = &trans_[w * alphabet_];
      double acc = 0.0;
      int s = alphabet_ - 1;
      for (int t = 0; t < alphabet_; ++t) {
        acc += p[t];
        if (u < acc) {
          s = t;
          break;
        }
      }
      word.push_back(s);
      w = successor(w, s);
    }
    word.resize(length);
    return word;
  }

  /// Green-Kubo covariance of state observables: C(0) + sum_r [C(r) + C(r)^T],
  /// with C_ij(r) = E[f_i (P^r f_j)]. Stops once the largest term falls below
  /// rel_tol times the largest lag-0 variance (or an absolute rounding floor),
  /// or at max_terms.
  CovarianceResult green_kubo(const std::vector<std::vector<double>>& observables, int max_terms = 1000,
                              double rel_tol = 1e-8) const {
    const std::size_t d = observables.size();
    CovarianceResult res;
    res.matrix.assign(d, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> centered = observables;
    for (auto& f : centered) {
      const double mean = expectation(f);
      for (double& v : f) v -= mean;
    }
    auto weighted_dot = [&](const std::vector<double>& f, const std::vector<double>& g) {
      double acc = 0.0;
      for (std::size_t w = 0; w < states_; ++w) acc += pi_[w] * f[w] * g[w];
      return acc;
    };
    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        res.matrix[i][j] = weighted_dot(centered[i], centered[j]);
        if (i == j) scale = std::max(scale, res.matrix[i][i]);
      }
    if (scale < 1e-300) return res;
    const double floor_tol = std::max(rel_tol * scale, 1e-24);
    std::vector<std::vector<double>> pushed = centered;
    int quiet = 0;
    for (int r = 1; r <= max_terms; ++r) {
      for (auto& v : pushed) v = apply_transition(v);
      double largest = 0.0;
      std::vector<std::vector<double>> c(d, std::vector<double>(d));
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) c[i][j] = weighted_dot(centered[i], pushed[j]);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double term = c[i][j] + c[j][i];
          res.matrix[i][j] += term;
          largest = std::max(largest, std::fabs(term));
        }
      res.terms = r;
      quiet = largest < floor_tol ? quiet + 1 : 0;
      if (quiet >= 3) return res;
    }
    res.converged = false;
    return res;
  }

 private:
  void solve(const PowerIterationOptions& opt) {
    std::vector<double> weight(states_);
    for (std::size_t w = 0; w < states_; ++w) weight[w] = std::exp(potential_[w]);

    // right eigenvector
    right_.assign(states_, 1.0);
    std::vector<double> next(states_);
    double lambda = 0.0;
    bool done = false;
    for (int it = 1; it <= opt.max_iterations; ++it) {
      double top = 0.0;
      for (std::size_t w = 0; w < states_; ++w) {
        const std::size_t base = (w % tail_) * alphabet_;
        double acc = 0.0;
        for (int s = 0; s < alphabet_; ++s) acc += right_[base + s];
        next[w] = weight[w] * acc;
        top = std::max(top, next[w]);
      }
      double diff = 0.0;
      for (std::size_t w = 0; w < states_; ++w) {
        next[w] /= top;
        diff = std::max(diff, std::fabs(next[w] - right_[w]));
      }
      right_.swap(next);
      const bool eig_ok = std::fabs(top - lambda) <= opt.eigenvalue_tol * top;
      lambda = top;
      iterations_ = it;
      if (eig_ok && diff <= opt.vector_tol) {
        done = true;
        break;
      }
    }
    if (!done) throw NumericalError("power iteration did not converge (right eigenvector)");
    pressure_ = std::log(lambda);

    // left eigenvector
    left_.assign(states_, 1.0);
    done = false;
    double mu = 0.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
      double top = 0.0;
      for (std::size_t w = 0; w < states_; ++w) {
        double acc = 0.0;
        for (int s = 0; s < alphabet_; ++s) {
          const std::size_t p = predecessor(s, w);
          acc += left_[p] * weight[p];
        }
        next[w] = acc;
        top = std::max(top, acc);
      }
      double diff = 0.0;
      for (std::size_t w = 0; w < states_; ++w) {
        next[w] /= top;
        diff = std::max(diff, std::fabs(next[w] - left_[w]));
      }
      left_.swap(next);
      const bool eig_ok = std::fabs(top - mu) <= opt.eigenvalue_tol * top;
      mu = top;
      if (eig_ok && diff <= opt.vector_tol) {
        done = true;
        break;
      }
    }
    if (!done) throw NumericalError("power iteration did not converge (left eigenvector)");
    finalize();
  }

  void finalize() {
    const double lambda = std::exp(pressure_);
    pi_.resize(states_);
    double z = 0.0;
    for (std::size_t w = 0; w < states_; ++w) z += (pi_[w] = left_[w] * right_[w]);
    for (double& v : pi_) v /= z;

    trans_.resize(states_ * alphabet_);
    for (std::size_t w = 0; w < states_; ++w) {
      const std::size_t base = (w % tail_) * alphabet_;
      const double weight = std::exp(potential_[w]);
      double row = 0.0;
      for (int s = 0; s < alphabet_; ++s)
        row += (trans_[w * alphabet_ + s] = weight * right_[base + s] / (lambda * right_[w]));
      for (int s = 0; s < alphabet_; ++s) trans_[w * alphabet_ + s] /= row;  // rounding only
    }
    cum_pi_.resize(states_);
    double acc = 0.0;
    for (std::size_t w = 0; w < states_; ++w) cum_pi_[w] = (acc += pi_[w]);
  }

  int alphabet_ = 2;
  int depth_ = 1;
  std::size_t states_ = 0;
  std::size_t tail_ = 1;
  std::vector<double> potential_;
  double pressure_ = 0.0;
  std::vector<double> right_, left_, pi_, trans_, cum_pi_;
  int iterations_ = 0;
};

}  // namespace dimclt
