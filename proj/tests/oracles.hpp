#pragma once

// Independent reference computations used as test oracles.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "railcause/nbayes.hpp"

namespace oracles {

using boost::multiprecision::cpp_rational;
using namespace railcause;

// Unnormalized posterior p(c) * prod_i p(x_i | c) over rationals, for every
// class with a non-zero prior.
struct ExactPosterior {
  std::vector<std::pair<SubsystemClass, cpp_rational>> scores;

  std::optional<SubsystemClass> argmax() const {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < scores.size(); ++k)
      if (!best || scores[k].second > scores[*best].second) best = k;  // strict: earlier class keeps ties
    if (!best) return std::nullopt;
    return scores[*best].first;
  }

  double log_of(SubsystemClass c) const {
    for (const auto& [cls, v] : scores)
      if (cls == c) {
        const auto num = boost::multiprecision::numerator(v);
        const auto den = boost::multiprecision::denominator(v);
        return std::log(num.convert_to<double>()) - std::log(den.convert_to<double>());
      }
    return -INFINITY;
  }
};

// beta given as a rational so the oracle never touches floating point.
inline std::optional<ExactPosterior> exact_posterior(std::size_t n, const cpp_rational& beta,
                                                     const PerClass<std::int64_t>& class_counts,
                                                     const std::vector<PerClass<std::int64_t>>& cards,
                                                     const std::vector<std::uint32_t>& present, bool uniform_priors) {
  bool answers = false;
  for (auto f : present) answers |= f < n;
  if (!answers) return std::nullopt;
  std::int64_t total = 0, classes = 0;
  for (auto c : class_counts) {
    total += c;
    classes += c > 0;
  }
  ExactPosterior out;
  for (std::size_t j = 0; j < kClassCount; ++j) {
    if (class_counts[j] == 0) continue;
    cpp_rational score = uniform_priors ? cpp_rational(1, classes) : cpp_rational(class_counts[j], total);
    std::int64_t sum = 0;
    for (const auto& row : cards) sum += row[j];
    for (auto f : present)
      if (f < n) score *= (cpp_rational(cards[f][j]) + beta) / (cpp_rational(static_cast<std::int64_t>(n)) * beta + sum);
    out.scores.emplace_back(class_at(j), score);
  }
  return out;
}

// Length of the longest common subsequence by enumerating every subsequence
// of the shorter input.
template <class T>
std::size_t brute_force_lcs_length(const std::vector<T>& a, const std::vector<T>& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  const std::size_t m = small.size();
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::size_t len = static_cast<std::size_t>(__builtin_popcount(mask));
    if (len <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < m && ok; ++i) {
      if (!(mask & (1u << i))) continue;
      while (j < large.size() && !(large[j] == small[i])) ++j;
      if (j == large.size()) ok = false;
      else ++j;
    }
    if (ok) best = len;
  }
  return best;
}

template <class T>
bool contains_subsequence(const std::vector<T>& needle, const std::vector<T>& hay) {
  std::size_t i = 0;
  for (const auto& x : hay)
    if (i < needle.size() && x == needle[i]) ++i;
  return i == needle.size();
}

// Random table over <= max_features features and <= max_classes classes.
struct RandomTable {
  std::size_t n = 1;
  std::int64_t beta_num = 1, beta_den = 1;
  PerClass<std::int64_t> class_counts{};
  std::vector<PerClass<std::int64_t>> cards;
  std::vector<std::uint32_t> present;

  double beta() const { return static_cast<double>(beta_num) / static_cast<double>(beta_den); }
  cpp_rational beta_exact() const { return cpp_rational(beta_num, beta_den); }
};

inline RandomTable random_table(std::mt19937_64& rng, std::size_t max_features, std::size_t max_classes,
                                std::int64_t max_count = 20) {
  RandomTable t;
  t.n = std::uniform_int_distribution<std::size_t>(1, max_features)(rng);
  // Dyadic smoothing constants are exact in binary floating point.
  static const std::int64_t dens[] = {1, 2, 4, 8, 16, 64, 1024};
  t.beta_den = dens[std::uniform_int_distribution<int>(0, 6)(rng)];
  t.beta_num = std::uniform_int_distribution<std::int64_t>(1, 3)(rng);
  const std::size_t k = std::uniform_int_distribution<std::size_t>(1, max_classes)(rng);
  std::vector<std::size_t> classes(kClassCount);
  for (std::size_t j = 0; j < kClassCount; ++j) classes[j] = j;
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(k);
  t.cards.assign(t.n, PerClass<std::int64_t>{});
  std::uniform_int_distribution<std::int64_t> count(1, max_count);
  for (auto j : classes) {
    t.class_counts[j] = count(rng);
    for (auto& row : t.cards) row[j] = std::uniform_int_distribution<std::int64_t>(0, t.class_counts[j])(rng);
  }
  for (std::uint32_t f = 0; f < t.n; ++f)
    if (std::bernoulli_distribution(0.5)(rng)) t.present.push_back(f);
  if (std::bernoulli_distribution(0.1)(rng)) t.present.push_back(static_cast<std::uint32_t>(t.n + 3));  // unknown
  return t;
}

}  // namespace oracles
