#pragma once

// Smoothed naive Bayes over discrete set-valued features, one window at a
// time. Counts are kept as integers so likelihoods can be recomputed exactly
// from a serialized table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "railcause/core.hpp"

namespace railcause::nbayes {

// Sorted, duplicate-free feature indices present in one window.
using FeatureSet = std::vector<std::uint32_t>;

enum class PriorMode : std::uint8_t { Empirical, Uniform };

inline std::string_view to_string(PriorMode m) { return m == PriorMode::Empirical ? "empirical" : "uniform"; }

inline PriorMode parse_prior_mode(std::string_view s) {
  if (s == "empirical") return PriorMode::Empirical;
  if (s == "uniform") return PriorMode::Uniform;
  throw Error(ErrorKind::InvalidConfig, "unknown prior mode '" + std::string(s) + "'");
}

struct WindowVerdict {
  SubsystemClass cls;
  double log_score;

  bool operator==(const WindowVerdict&) const = default;
};

inline FeatureSet normalized(FeatureSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

class CountTable {
 public:
  CountTable(std::size_t vocabulary_size, double beta, PriorMode priors = PriorMode::Empirical)
      : n_(vocabulary_size), beta_(beta), priors_(priors), card_(vocabulary_size) {
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw Error(ErrorKind::NonPositiveSmoothing, "beta must be a positive finite number");
    class_counts_.fill(0);
    card_sum_.fill(0);
    for (auto& row : card_) row.fill(0);
    finalize();
  }

  static CountTable fit(std::span<const FeatureSet> windows, std::span<const SubsystemClass> labels,
                        std::size_t vocabulary_size, double beta, PriorMode priors = PriorMode::Empirical) {
    if (windows.empty() || windows.size() != labels.size())
      throw Error(ErrorKind::EmptyTrainingSet,
                  "need one label per window and at least one window (got " + std::to_string(windows.size()) +
                      " windows, " + std::to_string(labels.size()) + " labels)");
    CountTable t(vocabulary_size, beta, priors);
    for (std::size_t s = 0; s < windows.size(); ++s) t.add(windows[s], labels[s]);
    t.finalize();
    return t;
  }

  // Rebuilds a table from stored integer counts.
  static CountTable from_counts(std::size_t vocabulary_size, double beta, PriorMode priors,
                                const PerClass<std::int64_t>& class_counts,
                                std::vector<PerClass<std::int64_t>> card) {
    CountTable t(vocabulary_size, beta, priors);
    if (card.size() != vocabulary_size)
      throw Error(ErrorKind::SchemaMismatch, "count rows do not match vocabulary size");
    t.class_counts_ = class_counts;
    t.card_ = std::move(card);
    for (const auto& row : t.card_)
      for (std::size_t j = 0; j < kClassCount; ++j) {
        if (row[j] < 0 || class_counts[j] < 0) throw Error(ErrorKind::SchemaMismatch, "negative count");
        t.card_sum_[j] += row[j];
      }
    t.finalize();
    return t;
  }

  std::size_t vocabulary_size() const noexcept { return n_; }
  double beta() const noexcept { return beta_; }
  PriorMode prior_mode() const noexcept { return priors_; }
  std::int64_t class_count(SubsystemClass c) const { return class_counts_[index_of(c)]; }
  const PerClass<std::int64_t>& class_counts() const noexcept { return class_counts_; }
  std::int64_t card(std::size_t feature, SubsystemClass c) const { return card_.at(feature)[index_of(c)]; }
  std::int64_t card_total(SubsystemClass c) const { return card_sum_[index_of(c)]; }
  const std::vector<PerClass<std::int64_t>>& cards() const noexcept { return card_; }
  std::int64_t sample_count() const noexcept { return total_; }

  double prior(SubsystemClass c) const { return std::exp(log_prior_[index_of(c)]); }

  // (card(i|j) + beta) / (n * beta + sum_i card(i|j))
  double likelihood(std::size_t feature, SubsystemClass c) const {
    check_feature(feature);
    const std::size_t j = index_of(c);
    return (static_cast<double>(card_[feature][j]) + beta_) /
           (static_cast<double>(n_) * beta_ + static_cast<double>(card_sum_[j]));
  }

  double log_likelihood(std::size_t feature, SubsystemClass c) const {
    check_feature(feature);
    const std::size_t j = index_of(c);
    return std::log(static_cast<double>(card_[feature][j]) + beta_) - log_denominator_[j];
  }

  // nullopt when no vocabulary feature is present: the classifier does not
  // answer. Out-of-vocabulary indices are ignored. Ties resolve to the class
  // that comes first in the enumeration.
  std::optional<WindowVerdict> classify(const FeatureSet& present) const {
    bool any = false;
    for (auto f : present)
      if (f < n_) {
        any = true;
        break;
      }
    if (!any) return std::nullopt;

    std::optional<WindowVerdict> best;
    for (std::size_t j = 0; j < kClassCount; ++j) {
      if (!std::isfinite(log_prior_[j])) continue;
      double score = log_prior_[j];
      for (auto f : present)
        if (f < n_) score += std::log(static_cast<double>(card_[f][j]) + beta_) - log_denominator_[j];
      // Scores equal up to rounding count as a tie, which the earlier class keeps.
      if (!best || score > best->log_score + 1e-12 * std::max(1.0, std::abs(best->log_score)))
        best = WindowVerdict{class_at(j), score};
    }
    return best;
  }

  bool operator==(const CountTable& o) const {
    return n_ == o.n_ && beta_ == o.beta_ && priors_ == o.priors_ && class_counts_ == o.class_counts_ &&
           card_ == o.card_;
  }

 private:
  void add(const FeatureSet& present, SubsystemClass label) {
    const std::size_t j = index_of(label);
    ++class_counts_[j];
    for (auto f : present) {
      if (f >= n_) throw Error(ErrorKind::UnknownFeature, "feature " + std::to_string(f) + " outside vocabulary");
      ++card_[f][j];
      ++card_sum_[j];
    }
  }

  void check_feature(std::size_t feature) const {
    if (feature >= n_) throw Error(ErrorKind::UnknownFeature, "feature " + std::to_string(feature));
  }

  void finalize() {
    total_ = 0;
    std::size_t present_classes = 0;
    for (auto c : class_counts_) {
      total_ += c;
      if (c > 0) ++present_classes;
    }
    for (std::size_t j = 0; j < kClassCount; ++j) {
      if (class_counts_[j] == 0) {
        log_prior_[j] = -std::numeric_limits<double>::infinity();
      } else if (priors_ == PriorMode::Empirical) {
        log_prior_[j] = std::log(static_cast<double>(class_counts_[j])) - std::log(static_cast<double>(total_));
      } else {
        log_prior_[j] = -std::log(static_cast<double>(present_classes));
      }
      log_denominator_[j] = std::log(static_cast<double>(n_) * beta_ + static_cast<double>(card_sum_[j]));
    }
  }

  std::size_t n_;
  double beta_;
  PriorMode priors_;
  PerClass<std::int64_t> class_counts_{};
  std::vector<PerClass<std::int64_t>> card_;
  PerClass<std::int64_t> card_sum_{};
  std::int64_t total_ = 0;
  PerClass<double> log_prior_{};
  PerClass<double> log_denominator_{};
};

inline CountTable fit_counts(std::span<const FeatureSet> windows, std::span<const SubsystemClass> labels,
                             std::size_t vocabulary_size, double beta, PriorMode priors = PriorMode::Empirical) {
  return CountTable::fit(windows, labels, vocabulary_size, beta, priors);
}

inline std::optional<WindowVerdict> classify_window(const CountTable& table, const FeatureSet& present) {
  return table.classify(present);
}

}  // namespace railcause::nbayes
