#pragma once

// Recurrent event-set mining: burst denoising, pairwise longest common
// subsequence, per-class support counting, and subsequence matching of
// mined sets inside a window.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "railcause/core.hpp"
#include "railcause/nbayes.hpp"

namespace railcause::setminer {

// Collapses each maximal run of equal adjacent items to one item.
template <class T>
std::vector<T> denoise(std::span<const T> seq) {
  std::vector<T> out;
  out.reserve(seq.size());
  for (const T& x : seq)
    if (out.empty() || !(out.back() == x)) out.push_back(x);
  return out;
}

template <class T>
std::vector<T> denoise(const std::vector<T>& seq) {
  return denoise(std::span<const T>(seq));
}

// Order-preserving containment with gaps allowed.
template <class T>
bool is_subsequence(std::span<const T> needle, std::span<const T> haystack) {
  std::size_t i = 0;
  for (std::size_t j = 0; j < haystack.size() && i < needle.size(); ++j)
    if (haystack[j] == needle[i]) ++i;
  return i == needle.size();
}

template <class T>
bool is_subsequence(const std::vector<T>& needle, const std::vector<T>& haystack) {
  return is_subsequence(std::span<const T>(needle), std::span<const T>(haystack));
}

// Length table for suffixes: table[i][j] = |LCS(a[i:], b[j:])|.
template <class T>
std::vector<std::vector<std::uint32_t>> lcss_suffix_table(std::span<const T> a, std::span<const T> b) {
  std::vector<std::vector<std::uint32_t>> L(a.size() + 1, std::vector<std::uint32_t>(b.size() + 1, 0));
  for (std::size_t i = a.size(); i-- > 0;)
    for (std::size_t j = b.size(); j-- > 0;)
      L[i][j] = a[i] == b[j] ? L[i + 1][j + 1] + 1 : std::max(L[i + 1][j], L[i][j + 1]);
  return L;
}

// A longest common subsequence of a and b. Among all longest ones, returns
// the one whose positions in a are lexicographically smallest.
template <class T>
std::vector<T> lcss(std::span<const T> a, std::span<const T> b) {
  const auto L = lcss_suffix_table(a, b);
  std::vector<T> out;
  out.reserve(L[0][0]);
  std::size_t i = 0, j = 0;
  while (L[i][j] > 0) {
    const std::uint32_t remaining = L[i][j];
    bool advanced = false;
    for (std::size_t ii = i; ii < a.size() && !advanced; ++ii) {
      // Earliest match of a[ii] in b[j:]; later matches can only do worse.
      std::size_t jj = j;
      while (jj < b.size() && !(b[jj] == a[ii])) ++jj;
      if (jj < b.size() && L[ii + 1][jj + 1] + 1 == remaining) {
        out.push_back(a[ii]);
        i = ii + 1;
        j = jj + 1;
        advanced = true;
      }
    }
  }
  return out;
}

template <class T>
std::vector<T> lcss(const std::vector<T>& a, const std::vector<T>& b) {
  return lcss(std::span<const T>(a), std::span<const T>(b));
}

// ---------------------------------------------------------------------------

enum class FeatureOrigin : std::uint8_t { Singleton, Mined };

inline std::string_view to_string(FeatureOrigin o) { return o == FeatureOrigin::Singleton ? "singleton" : "mined"; }

inline FeatureOrigin parse_origin(std::string_view s) {
  if (s == "singleton") return FeatureOrigin::Singleton;
  if (s == "mined") return FeatureOrigin::Mined;
  throw Error(ErrorKind::SchemaMismatch, "unknown feature origin '" + std::string(s) + "'");
}

struct EventSetFeature {
  std::vector<std::string> codes;
  PerClass<std::int64_t> support{};  // training traces of each class containing the set
  FeatureOrigin origin = FeatureOrigin::Singleton;

  std::int64_t total_support() const {
    std::int64_t s = 0;
    for (auto v : support) s += v;
    return s;
  }

  bool operator==(const EventSetFeature&) const = default;
};

struct LabeledSequence {
  std::vector<std::string> codes;
  SubsystemClass label;
};

struct MiningConfig {
  std::size_t max_len = 5;
  std::size_t min_support = 5;
};

// Mining order: longer first, then more supported, then codes.
inline bool feature_before(const EventSetFeature& a, const EventSetFeature& b) {
  if (a.codes.size() != b.codes.size()) return a.codes.size() > b.codes.size();
  const auto sa = a.total_support(), sb = b.total_support();
  if (sa != sb) return sa > sb;
  return a.codes < b.codes;
}

namespace detail {

class Interner {
 public:
  std::uint32_t id(const std::string& code) {
    auto [it, inserted] = ids_.try_emplace(code, static_cast<std::uint32_t>(names_.size()));
    if (inserted) names_.push_back(code);
    return it->second;
  }
  const std::string& name(std::uint32_t id) const { return names_[id]; }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
};

}  // namespace detail

// Mines ordered event sets that recur within a class. Traces are expected
// to be restricted to the selected codes; they are denoised here. For every
// class, the LCSS of every pair of that class's traces (run-collapsed, then
// cut to its first max_len codes) is kept when it has length >= 2 and is contained in at least
// min_support traces of the class. The result holds every singleton code
// plus the mined sets, each with per-class support over all traces, and is
// sorted by feature_before.
inline std::vector<EventSetFeature> mine_recurrent_sets(std::span<const LabeledSequence> traces,
                                                        const MiningConfig& config) {
  if (config.max_len < 2) throw Error(ErrorKind::InvalidConfig, "max_len must be >= 2");
  if (config.min_support < 2) throw Error(ErrorKind::InvalidConfig, "min_support must be >= 2");

  detail::Interner interner;
  std::vector<std::vector<std::uint32_t>> encoded;
  encoded.reserve(traces.size());
  PerClass<std::vector<std::size_t>> by_class;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    std::vector<std::uint32_t> ids;
    ids.reserve(traces[t].codes.size());
    for (const auto& c : traces[t].codes) ids.push_back(interner.id(c));
    encoded.push_back(denoise(ids));
    by_class[index_of(traces[t].label)].push_back(t);
  }

  auto support_of = [&](const std::vector<std::uint32_t>& set) {
    PerClass<std::int64_t> support{};
    for (std::size_t t = 0; t < encoded.size(); ++t)
      if (is_subsequence(set, encoded[t])) ++support[index_of(traces[t].label)];
    return support;
  };

  std::set<std::vector<std::uint32_t>> mined;
  for (std::size_t j = 0; j < kClassCount; ++j) {
    const auto& members = by_class[j];
    std::set<std::vector<std::uint32_t>> candidates;
    for (std::size_t x = 0; x < members.size(); ++x)
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        auto common = denoise(lcss(encoded[members[x]], encoded[members[y]]));
        if (common.size() > config.max_len) common.resize(config.max_len);
        if (common.size() >= 2) candidates.insert(std::move(common));
      }
    for (auto& cand : candidates) {
      if (mined.count(cand)) continue;
      std::size_t within = 0;
      for (auto t : members)
        if (is_subsequence(cand, encoded[t]) && ++within >= config.min_support) break;
      if (within >= config.min_support) mined.insert(cand);
    }
  }

  std::vector<EventSetFeature> out;
  std::set<std::uint32_t> singles;
  for (const auto& seq : encoded) singles.insert(seq.begin(), seq.end());
  for (auto id : singles) {
    EventSetFeature f{{interner.name(id)}, support_of({id}), FeatureOrigin::Singleton};
    out.push_back(std::move(f));
  }
  for (const auto& set : mined) {
    EventSetFeature f;
    for (auto id : set) f.codes.push_back(interner.name(id));
    f.support = support_of(set);
    f.origin = FeatureOrigin::Mined;
    out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), feature_before);
  return out;
}

// ---------------------------------------------------------------------------

// Precompiled matcher for a fixed feature vocabulary. Feature indices are
// positions in the vocabulary passed at construction.
class FeatureMatcher {
 public:
  explicit FeatureMatcher(std::span<const EventSetFeature> features) {
    sets_.reserve(features.size());
    for (std::size_t f = 0; f < features.size(); ++f) {
      std::vector<std::uint32_t> ids;
      for (const auto& c : features[f].codes) {
        auto [it, inserted] = code_ids_.try_emplace(c, static_cast<std::uint32_t>(code_ids_.size()));
        ids.push_back(it->second);
      }
      if (ids.size() == 1) single_of_code_.emplace(ids[0], static_cast<std::uint32_t>(f));
      sets_.push_back(std::move(ids));
    }
    by_first_code_.resize(code_ids_.size());
    for (std::size_t f = 0; f < sets_.size(); ++f)
      if (sets_[f].size() > 1) by_first_code_[sets_[f][0]].push_back(static_cast<std::uint32_t>(f));
  }

  std::size_t size() const noexcept { return sets_.size(); }

  // Codes outside the vocabulary are dropped before matching; they cannot
  // change whether a vocabulary set is a subsequence.
  template <class CodeRange, class Proj>
  nbayes::FeatureSet match(const CodeRange& window, Proj code_of) const {
    std::vector<std::uint32_t> ids;
    for (const auto& item : window) {
      auto it = code_ids_.find(code_of(item));
      if (it != code_ids_.end() && (ids.empty() || ids.back() != it->second)) ids.push_back(it->second);
    }
    nbayes::FeatureSet present;
    std::vector<bool> seen_first(code_ids_.size(), false);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const auto id = ids[p];
      if (seen_first[id]) continue;
      seen_first[id] = true;
      if (auto s = single_of_code_.find(id); s != single_of_code_.end()) present.push_back(s->second);
      std::span<const std::uint32_t> rest(ids.begin() + static_cast<std::ptrdiff_t>(p), ids.end());
      for (auto f : by_first_code_[id])
        if (is_subsequence(std::span<const std::uint32_t>(sets_[f]), rest)) present.push_back(f);
    }
    return nbayes::normalized(std::move(present));
  }

  nbayes::FeatureSet match_codes(std::span<const std::string> window) const {
    return match(window, [](const std::string& c) -> const std::string& { return c; });
  }

  nbayes::FeatureSet match_events(std::span<const Event> window) const {
    return match(window, [](const Event& e) -> const std::string& { return e.code; });
  }

 private:
  std::unordered_map<std::string, std::uint32_t> code_ids_;
  std::unordered_map<std::uint32_t, std::uint32_t> single_of_code_;
  std::vector<std::vector<std::uint32_t>> sets_;
  std::vector<std::vector<std::uint32_t>> by_first_code_;
};

// Indices of the features whose code list is a subsequence of the window.
inline nbayes::FeatureSet match_features(std::span<const std::string> window_codes,
                                         std::span<const EventSetFeature> features) {
  return FeatureMatcher(features).match_codes(window_codes);
}

// Tabular export read by experts: one line per feature.
inline std::string export_features(std::span<const EventSetFeature> features) {
  std::string out = "origin\tlength\ttotal_support";
  for (auto name : kClassNames) out += "\t" + std::string(name);
  out += "\tcodes\n";
  for (const auto& f : features) {
    out += std::string(to_string(f.origin)) + "\t" + std::to_string(f.codes.size()) + "\t" +
           std::to_string(f.total_support());
    for (auto s : f.support) out += "\t" + std::to_string(s);
    out += "\t";
    for (std::size_t i = 0; i < f.codes.size(); ++i) out += (i ? " > " : "") + f.codes[i];
    out += "\n";
  }
  return out;
}

inline json to_json(const EventSetFeature& f) {
  json support = json::object();
  for (std::size_t j = 0; j < kClassCount; ++j)
    if (f.support[j] != 0) support[std::string(kClassNames[j])] = f.support[j];
  return {{"codes", f.codes}, {"origin", std::string(to_string(f.origin))}, {"support", support}};
}

inline EventSetFeature feature_from_json(const json& j) {
  EventSetFeature f;
  f.codes = j.at("codes").get<std::vector<std::string>>();
  if (f.codes.empty()) throw Error(ErrorKind::SchemaMismatch, "feature with no codes");
  f.origin = parse_origin(j.at("origin").get<std::string>());
  for (auto& [name, v] : j.at("support").items()) f.support[index_of(parse_class(name))] = v.get<std::int64_t>();
  return f;
}

}  // namespace railcause::setminer
