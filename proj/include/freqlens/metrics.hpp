#ifndef FREQLENS_METRICS_HPP
#define FREQLENS_METRICS_HPP

// Per-group verification accuracy and the bias summary (Mean, STD, SER).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "freqlens/dataset.hpp"
#include "freqlens/error.hpp"

namespace freqlens {

struct ScoredPair {
  double similarity = 0.0;
  PairLabel label = PairLabel::kGenuine;
};

struct ThresholdAccuracy {
  double threshold = 0.0;  // may be +inf (everything rejected)
  double accuracy = 0.0;   // percent
};

struct VerificationResult {
  std::string group;
  double threshold = 0.0;
  double accuracy = 0.0;
  int num_pairs = 0;
};

struct BiasReport {
  std::vector<VerificationResult> results;
  double mean_accuracy = 0.0;
  double std = 0.0;
  double ser = 1.0;  // +inf when some group has zero error
  std::vector<std::string> warnings;
};

/// Predict genuine iff similarity >= threshold. Candidates are the observed
/// scores and +inf; the smallest threshold wins among equal accuracies.
inline ThresholdAccuracy best_threshold_accuracy(std::span<const ScoredPair> scores) {
  std::size_t genuine = 0;
  for (const auto& s : scores) {
    if (!std::isfinite(s.similarity)) throw Error(ErrorKind::kInvalidInput, "non-finite similarity score");
    genuine += s.label == PairLabel::kGenuine;
  }
  const std::size_t imposter = scores.size() - genuine;
  if (genuine == 0 || imposter == 0) {
    throw Error(ErrorKind::kInvalidInput, "threshold selection needs both genuine and imposter scores");
  }
  std::vector<ScoredPair> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.similarity < b.similarity; });

  // Sweep thresholds upwards. At threshold t every score below t is rejected.
  std::size_t correct = genuine;  // t at the minimum: everything accepted
  ThresholdAccuracy best{sorted.front().similarity, 0.0};
  std::size_t best_correct = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double t = sorted[i].similarity;
    if (correct > best_correct) {
      best_correct = correct;
      best.threshold = t;
    }
    // Move past every score equal to t: they become rejected for larger t.
    while (i < sorted.size() && sorted[i].similarity == t) {
      correct += sorted[i].label == PairLabel::kImposter ? 1 : 0;
      correct -= sorted[i].label == PairLabel::kGenuine ? 1 : 0;
      ++i;
    }
  }
  if (correct > best_correct) {  // +inf: everything rejected
    best_correct = correct;
    best.threshold = std::numeric_limits<double>::infinity();
  }
  best.accuracy = 100.0 * static_cast<double>(best_correct) / static_cast<double>(sorted.size());
  return best;
}

struct GroupScore {
  std::string group;
  PairLabel label = PairLabel::kGenuine;
  double similarity = 0.0;
};

/// Independent best-threshold accuracy per group, groups in first-appearance order.
inline std::vector<VerificationResult> group_verification(std::span<const GroupScore> scores) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<ScoredPair>> by_group;
  for (const auto& s : scores) {
    auto [it, inserted] = by_group.try_emplace(s.group);
    if (inserted) order.push_back(s.group);
    it->second.push_back({s.similarity, s.label});
  }
  std::vector<VerificationResult> out;
  for (const auto& g : order) {
    const auto& pairs = by_group[g];
    const bool has_genuine = std::any_of(pairs.begin(), pairs.end(),
                                         [](const auto& p) { return p.label == PairLabel::kGenuine; });
    const bool has_imposter = std::any_of(pairs.begin(), pairs.end(),
                                          [](const auto& p) { return p.label == PairLabel::kImposter; });
    if (!has_genuine || !has_imposter) {
      throw Error(ErrorKind::kInvalidInput,
                  "group '" + g + "' needs both genuine and imposter pairs for verification");
    }
    const auto best = best_threshold_accuracy(pairs);
    out.push_back({g, best.threshold, best.accuracy, static_cast<int>(pairs.size())});
  }
  return out;
}

inline BiasReport bias_report(std::vector<VerificationResult> results) {
  if (results.size() < 2) {
    throw Error(ErrorKind::kInvalidInput, "bias metrics need at least two groups");
  }
  BiasReport report;
  const double n = static_cast<double>(results.size());
  double sum = 0.0;
  double max_err = -std::numeric_limits<double>::infinity();
  double min_err = std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    if (!(r.accuracy >= 0.0 && r.accuracy <= 100.0)) {
      throw Error(ErrorKind::kInvalidInput, "accuracy of group '" + r.group + "' outside [0, 100]");
    }
    sum += r.accuracy;
    max_err = std::max(max_err, 100.0 - r.accuracy);
    min_err = std::min(min_err, 100.0 - r.accuracy);
  }
  report.mean_accuracy = sum / n;
  double var = 0.0;
  for (const auto& r : results) var += (r.accuracy - report.mean_accuracy) * (r.accuracy - report.mean_accuracy);
  report.std = std::sqrt(var / n);
  if (min_err <= 0.0) {
    report.ser = std::numeric_limits<double>::infinity();
    report.warnings.push_back("a group has zero error rate; SER is unbounded");
  } else {
    report.ser = max_err / min_err;
  }
  report.results = std::move(results);
  return report;
}

}  // namespace freqlens

#endif  // FREQLENS_METRICS_HPP
