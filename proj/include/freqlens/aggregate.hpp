#ifndef FREQLENS_AGGREGATE_HPP
#define FREQLENS_AGGREGATE_HPP

// Group-level mean importance, per-band group ranking and cross-model deltas.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "freqlens/error.hpp"
#include "freqlens/importance.hpp"

namespace freqlens {

enum class LabelFilter { kAll, kGenuine, kImposter };

inline std::string_view to_string(LabelFilter f) {
  switch (f) {
    case LabelFilter::kAll: return "all";
    case LabelFilter::kGenuine: return "genuine";
    case LabelFilter::kImposter: return "imposter";
  }
  return "all";
}

inline LabelFilter parse_label_filter(const std::string& text) {
  if (text == "all") return LabelFilter::kAll;
  if (text == "genuine") return LabelFilter::kGenuine;
  if (text == "imposter") return LabelFilter::kImposter;
  throw Error(ErrorKind::kInvalidConfig, "label filter must be all, genuine or imposter, got '" + text + "'");
}

inline bool passes(LabelFilter f, PairLabel label) {
  return f == LabelFilter::kAll || (f == LabelFilter::kGenuine) == (label == PairLabel::kGenuine);
}

/// Row-major E x B matrix of doubles keyed by group then band.
using GroupBandMatrix = std::vector<std::vector<double>>;

struct GroupImportanceMatrix {
  std::vector<std::string> groups;
  int num_bands = 0;
  GroupBandMatrix mean;    // P_{b,e}, one row per group
  GroupBandMatrix stddev;  // population dispersion per (group, band)
  std::vector<int> count;  // O_e
};

struct RankTable {
  std::vector<std::string> groups;
  int num_bands = 0;
  std::vector<std::vector<int>> ranks;  // 1 = highest mean importance in the band
};

struct ImportanceDelta {
  std::vector<std::string> groups;
  int num_bands = 0;
  GroupBandMatrix delta;  // subject - baseline
};

inline GroupImportanceMatrix mean_importance(std::span<const PairExplanation> explanations,
                                             LabelFilter filter = LabelFilter::kAll) {
  // Canonical pair_id order makes the reduction independent of input order.
  std::vector<const PairExplanation*> ordered;
  for (const auto& e : explanations) {
    if (passes(filter, e.label)) ordered.push_back(&e);
  }
  if (ordered.empty()) {
    throw Error(ErrorKind::kEmptyInput,
                "no explanations pass label filter '" + std::string(to_string(filter)) + "'");
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->pair_id < b->pair_id; });

  GroupImportanceMatrix m;
  m.num_bands = static_cast<int>(ordered.front()->importance.normalized.size());
  std::vector<std::vector<const PairExplanation*>> members;
  for (const auto* e : ordered) {
    if (static_cast<int>(e->importance.normalized.size()) != m.num_bands) {
      throw Error(ErrorKind::kInvalidInput, "explanations disagree on the number of bands");
    }
    auto it = std::find(m.groups.begin(), m.groups.end(), e->group);
    if (it == m.groups.end()) {
      m.groups.push_back(e->group);
      members.emplace_back();
      it = m.groups.end() - 1;
    }
    members[it - m.groups.begin()].push_back(e);
  }

  const std::size_t bands = static_cast<std::size_t>(m.num_bands);
  for (const auto& group : members) {
    const double n = static_cast<double>(group.size());
    std::vector<double> mean(bands, 0.0);
    for (const auto* e : group) {
      for (std::size_t b = 0; b < bands; ++b) mean[b] += e->importance.normalized[b];
    }
    for (double& v : mean) v /= n;
    std::vector<double> var(bands, 0.0);
    for (const auto* e : group) {
      for (std::size_t b = 0; b < bands; ++b) {
        const double d = e->importance.normalized[b] - mean[b];
        var[b] += d * d;
      }
    }
    for (double& v : var) v = std::sqrt(v / n);
    m.mean.push_back(std::move(mean));
    m.stddev.push_back(std::move(var));
    m.count.push_back(static_cast<int>(group.size()));
  }
  return m;
}

inline RankTable rank_groups(const GroupImportanceMatrix& matrix) {
  const std::size_t groups = matrix.groups.size();
  if (groups < 2) {
    throw Error(ErrorKind::kInvalidInput, "ranking needs at least two groups, got " + std::to_string(groups));
  }
  RankTable table;
  table.groups = matrix.groups;
  table.num_bands = matrix.num_bands;
  table.ranks.assign(groups, std::vector<int>(matrix.num_bands, 0));
  std::vector<std::size_t> order(groups);
  for (int b = 0; b < matrix.num_bands; ++b) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return matrix.mean[x][b] > matrix.mean[y][b];
    });
    for (std::size_t r = 0; r < groups; ++r) table.ranks[order[r]][b] = static_cast<int>(r) + 1;
  }
  return table;
}

/// Elementwise subject - baseline. Groups are matched by name; rows follow the
/// subject's group order.
inline ImportanceDelta importance_delta(const GroupImportanceMatrix& subject,
                                        const GroupImportanceMatrix& baseline) {
  if (subject.num_bands != baseline.num_bands) {
    throw Error(ErrorKind::kIncompatibleReport,
                "band counts differ: " + std::to_string(subject.num_bands) + " vs " +
                    std::to_string(baseline.num_bands));
  }
  auto sorted = [](std::vector<std::string> g) {
    std::sort(g.begin(), g.end());
    return g;
  };
  if (sorted(subject.groups) != sorted(baseline.groups)) {
    throw Error(ErrorKind::kIncompatibleReport, "subject and baseline cover different groups");
  }
  ImportanceDelta out;
  out.groups = subject.groups;
  out.num_bands = subject.num_bands;
  for (std::size_t g = 0; g < subject.groups.size(); ++g) {
    const auto j = static_cast<std::size_t>(
        std::find(baseline.groups.begin(), baseline.groups.end(), subject.groups[g]) -
        baseline.groups.begin());
    std::vector<double> row(subject.num_bands);
    for (int b = 0; b < subject.num_bands; ++b) row[b] = subject.mean[g][b] - baseline.mean[j][b];
    out.delta.push_back(std::move(row));
  }
  return out;
}

}  // namespace freqlens

#endif  // FREQLENS_AGGREGATE_HPP
