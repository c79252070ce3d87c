#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowdialog/flowgraph.hpp"

namespace flowdialog::evaluation {

struct EpisodeRecord {
  std::string sample_id;
  NodePath predicted;     // P_i, starting at the initially grounded node
  NodePath ground_truth;  // G_i
  int turns = 0;          // T_i, user turns
  int budget = 0;         // T_tau
  std::vector<int> transitions;  // L_{i,j}
  bool gt_initial_is_root = true;
  int faq_turns = 0;

  /// Throws PreconditionError when an invariant is broken.
  void check() const;
};

struct Inga {
  double overall;
  std::optional<double> root_init;    // nullopt when the split is empty
  std::optional<double> middle_init;
  std::size_t root_count;
  std::size_t middle_count;
};

Inga inga(const std::vector<EpisodeRecord>& records);
double tnga(const std::vector<EpisodeRecord>& records);
double pca(const std::vector<EpisodeRecord>& records);

struct Nsr {
  std::optional<double> value;  // nullopt when every record was excluded
  std::size_t excluded;         // records with no completed transition
};

Nsr nsr(const std::vector<EpisodeRecord>& records);
double tr(const std::vector<EpisodeRecord>& records);

/// Order-preserving, not necessarily contiguous, two-pointer check.
bool is_subsequence(const NodePath& needle, const NodePath& haystack);

enum class CoverageRelation {
  exact_match,
  prediction_covers_gt,
  prediction_contained_in_gt,
  partial_overlap,
  disjoint,
};

inline constexpr std::size_t kCoverageRelationCount = 5;

std::string_view to_string(CoverageRelation r);
CoverageRelation classify_coverage(const NodePath& gt, const NodePath& pred);

using CoverageHistogram = std::array<std::size_t, kCoverageRelationCount>;
CoverageHistogram coverage_histogram(const std::vector<EpisodeRecord>& records);

struct MetricsReport {
  std::size_t n = 0;
  Inga inga{};
  double tnga = 0;
  double pca = 0;
  Nsr nsr{};
  double tr = 0;
  CoverageHistogram coverage{};

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// Plain-text table: INGA root/middle/overall, TNGA, PCA, TR, NSR (x100).
  std::string to_table(std::string_view label = "run") const;
};

MetricsReport evaluate(const std::vector<EpisodeRecord>& records);

}  // namespace flowdialog::evaluation
