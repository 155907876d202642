#pragma once

// Selection oracle: the fraction of samples for which at least one
// domain-specific prompt predicts the true class. Selection is fusion with a
// one-hot weight, so this is a conservative reference for what fusion could
// reach; fused accuracy may still exceed it.

#include <string>
#include <vector>

#include "ldpf/core.hpp"

namespace ldpf {

struct PredictionRow {
  std::string sample_id;
  std::size_t true_class = 0;
  std::vector<double> alpha;
  std::vector<std::size_t> per_domain_predicted;
  std::vector<double> fused_probabilities;
  std::size_t fused_predicted = 0;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

struct PredictionDump {
  std::vector<PredictionRow> rows;

  /// Every row carries the same number of per-domain predictions (>= 1).
  void validate() const;
  std::size_t domain_count() const { return rows.empty() ? 0 : rows.front().per_domain_predicted.size(); }
};

double selection_upper_bound(const PredictionDump& dump);

struct BoundReport {
  double selection_bound = 0.0;
  double fused_accuracy = 0.0;
  std::vector<double> per_prompt_accuracy;
  double gap = 0.0;  // selection_bound - fused_accuracy; negative when fusion beats selection
  std::size_t samples = 0;

  bool fusion_exceeded_selection() const { return gap < 0.0; }
};

BoundReport bound_report(const PredictionDump& dump);

}  // namespace ldpf
