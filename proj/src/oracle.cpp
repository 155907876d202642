#include "ldpf/oracle.hpp"

#include <algorithm>

namespace ldpf {

void PredictionDump::validate() const {
  if (rows.empty()) throw Error("prediction dump is empty");
  const std::size_t n = rows.front().per_domain_predicted.size();
  if (n == 0) throw Error("prediction dump row 0 ('" + rows.front().sample_id + "') has no per-domain predictions");
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].per_domain_predicted.size() != n)
      throw Error("prediction dump row " + std::to_string(i) + " ('" + rows[i].sample_id + "') has " +
                  std::to_string(rows[i].per_domain_predicted.size()) + " per-domain predictions, expected " +
                  std::to_string(n));
}

double selection_upper_bound(const PredictionDump& dump) {
  dump.validate();
  std::size_t hits = 0;
  for (const PredictionRow& row : dump.rows)
    if (std::ranges::find(row.per_domain_predicted, row.true_class) != row.per_domain_predicted.end()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(dump.rows.size());
}

BoundReport bound_report(const PredictionDump& dump) {
  dump.validate();
  BoundReport r;
  r.samples = dump.rows.size();
  r.selection_bound = selection_upper_bound(dump);
  const double n = static_cast<double>(r.samples);
  std::vector<std::size_t> prompt_hits(dump.domain_count(), 0);
  std::size_t fused_hits = 0;
  for (const PredictionRow& row : dump.rows) {
    for (std::size_t s = 0; s < prompt_hits.size(); ++s)
      if (row.per_domain_predicted[s] == row.true_class) ++prompt_hits[s];
    if (row.fused_predicted == row.true_class) ++fused_hits;
  }
  for (std::size_t h : prompt_hits) r.per_prompt_accuracy.push_back(static_cast<double>(h) / n);
  r.fused_accuracy = static_cast<double>(fused_hits) / n;
  r.gap = r.selection_bound - r.fused_accuracy;
  return r;
}

}  // namespace ldpf
