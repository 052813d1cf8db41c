#include <algorithm>
#include <cmath>

#include "knowdial/data.hpp"

namespace knowdial {

MetricsReport compute_metrics(
    const std::vector<int>& gt_ranks,
    const std::vector<std::vector<double>>* relevance_in_rank_order) {
  if (gt_ranks.empty()) {
    throw DataError("compute_metrics: no ranks");
  }
  if (relevance_in_rank_order &&
      relevance_in_rank_order->size() != gt_ranks.size()) {
    throw DataError("compute_metrics: relevance count " +
                    std::to_string(relevance_in_rank_order->size()) +
                    " does not match " + std::to_string(gt_ranks.size()) +
                    " ranks");
  }

  MetricsReport report;
  report.instances = static_cast<int>(gt_ranks.size());
  double mrr = 0.0, mean = 0.0;
  int hit1 = 0, hit5 = 0, hit10 = 0;
  for (int rank : gt_ranks) {
    if (rank < 1) {
      throw DataError("compute_metrics: rank " + std::to_string(rank) +
                      " is not positive");
    }
    mrr += 1.0 / rank;
    mean += rank;
    if (rank <= 1) ++hit1;
    if (rank <= 5) ++hit5;
    if (rank <= 10) ++hit10;
  }
  const double n = static_cast<double>(gt_ranks.size());
  report.mrr = mrr / n;
  report.mean_rank = mean / n;
  report.r_at_1 = hit1 / n;
  report.r_at_5 = hit5 / n;
  report.r_at_10 = hit10 / n;

  if (relevance_in_rank_order) {
    double total = 0.0;
    int counted = 0;
    for (const std::vector<double>& rels : *relevance_in_rank_order) {
      int k = 0;
      for (double r : rels) {
        if (r > 0.0) ++k;
      }
      if (k == 0) continue;
      double dcg = 0.0;
      for (int p = 0; p < k && p < static_cast<int>(rels.size()); ++p) {
        dcg += rels[static_cast<size_t>(p)] / std::log2(p + 2.0);
      }
      std::vector<double> ideal = rels;
      std::sort(ideal.begin(), ideal.end(), std::greater<>());
      double idcg = 0.0;
      for (int p = 0; p < k; ++p) {
        idcg += ideal[static_cast<size_t>(p)] / std::log2(p + 2.0);
      }
      total += dcg / idcg;
      ++counted;
    }
    if (counted > 0) {
      report.ndcg = total / counted;
      report.has_ndcg = true;
    }
  }
  return report;
}

}  // namespace knowdial
