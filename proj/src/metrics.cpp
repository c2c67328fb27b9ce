#include "fedmpt/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "fedmpt/error.hpp"

namespace fedmpt {

namespace {

void check_layout(const Tensor& scores, std::span<const LabelVector> labels) {
  if (scores.rank() != 2 || scores.rows() != labels.size()) {
    throw DimensionError("metrics: scores " + shape_string(scores.shape()) + " for " +
                         std::to_string(labels.size()) + " label vectors");
  }
  for (const LabelVector& y : labels) {
    if (y.size() != scores.cols()) {
      throw DimensionError("metrics: label vector of length " + std::to_string(y.size()) +
                           " for " + std::to_string(scores.cols()) + " classes");
    }
  }
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: length mismatch");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != Label::kUnknown) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double total = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == Label::kPositive) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) throw ContractError("average_precision: no known positives");
  return total / static_cast<double>(hits);
}

double mean_average_precision(const Tensor& scores, std::span<const LabelVector> labels) {
  check_layout(scores, labels);
  if (labels.empty()) throw ContractError("mAP needs at least one sample");
  const std::size_t samples = scores.rows(), classes = scores.cols();
  double total = 0.0;
  std::size_t evaluated = 0;
  std::vector<double> column(samples);
  std::vector<Label> truth(samples);
  for (std::size_t c = 0; c < classes; ++c) {
    bool any_positive = false;
    for (std::size_t s = 0; s < samples; ++s) {
      column[s] = scores.at(s, c);
      truth[s] = labels[s][c];
      any_positive = any_positive || truth[s] == Label::kPositive;
    }
    if (!any_positive) continue;
    total += average_precision(column, truth);
    ++evaluated;
  }
  if (evaluated == 0) throw ContractError("mAP: no class has a known positive");
  return total / static_cast<double>(evaluated);
}

F1Scores f1_scores(const Tensor& scores, std::span<const LabelVector> labels,
                   double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ParameterError("F1 threshold must lie in (0, 1)");
  }
  check_layout(scores, labels);
  const std::size_t classes = scores.cols();
  std::size_t pool_tp = 0, pool_fp = 0, pool_fn = 0;
  double per_class = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const Label y = labels[s][c];
      if (y == Label::kUnknown) continue;
      const bool predicted = scores.at(s, c) >= threshold;
      if (predicted && y == Label::kPositive) ++tp;
      if (predicted && y == Label::kNegative) ++fp;
      if (!predicted && y == Label::kPositive) ++fn;
    }
    per_class += f1(tp, fp, fn);
    pool_tp += tp;
    pool_fp += fp;
    pool_fn += fn;
  }
  F1Scores out;
  out.cf1 = classes ? per_class / static_cast<double>(classes) : 0.0;
  out.of1 = f1(pool_tp, pool_fp, pool_fn);
  return out;
}

}  // namespace fedmpt
