#pragma once

#include <span>

#include "fedmpt/objective.hpp"
#include "fedmpt/tensor.hpp"

namespace fedmpt {

// scores: S x C. Unknown labels are ignored; classes without a known
// positive are skipped. Ties rank the lower sample index first.
double average_precision(std::span<const double> scores, std::span<const Label> labels);
double mean_average_precision(const Tensor& scores, std::span<const LabelVector> labels);

struct F1Scores {
  double cf1 = 0.0;  // mean of per-class F1
  double of1 = 0.0;  // F1 of pooled counts
};

// A score >= threshold counts as a positive prediction. A class (or the
// pool) with no predicted and no actual positives scores 0.
F1Scores f1_scores(const Tensor& scores, std::span<const LabelVector> labels,
                   double threshold = 0.5);

}  // namespace fedmpt
