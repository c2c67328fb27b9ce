#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedmpt/autodiff.hpp"

namespace fedmpt {

enum class Label : std::int8_t { kNegative = 0, kPositive = 1, kUnknown = -1 };
using LabelVector = std::vector<Label>;

std::size_t known_count(const LabelVector& y);

struct AslConfig {
  double gamma_pos = 1.0;
  double gamma_neg = 2.0;
  double clip = 0.05;
  double eps = 1e-8;

  // Throws ParameterError unless gamma_neg >= gamma_pos >= 0 and 0 <= clip < 1.
  void validate() const;
};

// Affine reference for the probability head: the score that should map to
// p = 0.5 (`center`) and the score unit (`scale`).
struct CalibrationRef {
  double center = 1.0;
  double scale = 1.0;

  // center = scale = 1/C: the value of psi under a product plan with
  // similarity 1 and a single patch.
  static CalibrationRef per_class(std::size_t classes);
};

// p_c = sigmoid(alpha * (psi_c - center) / scale). `alpha` is a 1-element
// learnable scale.
Var calibrate(Var psi, Var alpha, const CalibrationRef& ref);

// Asymmetric loss averaged over the known entries of y:
//   -mean[ y (1-p)^g+ log p + (1-y) q^g- log(1-q) ],  q = max(p - clip, 0)
// Logs are floored at eps. Unknown entries contribute nothing.
Var asl_loss(Var p, const LabelVector& y, const AslConfig& cfg);

// Plain scalar form.
double asl_loss(std::span<const double> p, const LabelVector& y, const AslConfig& cfg);

}  // namespace fedmpt
