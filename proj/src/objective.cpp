#include "fedmpt/objective.hpp"

#include <algorithm>

#include "fedmpt/error.hpp"

namespace fedmpt {

std::size_t known_count(const LabelVector& y) {
  return static_cast<std::size_t>(
      std::count_if(y.begin(), y.end(), [](Label l) { return l != Label::kUnknown; }));
}

void AslConfig::validate() const {
  if (gamma_pos < 0.0) throw ParameterError("ASL gamma_pos must be non-negative");
  if (gamma_neg < gamma_pos) throw ParameterError("ASL requires gamma_neg >= gamma_pos");
  if (clip < 0.0 || clip >= 1.0) throw ParameterError("ASL clip must lie in [0, 1)");
  if (!(eps > 0.0)) throw ParameterError("ASL eps must be positive");
}

CalibrationRef CalibrationRef::per_class(std::size_t classes) {
  const double v = 1.0 / static_cast<double>(classes);
  return {v, v};
}

Var calibrate(Var psi, Var alpha, const CalibrationRef& ref) {
  if (alpha.value().size() != 1) throw DimensionError("calibration scale must be a scalar");
  if (!(ref.scale != 0.0)) throw ParameterError("calibration scale reference must be nonzero");
  Var centered = scale(add_scalar(psi, -ref.center), 1.0 / ref.scale);
  return sigmoid(mul(alpha, centered));
}

Var asl_loss(Var p, const LabelVector& y, const AslConfig& cfg) {
  cfg.validate();
  const Tensor& probs = p.value();
  if (probs.size() != y.size()) {
    throw DimensionError("asl_loss: " + std::to_string(probs.size()) +
                         " predictions for " + std::to_string(y.size()) + " labels");
  }
  for (double v : probs.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("asl_loss: prediction " + std::to_string(v) +
                          " outside the probability range");
    }
  }
  const std::size_t known = known_count(y);
  if (known == 0) throw ContractError("asl_loss: label vector has no known entries");

  Tensor pos_mask(probs.shape());
  Tensor neg_mask(probs.shape());
  for (std::size_t c = 0; c < y.size(); ++c) {
    pos_mask[c] = y[c] == Label::kPositive ? 1.0 : 0.0;
    neg_mask[c] = y[c] == Label::kNegative ? 1.0 : 0.0;
  }
  Tape& tape = *p.tape;

  Var miss = add_scalar(scale(p, -1.0), 1.0);
  Var pos = mul(pow(miss, cfg.gamma_pos), log(clamp_min(p, cfg.eps)));

  Var shifted = clamp_min(add_scalar(p, -cfg.clip), 0.0);
  Var neg = mul(pow(shifted, cfg.gamma_neg), log1m(shifted, cfg.eps));

  Var total = add(mul(tape.constant(std::move(pos_mask)), pos),
                  mul(tape.constant(std::move(neg_mask)), neg));
  return scale(sum_all(total), -1.0 / static_cast<double>(known));
}

double asl_loss(std::span<const double> p, const LabelVector& y, const AslConfig& cfg) {
  Tape tape;
  Var probs = tape.constant(Tensor({p.size()}, std::vector<double>(p.begin(), p.end())));
  return asl_loss(probs, y, cfg).value()[0];
}

}  // namespace fedmpt
