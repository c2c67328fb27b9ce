#include "fedmpt/baseline.hpp"

#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

Var baseline_predict(Var patches, Var text, double tau, double logit_scale) {
  if (!(tau > 0.0)) throw ParameterError("baseline temperature must be positive");
  const Tensor& p = patches.value();
  const Tensor& t = text.value();
  if (p.rank() != 2 || t.rank() != 2 || p.cols() != t.cols()) {
    throw DimensionError("baseline_predict: patches " + shape_string(p.shape()) +
                         " and text " + shape_string(t.shape()) + " disagree");
  }
  if (!(logit_scale > 0.0)) throw ParameterError("logit scale must be positive");
  Var sims = matmul(patches, transpose(text));
  if (logit_scale != 1.0) sims = scale(sims, logit_scale);
  Var weights = softmax(sims, 1, tau);
  return sum_axis(mul(weights, sims), 0);
}

Tensor baseline_predict(const Tensor& patches, const Tensor& text, double tau,
                        double logit_scale) {
  Tape tape;
  return baseline_predict(tape.constant(patches), tape.constant(text), tau, logit_scale)
      .value();
}

BaselinePromptBank::BaselinePromptBank(const TextEncoder& encoder,
                                       std::vector<std::string> classes, std::size_t beta,
                                       std::uint64_t seed) {
  if (classes.empty()) throw ContractError("baseline prompt bank needs at least one class");
  Rng rng(mix_seed(seed, 0x626173656cULL));
  Tensor ctx({beta, encoder.token_dim()});
  for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] = rng.normal(0.0, 0.02);
  context_ = Parameter("baseline.context", std::move(ctx));
  class_name_tokens_ = Tensor({classes.size(), encoder.token_dim()});
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const Tensor tok = encoder.name_token(classes[c]);
    for (std::size_t k = 0; k < tok.size(); ++k) class_name_tokens_.at(c, k) = tok[k];
  }
}

Var BaselinePromptBank::embed_all(Tape& tape, const TextEncoder& encoder) {
  Var ctx = tape.parameter(context_);
  const bool has_context = context_.value.size() > 0;
  std::vector<Var> rows;
  rows.reserve(classes());
  for (std::size_t c = 0; c < classes(); ++c) {
    Var name = slice_rows(tape.constant(class_name_tokens_), c, 1);
    std::vector<Var> parts;
    if (has_context) parts.push_back(ctx);
    parts.push_back(name);
    rows.push_back(encoder.encode(concat_rows(parts)));
  }
  return concat_rows(rows);
}

BaselineModel::BaselineModel(std::shared_ptr<const Encoders> encoders,
                             const BaselineSettings& settings)
    : encoders_(std::move(encoders)),
      bank_(encoders_->text, settings.classes, settings.beta, settings.seed),
      alpha_("calibrate.alpha", Tensor::scalar(settings.alpha_init)),
      tau_(settings.tau),
      logit_scale_(settings.logit_scale) {}

std::unique_ptr<Model> BaselineModel::clone() const {
  return std::make_unique<BaselineModel>(*this);
}

CalibrationRef BaselineModel::calibration() const {
  return {0.0, logit_scale_ * static_cast<double>(encoders_->visual.patches()) /
                   static_cast<double>(classes())};
}

std::vector<Var> BaselineModel::forward(Tape& tape, std::span<const Tensor* const> patches) {
  Var text = bank_.embed_all(tape, encoders_->text);
  Var alpha = tape.parameter(alpha_);
  const CalibrationRef ref = calibration();
  std::vector<Var> out;
  out.reserve(patches.size());
  for (const Tensor* p : patches) {
    Var scores = baseline_predict(tape.constant(*p), text, tau_, logit_scale_);
    out.push_back(calibrate(scores, alpha, ref));
  }
  return out;
}

}  // namespace fedmpt
