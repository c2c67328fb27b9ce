#include "fedmpt/model.hpp"

#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

Var Model::batch_loss(Tape& tape, std::span<const Tensor* const> patches,
                      std::span<const LabelVector* const> labels, const AslConfig& asl) {
  if (patches.empty() || patches.size() != labels.size()) {
    throw ContractError("batch_loss needs a nonempty batch with one label vector per sample");
  }
  const std::vector<Var> probs = forward(tape, patches);
  std::vector<Var> losses;
  losses.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    losses.push_back(reshape(asl_loss(probs[i], *labels[i], asl), {1, 1}));
  }
  return scale(sum_all(concat_rows(losses)), 1.0 / static_cast<double>(losses.size()));
}

Tensor Model::predict(std::span<const Tensor* const> patches) {
  const std::size_t c = classes();
  Tensor out({patches.size(), c});
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < patches.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, patches.size() - begin);
    Tape tape;
    const std::vector<Var> probs = forward(tape, patches.subspan(begin, count));
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < c; ++k) out.at(begin + i, k) = probs[i].value()[k];
    }
  }
  return out;
}

FedMptModel::FedMptModel(std::shared_ptr<const Encoders> encoders,
                         const FedMptSettings& settings)
    : encoders_(std::move(encoders)),
      bank_(encoders_->text, settings.conditions, settings.classes, settings.beta_cond,
            settings.beta_cls, settings.seed),
      gate_(encoders_->visual.embed_dim(), settings.rank, settings.conditions.size(),
            settings.seed),
      alpha_("calibrate.alpha", Tensor::scalar(settings.alpha_init)),
      transport_(settings.transport) {
  if (encoders_->visual.embed_dim() != encoders_->text.embed_dim()) {
    throw DimensionError("visual and text encoders disagree on embedding size");
  }
  adapters_.reserve(settings.conditions.size());
  for (std::size_t n = 0; n < settings.conditions.size(); ++n) {
    adapters_.emplace_back(n, encoders_->visual.embed_dim(), settings.rank, settings.seed);
  }
}

std::vector<Parameter*> FedMptModel::parameters() {
  std::vector<Parameter*> out = bank_.parameters();
  for (ConditionAdapter& a : adapters_) {
    for (Parameter* p : a.parameters()) out.push_back(p);
  }
  for (Parameter* p : gate_.parameters()) out.push_back(p);
  out.push_back(&alpha_);
  return out;
}

std::unique_ptr<Model> FedMptModel::clone() const {
  return std::make_unique<FedMptModel>(*this);
}

CalibrationRef FedMptModel::calibration() const {
  // Column mass 1/C and S <= 1 bound psi_c to [0, 1/C]; map that onto [-1, 1].
  const double half = 0.5 / static_cast<double>(classes());
  return {half, half};
}

FedMptModel::Trace FedMptModel::trace(Tape& tape, Var text, Var alpha,
                                      const Tensor& patches) {
  Trace t;
  Var frozen = tape.constant(patches);
  t.psi = predict_all_conditions(tape, frozen, adapters_, text, transport_);
  t.weights = gate_.weights(tape, frozen);
  t.fused = fuse_predictions(t.weights, t.psi);
  t.probabilities = calibrate(t.fused, alpha, calibration());
  return t;
}

std::vector<Var> FedMptModel::forward(Tape& tape, std::span<const Tensor* const> patches) {
  Var text = bank_.embed_all(tape, encoders_->text);
  Var alpha = tape.parameter(alpha_);
  std::vector<Var> out;
  out.reserve(patches.size());
  for (const Tensor* p : patches) out.push_back(trace(tape, text, alpha, *p).probabilities);
  return out;
}

}  // namespace fedmpt
