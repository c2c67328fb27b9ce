#pragma once

#include <memory>

#include "fedmpt/model.hpp"

namespace fedmpt {

// P(y_c | x) = sum_m softmax_c'(s_{m,:} / tau)_c * s_{m,c}, where
// s = logit_scale * patches * text^T. The softmax runs over classes for each
// patch.
Var baseline_predict(Var patches, Var text, double tau, double logit_scale = 1.0);
Tensor baseline_predict(const Tensor& patches, const Tensor& text, double tau,
                        double logit_scale = 1.0);

struct BaselineSettings {
  std::vector<std::string> classes;
  std::size_t beta = 8;
  double tau = 4.0;
  double logit_scale = 1.0;
  double alpha_init = 5.0;
  std::uint64_t seed = 0;
};

// Single shared learnable context followed by the class-name token.
class BaselinePromptBank {
 public:
  BaselinePromptBank(const TextEncoder& encoder, std::vector<std::string> classes,
                     std::size_t beta, std::uint64_t seed);

  // C x D class text embeddings.
  Var embed_all(Tape& tape, const TextEncoder& encoder);

  std::size_t classes() const { return class_name_tokens_.rows(); }
  Parameter& context() { return context_; }
  const Tensor& class_name_tokens() const { return class_name_tokens_; }

 private:
  Parameter context_;
  Tensor class_name_tokens_;
};

class BaselineModel : public Model {
 public:
  BaselineModel(std::shared_ptr<const Encoders> encoders, const BaselineSettings& settings);

  std::vector<Parameter*> parameters() override { return {&bank_.context(), &alpha_}; }
  std::unique_ptr<Model> clone() const override;
  std::size_t classes() const override { return bank_.classes(); }
  std::vector<Var> forward(Tape& tape, std::span<const Tensor* const> patches) override;

  BaselinePromptBank& bank() { return bank_; }
  Parameter& alpha() { return alpha_; }
  // Raw scores lie in roughly logit_scale * M/C * [-1, 1]; centre on zero
  // similarity.
  CalibrationRef calibration() const;

 private:
  std::shared_ptr<const Encoders> encoders_;
  BaselinePromptBank bank_;
  Parameter alpha_;
  double tau_;
  double logit_scale_;
};

}  // namespace fedmpt
