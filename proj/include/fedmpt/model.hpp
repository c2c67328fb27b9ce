#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedmpt/adapt_gate.hpp"
#include "fedmpt/autodiff.hpp"
#include "fedmpt/encoders.hpp"
#include "fedmpt/objective.hpp"
#include "fedmpt/prompt_bank.hpp"
#include "fedmpt/transport.hpp"

namespace fedmpt {

// Frozen encoders shared read-only by every model replica.
struct Encoders {
  VisualEncoder visual;
  TextEncoder text;
};

// Learnable multi-label predictor over frozen patch embeddings.
class Model {
 public:
  virtual ~Model() = default;

  // Stable order; ids are unique and double as bundle keys.
  virtual std::vector<Parameter*> parameters() = 0;
  virtual std::unique_ptr<Model> clone() const = 0;
  virtual std::size_t classes() const = 0;

  // Calibrated class probabilities, one [C] vector per M x D patch matrix.
  // Per-batch work (prompt encoding) is shared across the batch.
  virtual std::vector<Var> forward(Tape& tape, std::span<const Tensor* const> patches) = 0;

  // Mean asymmetric loss of a batch.
  Var batch_loss(Tape& tape, std::span<const Tensor* const> patches,
                 std::span<const LabelVector* const> labels, const AslConfig& asl);

  // Probabilities as an S x C tensor, without recording gradients.
  Tensor predict(std::span<const Tensor* const> patches);
};

struct FedMptSettings {
  std::vector<std::string> conditions{"background", "position", "shape", "action"};
  std::vector<std::string> classes;
  std::size_t beta_cond = 4;
  std::size_t beta_cls = 4;
  std::size_t rank = 16;
  double alpha_init = 5.0;
  TransportSettings transport;
  std::uint64_t seed = 0;
};

// Condition prompts -> per-condition adapters -> patch/class transport ->
// gated fusion -> calibrated probabilities.
class FedMptModel : public Model {
 public:
  FedMptModel(std::shared_ptr<const Encoders> encoders, const FedMptSettings& settings);

  std::vector<Parameter*> parameters() override;
  std::unique_ptr<Model> clone() const override;
  std::size_t classes() const override { return bank_.classes(); }
  std::vector<Var> forward(Tape& tape, std::span<const Tensor* const> patches) override;

  // Per-condition psi (N x C) and gate weights (N) for one sample.
  struct Trace {
    Var psi;
    Var weights;
    Var fused;
    Var probabilities;
  };
  Trace trace(Tape& tape, Var text, Var alpha, const Tensor& patches);

  ConditionPromptBank& bank() { return bank_; }
  std::vector<ConditionAdapter>& adapters() { return adapters_; }
  GateRouter& gate() { return gate_; }
  Parameter& alpha() { return alpha_; }
  const TransportSettings& transport() const { return transport_; }
  CalibrationRef calibration() const;

 private:
  std::shared_ptr<const Encoders> encoders_;
  ConditionPromptBank bank_;
  std::vector<ConditionAdapter> adapters_;
  GateRouter gate_;
  Parameter alpha_;
  TransportSettings transport_;
};

}  // namespace fedmpt
