#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fedmpt/adapt_gate.hpp"
#include "fedmpt/autodiff.hpp"

namespace fedmpt {

struct TransportPlan;

// Captures the plans solved during a forward pass, then hands the same plans
// back on later passes instead of solving. Evaluating the loss in replay mode
// gives the function whose derivative the tape computes (plan held fixed).
class PlanRecorder {
 public:
  enum class Mode { kRecord, kReplay };
  void record() { mode_ = Mode::kRecord; plans_.clear(); cursor_ = 0; }
  void replay() { mode_ = Mode::kReplay; cursor_ = 0; }
  Mode mode() const { return mode_; }
  std::size_t size() const;
  void push(const TransportPlan& plan);
  const TransportPlan& next();

 private:
  Mode mode_ = Mode::kRecord;
  std::vector<std::shared_ptr<const TransportPlan>> plans_;
  std::size_t cursor_ = 0;
};

struct TransportSettings {
  double tau = 4.0;
  double lambda = 0.2;
  int max_iters = 200;
  double tol = 1e-8;
  // Multiplies patch/text cosine similarities before the temperature.
  double logit_scale = 1.0;
  PlanRecorder* recorder = nullptr;
};

// One condition's patch-to-class transport problem, raw = logit_scale * cos.
//   similarity_{m,c} = softmax over patches of raw_{:,c} / tau
//   cost = 1 - similarity
//   a = softmax over patches of (max_c raw_{m,c}) / tau
//   b = 1/C
struct TransportProblem {
  Tensor similarity;  // M x C
  Tensor cost;        // M x C
  Tensor a;           // M
  Tensor b;           // C
  double lambda = 0.2;
  double tau = 4.0;
};

struct TransportPlan {
  Tensor plan;    // M x C
  Tensor u;       // M
  Tensor v;       // C
  Tensor kernel;  // exp(-cost / lambda)
  int iterations_used = 0;
  bool converged = false;
};

// Tape form: `similarity` carries gradients back to both inputs.
struct CostTerms {
  Var similarity;
  TransportProblem problem;
};

CostTerms build_cost(Var adapted_patches, Var cond_text, double tau, double lambda,
                     double logit_scale = 1.0);
TransportProblem build_cost(const Tensor& adapted_patches, const Tensor& cond_text,
                            double tau, double lambda = 0.2, double logit_scale = 1.0);

// Builds a problem directly from a cost matrix and marginals.
TransportProblem make_problem(Tensor cost, Tensor a, Tensor b, double lambda);

TransportPlan sinkhorn(const TransportProblem& problem, int max_iters, double tol);

// psi_c = sum_m plan_{m,c} * similarity_{m,c}. The plan enters as a constant.
Var conditioned_prediction(const TransportPlan& plan, Var similarity);
Tensor conditioned_prediction(const TransportPlan& plan, const TransportProblem& problem);

// Stacks psi for every condition: N x C. `text` is the N x C x D prompt
// embedding, `patches` the frozen M x D patch embedding.
Var predict_all_conditions(Tape& tape, Var patches, std::span<ConditionAdapter> adapters,
                           Var text, const TransportSettings& settings);

}  // namespace fedmpt
