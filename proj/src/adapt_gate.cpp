#include "fedmpt/adapt_gate.hpp"

#include <cmath>
#include <string>

#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

namespace {

Tensor normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

void check_patches(const Tensor& patches, std::size_t embed_dim, const char* who) {
  if (patches.rank() != 2 || patches.cols() != embed_dim) {
    throw DimensionError(std::string(who) + " expects M x " + std::to_string(embed_dim) +
                         " patches, got shape " + shape_string(patches.shape()));
  }
}

}  // namespace

ConditionAdapter::ConditionAdapter(std::size_t condition, std::size_t embed_dim,
                                   std::size_t rank, std::uint64_t seed)
    : condition_(condition) {
  if (rank == 0 || rank > embed_dim) {
    throw ParameterError("adapter rank must be in [1, " + std::to_string(embed_dim) +
                         "], got " + std::to_string(rank));
  }
  // Unit-scale random factors. A zero factor would make every adapted row
  // hit the zero-norm rule, which passes no gradient.
  Rng rng(mix_seed(seed, 0x616461707400ULL + condition));
  const std::string prefix = "adapter." + std::to_string(condition);
  down_ = Parameter(prefix + ".down",
                    normal_matrix(rng, embed_dim, rank,
                                  1.0 / std::sqrt(static_cast<double>(embed_dim))));
  up_ = Parameter(prefix + ".up", normal_matrix(rng, rank, embed_dim,
                                                1.0 / std::sqrt(static_cast<double>(rank))));
}

Var ConditionAdapter::adapt(Tape& tape, Var patches) {
  check_patches(patches.value(), embed_dim(), "adapter");
  Var low = matmul(patches, tape.parameter(down_));
  return l2_normalize_rows(matmul(low, tape.parameter(up_)));
}

GateRouter::GateRouter(std::size_t embed_dim, std::size_t rank, std::size_t conditions,
                       std::uint64_t seed) {
  if (rank == 0 || conditions == 0) throw ParameterError("gate rank and conditions must be positive");
  Rng rng(mix_seed(seed, 0x67617465ULL));
  down_ = Parameter("gate.down", normal_matrix(rng, embed_dim, rank,
                                               1.0 / std::sqrt(static_cast<double>(embed_dim))));
  // Zero up-projection: every condition starts with weight 1/N.
  up_ = Parameter("gate.up", Tensor({rank, conditions}, 0.0));
}

Var GateRouter::weights(Tape& tape, Var patches) {
  check_patches(patches.value(), down_.value.dim(0), "gate");
  Var pooled = reshape(mean_axis(patches, 0), {1, down_.value.dim(0)});
  Var logits = matmul(matmul(pooled, tape.parameter(down_)), tape.parameter(up_));
  return reshape(softmax(logits, 1, 1.0), {conditions()});
}

Var fuse_predictions(Var weights, Var per_condition) {
  const Tensor& w = weights.value();
  const Tensor& p = per_condition.value();
  if (p.rank() != 2 || w.size() != p.rows()) {
    throw DimensionError("fuse_predictions: weights " + shape_string(w.shape()) +
                         " do not match per-condition predictions " +
                         shape_string(p.shape()));
  }
  Var row = reshape(weights, {1, w.size()});
  return reshape(matmul(row, per_condition), {p.cols()});
}

}  // namespace fedmpt
