#pragma once

#include <cstdint>
#include <vector>

#include "fedmpt/autodiff.hpp"

namespace fedmpt {

// Low-rank adapter f -> normalize(f * W_down * W_up) applied patch-wise.
class ConditionAdapter {
 public:
  ConditionAdapter(std::size_t condition, std::size_t embed_dim, std::size_t rank,
                   std::uint64_t seed);

  // patches: M x D. Returns M x D with unit rows.
  Var adapt(Tape& tape, Var patches);

  std::size_t condition() const { return condition_; }
  std::size_t embed_dim() const { return down_.value.dim(0); }
  std::size_t rank() const { return down_.value.dim(1); }
  Parameter& down() { return down_; }
  Parameter& up() { return up_; }

  std::vector<Parameter*> parameters() { return {&down_, &up_}; }

 private:
  std::size_t condition_;
  Parameter down_;
  Parameter up_;
};

// Router producing softmax mixture weights over conditions from the
// mean-pooled patch embedding, through a D -> rank -> N low-rank map.
class GateRouter {
 public:
  GateRouter(std::size_t embed_dim, std::size_t rank, std::size_t conditions,
             std::uint64_t seed);

  // patches: M x D. Returns N weights summing to one.
  Var weights(Tape& tape, Var patches);

  std::size_t conditions() const { return up_.value.dim(1); }
  Parameter& down() { return down_; }
  Parameter& up() { return up_; }

  std::vector<Parameter*> parameters() { return {&down_, &up_}; }

 private:
  Parameter down_;
  Parameter up_;
};

// P'_c = sum_n weights_n * per_condition_{n,c}.
Var fuse_predictions(Var weights, Var per_condition);

}  // namespace fedmpt
