#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmpt/autodiff.hpp"
#include "fedmpt/encoders.hpp"

namespace fedmpt {

// Condition prompts. The prompt for (condition n, class c) is the token
// sequence
//
//   [cond_tokens[n][0..beta_cond)] [COND n] [cls_tokens[0..beta_cls)] [CLASS c]
//
// Condition-level tokens are learned per condition; class-level tokens are a
// single learned block shared by every class and condition.
class ConditionPromptBank {
 public:
  ConditionPromptBank(const TextEncoder& encoder, std::vector<std::string> conditions,
                      std::vector<std::string> classes, std::size_t beta_cond,
                      std::size_t beta_cls, std::uint64_t seed);

  std::size_t conditions() const { return condition_names_.size(); }
  std::size_t classes() const { return class_names_.size(); }
  std::size_t beta_cond() const { return beta_cond_; }
  std::size_t beta_cls() const { return beta_cls_; }
  std::size_t token_dim() const { return token_dim_; }

  // Learned tokens: [N x beta_cond x token_dim] and [beta_cls x token_dim].
  Parameter& cond_tokens() { return cond_tokens_; }
  Parameter& cls_tokens() { return cls_tokens_; }
  const Parameter& cond_tokens() const { return cond_tokens_; }
  const Parameter& cls_tokens() const { return cls_tokens_; }

  const Tensor& cond_name_tokens() const { return cond_name_tokens_; }
  const Tensor& class_name_tokens() const { return class_name_tokens_; }

  // Template token sequence, (beta_cond + 1 + beta_cls + 1) x token_dim.
  Var assemble(Tape& tape, std::size_t n, std::size_t c);

  // Text embedding of every prompt: [N x C x D], unit rows.
  Var embed_all(Tape& tape, const TextEncoder& encoder);

  std::vector<Parameter*> parameters() { return {&cond_tokens_, &cls_tokens_}; }

 private:
  struct Leaves {
    Var cond;
    Var cls;
  };
  Var assemble_with(Tape& tape, const Leaves& leaves, std::size_t n, std::size_t c) const;

  std::vector<std::string> condition_names_;
  std::vector<std::string> class_names_;
  std::size_t beta_cond_;
  std::size_t beta_cls_;
  std::size_t token_dim_;
  Parameter cond_tokens_;
  Parameter cls_tokens_;
  Tensor cond_name_tokens_;
  Tensor class_name_tokens_;
};

}  // namespace fedmpt
