#include "fedmpt/prompt_bank.hpp"

#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

namespace {

constexpr double kTokenInitStd = 0.02;

Tensor stack_names(const TextEncoder& encoder, const std::vector<std::string>& names) {
  Tensor out({names.size(), encoder.token_dim()});
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor tok = encoder.name_token(names[i]);
    for (std::size_t k = 0; k < tok.size(); ++k) out.at(i, k) = tok[k];
  }
  return out;
}

Tensor row_of(const Tensor& t, std::size_t r) {
  const auto d = t.data();
  return Tensor({1, t.cols()}, std::vector<double>(d.begin() + r * t.cols(),
                                                   d.begin() + (r + 1) * t.cols()));
}

}  // namespace

ConditionPromptBank::ConditionPromptBank(const TextEncoder& encoder,
                                         std::vector<std::string> conditions,
                                         std::vector<std::string> classes,
                                         std::size_t beta_cond, std::size_t beta_cls,
                                         std::uint64_t seed)
    : condition_names_(std::move(conditions)),
      class_names_(std::move(classes)),
      beta_cond_(beta_cond),
      beta_cls_(beta_cls),
      token_dim_(encoder.token_dim()) {
  if (condition_names_.empty()) throw ContractError("prompt bank needs at least one condition");
  if (class_names_.empty()) throw ContractError("prompt bank needs at least one class");
  Rng rng(mix_seed(seed, 0x70726f6d7074ULL));
  Tensor cond({condition_names_.size(), beta_cond_, token_dim_});
  for (std::size_t i = 0; i < cond.size(); ++i) cond[i] = rng.normal(0.0, kTokenInitStd);
  Tensor cls({beta_cls_, token_dim_});
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] = rng.normal(0.0, kTokenInitStd);
  cond_tokens_ = Parameter("prompt.cond_tokens", std::move(cond));
  cls_tokens_ = Parameter("prompt.cls_tokens", std::move(cls));
  cond_name_tokens_ = stack_names(encoder, condition_names_);
  class_name_tokens_ = stack_names(encoder, class_names_);
}

Var ConditionPromptBank::assemble_with(Tape& tape, const Leaves& leaves, std::size_t n,
                                       std::size_t c) const {
  std::vector<Var> parts;
  parts.reserve(4);
  if (beta_cond_ > 0) parts.push_back(slice_rows(leaves.cond, n * beta_cond_, beta_cond_));
  parts.push_back(tape.constant(row_of(cond_name_tokens_, n)));
  if (beta_cls_ > 0) parts.push_back(leaves.cls);
  parts.push_back(tape.constant(row_of(class_name_tokens_, c)));
  return concat_rows(parts);
}

Var ConditionPromptBank::assemble(Tape& tape, std::size_t n, std::size_t c) {
  if (n >= conditions() || c >= classes()) {
    throw ContractError("prompt index (" + std::to_string(n) + ", " + std::to_string(c) +
                        ") out of range for " + std::to_string(conditions()) +
                        " conditions x " + std::to_string(classes()) + " classes");
  }
  const Leaves leaves{tape.parameter(cond_tokens_), tape.parameter(cls_tokens_)};
  return assemble_with(tape, leaves, n, c);
}

Var ConditionPromptBank::embed_all(Tape& tape, const TextEncoder& encoder) {
  if (encoder.token_dim() != token_dim_) {
    throw DimensionError("prompt bank token_dim " + std::to_string(token_dim_) +
                         " does not match text encoder token_dim " +
                         std::to_string(encoder.token_dim()));
  }
  const Leaves leaves{tape.parameter(cond_tokens_), tape.parameter(cls_tokens_)};
  std::vector<Var> rows;
  rows.reserve(conditions() * classes());
  for (std::size_t n = 0; n < conditions(); ++n) {
    for (std::size_t c = 0; c < classes(); ++c) {
      rows.push_back(encoder.encode(assemble_with(tape, leaves, n, c)));
    }
  }
  return reshape(concat_rows(rows), {conditions(), classes(), encoder.embed_dim()});
}

}  // namespace fedmpt
