#include "fedmpt/encoders.hpp"

#include <cmath>

#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

namespace {

Tensor gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rows));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

VisualEncoder::VisualEncoder(std::uint64_t seed, std::size_t input_dim,
                             std::size_t patches, std::size_t embed_dim)
    : seed_(seed), input_dim_(input_dim), patches_(patches), embed_dim_(embed_dim) {
  if (input_dim == 0 || patches == 0 || embed_dim == 0) {
    throw ParameterError("visual encoder dimensions must be positive");
  }
  Rng rng(mix_seed(seed, 0x7669737561ULL));
  projections_.reserve(patches);
  for (std::size_t m = 0; m < patches; ++m) {
    projections_.push_back(gaussian_matrix(rng, input_dim, embed_dim));
  }
}

Tensor VisualEncoder::encode(const Tensor& x) const {
  if (x.size() != input_dim_) {
    throw DimensionError("visual encoder expects " + std::to_string(input_dim_) +
                         " inputs, got shape " + shape_string(x.shape()));
  }
  Tensor out({patches_, embed_dim_});
  for (std::size_t m = 0; m < patches_; ++m) {
    const Tensor& w = projections_[m];
    for (std::size_t i = 0; i < input_dim_; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (std::size_t d = 0; d < embed_dim_; ++d) out.at(m, d) += xi * w.at(i, d);
    }
  }
  return l2_normalize_rows(out);
}

TextEncoder::TextEncoder(std::uint64_t seed, std::size_t token_dim, std::size_t embed_dim)
    : seed_(seed), token_dim_(token_dim), embed_dim_(embed_dim) {
  if (token_dim == 0 || embed_dim == 0) {
    throw ParameterError("text encoder dimensions must be positive");
  }
  Rng rng(mix_seed(seed, 0x74657874ULL));
  mixing_ = gaussian_matrix(rng, token_dim, embed_dim);
}

Var TextEncoder::encode(Var tokens) const {
  const Tensor& t = tokens.value();
  if (t.rank() != 2 || t.cols() != token_dim_) {
    throw DimensionError("text encoder expects T x " + std::to_string(token_dim_) +
                         " tokens, got shape " + shape_string(t.shape()));
  }
  if (t.rows() == 0) throw ContractError("text encoder needs at least one token");
  Var pooled = reshape(mean_axis(tokens, 0), {1, token_dim_});
  Var mixed = matmul(pooled, tokens.tape->constant(mixing_));
  return reshape(l2_normalize_rows(mixed), {embed_dim_});
}

Tensor TextEncoder::name_token(const std::string& name) const {
  if (name.empty()) throw ContractError("name token requested for an empty name");
  Rng rng(mix_seed(seed_, fnv1a(name)));
  Tensor out({token_dim_});
  for (std::size_t i = 0; i < token_dim_; ++i) out[i] = rng.uniform(-1.0, 1.0);
  return out;
}

}  // namespace fedmpt
