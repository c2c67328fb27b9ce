#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmpt/autodiff.hpp"
#include "fedmpt/tensor.hpp"

namespace fedmpt {

// Frozen patch encoder: patch m of a sample is normalize(W_m^T x). The
// projections are drawn from the seed at construction and never trained.
class VisualEncoder {
 public:
  VisualEncoder(std::uint64_t seed, std::size_t input_dim, std::size_t patches,
                std::size_t embed_dim);

  // Returns an M x D matrix with unit-norm rows. A row whose projection is
  // exactly zero becomes the uniform unit vector.
  Tensor encode(const Tensor& x) const;

  std::uint64_t seed() const { return seed_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t patches() const { return patches_; }
  std::size_t embed_dim() const { return embed_dim_; }
  const Tensor& projection(std::size_t m) const { return projections_.at(m); }

 private:
  std::uint64_t seed_;
  std::size_t input_dim_;
  std::size_t patches_;
  std::size_t embed_dim_;
  std::vector<Tensor> projections_;
};

// Frozen text encoder: normalize(W_t^T * mean(tokens)).
class TextEncoder {
 public:
  TextEncoder(std::uint64_t seed, std::size_t token_dim, std::size_t embed_dim);

  // tokens: T x token_dim on the caller's tape. Gradients reach the tokens,
  // never the mixing matrix.
  Var encode(Var tokens) const;

  // Fixed token for a class or condition name, entries in [-1, 1].
  Tensor name_token(const std::string& name) const;

  std::uint64_t seed() const { return seed_; }
  std::size_t token_dim() const { return token_dim_; }
  std::size_t embed_dim() const { return embed_dim_; }
  const Tensor& mixing() const { return mixing_; }

 private:
  std::uint64_t seed_;
  std::size_t token_dim_;
  std::size_t embed_dim_;
  Tensor mixing_;
};

}  // namespace fedmpt
