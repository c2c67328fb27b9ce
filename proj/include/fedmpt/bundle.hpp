#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedmpt/tensor.hpp"

namespace fedmpt {

class Model;

// The only artifact exchanged between clients and server: learnable tensors
// keyed by parameter id.
struct ParameterBundle {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::map<std::string, Tensor> entries;

  friend bool operator==(const ParameterBundle&, const ParameterBundle&) = default;
};

ParameterBundle extract_bundle(Model& model);
// Throws ProtocolError on any key or shape mismatch.
void load_bundle(Model& model, const ParameterBundle& bundle);

// Elementwise weighted sum. Weights must be nonnegative and sum to one.
ParameterBundle fed_average(std::span<const ParameterBundle> bundles,
                            std::span<const double> weights);

// {"schema_version": 1, "entries": [{"name", "shape", "values"}]} where
// values is base64 of the little-endian float64 array. Byte-stable.
std::string bundle_to_json(const ParameterBundle& bundle);
ParameterBundle bundle_from_json(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace fedmpt
