#include "fedmpt/bundle.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include <json.hpp>

#include "fedmpt/error.hpp"
#include "fedmpt/model.hpp"

namespace fedmpt {

namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
  return v;
}

std::string missing_keys(const ParameterBundle& have, const ParameterBundle& want) {
  std::string out;
  for (const auto& [name, _] : want.entries) {
    if (!have.entries.contains(name)) out += (out.empty() ? "" : ", ") + name;
  }
  return out;
}

void require_same_layout(const ParameterBundle& ref, const ParameterBundle& other,
                         std::size_t index) {
  if (other.schema_version != ref.schema_version) {
    throw ProtocolError("bundle " + std::to_string(index) + " has schema version " +
                        std::to_string(other.schema_version) + ", expected " +
                        std::to_string(ref.schema_version));
  }
  const std::string lacks = missing_keys(other, ref);
  const std::string extra = missing_keys(ref, other);
  if (!lacks.empty() || !extra.empty()) {
    std::string msg = "bundle " + std::to_string(index) + " key mismatch;";
    if (!lacks.empty()) msg += " missing: " + lacks + ";";
    if (!extra.empty()) msg += " unexpected: " + extra + ";";
    throw ProtocolError(msg);
  }
  for (const auto& [name, tensor] : ref.entries) {
    if (other.entries.at(name).shape() != tensor.shape()) {
      throw ProtocolError("bundle " + std::to_string(index) + " entry " + name +
                          " has shape " + shape_string(other.entries.at(name).shape()) +
                          ", expected " + shape_string(tensor.shape()));
    }
  }
}

}  // namespace

ParameterBundle extract_bundle(Model& model) {
  ParameterBundle out;
  for (Parameter* p : model.parameters()) {
    if (!out.entries.emplace(p->id, p->value).second) {
      throw ProtocolError("duplicate parameter id " + p->id);
    }
  }
  return out;
}

void load_bundle(Model& model, const ParameterBundle& bundle) {
  if (bundle.schema_version != ParameterBundle::kSchemaVersion) {
    throw ProtocolError("unsupported bundle schema version " +
                        std::to_string(bundle.schema_version));
  }
  const std::vector<Parameter*> params = model.parameters();
  if (params.size() != bundle.entries.size()) {
    ParameterBundle own = extract_bundle(model);
    require_same_layout(own, bundle, 0);
  }
  for (Parameter* p : params) {
    auto it = bundle.entries.find(p->id);
    if (it == bundle.entries.end()) throw ProtocolError("bundle is missing key " + p->id);
    if (it->second.shape() != p->value.shape()) {
      throw ProtocolError("bundle entry " + p->id + " has shape " +
                          shape_string(it->second.shape()) + ", model expects " +
                          shape_string(p->value.shape()));
    }
    p->value = it->second;
    p->zero_grad();
  }
}

ParameterBundle fed_average(std::span<const ParameterBundle> bundles,
                            std::span<const double> weights) {
  if (bundles.empty()) throw ProtocolError("fed_average needs at least one bundle");
  if (weights.size() != bundles.size()) {
    throw ProtocolError("fed_average: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(bundles.size()) + " bundles");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ProtocolError("fed_average weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ProtocolError("fed_average weights must sum to 1");
  for (std::size_t i = 1; i < bundles.size(); ++i) {
    require_same_layout(bundles.front(), bundles[i], i);
  }
  ParameterBundle out;
  out.schema_version = bundles.front().schema_version;
  for (const auto& [name, first] : bundles.front().entries) {
    Tensor acc(first.shape(), 0.0);
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      const Tensor& t = bundles[i].entries.at(name);
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += weights[i] * t[k];
    }
    out.entries.emplace(name, std::move(acc));
  }
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t n = bytes[i] << 16;
    if (i + 1 < bytes.size()) n |= bytes[i + 1] << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char ch) -> int {
    if (ch >= 'A' && ch <= 'Z') return ch - 'A';
    if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
    if (ch >= '0' && ch <= '9') return ch - '0' + 52;
    if (ch == '+') return 62;
    if (ch == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      v[k] = value(ch);
      if (v[k] < 0 || pad) throw ProtocolError("invalid base64 payload");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

std::string bundle_to_json(const ParameterBundle& bundle) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = bundle.schema_version;
  doc["entries"] = nlohmann::ordered_json::array();
  for (const auto& [name, tensor] : bundle.entries) {
    std::vector<std::uint8_t> bytes(tensor.size() * 8);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(tensor[i]));
      std::memcpy(bytes.data() + 8 * i, &bits, 8);
    }
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["values"] = base64_encode(bytes);
    doc["entries"].push_back(std::move(entry));
  }
  return doc.dump() + "\n";
}

ParameterBundle bundle_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("bundle document is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> kTop = {"schema_version", "entries"};
  static const std::set<std::string> kEntry = {"name", "shape", "values"};
  for (const auto& [key, _] : doc.items()) {
    if (!kTop.contains(key)) throw ProtocolError("bundle document has unknown field " + key);
  }
  ParameterBundle out;
  try {
    out.schema_version = doc.at("schema_version").get<int>();
    for (const auto& entry : doc.at("entries")) {
      for (const auto& [key, _] : entry.items()) {
        if (!kEntry.contains(key)) throw ProtocolError("bundle entry has unknown field " + key);
      }
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto bytes = base64_decode(entry.at("values").get<std::string>());
      if (bytes.size() != shape_size(shape) * 8) {
        throw ProtocolError("bundle entry " + name + " payload does not match its shape");
      }
      std::vector<double> values(shape_size(shape));
      for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes.data() + 8 * i, 8);
        values[i] = std::bit_cast<double>(to_little_endian(bits));
      }
      if (!out.entries.emplace(name, Tensor(shape, std::move(values))).second) {
        throw ProtocolError("bundle document repeats entry " + name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed bundle document: ") + e.what());
  }
  return out;
}

}  // namespace fedmpt
