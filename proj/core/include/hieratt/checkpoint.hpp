#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hieratt/autodiff.hpp"

namespace hieratt {

/// Binary layout, all integers little-endian:
///   "HCK1" | u32 version | u64 manifest byte length | manifest (UTF-8 JSON) | payload
/// The manifest is {"kind", "config", "tensors": [{"name", "shape", "offset", "length"}]}
/// where offset and length count bytes from the start of the payload. The
/// payload holds each tensor as row-major float32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& at(const std::string& name) const;
  void add(std::string name, const Tensor& t);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError for a bad magic or version and CorruptionError, naming the
/// tensor, when the manifest does not fit the payload.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Appends every parameter of the store under `prefix` + name.
void store_to_checkpoint(const ParamStore& store, Checkpoint& ckpt, const std::string& prefix = "");
/// Copies tensors back into the store; every parameter must be present with a matching shape.
void checkpoint_to_store(const Checkpoint& ckpt, ParamStore& store, const std::string& prefix = "");

Tensor to_tensor(const NamedTensor& t);

}  // namespace hieratt
