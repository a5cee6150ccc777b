#include "hieratt/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "hieratt/error.hpp"
#include "hieratt/image_io.hpp"

namespace hieratt {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const NamedTensor& Checkpoint::at(const std::string& name) const {
  if (const NamedTensor* t = find(name)) return *t;
  throw Error("checkpoint: no tensor named " + name);
}

void Checkpoint::add(std::string name, const Tensor& t) {
  NamedTensor nt{std::move(name), t.shape(), {}};
  nt.data.reserve(t.size());
  for (double v : t.data()) nt.data.push_back(static_cast<float>(v));
  tensors.push_back(std::move(nt));
}

Tensor to_tensor(const NamedTensor& t) {
  Tensor::Storage data(t.data.begin(), t.data.end());
  return Tensor(t.shape, std::move(data));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["kind"] = ckpt.kind;
  manifest["config"] = ckpt.config;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.data.size() != shape_size(t.shape)) throw Error("checkpoint: tensor " + t.name + " has inconsistent size");
    const std::uint64_t length = t.data.size() * sizeof(float);
    manifest["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"length", length}});
    offset += length;
  }
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.tensors)
    for (float v : t.data) put(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto manifest_len = get<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - 16) throw CorruptionError("checkpoint: manifest extends past end of file");
  const std::string text(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  const nlohmann::json manifest = nlohmann::json::parse(text, nullptr, false);
  if (manifest.is_discarded()) throw CorruptionError("checkpoint: manifest is not valid JSON");

  const std::size_t payload_start = 16 + manifest_len;
  const std::uint64_t payload_size = bytes.size() - payload_start;
  Checkpoint ckpt;
  try {
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.config = manifest.at("config");
    std::uint64_t expected = 0;
    for (const auto& entry : manifest.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      if (offset != expected || length != shape_size(t.shape) * sizeof(float)) {
        throw CorruptionError("checkpoint: tensor " + t.name + " has an inconsistent offset or length");
      }
      if (offset + length > payload_size) {
        throw CorruptionError("checkpoint: tensor " + t.name + " extends past the end of the payload");
      }
      t.data.resize(length / sizeof(float));
      std::memcpy(t.data.data(), bytes.data() + payload_start + offset, length);
      expected = offset + length;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected != payload_size) {
      throw CorruptionError("checkpoint: payload holds " + std::to_string(payload_size) + " bytes, manifest covers " +
                            std::to_string(expected));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

void store_to_checkpoint(const ParamStore& store, Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& p : store) ckpt.add(prefix + p->name, p->value);
}

void checkpoint_to_store(const Checkpoint& ckpt, ParamStore& store, const std::string& prefix) {
  for (auto& p : store) {
    const NamedTensor* t = ckpt.find(prefix + p->name);
    if (!t) throw Error("checkpoint: missing parameter " + prefix + p->name);
    if (t->shape != p->value.shape()) {
      throw Error("checkpoint: parameter " + p->name + " has shape " + shape_string(t->shape) + ", model expects " +
                  shape_string(p->value.shape()));
    }
    p->value = to_tensor(*t);
  }
}

}  // namespace hieratt
