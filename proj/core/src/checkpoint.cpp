#include "lmk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace {

constexpr char kMagic[8] = {'L', 'M', 'K', 'C', 'K', 'P', 'T', '\n'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void Checkpoint::add(const ParameterStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    names.push_back(store.names()[i]);
    tensors.push_back(store.values()[i]);
  }
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& n : names) {
    if (n.starts_with(prefix)) return true;
  }
  return false;
}

std::uint64_t Checkpoint::checksum(const std::string& prefix) const {
  std::uint64_t h = fnv1a("");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!names[i].starts_with(prefix)) continue;
    h = fnv1a(names[i], h);
    h = fnv1a(shape_string(tensors[i].shape()), h);
    h = fnv1a({reinterpret_cast<const char*>(tensors[i].data()), tensors[i].size() * sizeof(float)}, h);
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "lmk-checkpoint";
  header["version"] = Checkpoint::kVersion;
  header["model"] = ckpt.config.to_json();
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    header["tensors"].push_back(
        {{"name", ckpt.names[i]}, {"shape", ckpt.tensors[i].shape()}, {"offset", offset}, {"count", ckpt.tensors[i].size()}});
    offset += ckpt.tensors[i].size();
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1u << 26)) {
    throw DataError(path.string() + " is not a checkpoint file");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header = nlohmann::json::parse(text, nullptr, false);
  if (!in || header.is_discarded() || header.value("format", "") != "lmk-checkpoint") {
    throw DataError(path.string() + ": malformed checkpoint header");
  }
  if (header.value("version", 0) != Checkpoint::kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + header["version"].dump());
  }
  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(header.at("model"));
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<std::vector<int>>());
    if (t.size() != entry.at("count").get<std::size_t>()) throw DataError(path.string() + ": tensor count mismatch");
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw DataError(path.string() + ": truncated tensor data");
    ckpt.names.push_back(entry.at("name").get<std::string>());
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

Checkpoint make_checkpoint(const FeatureExtractor& f, const nlohmann::json& meta) {
  Checkpoint c;
  c.config = f.config();
  c.meta = meta;
  c.add(f.parameters());
  return c;
}

Checkpoint make_checkpoint(const LandmarkModel& m, const nlohmann::json& meta) {
  Checkpoint c = make_checkpoint(m.features, meta);
  c.add(m.head.parameters());
  return c;
}

void restore_parameters(const Checkpoint& ckpt, ParameterStore& store) {
  std::map<std::string, const Tensor*> by_name;
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) by_name[ckpt.names[i]] = &ckpt.tensors[i];
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& name = store.names()[i];
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint has no parameter '" + name + "'");
    if (!it->second->same_shape(store.values()[i])) {
      throw ConfigError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second->shape()) +
                        ", model expects " + shape_string(store.values()[i].shape()));
    }
    store.values()[i] = *it->second;
  }
}

}  // namespace lmk
