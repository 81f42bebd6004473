#include "dcfae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "dcfae/errors.hpp"

namespace dcfae {

namespace fs = std::filesystem;

namespace {

template <typename V>
std::vector<unsigned char> to_le_bytes(const std::vector<V>& values) {
  std::vector<unsigned char> out(values.size() * sizeof(V));
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < out.size(); i += sizeof(V)) std::reverse(out.begin() + i, out.begin() + i + sizeof(V));
  }
  return out;
}

template <typename V>
std::vector<V> from_le_bytes(std::vector<unsigned char> bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size(); i += sizeof(V)) {
      std::reverse(bytes.begin() + i, bytes.begin() + i + sizeof(V));
    }
  }
  std::vector<V> out(bytes.size() / sizeof(V));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(V));
  return out;
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw FormatError("unknown tensor dtype '" + dtype + "'");
}

}  // namespace

NamedTensor NamedTensor::from_floats(std::string name, Shape shape, const std::vector<float>& v) {
  return {std::move(name), "f32", std::move(shape), to_le_bytes(v)};
}

NamedTensor NamedTensor::from_doubles(std::string name, Shape shape, const std::vector<double>& v) {
  return {std::move(name), "f64", std::move(shape), to_le_bytes(v)};
}

std::vector<float> NamedTensor::floats() const {
  if (dtype != "f32") throw FormatError("tensor " + name + " is " + dtype + ", expected f32");
  return from_le_bytes<float>(bytes);
}

std::vector<double> NamedTensor::doubles() const {
  if (dtype != "f64") throw FormatError("tensor " + name + " is " + dtype + ", expected f64");
  return from_le_bytes<double>(bytes);
}

const NamedTensor* TensorArchive::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_archive(const fs::path& path, const TensorArchive& archive) {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : archive.tensors) {
    index.push_back({{"name", t.name}, {"dtype", t.dtype}, {"shape", t.shape}, {"offset", offset}, {"bytes", t.bytes.size()}});
    offset += t.bytes.size();
  }
  const std::string header = nlohmann::json{{"version", 1}, {"meta", archive.meta}, {"tensors", index}}.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const auto len = to_le_bytes(std::vector<std::uint64_t>{header.size()});
    out.write(reinterpret_cast<const char*>(len.data()), static_cast<std::streamsize>(len.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : archive.tensors) {
      out.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

TensorArchive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::vector<unsigned char> len_bytes(8);
  in.read(reinterpret_cast<char*>(len_bytes.data()), 8);
  if (!in) throw LengthError(path.string() + ": truncated header length");
  const std::uint64_t header_len = from_le_bytes<std::uint64_t>(len_bytes)[0];
  const auto file_size = fs::file_size(path);
  if (header_len > file_size) throw LengthError(path.string() + ": header length exceeds file size");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw LengthError(path.string() + ": truncated header");

  TensorArchive archive;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
    archive.meta = j.at("meta");
    const std::uint64_t data_start = 16 + header_len;
    for (const auto& e : j.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      t.dtype = e.at("dtype").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto bytes = e.at("bytes").get<std::uint64_t>();
      if (bytes != element_count(t.shape) * dtype_size(t.dtype)) {
        throw FormatError(path.string() + ": tensor " + t.name + " byte count disagrees with its shape");
      }
      if (data_start + offset + bytes > file_size) throw LengthError(path.string() + ": tensor " + t.name + " is truncated");
      t.bytes.resize(bytes);
      in.seekg(static_cast<std::streamoff>(data_start + offset));
      in.read(reinterpret_cast<char*>(t.bytes.data()), static_cast<std::streamsize>(bytes));
      if (!in) throw LengthError(path.string() + ": tensor " + t.name + " is truncated");
      archive.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  return archive;
}

// ---- model checkpoints ----------------------------------------------------------

namespace {

nlohmann::json optimizer_meta(const Adam& adam) {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, slot] : adam.slots()) steps[name] = slot.step;
  return {{"learning_rate", adam.config().learning_rate},
          {"beta1", adam.config().beta1},
          {"beta2", adam.config().beta2},
          {"epsilon", adam.config().epsilon},
          {"steps", steps}};
}

void add_optimizer_tensors(TensorArchive& a, const std::string& group, const Adam& adam) {
  for (const auto& [name, slot] : adam.slots()) {
    a.tensors.push_back(NamedTensor::from_doubles("adam." + group + "/" + name + "/m", {slot.m.size()}, slot.m));
    a.tensors.push_back(NamedTensor::from_doubles("adam." + group + "/" + name + "/v", {slot.v.size()}, slot.v));
  }
}

Adam restore_optimizer(const TensorArchive& a, const std::string& group) {
  const auto& meta = a.meta.at("optimizers").at(group);
  AdamConfig cfg;
  cfg.learning_rate = meta.at("learning_rate").get<double>();
  cfg.beta1 = meta.at("beta1").get<double>();
  cfg.beta2 = meta.at("beta2").get<double>();
  cfg.epsilon = meta.at("epsilon").get<double>();
  Adam adam(cfg);
  for (const auto& [name, step] : meta.at("steps").items()) {
    const NamedTensor* m = a.find("adam." + group + "/" + name + "/m");
    const NamedTensor* v = a.find("adam." + group + "/" + name + "/v");
    if (!m || !v) throw CheckpointMismatch("optimizer state for " + name + " is missing");
    AdamSlot slot;
    slot.m = m->doubles();
    slot.v = v->doubles();
    slot.step = step.get<std::uint64_t>();
    adam.slots()[name] = std::move(slot);
  }
  return adam;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainConfig& cfg, const TrainerState& state) {
  TensorArchive a;
  auto& net = const_cast<DcfaeNetwork<float>&>(state.network);
  a.meta["architecture"] = net.fae.arch.to_json();
  a.meta["head"] = net.head ? net.head->config().to_json() : nlohmann::json(nullptr);
  a.meta["config"] = cfg.to_json();
  a.meta["epochs_completed"] = state.epochs_completed;
  a.meta["optimizers"] = {{"generator", optimizer_meta(state.generator_optimizer)},
                          {"discriminator", optimizer_meta(state.discriminator_optimizer)}};
  for (const auto* p : net.all_parameters()) a.tensors.push_back(NamedTensor::from_floats(p->name, p->value.shape, p->value.data));
  add_optimizer_tensors(a, "generator", state.generator_optimizer);
  add_optimizer_tensors(a, "discriminator", state.discriminator_optimizer);
  write_archive(path, a);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const TensorArchive a = read_archive(path);
  Checkpoint ck;
  try {
    ck.config = TrainConfig::from_json(a.meta.at("config"));
    const ArchitectureConfig arch = ArchitectureConfig::from_json(a.meta.at("architecture"));
    ck.state.network = DcfaeNetwork<float>{FaeModel<float>(arch, 0), std::nullopt};
    if (!a.meta.at("head").is_null()) {
      ck.state.network.head.emplace(arch.latent_dim, HeadConfig::from_json(a.meta.at("head")), 0);
    }
    ck.state.epochs_completed = a.meta.at("epochs_completed").get<std::size_t>();
    ck.state.generator_optimizer = restore_optimizer(a, "generator");
    ck.state.discriminator_optimizer = restore_optimizer(a, "discriminator");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint metadata: " + e.what());
  }

  std::set<std::string> used;
  for (auto* p : ck.state.network.all_parameters()) {
    const NamedTensor* t = a.find(p->name);
    if (!t) throw CheckpointMismatch(path.string() + ": tensor " + p->name + " is missing");
    if (t->shape != p->value.shape) {
      throw CheckpointMismatch(path.string() + ": tensor " + p->name + " has shape " + shape_string(t->shape) +
                               ", network expects " + shape_string(p->value.shape));
    }
    p->value.data = t->floats();
    used.insert(p->name);
  }
  for (const auto& t : a.tensors) {
    if (t.name.rfind("adam.", 0) != 0 && !used.count(t.name)) {
      throw CheckpointMismatch(path.string() + ": unexpected tensor " + t.name);
    }
  }
  return ck;
}

void require_compatible(const ArchitectureConfig& checkpoint, const ArchitectureConfig& expected) {
  if (checkpoint == expected) return;
  std::string msg = "checkpoint architecture does not match the configuration:";
  auto field = [&](const char* name, const std::string& a, const std::string& b) {
    if (a != b) msg += std::string("\n  ") + name + ": checkpoint " + a + ", config " + b;
  };
  field("canvas", std::to_string(checkpoint.canvas), std::to_string(expected.canvas));
  field("channels", std::to_string(checkpoint.channels), std::to_string(expected.channels));
  field("latent_dim", std::to_string(checkpoint.latent_dim), std::to_string(expected.latent_dim));
  field("filters", nlohmann::json(checkpoint.filters).dump(), nlohmann::json(expected.filters).dump());
  field("residual", checkpoint.residual ? "true" : "false", expected.residual ? "true" : "false");
  if (checkpoint.latent_dim != expected.latent_dim) {
    const std::size_t side = checkpoint.spatial_ladder().back();
    const std::size_t flat = side * side * checkpoint.filters.back();
    msg += "\n  encoder.mu.w: checkpoint " + shape_string({flat, checkpoint.latent_dim}) + ", config " +
           shape_string({flat, expected.latent_dim});
  }
  throw CheckpointMismatch(msg);
}

}  // namespace dcfae
