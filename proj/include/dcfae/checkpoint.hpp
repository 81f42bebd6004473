#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcfae/trainer.hpp"

namespace dcfae {

/// A flat named-tensor container: an 8-byte magic, a little-endian u64
/// header length, a JSON header, then little-endian tensor payloads.
/// Network weights are float32; optimizer moments are float64.
struct NamedTensor {
  std::string name;
  std::string dtype;  // "f32" or "f64"
  Shape shape;
  std::vector<unsigned char> bytes;  // little-endian payload

  static NamedTensor from_floats(std::string name, Shape shape, const std::vector<float>& v);
  static NamedTensor from_doubles(std::string name, Shape shape, const std::vector<double>& v);
  std::vector<float> floats() const;
  std::vector<double> doubles() const;
};

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'F', 'A', 'E', 'C', 'K', '1'};

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// truncated file under the final name.
void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

struct Checkpoint {
  TrainConfig config;
  TrainerState state;
};

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const TrainerState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointMismatch listing every differing field and the affected
/// tensor shapes.
void require_compatible(const ArchitectureConfig& checkpoint, const ArchitectureConfig& expected);

}  // namespace dcfae
