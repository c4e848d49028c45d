#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "demoe/arch.hpp"
#include "demoe/error.hpp"
#include "demoe/tensor.hpp"

namespace demoe::net {

/// Layer class used by the weight-similarity analysis.
enum class Taxonomy : std::uint8_t {
  conv1x1 = 0,
  conv3x3 = 1,
  layernorm = 2,
  sca = 3,
  other = 4,
  untagged = 255,  // unknown tag byte read from a file
};

std::string to_string(Taxonomy t);

enum class Stage : std::uint8_t {
  init = 0,
  stage1 = 1,
  stage2 = 2,
  baseline = 3,
};

std::string to_string(Stage s);

struct ParamRecord {
  std::string name;
  Taxonomy taxonomy = Taxonomy::other;
  Tensor value;
};

class Checkpoint {
 public:
  Checkpoint() = default;
  Checkpoint(ArchConfig config, Stage stage) : config_(config), stage_(stage) {}

  const ArchConfig& config() const noexcept { return config_; }
  ArchConfig& config() noexcept { return config_; }
  Stage stage() const noexcept { return stage_; }
  void set_stage(Stage s) noexcept { stage_ = s; }

  /// Appends a record. Throws ArgumentError on a duplicate name.
  void add(ParamRecord record);

  const std::vector<ParamRecord>& records() const noexcept { return records_; }
  std::vector<ParamRecord>& records() noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  const ParamRecord* find(std::string_view name) const;
  /// Throws ArgumentError naming the parameter when absent.
  const ParamRecord& at(std::string_view name) const;
  ParamRecord& at(std::string_view name);
  std::size_t index_of(std::string_view name) const;

  std::size_t parameter_count() const;

 private:
  ArchConfig config_{};
  Stage stage_ = Stage::init;
  std::vector<ParamRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  enum class Code { io, bad_magic, version_mismatch, truncated, invalid };

  CheckpointError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Binary layout (all integers little-endian):
///   "DMOE" | u32 version | u32 config_bytes | config fields (u32 each) |
///   u32 record_count | records...
/// record: u32 name_len | name | u8 taxonomy | u8 dtype (0 = f32) | u8 rank |
///         u32 dims[rank] | f32 payload
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// True when both checkpoints hold identical names, tags, shapes and bits.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

}  // namespace demoe::net
