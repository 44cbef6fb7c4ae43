#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fireset/entity.hpp"
#include "fireset/model.hpp"

#include <json.hpp>

namespace fireset {

// --- entity files -----------------------------------------------------------
// magic "WISP" | version u32 | F,T,T_h,H,W u32 | F x (u32 len + utf-8 name)
// | payload f32, layout [F][T][H][W]; all integers and floats little-endian.

inline constexpr std::uint32_t kEntityVersion = 1;

void write_entity(const std::filesystem::path& path, const Entity& e);
Entity read_entity(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_entity(const Entity& e);
Entity decode_entity(const std::vector<std::uint8_t>& bytes);

// --- checkpoints -------------------------------------------------------------
// magic "WSPC" | u32 header length | JSON header | flat f32 parameter block.
// The header carries the model config echo, seed, step, validation score and
// a name -> [offset,count] index into the block (alphabetical order).

nlohmann::ordered_json model_config_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  double val_map = 0.0;
};

void write_checkpoint(const std::filesystem::path& path, const Network<float>& net,
                      const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Network<float> net;
  CheckpointMeta meta;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

// --- misc --------------------------------------------------------------------

// Binary 8-bit graymap.
void write_pgm(const std::filesystem::path& path, std::size_t W, std::size_t H,
               const std::vector<std::uint8_t>& pixels);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace fireset
