#pragma once

#include <filesystem>

#include "edgenet/model.hpp"

namespace edgenet {

// Binary artifact format shared by checkpoints and deployed models:
//   magic "EDGN" | u16 version | u8 kind | u8 precision | config block |
//   (checkpoint: step/epoch/best-epoch/best-val-loss) |
//   u32 tensor count | length-prefixed named tensor records.
// All multi-byte integers little-endian; f16 payloads are IEEE-754 binary16;
// i8 records carry (f32 scale, i32 zero_point).

enum class ArtifactKind : uint8_t { Checkpoint = 0, Deployed = 1 };

inline constexpr char kArtifactMagic[4] = {'E', 'D', 'G', 'N'};
inline constexpr uint16_t kArtifactVersion = 1;

// Writes are atomic: a temp file in the target directory is renamed over
// the destination.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_deployed(const DeployedModel& model, const std::filesystem::path& path);
DeployedModel load_deployed(const std::filesystem::path& path);

// Inspect the header without loading tensor data.
ArtifactKind peek_artifact_kind(const std::filesystem::path& path);

} // namespace edgenet
