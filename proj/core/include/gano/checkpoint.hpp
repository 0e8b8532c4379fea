#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gano/params.hpp"
#include "gano/tensor.hpp"

namespace gano {

/// Binary model file: magic "GANOCKPT", format version, kind, JSON metadata
/// (layer sizes, latent dimension, table rows), step counter, named
/// little-endian double blocks, then the latent table (possibly 0 x 0).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  std::string meta;
  std::uint64_t step = 0;
  ParamSet params;
  ad::Tensor latents;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws ValidationError on a missing file, bad magic, unknown version, or
/// truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gano
