#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace gano::cli {

inline constexpr const char* kArtifactVersion = "1";

/// FNV-1a 64 of a file, or of every regular file below a directory in
/// sorted relative-path order (paths are hashed too).
std::string hash_path(const std::filesystem::path& path);

/// Inputs are hashed when added, before the command can overwrite them.
class Manifest {
 public:
  Manifest(std::string command, json config, const std::vector<std::filesystem::path>& inputs = {});
  void add_input(const std::filesystem::path& path);
  /// Writes manifest.json and config.json into dir.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  json config_;
  json inputs_ = json::object();
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

/// Output directory policy: a missing or empty directory is used as is; a
/// non-empty one is cleared with force, kept with keep, and rejected
/// otherwise.
void prepare_output(const std::filesystem::path& dir, bool force, bool keep = false);

}  // namespace gano::cli
