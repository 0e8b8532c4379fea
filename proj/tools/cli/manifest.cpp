#include "cli/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "gano/errors.hpp"

#ifndef GANO_REVISION
#define GANO_REVISION "unknown"
#endif

namespace fs = std::filesystem;

namespace gano::cli {
namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void add(const char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 1099511628211ull;
    }
  }
  void add_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    char buf[1 << 16];
    while (in) {
      in.read(buf, sizeof buf);
      add(buf, static_cast<std::size_t>(in.gcount()));
    }
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

}  // namespace

std::string hash_path(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("missing input " + path.string());
  Fnv f;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      const std::string rel = fs::relative(p, path).generic_string();
      f.add(rel.data(), rel.size() + 1);
      f.add_file(p);
    }
  } else {
    f.add_file(path);
  }
  return f.hex();
}

Manifest::Manifest(std::string command, json config, const std::vector<fs::path>& inputs)
    : command_(std::move(command)), config_(std::move(config)) {
  for (const auto& p : inputs) add_input(p);
}

void Manifest::add_input(const fs::path& path) { inputs_[path.string()] = hash_path(path); }

void Manifest::write(const fs::path& dir) const {
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  const json m{{"artifact_version", kArtifactVersion},
               {"command", command_},
               {"config_hash", config_hash(config_)},
               {"inputs", inputs_},
               {"wall_clock_seconds", wall},
               {"revision", GANO_REVISION}};
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  std::ofstream(dir / "config.json") << config_.dump(2) << '\n';
}

void prepare_output(const fs::path& dir, bool force, bool keep) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ValidationError(dir.string() + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !keep) {
    if (!force) throw ValidationError("output directory " + dir.string() + " is not empty (use --force)");
    for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
  }
  fs::create_directories(dir);
}

}  // namespace gano::cli
