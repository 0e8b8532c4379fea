#include "gano/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gano/errors.hpp"

namespace gano {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'N', 'O', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& out, const ad::Tensor& t) {
  put_u64(out, t.rows());
  put_u64(out, t.cols());
  for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ValidationError(path_.string() + ": truncated checkpoint");
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::string string() {
    const std::uint64_t n = u64();
    if (n > (1u << 30)) throw ValidationError(path_.string() + ": corrupt string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  ad::Tensor tensor() {
    const std::uint64_t r = u64(), c = u64();
    if (r * c > (std::uint64_t{1} << 32)) throw ValidationError(path_.string() + ": corrupt tensor shape");
    ad::Tensor t(r, c);
    for (double& v : t.values()) v = std::bit_cast<double>(u64());
    return t;
  }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, Checkpoint::kVersion);
  put_string(out, ckpt.kind);
  put_string(out, ckpt.meta);
  put_u64(out, ckpt.step);
  put_u64(out, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    put_string(out, ckpt.params.name(i));
    put_tensor(out, ckpt.params[i]);
  }
  put_tensor(out, ckpt.latents);
  if (!out) throw ValidationError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint not found: " + path.string());
  Reader r(in, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw ValidationError(path.string() + ": not a gano checkpoint");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw ValidationError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.string();
  ckpt.meta = r.string();
  ckpt.step = r.u64();
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.string();
    ckpt.params.add(std::move(name), r.tensor());
  }
  ckpt.latents = r.tensor();
  return ckpt;
}

}  // namespace gano
