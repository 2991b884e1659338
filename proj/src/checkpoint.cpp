#include "teeg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "teeg/common.hpp"

namespace teeg {

namespace {
constexpr char kMagic[] = "TEEG1";
constexpr size_t kMagicLen = 5;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& off) {
  if (off + sizeof(T) > in.size())
    fail("checkpoint: truncated at byte " + std::to_string(off));
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}
}  // namespace

std::string checkpoint_to_bytes(const TensorMap& tensors) {
  std::string out(kMagic, kMagicLen);
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<uint16_t>::max())
      fail("checkpoint: tensor name too long: " + name);
    if (t.rank() == 0 || t.rank() > 255) fail("checkpoint: bad rank for '" + name + "'");
    put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.append(name);
    put<uint8_t>(out, static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape) {
      if (d <= 0 || d > std::numeric_limits<uint32_t>::max())
        fail("checkpoint: dimension out of range for '" + name + "'");
      put<uint32_t>(out, static_cast<uint32_t>(d));
    }
    for (double v : t.data) put<double>(out, v);
  }
  return out;
}

TensorMap checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
    fail("checkpoint: unknown magic (expected TEEG1)");
  TensorMap tensors;
  size_t off = kMagicLen;
  while (off < bytes.size()) {
    const uint16_t name_len = take<uint16_t>(bytes, off);
    if (off + name_len > bytes.size())
      fail("checkpoint: truncated name at byte " + std::to_string(off));
    std::string name(bytes.data() + off, name_len);
    off += name_len;
    const uint8_t rank = take<uint8_t>(bytes, off);
    if (rank == 0) fail("checkpoint: zero rank for '" + name + "'");
    Tensor t;
    int64_t n = 1;
    for (int r = 0; r < rank; ++r) {
      const uint32_t d = take<uint32_t>(bytes, off);
      if (d == 0) fail("checkpoint: zero dimension for '" + name + "'");
      t.shape.push_back(static_cast<int64_t>(d));
      n *= d;
    }
    if (off + static_cast<size_t>(n) * sizeof(double) > bytes.size())
      fail("checkpoint: truncated payload for '" + name + "' at byte " + std::to_string(off));
    t.data.resize(static_cast<size_t>(n));
    std::memcpy(t.data.data(), bytes.data() + off, static_cast<size_t>(n) * sizeof(double));
    off += static_cast<size_t>(n) * sizeof(double);
    if (tensors.count(name)) fail("checkpoint: duplicate tensor '" + name + "'");
    tensors[name] = std::move(t);
  }
  return tensors;
}

void save_checkpoint(const std::string& path, const TensorMap& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("checkpoint: cannot open for write: " + path);
  const std::string bytes = checkpoint_to_bytes(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail("checkpoint: write failed: " + path);
}

TensorMap load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("checkpoint: cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace teeg
