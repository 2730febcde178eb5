#include "protoncast/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "protoncast/error.hpp"

namespace protoncast {

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void append_le_doubles(std::string& out, std::span<const double> values) {
  const auto start = out.size();
  out.resize(start + values.size() * 8);
  char* dst = out.data() + start;
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      *dst++ = static_cast<char>(bits & 0xffu);
      bits >>= 8;
    }
  }
}

std::vector<double> read_le_doubles(std::string_view bytes, std::size_t offset, std::size_t count) {
  if (offset + count * 8 > bytes.size())
    throw Error(ErrorCode::CorruptCheckpoint, "binary payload shorter than declared");
  std::vector<double> out(count);
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | src[i * 8 + static_cast<std::size_t>(b)];
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace protoncast
