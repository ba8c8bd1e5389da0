#include "gazealign/attention_map.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gazealign/errors.hpp"

namespace gazealign {
namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', 'M'};
constexpr std::size_t kMaxPixels = 1u << 28;

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void commit_atomic(const std::filesystem::path& tmp,
                   const std::filesystem::path& target) {
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ParseError("atomic rename failed for: " + target.string());
  }
}

}  // namespace

AttentionMap::AttentionMap(int h, int w, double fill) : height(h), width(w) {
  if (h < 1 || w < 1) throw ShapeError("attention map dimensions must be >= 1");
  values.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w),
                fill);
}

AttentionMap load_atnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open map file: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("bad magic in map file: " + path);

  const std::uint32_t h = read_u32_le(in);
  const std::uint32_t w = read_u32_le(in);
  if (!in) throw ParseError("truncated header in map file: " + path);
  if (h < 1 || w < 1 ||
      static_cast<std::uint64_t>(h) * w > kMaxPixels)
    throw ShapeError("unreasonable map dimensions in: " + path);

  AttentionMap map(static_cast<int>(h), static_cast<int>(w));
  std::vector<float> raw(map.size());
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in) throw ParseError("truncated values in map file: " + path);

  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = static_cast<double>(raw[i]);
    if (!std::isfinite(v) || v < 0.0) {
      std::ostringstream msg;
      msg << "map file holds a negative or non-finite value at index " << i
          << ": " << path;
      throw ParseError(msg.str());
    }
    map.values[i] = v;
  }
  return map;
}

void save_atnm(const AttentionMap& map, const std::string& path) {
  if (map.height < 1 || map.width < 1 ||
      map.values.size() !=
          static_cast<std::size_t>(map.height) * map.width)
    throw ShapeError("attention map shape is inconsistent");
  for (double v : map.values) {
    if (!std::isfinite(v) || v < 0.0)
      throw ShapeError("refusing to serialize negative or non-finite values");
  }

  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open file for writing: " + tmp.string());
    out.write(kMagic, 4);
    write_u32_le(out, static_cast<std::uint32_t>(map.height));
    write_u32_le(out, static_cast<std::uint32_t>(map.width));
    std::vector<float> raw(map.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
      raw[i] = static_cast<float>(map.values[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!out) throw ParseError("write failed: " + tmp.string());
  }
  commit_atomic(tmp, target);
}

void save_pgm16(const AttentionMap& map, const std::string& path) {
  if (map.height < 1 || map.width < 1)
    throw ShapeError("attention map shape is inconsistent");

  double lo = map.values[0], hi = map.values[0];
  for (double v : map.values) {
    lo = v < lo ? v : lo;
    hi = v > hi ? v : hi;
  }
  const double span = hi - lo;

  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open file for writing: " + tmp.string());
    out << "P5\n" << map.width << " " << map.height << "\n65535\n";
    for (double v : map.values) {
      unsigned scaled = 0;
      if (span > 0.0)
        scaled = static_cast<unsigned>(
            std::lround((v - lo) / span * 65535.0));
      // 16-bit PGM samples are big-endian
      const unsigned char b[2] = {static_cast<unsigned char>(scaled >> 8),
                                  static_cast<unsigned char>(scaled & 0xff)};
      out.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!out) throw ParseError("write failed: " + tmp.string());
  }
  commit_atomic(tmp, target);
}

}  // namespace gazealign
