// SPDX-License-Identifier: Apache-2.0
#include "textseg/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "textseg/common.hpp"

namespace textseg {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, crc);
}

const uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png_gray8(const std::string& path, const std::vector<uint8_t>& pixels, size_t width,
                     size_t height) {
  if (pixels.size() != width * height)
    throw IoError("png write: pixel buffer does not match " + std::to_string(width) + "x" +
                  std::to_string(height));

  std::vector<uint8_t> raw((width + 1) * height);
  for (size_t y = 0; y < height; ++y) {
    raw[y * (width + 1)] = 0;  // filter 0
    std::memcpy(raw.data() + y * (width + 1) + 1, pixels.data() + y * width, width);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("png write: deflate failed");
  comp.resize(comp_len);

  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(width));
  put_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);

  std::vector<uint8_t> out(kSig, kSig + 8);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("png write: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("png write: short write to " + path);
}

std::vector<uint8_t> read_png_gray8(const std::string& path, size_t& width, size_t& height) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("png read: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kSig, 8) != 0)
    throw IoError("png read: " + path + " is not a png");

  width = height = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  bool saw_ihdr = false;
  while (pos + 8 <= buf.size()) {
    uint32_t len = get_u32(buf.data() + pos);
    if (pos + 12 + len > buf.size()) throw IoError("png read: truncated chunk in " + path);
    const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
    const uint8_t* data = buf.data() + pos + 8;
    uint32_t crc_stored = get_u32(buf.data() + pos + 8 + len);
    uint32_t crc_calc = crc32(0L, Z_NULL, 0);
    crc_calc = crc32(crc_calc, buf.data() + pos + 4, len + 4);
    if (crc_stored != crc_calc) throw IoError("png read: bad crc in " + path);
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("png read: bad IHDR in " + path);
      width = get_u32(data);
      height = get_u32(data + 4);
      if (data[8] != 8 || data[9] != 0)
        throw IoError("png read: " + path + " is not 8-bit grayscale");
      if (data[12] != 0) throw IoError("png read: interlaced png unsupported: " + path);
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || width == 0 || height == 0) throw IoError("png read: missing IHDR in " + path);

  std::vector<uint8_t> raw((width + 1) * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw IoError("png read: inflate failed for " + path);

  std::vector<uint8_t> pixels(width * height);
  std::vector<uint8_t> prev(width, 0);
  for (size_t y = 0; y < height; ++y) {
    uint8_t filter = raw[y * (width + 1)];
    const uint8_t* src = raw.data() + y * (width + 1) + 1;
    uint8_t* dst = pixels.data() + y * width;
    for (size_t x = 0; x < width; ++x) {
      int a = x > 0 ? dst[x - 1] : 0;
      int b = prev[x];
      int c = x > 0 ? prev[x - 1] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("png read: unknown filter in " + path);
      }
      dst[x] = static_cast<uint8_t>(v & 0xff);
    }
    std::memcpy(prev.data(), dst, width);
  }
  return pixels;
}

}  // namespace textseg
