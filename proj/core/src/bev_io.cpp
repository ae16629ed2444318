#include "bevloc/bev_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

static_assert(std::endian::native == std::endian::little,
              "bevloc file formats assume a little-endian host");

namespace bevloc {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

void write_png(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("write_png: pixel buffer does not match dimensions");
  }

  // Raw scanlines, filter byte 0 per row.
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * height);
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + r * stride, pixels.begin() + (r + 1) * stride);
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("write_png: zlib compression failed");
  }
  comp.resize(comp_len);

  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                      // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);                  // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);

  std::vector<std::uint8_t> png = {137, 80, 78, 71, 13, 10, 26, 10};
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", comp);
  append_chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!f) throw std::runtime_error("write_png: short write to " + path.string());
}

}  // namespace

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels) {
  write_png(path, width, height, 1, pixels);
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
  write_png(path, width, height, 3, pixels);
}

void save_bev_png(const BevImage& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(img.side) * img.side);
  for (int r = 0; r < img.side; ++r) {
    for (int c = 0; c < img.side; ++c) {
      px[static_cast<std::size_t>(r) * img.side + c] =
          static_cast<std::uint8_t>(std::lround(255.0 * img.pixels(r, c)));
    }
  }
  write_png_gray8(path, img.side, img.side, px);
}

void save_bev_f32(const BevImage& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_bev_f32: cannot open " + path.string());
  for (int r = 0; r < img.side; ++r) {
    for (int c = 0; c < img.side; ++c) {
      const float v = static_cast<float>(img.pixels(r, c));
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!f) throw std::runtime_error("save_bev_f32: short write to " + path.string());
}

BevImage load_bev_f32(const std::filesystem::path& path, int side) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_bev_f32: cannot open " + path.string());
  BevImage img;
  img.side = side;
  img.pixels.resize(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      float v = 0.0f;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!f) throw std::runtime_error("load_bev_f32: truncated file " + path.string());
      img.pixels(r, c) = v;
    }
  }
  return img;
}

}  // namespace bevloc
