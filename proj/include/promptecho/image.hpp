#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace promptecho {

/// Simple 8-bit RGB raster, row-major. Used both for scene images and for
/// text posters. `provenance` records whether pixels came from our renderer
/// or from an external file.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // RGB, 3 bytes per pixel
  std::string provenance = "rendered";

  Image() = default;
  Image(int w, int h, uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t* at(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
  const uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<size_t>(y) * width + x) * 3];
  }

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    uint8_t* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  bool same_pixels(const Image& other) const {
    return width == other.width && height == other.height && pixels == other.pixels;
  }
};

/// Hex content hash over dimensions and pixel bytes (provenance excluded).
std::string image_hash(const Image& img);

// PNG round-trip. Files are written as 8-bit RGB; read converts any PNG
// to that format. Both throw IoError on failure.
void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

// In-memory PNG encode/decode, used by the adapter wire protocol.
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<uint8_t>& bytes);

}  // namespace promptecho
