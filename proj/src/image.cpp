#include "promptecho/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>

#include "promptecho/errors.hpp"
#include "promptecho/hash.hpp"

namespace promptecho {

std::string image_hash(const Image& img) {
  uint64_t h = 0xcbf29ce484222325ULL;
  uint32_t dims[2] = {static_cast<uint32_t>(img.width), static_cast<uint32_t>(img.height)};
  h = fnv1a64({reinterpret_cast<const uint8_t*>(dims), sizeof(dims)}, h);
  h = fnv1a64({img.pixels.data(), img.pixels.size()}, h);
  return to_hex(h);
}

namespace {

struct PngWriteCtx {
  std::vector<uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
  ctx->out->insert(ctx->out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct PngReadCtx {
  const std::vector<uint8_t>* in;
  size_t pos;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + len > ctx->in->size()) {
    png_error(png, "truncated PNG stream");
  }
  std::memcpy(data, ctx->in->data() + ctx->pos, len);
  ctx->pos += len;
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3) {
    throw IoError("encode_png: malformed image buffer");
  }
  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("encode_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("encode_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png: libpng error");
  }
  PngWriteCtx ctx{&out};
  png_set_write_fn(png, &ctx, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.at(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(const std::vector<uint8_t>& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("decode_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("decode_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decode_png: not a valid PNG stream");
  }
  PngReadCtx ctx{&bytes, 0};
  png_set_read_fn(png, &ctx, png_read_from_vector);
  png_read_info(png, info);

  // Normalize whatever we were given to 8-bit RGB.
  png_byte color_type = png_get_color_type(png, info);
  png_byte bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image img(static_cast<int>(png_get_image_width(png, info)),
            static_cast<int>(png_get_image_height(png, info)));
  img.provenance = "external";
  if (png_get_rowbytes(png, info) != static_cast<size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decode_png: unexpected row size after conversion");
  }
  for (int y = 0; y < img.height; ++y) {
    png_read_row(png, img.at(0, y), nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = encode_png(img);
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path.string());
  size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) throw IoError("short write: " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open image: " + path.string());
  std::vector<uint8_t> bytes;
  uint8_t buf[65536];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) bytes.insert(bytes.end(), buf, buf + n);
  std::fclose(f);
  return decode_png(bytes);
}

}  // namespace promptecho
