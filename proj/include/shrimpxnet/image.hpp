#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "shrimpxnet/error.hpp"
#include "shrimpxnet/tensor.hpp"

namespace sxn {

// Interleaved 8-bit image rows, 3 (RGB) or 4 (RGBA) channels.
struct ImageU8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

namespace detail {

struct JpegErrorTrap {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {0};
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, trap->message);
  std::longjmp(trap->jump, 1);
}

inline ImageU8 read_jpeg(const std::filesystem::path& path) {
  FILE* file = std::fopen(path.c_str(), "rb");
  if (!file) throw DataError("cannot open image file: " + path.string());

  jpeg_decompress_struct cinfo;
  JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = jpeg_error_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(file);
    throw DataError("cannot decode JPEG file " + path.string() + ": " + trap.message);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  ImageU8 img;
  img.width = cinfo.output_width;
  img.height = cinfo.output_height;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * 3));
  const std::size_t stride = static_cast<std::size_t>(img.width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    std::uint8_t* row = img.pixels.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(file);
  return img;
}

inline ImageU8 read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG file " + path.string() + ": " + msg);
  }
  const bool has_alpha = (png.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  png.format = has_alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;

  ImageU8 img;
  img.width = png.width;
  img.height = png.height;
  img.channels = has_alpha ? 4 : 3;
  img.pixels.resize(static_cast<std::size_t>(PNG_IMAGE_SIZE(png)));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG file " + path.string() + ": " + msg);
  }
  return img;
}

}  // namespace detail

// Decodes PNG or JPEG by content sniffing. PNGs come back as RGB or RGBA
// (palette/gray/16-bit inputs are normalized by libpng); JPEGs as RGB.
inline ImageU8 read_image(const std::filesystem::path& path) {
  std::FILE* probe = std::fopen(path.c_str(), "rb");
  if (!probe) throw DataError("cannot open image file: " + path.string());
  unsigned char sig[4] = {0};
  const std::size_t got = std::fread(sig, 1, 4, probe);
  std::fclose(probe);
  if (got >= 4 && sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') {
    return detail::read_png(path);
  }
  if (got >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) {
    return detail::read_jpeg(path);
  }
  throw DataError("unsupported image format (not PNG or JPEG): " + path.string());
}

inline void write_jpeg(const std::filesystem::path& path, const ImageU8& img, int quality = 92) {
  if (img.channels != 3) throw Error("write_jpeg supports 3-channel images");
  FILE* file = std::fopen(path.c_str(), "wb");
  if (!file) throw IoError("cannot open file for writing: " + path.string());

  jpeg_compress_struct cinfo;
  detail::JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = detail::jpeg_error_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(file);
    throw IoError("cannot encode JPEG file " + path.string() + ": " + trap.message);
  }

  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(img.width * 3);
  while (cinfo.next_scanline < cinfo.image_height) {
    const std::uint8_t* row = img.pixels.data() + cinfo.next_scanline * stride;
    JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(file);
}

inline void write_png(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels != 3 && img.channels != 4) {
    throw Error("write_png supports 3- or 4-channel images");
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot write PNG file " + path.string() + ": " + msg);
  }
}

// [C,H,W] float tensor in [0,1] from interleaved bytes.
inline Tensor<float> image_to_tensor(const ImageU8& img) {
  Tensor<float> out({img.channels, img.height, img.width});
  const std::int64_t plane = img.height * img.width;
  for (std::int64_t y = 0; y < img.height; ++y) {
    for (std::int64_t x = 0; x < img.width; ++x) {
      const std::uint8_t* px = img.pixels.data() + (y * img.width + x) * img.channels;
      for (std::int64_t c = 0; c < img.channels; ++c) {
        out[c * plane + y * img.width + x] = static_cast<float>(px[c]) / 255.0f;
      }
    }
  }
  return out;
}

inline ImageU8 tensor_to_image(const Tensor<float>& t) {
  if (t.rank() != 3 || (t.dim(0) != 3 && t.dim(0) != 4)) {
    throw ShapeError("tensor_to_image expects [3|4,H,W], got " + shape_str(t.shape()));
  }
  ImageU8 img;
  img.channels = t.dim(0);
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(static_cast<std::size_t>(img.channels * img.height * img.width));
  const std::int64_t plane = img.height * img.width;
  for (std::int64_t y = 0; y < img.height; ++y) {
    for (std::int64_t x = 0; x < img.width; ++x) {
      std::uint8_t* px = img.pixels.data() + (y * img.width + x) * img.channels;
      for (std::int64_t c = 0; c < img.channels; ++c) {
        float v = t[c * plane + y * img.width + x];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        px[c] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
      }
    }
  }
  return img;
}

// Bilinear resize of a [C,H,W] tensor using half-pixel centers.
inline Tensor<float> resize_bilinear(const Tensor<float>& src, std::int64_t out_h,
                                     std::int64_t out_w) {
  if (src.rank() != 3) throw ShapeError("resize_bilinear expects [C,H,W], got " + shape_str(src.shape()));
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
  const std::int64_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  if (h == out_h && w == out_w) return src;
  Tensor<float> dst({c, out_h, out_w});
  const double scale_y = static_cast<double>(h) / static_cast<double>(out_h);
  const double scale_x = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::int64_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
    if (fy < 0) fy = 0;
    if (fy > static_cast<double>(h - 1)) fy = static_cast<double>(h - 1);
    const std::int64_t y0 = static_cast<std::int64_t>(fy);
    const std::int64_t y1 = y0 + 1 < h ? y0 + 1 : h - 1;
    const float wy = static_cast<float>(fy - static_cast<double>(y0));
    for (std::int64_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
      if (fx < 0) fx = 0;
      if (fx > static_cast<double>(w - 1)) fx = static_cast<double>(w - 1);
      const std::int64_t x0 = static_cast<std::int64_t>(fx);
      const std::int64_t x1 = x0 + 1 < w ? x0 + 1 : w - 1;
      const float wx = static_cast<float>(fx - static_cast<double>(x0));
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const float a = src.at3(ch, y0, x0), b = src.at3(ch, y0, x1);
        const float d = src.at3(ch, y1, x0), e = src.at3(ch, y1, x1);
        const float top = a + (b - a) * wx;
        const float bot = d + (e - d) * wx;
        dst.at3(ch, y, x) = top + (bot - top) * wy;
      }
    }
  }
  return dst;
}

}  // namespace sxn
