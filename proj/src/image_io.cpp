#include "fundus/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "fundus/error.hpp"

namespace fundus::ingest {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png(std::FILE* fp, const std::string& uri) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "png: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: allocation failed");
  }
  std::vector<png_byte> storage;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UsageError("unreadable image file: " + uri);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (w == 0 || h == 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UsageError("zero-area image: " + uri);
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    color_type = PNG_COLOR_TYPE_RGB;
  }
  if (color_type != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UsageError("non-RGB channel count in " + uri);
  }
  if (bit_depth == 16) png_set_swap(png);  // native-endian 16-bit samples

  png_read_update_info(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  storage.resize(row_bytes * h);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = storage.data() + y * row_bytes;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(h), static_cast<int>(w));
  if (bit_depth == 16) {
    for (png_uint_32 y = 0; y < h; ++y) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(row_ptrs[y]);
      for (png_uint_32 x = 0; x < w * 3; ++x)
        img.data[(static_cast<std::size_t>(y) * w * 3) + x] =
            static_cast<float>(row[x] / 65535.0);
    }
  } else {
    for (png_uint_32 y = 0; y < h; ++y) {
      const png_byte* row = row_ptrs[y];
      for (png_uint_32 x = 0; x < w * 3; ++x)
        img.data[(static_cast<std::size_t>(y) * w * 3) + x] =
            static_cast<float>(row[x] / 255.0);
    }
  }
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

Image load_jpeg(std::FILE* fp, const std::string& uri) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw UsageError("unreadable image file: " + uri);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  if (cinfo.output_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw UsageError("non-RGB channel count in " + uri);
  }
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  if (w == 0 || h == 0) {
    jpeg_destroy_decompress(&cinfo);
    throw UsageError("zero-area image: " + uri);
  }
  Image img(h, w);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(w) * 3);
  JSAMPROW row_ptr = row.data();
  int y = 0;
  while (cinfo.output_scanline < cinfo.output_height) {
    jpeg_read_scanlines(&cinfo, &row_ptr, 1);
    for (int x = 0; x < w * 3; ++x)
      img.data[(static_cast<std::size_t>(y) * w * 3) + x] =
          static_cast<float>(row[static_cast<std::size_t>(x)] / 255.0);
    ++y;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

Image load_image(const std::string& uri) {
  FilePtr fp(std::fopen(uri.c_str(), "rb"));
  require_input(fp != nullptr, "cannot open image: " + uri);
  unsigned char magic[8] = {0};
  const std::size_t got = std::fread(magic, 1, sizeof(magic), fp.get());
  std::rewind(fp.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(fp.get(), uri);
  if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8)
    return load_jpeg(fp.get(), uri);
  throw UsageError("not a PNG or JPEG file: " + uri);
}

void save_png(const std::string& path, const Image& img) {
  require(img.height > 0 && img.width > 0, "save_png: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, "cannot write image: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "png: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: allocation failed");
  }
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  bytes.resize(img.pixel_count() * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    float v = img.data[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    bytes[i] = static_cast<png_byte>(v * 255.0f + 0.5f);
  }
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] =
        bytes.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace fundus::ingest
