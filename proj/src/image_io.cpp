#include "subcellsam/image_io.hpp"

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

namespace subcellsam::io {
namespace {

namespace fs = std::filesystem;

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool is_tiff(const fs::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".tif" || ext == ".tiff";
}

void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
}

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct TiffCloser {
  void operator()(TIFF* t) const { if (t) TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

void silence_libtiff() {
  static const bool once = [] {
    TIFFSetWarningHandler(nullptr);
    TIFFSetErrorHandler(nullptr);
    return true;
  }();
  (void)once;
}

// Samples of one decoded raster, interleaved, before normalization.
struct Decoded {
  Size size;
  int samples = 1;
  int bits = 8;
  bool floating = false;
  std::vector<double> values;
};

std::vector<Decoded> read_tiff(const fs::path& path) {
  silence_libtiff();
  TiffPtr tif(TIFFOpen(path.string().c_str(), "r"));
  if (!tif) throw Error(ErrorCode::FormatError, "cannot open TIFF " + path.string());

  std::vector<Decoded> pages;
  do {
    std::uint32_t w = 0, h = 0;
    std::uint16_t bits = 8, samples = 1, format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
    TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &samples);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
    if (w == 0 || h == 0) throw Error(ErrorCode::FormatError, "TIFF page without dimensions");
    if (TIFFIsTiled(tif.get())) throw Error(ErrorCode::FormatError, "tiled TIFF is not supported");
    if (planar != PLANARCONFIG_CONTIG && samples > 1) {
      throw Error(ErrorCode::FormatError, "planar-separate TIFF is not supported");
    }
    const bool floating = format == SAMPLEFORMAT_IEEEFP;
    if (!((bits == 8 || bits == 16) && format == SAMPLEFORMAT_UINT) && !(floating && bits == 32)) {
      throw Error(ErrorCode::FormatError, "unsupported TIFF sample layout");
    }

    Decoded page{Size{static_cast<int>(w), static_cast<int>(h)}, samples, bits, floating, {}};
    page.values.reserve(static_cast<std::size_t>(w) * h * samples);
    std::vector<unsigned char> line(TIFFScanlineSize(tif.get()));
    for (std::uint32_t row = 0; row < h; ++row) {
      if (TIFFReadScanline(tif.get(), line.data(), row) < 0) {
        throw Error(ErrorCode::FormatError, "truncated TIFF " + path.string());
      }
      for (std::size_t i = 0; i < static_cast<std::size_t>(w) * samples; ++i) {
        if (floating) {
          page.values.push_back(reinterpret_cast<const float*>(line.data())[i]);
        } else if (bits == 16) {
          page.values.push_back(reinterpret_cast<const std::uint16_t*>(line.data())[i]);
        } else {
          page.values.push_back(line[i]);
        }
      }
    }
    pages.push_back(std::move(page));
  } while (TIFFReadDirectory(tif.get()));
  return pages;
}

Decoded read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw Error(ErrorCode::FileNotFound, path.string());
  unsigned char header[8] = {};
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorCode::FormatError, "not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::FormatError, "libpng initialization failed");
  }
  Decoded out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::FormatError, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  out.size = Size{static_cast<int>(png_get_image_width(png, info)),
                  static_cast<int>(png_get_image_height(png, info))};
  out.samples = png_get_channels(png, info);
  out.bits = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * out.size.height);
  rows.resize(out.size.height);
  for (int y = 0; y < out.size.height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = out.size.pixels() * out.samples;
  out.values.reserve(count);
  for (int y = 0; y < out.size.height; ++y) {
    const png_byte* row = rows[y];
    for (std::size_t i = 0; i < static_cast<std::size_t>(out.size.width) * out.samples; ++i) {
      if (out.bits == 16) {
        out.values.push_back((row[2 * i] << 8) | row[2 * i + 1]);
      } else {
        out.values.push_back(row[i]);
      }
    }
  }
  return out;
}

std::vector<Decoded> read_any(const fs::path& path) {
  require_exists(path);
  if (is_tiff(path)) return read_tiff(path);
  if (lower_extension(path) == ".png") return {read_png(path)};
  throw Error(ErrorCode::FormatError, "unsupported image extension: " + path.string());
}

void write_png16(const fs::path& path, const Raster<std::uint32_t>& labels) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::FormatError, "libpng initialization failed");
  }
  const int w = labels.width();
  const int h = labels.height();
  std::vector<png_byte> buffer(static_cast<std::size_t>(w) * h * 2);
  for (std::size_t i = 0; i < labels.values().size(); ++i) {
    const auto v = labels.values()[i];
    buffer[2 * i] = static_cast<png_byte>(v >> 8);
    buffer[2 * i + 1] = static_cast<png_byte>(v & 0xff);
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * 2;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::FormatError, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_tiff_pages(const fs::path& path, Size size,
                      const std::vector<std::vector<std::uint16_t>>& pages) {
  silence_libtiff();
  TiffPtr tif(TIFFOpen(path.string().c_str(), "w"));
  if (!tif) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  for (const auto& page : pages) {
    TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(size.width));
    TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(size.height));
    TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, 16);
    TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, 1);
    TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_UINT);
    TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(tif.get(), TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, static_cast<std::uint32_t>(size.height));
    if (pages.size() > 1) TIFFSetField(tif.get(), TIFFTAG_SUBFILETYPE, FILETYPE_PAGE);
    std::vector<std::uint16_t> line(size.width);
    for (int y = 0; y < size.height; ++y) {
      std::copy_n(page.begin() + static_cast<std::ptrdiff_t>(y) * size.width, size.width, line.begin());
      if (TIFFWriteScanline(tif.get(), line.data(), y, 0) < 0) {
        throw Error(ErrorCode::FormatError, "TIFF encoding failed for " + path.string());
      }
    }
    TIFFWriteDirectory(tif.get());
  }
}

}  // namespace

std::vector<Channel> load_channels(const std::filesystem::path& path) {
  std::vector<Channel> channels;
  for (const auto& page : read_any(path)) {
    const double scale = page.floating ? 1.0 : (page.bits == 16 ? 65535.0 : 255.0);
    for (int s = 0; s < page.samples; ++s) {
      Channel c(page.size);
      auto dst = c.values();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = page.values[i * page.samples + s] / scale;
        dst[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      channels.push_back(std::move(c));
    }
  }
  if (channels.size() > 1) {
    for (const auto& c : channels) {
      if (c.size() != channels.front().size()) {
        throw Error(ErrorCode::DimensionMismatch, "pages differ in size: " + path.string());
      }
    }
  }
  return channels;
}

Raster<std::uint32_t> load_labels(const std::filesystem::path& path) {
  auto pages = read_any(path);
  const auto& page = pages.front();
  if (page.floating) throw Error(ErrorCode::FormatError, "label image must be integer-valued");
  Raster<std::uint32_t> out(page.size);
  auto dst = out.values();
  // Color ground truth: any nonzero component marks the pixel; label = first component.
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::uint32_t v = 0;
    for (int s = 0; s < page.samples && v == 0; ++s) {
      v = static_cast<std::uint32_t>(page.values[i * page.samples + s]);
    }
    dst[i] = v;
  }
  return out;
}

void save_labels(const std::filesystem::path& path, const Raster<std::uint32_t>& labels) {
  for (auto v : labels.values()) {
    if (v > 0xffff) throw Error(ErrorCode::InvalidArgument, "label exceeds 16-bit range");
  }
  if (is_tiff(path)) {
    std::vector<std::uint16_t> page(labels.values().begin(), labels.values().end());
    write_tiff_pages(path, labels.size(), {page});
  } else {
    write_png16(path, labels);
  }
}

void save_channels_tiff(const std::filesystem::path& path, const std::vector<Channel>& channels) {
  if (channels.empty()) throw Error(ErrorCode::InvalidArgument, "no channels to write");
  std::vector<std::vector<std::uint16_t>> pages;
  for (const auto& c : channels) {
    if (c.size() != channels.front().size()) throw Error(ErrorCode::DimensionMismatch, "channels differ in size");
    std::vector<std::uint16_t> page(c.values().size());
    for (std::size_t i = 0; i < page.size(); ++i) {
      page[i] = static_cast<std::uint16_t>(std::lround(std::clamp(c.values()[i], 0.0f, 1.0f) * 65535.0));
    }
    pages.push_back(std::move(page));
  }
  write_tiff_pages(path, channels.front().size(), pages);
}

}  // namespace subcellsam::io
