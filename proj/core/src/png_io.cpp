#include "bria/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "bria/error.hpp"

namespace bria::png {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::IoFailure, std::string("libpng: ") + msg);
}
void png_warn(png_structp, png_const_charp) {}

class Reader {
public:
  explicit Reader(const std::filesystem::path& path) : file_(open(path, "rb")), path_(path) {
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw Error(ErrorCode::IoFailure, "not a PNG: " + path.string());
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  ~Reader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  Info info() const {
    return Info{static_cast<int>(png_get_image_width(png_, info_)),
                static_cast<int>(png_get_image_height(png_, info_)),
                png_get_bit_depth(png_, info_), png_get_channels(png_, info_)};
  }

  template <typename T>
  Image<T> read_gray() {
    const Info in = info();
    const auto color = png_get_color_type(png_, info_);
    if (color != PNG_COLOR_TYPE_GRAY) {
      throw Error(ErrorCode::IoFailure, "expected grayscale PNG: " + path_.string());
    }
    if (in.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png_);
    if (in.bit_depth == 16) {
      if constexpr (sizeof(T) == 1) png_set_strip_16(png_);
      else png_set_swap(png_);
    }
    png_read_update_info(png_, info_);
    const int depth = png_get_bit_depth(png_, info_);
    Image<T> img(in.width, in.height);
    std::vector<png_byte> row(png_get_rowbytes(png_, info_));
    for (int y = 0; y < in.height; ++y) {
      png_read_row(png_, row.data(), nullptr);
      auto dst = img.row(y);
      if (depth == 16) {
        const auto* src = reinterpret_cast<const std::uint16_t*>(row.data());
        for (int x = 0; x < in.width; ++x) dst[x] = static_cast<T>(src[x]);
      } else {
        for (int x = 0; x < in.width; ++x) dst[x] = static_cast<T>(row[x]);
      }
    }
    png_read_end(png_, nullptr);
    return img;
  }

private:
  FilePtr file_;
  std::filesystem::path path_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

void write_rows(const std::filesystem::path& path, int width, int height, int depth, int color, int level,
                const std::vector<const png_byte*>& rows, bool swap16) {
  auto tmp = path;
  tmp += ".tmp";
  {
    FilePtr f = open(tmp, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    struct Guard {
      png_structp* p;
      png_infop* i;
      ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    png_init_io(png, f.get());
    png_set_compression_level(png, level);
    png_set_IHDR(png, info, width, height, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (swap16) png_set_swap(png);
    for (const png_byte* r : rows) png_write_row(png, r);
    png_write_end(png, nullptr);
    if (std::fflush(f.get()) != 0) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + path.string());
}

}  // namespace

Info probe(const std::filesystem::path& path) { return Reader(path).info(); }

Plane16 read_gray16(const std::filesystem::path& path) { return Reader(path).read_gray<std::uint16_t>(); }

Image<std::uint8_t> read_gray8(const std::filesystem::path& path) {
  return Reader(path).read_gray<std::uint8_t>();
}

void write_gray16(const std::filesystem::path& path, const Plane16& img, int level) {
  std::vector<const png_byte*> rows(img.height());
  for (int y = 0; y < img.height(); ++y) rows[y] = reinterpret_cast<const png_byte*>(img.row(y).data());
  write_rows(path, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY, level, rows, true);
}

void write_gray8(const std::filesystem::path& path, const Image<std::uint8_t>& img, int level) {
  std::vector<const png_byte*> rows(img.height());
  for (int y = 0; y < img.height(); ++y) rows[y] = img.row(y).data();
  write_rows(path, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, level, rows, false);
}

void write_rgb8(const std::filesystem::path& path, const Rgb8& img, int level) {
  std::vector<const png_byte*> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.data.data() + static_cast<std::size_t>(y) * 3 * img.width;
  write_rows(path, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, level, rows, false);
}

}  // namespace bria::png
