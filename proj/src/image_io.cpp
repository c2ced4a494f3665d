#include "asymvq/image_io.hpp"

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

namespace asymvq {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageIoError("cannot open " + path.string());
  return f;
}

Image8 read_png_file(const std::filesystem::path& path, int channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageIoError("invalid PNG " + path.string() + ": " + img.message);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageIoError("corrupt PNG " + path.string() + ": " + img.message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image8 read_jpeg_file(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  Image8 out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageIoError("corrupt JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = Image8(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height), 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
                    const std::vector<std::vector<std::uint8_t>>& rows) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw ImageIoError("failed writing " + path.string());
}

// 5x7 glyphs, one byte per column, bit 0 at the top. Covers ' ' .. 'Z'; lowercase is folded.
constexpr std::array<std::array<std::uint8_t, 5>, 59> kFont{{
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5F, 0x00, 0x00}, {0x00, 0x07, 0x00, 0x07, 0x00},
    {0x14, 0x7F, 0x14, 0x7F, 0x14}, {0x24, 0x2A, 0x7F, 0x2A, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x55, 0x22, 0x50}, {0x00, 0x05, 0x03, 0x00, 0x00}, {0x00, 0x1C, 0x22, 0x41, 0x00},
    {0x00, 0x41, 0x22, 0x1C, 0x00}, {0x08, 0x2A, 0x1C, 0x2A, 0x08}, {0x08, 0x08, 0x3E, 0x08, 0x08},
    {0x00, 0x50, 0x30, 0x00, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08}, {0x00, 0x60, 0x60, 0x00, 0x00},
    {0x20, 0x10, 0x08, 0x04, 0x02}, {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31}, {0x18, 0x14, 0x12, 0x7F, 0x10},
    {0x27, 0x45, 0x45, 0x45, 0x39}, {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E}, {0x00, 0x36, 0x36, 0x00, 0x00},
    {0x00, 0x56, 0x36, 0x00, 0x00}, {0x00, 0x08, 0x14, 0x22, 0x41}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x41, 0x22, 0x14, 0x08, 0x00}, {0x02, 0x01, 0x51, 0x09, 0x06}, {0x32, 0x49, 0x79, 0x41, 0x3E},
    {0x7E, 0x11, 0x11, 0x11, 0x7E}, {0x7F, 0x49, 0x49, 0x49, 0x36}, {0x3E, 0x41, 0x41, 0x41, 0x22},
    {0x7F, 0x41, 0x41, 0x22, 0x1C}, {0x7F, 0x49, 0x49, 0x49, 0x41}, {0x7F, 0x09, 0x09, 0x01, 0x01},
    {0x3E, 0x41, 0x41, 0x51, 0x32}, {0x7F, 0x08, 0x08, 0x08, 0x7F}, {0x00, 0x41, 0x7F, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3F, 0x01}, {0x7F, 0x08, 0x14, 0x22, 0x41}, {0x7F, 0x40, 0x40, 0x40, 0x40},
    {0x7F, 0x02, 0x04, 0x02, 0x7F}, {0x7F, 0x04, 0x08, 0x10, 0x7F}, {0x3E, 0x41, 0x41, 0x41, 0x3E},
    {0x7F, 0x09, 0x09, 0x09, 0x06}, {0x3E, 0x41, 0x51, 0x21, 0x5E}, {0x7F, 0x09, 0x19, 0x29, 0x46},
    {0x46, 0x49, 0x49, 0x49, 0x31}, {0x01, 0x01, 0x7F, 0x01, 0x01}, {0x3F, 0x40, 0x40, 0x40, 0x3F},
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, {0x7F, 0x20, 0x18, 0x20, 0x7F}, {0x63, 0x14, 0x08, 0x14, 0x63},
    {0x03, 0x04, 0x78, 0x04, 0x03}, {0x61, 0x51, 0x49, 0x45, 0x43},
}};

void draw_text(Image8& img, int x, int y, const std::string& text) {
  for (char raw : text) {
    char ch = raw;
    if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
    if (ch == '_') ch = '-';
    if (ch < ' ' || ch > 'Z') ch = '?';
    const auto& glyph = kFont[static_cast<std::size_t>(ch - ' ')];
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row) {
        const int px = x + col;
        const int py = y + row;
        if (((glyph[col] >> row) & 1) == 0 || px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
        for (int c = 0; c < img.channels; ++c) img.at(px, py, c) = 0;
      }
    x += 6;
  }
}

// Separable area resampling of one axis: each output sample averages the source interval it
// covers, weighting partially covered source samples by their overlap.
std::vector<std::vector<std::pair<int, double>>> area_weights(int src_begin, int src_len, int dst_len) {
  std::vector<std::vector<std::pair<int, double>>> weights(static_cast<std::size_t>(dst_len));
  const double scale = static_cast<double>(src_len) / dst_len;
  for (int i = 0; i < dst_len; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    for (int s = static_cast<int>(std::floor(lo)); s < static_cast<int>(std::ceil(hi)); ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 0) weights[i].emplace_back(src_begin + std::clamp(s, 0, src_len - 1), overlap / scale);
    }
  }
  return weights;
}

}  // namespace

Image8 read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  unsigned char magic[8]{};
  in.read(reinterpret_cast<char*>(magic), 8);
  if (in.gcount() >= 8 && png_sig_cmp(magic, 0, 8) == 0) return read_png_file(path, 3);
  if (in.gcount() >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return read_jpeg_file(path);
  throw ImageIoError("unrecognised image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 3 && image.channels != 1) throw ImageIoError("write_png: 1 or 3 channels expected");
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height));
  const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y)
    rows[y].assign(image.pixels.begin() + static_cast<std::ptrdiff_t>(y * stride),
                   image.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * stride));
  write_png_rows(path, image.width, image.height, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_mask_png(const std::filesystem::path& path, const MaskGrid& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(h), std::vector<std::uint8_t>((w + 7) / 8, 0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(y, x)) rows[y][x / 8] |= static_cast<std::uint8_t>(0x80 >> (x % 8));
  write_png_rows(path, w, h, PNG_COLOR_TYPE_GRAY, 1, rows);
}

MaskGrid read_mask_png(const std::filesystem::path& path) {
  Image8 gray = read_png_file(path, 1);
  MaskGrid m(gray.height, gray.width);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) m(y, x) = gray.at(x, y, 0) >= 128 ? 1 : 0;
  return m;
}

Image8 center_crop_resize(const Image8& image, int size) {
  if (size <= 0) throw ImageIoError("center_crop_resize: non-positive size");
  if (image.width <= 0 || image.height <= 0) throw ImageIoError("center_crop_resize: empty image");
  const int side = std::min(image.width, image.height);
  const int x0 = (image.width - side) / 2;
  const int y0 = (image.height - side) / 2;
  const auto wx = area_weights(x0, side, size);
  const auto wy = area_weights(y0, side, size);
  // Horizontal pass over the cropped rows, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(side) * size * image.channels);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < image.channels; ++c) {
        double acc = 0;
        for (const auto& [sx, wgt] : wx[x]) acc += wgt * image.at(sx, y0 + y, c);
        tmp[(static_cast<std::size_t>(y) * size + x) * image.channels + c] = acc;
      }
  Image8 out(size, size, image.channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < image.channels; ++c) {
        double acc = 0;
        for (const auto& [sy, wgt] : wy[y]) acc += wgt * tmp[(static_cast<std::size_t>(sy - y0) * size + x) * image.channels + c];
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
  return out;
}

template <typename S>
Tensor<S> images_to_tensor(const std::vector<Image8>& images) {
  if (images.empty()) throw ImageIoError("images_to_tensor: no images");
  const int h = images.front().height;
  const int w = images.front().width;
  Tensor<S> out(Shape{static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image8& img = images[n];
    if (img.width != w || img.height != h || img.channels != 3) throw ImageIoError("images_to_tensor: mismatched images");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out(static_cast<int>(n), c, y, x) = static_cast<S>(img.at(x, y, c)) / S(127.5) - S(1);
  }
  return out;
}

template <typename S>
Image8 tensor_to_image(const Tensor<S>& t, int n) {
  if (t.c() != 3) throw ImageIoError("tensor_to_image: expected 3 channels, got " + t.shape().str());
  Image8 out(t.w(), t.h(), 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) {
        const double v = (static_cast<double>(t(n, c, y, x)) + 1.0) * 127.5;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

int grid_left_margin(const std::vector<std::string>& row_labels) {
  std::size_t longest = 0;
  for (const auto& l : row_labels) longest = std::max(longest, l.size());
  return longest == 0 ? 0 : static_cast<int>(longest) * 6 + 4;
}

Image8 compose_grid(const std::vector<std::vector<Image8>>& rows, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& column_labels) {
  if (rows.empty() || rows.front().empty()) throw ImageIoError("compose_grid: no images");
  const int cols = static_cast<int>(rows.front().size());
  const int cell_w = rows.front().front().width;
  const int cell_h = rows.front().front().height;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != cols) throw ImageIoError("compose_grid: ragged rows");
    for (const auto& img : row)
      if (img.width != cell_w || img.height != cell_h || img.channels != 3) throw ImageIoError("compose_grid: mismatched images");
  }
  const int left = grid_left_margin(row_labels);
  const int top = kGridTopMargin;
  Image8 out(left + cols * cell_w, top + static_cast<int>(rows.size()) * cell_h, 3, 255);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < cols; ++c) {
      const Image8& img = rows[r][c];
      for (int y = 0; y < cell_h; ++y)
        for (int x = 0; x < cell_w; ++x)
          for (int ch = 0; ch < 3; ++ch)
            out.at(left + c * cell_w + x, top + static_cast<int>(r) * cell_h + y, ch) = img.at(x, y, ch);
    }
  for (int c = 0; c < cols && c < static_cast<int>(column_labels.size()); ++c) draw_text(out, left + c * cell_w + 2, 2, column_labels[c]);
  for (std::size_t r = 0; r < rows.size() && r < row_labels.size(); ++r)
    draw_text(out, 2, top + static_cast<int>(r) * cell_h + cell_h / 2 - 3, row_labels[r]);
  return out;
}

template Tensor<float> images_to_tensor(const std::vector<Image8>&);
template Tensor<double> images_to_tensor(const std::vector<Image8>&);
template Image8 tensor_to_image(const Tensor<float>&, int);
template Image8 tensor_to_image(const Tensor<double>&, int);

}  // namespace asymvq
