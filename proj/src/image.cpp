#include "skl/image.hpp"

#include <png.h>
// jpeglib.h needs size_t/FILE declared first.
#include <cstdio>
#include <jpeglib.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace skl {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    fail(Errc::file_not_found, "no such image file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::file_not_found, "cannot open image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

ImageTensor from_bytes(const std::vector<std::uint8_t>& pixels, int h, int w, int c) {
  ImageTensor img(h, w, c);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = dequantize(pixels[std::size_t(i)]);
  return img;
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    fail(Errc::corrupt_stream, "corrupt PNG header in " + name + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::corrupt_stream, "corrupt PNG data in " + name + ": " + msg);
  }
  return from_bytes(pixels, int(image.height), int(image.width), color ? 3 : 1);
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

// Plain-C section: nothing with a destructor may be created between setjmp and
// the matching longjmp, so the output buffer is sized up front by the caller.
bool decode_jpeg_raw(const std::vector<std::uint8_t>& bytes, std::vector<std::uint8_t>& pixels, int& h,
                     int& w, int& c, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    std::strncpy(message, jerr.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = int(cinfo.output_height);
  w = int(cinfo.output_width);
  c = int(cinfo.output_components);
  if (pixels.size() < std::size_t(h) * w * c) {
    // Caller's buffer was sized from the header bound; this only triggers on
    // malformed dimension fields.
    std::strncpy(message, "decoded dimensions exceed buffer", JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + std::size_t(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool jpeg_dimensions(const std::vector<std::uint8_t>& bytes, int& h, int& w, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    std::strncpy(message, jerr.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  h = int(cinfo.image_height);
  w = int(cinfo.image_width);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

ImageTensor decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  char message[JMSG_LENGTH_MAX] = {0};
  int h = 0, w = 0, c = 0;
  if (!jpeg_dimensions(bytes, h, w, message))
    fail(Errc::corrupt_stream, "corrupt JPEG header in " + name + ": " + message);
  std::vector<std::uint8_t> pixels(std::size_t(h) * w * 3);
  if (!decode_jpeg_raw(bytes, pixels, h, w, c, message))
    fail(Errc::corrupt_stream, "corrupt JPEG data in " + name + ": " + message);
  pixels.resize(std::size_t(h) * w * c);
  return from_bytes(pixels, h, w, c);
}

std::vector<std::uint8_t> to_bytes(const ImageTensor& img) {
  std::vector<std::uint8_t> out(std::size_t(img.size()));
  for (Eigen::Index i = 0; i < img.size(); ++i) out[std::size_t(i)] = quantize(img.data()[i]);
  return out;
}

void check_encodable(const ImageTensor& img) {
  if (img.empty()) fail(Errc::invalid_argument, "cannot encode an empty image");
  if (img.channels() != 1 && img.channels() != 3)
    fail(Errc::unsupported_format, "only 1- or 3-channel images can be encoded");
}

void save_jpeg(const std::filesystem::path& path, const ImageTensor& img) {
  std::vector<std::uint8_t> bytes = to_bytes(img);
  FILE* file = std::fopen(path.c_str(), "wb");
  if (!file) fail(Errc::io_failure, "cannot write " + path.string());
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file);
  cinfo.image_width = JDIMENSION(img.width());
  cinfo.image_height = JDIMENSION(img.height());
  cinfo.input_components = img.channels();
  cinfo.in_color_space = img.channels() == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = std::size_t(img.width()) * img.channels();
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = bytes.data() + cinfo.next_scanline * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(file);
}

}  // namespace

void NormalizationSpec::validate(int channels) const {
  if (int(mean.size()) != channels || int(scale.size()) != channels)
    fail(Errc::shape_mismatch, "normalization spec has " + std::to_string(mean.size()) +
                                   " channels, image has " + std::to_string(channels));
  for (double s : scale)
    if (!(s > 0)) fail(Errc::invalid_argument, "normalization scale must be strictly positive");
}

ImageTensor load_image(const std::filesystem::path& path, ChannelPolicy policy) {
  const auto bytes = read_file(path);
  ImageTensor img;
  if (is_png(bytes))
    img = decode_png(bytes, path.string());
  else if (is_jpeg(bytes))
    img = decode_jpeg(bytes, path.string());
  else
    fail(Errc::unsupported_format, "not a PNG or JPEG stream: " + path.string());
  switch (policy) {
    case ChannelPolicy::keep: return img;
    case ChannelPolicy::gray: return with_channels(img, 1);
    case ChannelPolicy::rgb: return with_channels(img, 3);
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  check_encodable(img);
  std::vector<std::uint8_t> bytes = to_bytes(img);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(img.width());
  image.height = png_uint_32(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, bytes.data(), 0, nullptr))
    fail(Errc::io_failure, std::string("PNG encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr))
    fail(Errc::io_failure, std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

void save_image(const std::filesystem::path& path, const ImageTensor& img) {
  check_encodable(img);
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) fail(Errc::io_failure, "short write to " + path.string());
  } else if (ext == ".jpg" || ext == ".jpeg") {
    save_jpeg(path, img);
  } else {
    fail(Errc::unsupported_format, "unsupported output extension: " + path.string());
  }
}

ImageTensor quantized(const ImageTensor& img) {
  ImageTensor out = img;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = dequantize(quantize(img.data()[i]));
  return out;
}

ImageTensor with_channels(const ImageTensor& img, int channels) {
  if (channels == img.channels()) return img;
  if (channels != 1 && channels != 3) fail(Errc::invalid_argument, "channel count must be 1 or 3");
  if (img.channels() != 1 && img.channels() != 3)
    fail(Errc::invalid_argument, "source must have 1 or 3 channels");
  ImageTensor out(img.height(), img.width(), channels);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (channels == 3) {
        for (int c = 0; c < 3; ++c) out(y, x, c) = img(y, x, 0);
      } else {
        // Rec. 601 luma.
        out(y, x, 0) = 0.299f * img(y, x, 0) + 0.587f * img(y, x, 1) + 0.114f * img(y, x, 2);
      }
    }
  return out;
}

}  // namespace skl
