#include "skl/pack.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <limits>

#include "skl/rng.hpp"

namespace skl {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(std::uint8_t((std::uint64_t(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return static_cast<T>(v);
}

std::vector<std::uint8_t> encode_header(const PackHeader& h) {
  std::vector<std::uint8_t> out{'S', 'K', 'L', 'P'};
  put_le(out, h.version);
  put_le(out, h.count);
  put_le(out, h.height);
  put_le(out, h.width);
  put_le(out, h.channels);
  return out;
}

void pread_exact(int fd, std::uint8_t* dst, std::size_t n, std::uint64_t offset, const char* what) {
  while (n > 0) {
    ssize_t got = ::pread(fd, dst, n, off_t(offset));
    if (got <= 0) fail(Errc::corrupt_stream, std::string("truncated pack while reading ") + what);
    dst += got;
    n -= std::size_t(got);
    offset += std::uint64_t(got);
  }
}

void check_dims(int height, int width, int channels) {
  constexpr int kMax = std::numeric_limits<std::uint16_t>::max();
  if (height < 1 || width < 1 || height > kMax || width > kMax)
    fail(Errc::invalid_argument, "pack dimensions overflow the u16 header fields");
  if (channels != 1 && channels != 3) fail(Errc::invalid_argument, "pack channels must be 1 or 3");
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept {
  return std::uint32_t(::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), uInt(bytes.size())));
}

PackWriter::PackWriter(const std::filesystem::path& path, std::uint32_t count, int height, int width, int channels)
    : path_(path) {
  check_dims(height, width, channels);
  header_.count = count;
  header_.height = std::uint16_t(height);
  header_.width = std::uint16_t(width);
  header_.channels = std::uint8_t(channels);
  if (header_.record_bytes() > std::numeric_limits<std::uint32_t>::max())
    fail(Errc::invalid_argument, "pack record size overflows the u32 length field");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) fail(Errc::io_failure, "cannot create pack " + path.string());
  cursor_ = kPackHeaderBytes + kPackIndexEntryBytes * std::uint64_t(count);
  // Payloads go after the index; the index itself is written by finish().
  if (std::fseek(file_, long(cursor_), SEEK_SET) != 0) fail(Errc::io_failure, "seek failed in " + path.string());
}

PackWriter::~PackWriter() {
  if (file_) std::fclose(file_);
}

void PackWriter::append(const ImageTensor& img, int class_id) {
  if (index_.size() >= header_.count) fail(Errc::out_of_range, "more records appended than declared");
  if (img.height() != header_.height || img.width() != header_.width || img.channels() != header_.channels)
    fail(Errc::shape_mismatch, "record dims differ from the pack header");
  if (class_id < 0 || class_id > std::numeric_limits<std::uint16_t>::max())
    fail(Errc::invalid_argument, "class-id does not fit the u16 index field");
  std::vector<std::uint8_t> bytes(std::size_t(img.size()));
  for (Eigen::Index i = 0; i < img.size(); ++i) bytes[std::size_t(i)] = quantize(img.data()[i]);
  PackIndexEntry entry{cursor_, std::uint32_t(bytes.size()), std::uint16_t(class_id), crc32_of(bytes)};
  if (std::fwrite(bytes.data(), 1, bytes.size(), file_) != bytes.size())
    fail(Errc::io_failure, "short write to " + path_.string());
  cursor_ += bytes.size();
  index_.push_back(entry);
}

void PackWriter::finish() {
  if (index_.size() != header_.count)
    fail(Errc::invalid_argument, "pack declared " + std::to_string(header_.count) + " records, got " +
                                     std::to_string(index_.size()));
  std::vector<std::uint8_t> head = encode_header(header_);
  for (const auto& e : index_) {
    put_le(head, e.offset);
    put_le(head, e.length);
    put_le(head, e.class_id);
    put_le(head, e.checksum);
  }
  if (std::fseek(file_, 0, SEEK_SET) != 0 || std::fwrite(head.data(), 1, head.size(), file_) != head.size())
    fail(Errc::io_failure, "cannot write pack index to " + path_.string());
  if (std::fclose(file_) != 0) {
    file_ = nullptr;
    fail(Errc::io_failure, "cannot close " + path_.string());
  }
  file_ = nullptr;
}

PackFile PackFile::open(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(Errc::file_not_found, "no such pack: " + path.string());
  const std::uint64_t file_size = std::filesystem::file_size(path);
  PackFile pack;
  pack.fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (pack.fd_ < 0) fail(Errc::file_not_found, "cannot open pack " + path.string());

  std::array<std::uint8_t, kPackHeaderBytes> head{};
  pread_exact(pack.fd_, head.data(), head.size(), 0, "header");
  if (std::memcmp(head.data(), "SKLP", 4) != 0) fail(Errc::unsupported_format, path.string() + " is not a pack file");
  auto& h = pack.header_;
  h.version = get_le<std::uint32_t>(head.data() + 4);
  h.count = get_le<std::uint32_t>(head.data() + 8);
  h.height = get_le<std::uint16_t>(head.data() + 12);
  h.width = get_le<std::uint16_t>(head.data() + 14);
  h.channels = head[16];
  if (h.version != kPackVersion)
    fail(Errc::unsupported_format, "unsupported pack version " + std::to_string(h.version));

  const std::uint64_t index_end = kPackHeaderBytes + kPackIndexEntryBytes * std::uint64_t(h.count);
  if (index_end > file_size) fail(Errc::corrupt_stream, "pack index exceeds file size");
  std::vector<std::uint8_t> raw(kPackIndexEntryBytes * h.count);
  pread_exact(pack.fd_, raw.data(), raw.size(), kPackHeaderBytes, "index");
  pack.index_.resize(h.count);
  std::uint64_t prev_end = index_end;
  for (std::uint32_t i = 0; i < h.count; ++i) {
    const std::uint8_t* p = raw.data() + kPackIndexEntryBytes * i;
    auto& e = pack.index_[i];
    e.offset = get_le<std::uint64_t>(p);
    e.length = get_le<std::uint32_t>(p + 8);
    e.class_id = get_le<std::uint16_t>(p + 12);
    e.checksum = get_le<std::uint32_t>(p + 14);
    if (e.offset < prev_end) fail(Errc::corrupt_stream, "pack index offsets are not strictly increasing");
    if (e.length != h.record_bytes()) fail(Errc::corrupt_stream, "record length disagrees with header dims");
    if (e.offset + e.length > file_size) fail(Errc::corrupt_stream, "record extends past end of pack");
    prev_end = e.offset + e.length;
  }
  return pack;
}

PackFile::PackFile(PackFile&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), header_(other.header_), index_(std::move(other.index_)) {}

PackFile& PackFile::operator=(PackFile&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    header_ = other.header_;
    index_ = std::move(other.index_);
  }
  return *this;
}

PackFile::~PackFile() {
  if (fd_ >= 0) ::close(fd_);
}

int PackFile::class_id(std::size_t idx) const {
  if (idx >= index_.size())
    fail(Errc::out_of_range, "record " + std::to_string(idx) + " out of range (count " + std::to_string(size()) + ")");
  return index_[idx].class_id;
}

std::vector<std::uint8_t> PackFile::read_raw(std::size_t idx) const {
  if (idx >= index_.size())
    fail(Errc::out_of_range, "record " + std::to_string(idx) + " out of range (count " + std::to_string(size()) + ")");
  const auto& e = index_[idx];
  std::vector<std::uint8_t> bytes(e.length);
  pread_exact(fd_, bytes.data(), bytes.size(), e.offset, "record");
  if (crc32_of(bytes) != e.checksum) fail(Errc::checksum_mismatch, "checksum mismatch in record " + std::to_string(idx));
  return bytes;
}

PackRecord PackFile::read_record(std::size_t idx) const {
  const auto bytes = read_raw(idx);
  PackRecord rec{ImageTensor(header_.height, header_.width, header_.channels), index_[idx].class_id};
  for (Eigen::Index i = 0; i < rec.image.size(); ++i) rec.image.data()[i] = dequantize(bytes[std::size_t(i)]);
  return rec;
}

PackBuildResult build_pack(const Manifest& manifest, const PackBuildOptions& options,
                           const std::filesystem::path& out_path) {
  check_dims(options.height, options.width, options.channels);
  PackBuildResult result;
  for (const auto& e : manifest.entries)
    if (e.split == options.split) result.order.push_back(e);
  if (result.order.size() > std::numeric_limits<std::uint32_t>::max())
    fail(Errc::invalid_argument, "too many records for one pack");
  SeededRng rng(options.seed);
  rng.shuffle(std::span<ManifestEntry>(result.order));

  const auto policy = options.channels == 3 ? ChannelPolicy::rgb : ChannelPolicy::gray;
  PackWriter writer(out_path, std::uint32_t(result.order.size()), options.height, options.width, options.channels);
  for (const auto& e : result.order) {
    ImageTensor img = load_image(manifest.resolve(e), policy);
    writer.append(resize_bilinear(img, options.height, options.width), e.class_id);
  }
  writer.finish();
  result.header.count = std::uint32_t(result.order.size());
  result.header.height = std::uint16_t(options.height);
  result.header.width = std::uint16_t(options.width);
  result.header.channels = std::uint8_t(options.channels);
  return result;
}

}  // namespace skl
