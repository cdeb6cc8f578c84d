#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skl/image.hpp"
#include "skl/manifest.hpp"

namespace skl {

// Layout (little-endian):
//   "SKLP" u32 version u32 count u16 height u16 width u8 channels
//   count x { u64 offset, u32 length, u16 class_id, u32 crc32 }
//   records: raw 8-bit H x W x C pixels
inline constexpr std::uint32_t kPackVersion = 1;
inline constexpr std::size_t kPackHeaderBytes = 17;
inline constexpr std::size_t kPackIndexEntryBytes = 18;

struct PackHeader {
  std::uint32_t version = kPackVersion;
  std::uint32_t count = 0;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t channels = 0;

  std::size_t record_bytes() const noexcept { return std::size_t(height) * width * channels; }
};

struct PackIndexEntry {
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
  std::uint16_t class_id = 0;
  std::uint32_t checksum = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept;

/// Streams records to disk. The record count is fixed up front so the index
/// can be laid out before the payloads.
class PackWriter {
 public:
  PackWriter(const std::filesystem::path& path, std::uint32_t count, int height, int width, int channels);
  ~PackWriter();
  PackWriter(const PackWriter&) = delete;
  PackWriter& operator=(const PackWriter&) = delete;

  void append(const ImageTensor& img, int class_id);
  void finish();

 private:
  std::filesystem::path path_;
  PackHeader header_;
  std::vector<PackIndexEntry> index_;
  std::FILE* file_ = nullptr;
  std::uint64_t cursor_ = 0;
};

struct PackRecord {
  ImageTensor image;
  int class_id = 0;
};

/// Read-only view of a pack file. Reads use positioned I/O, so one instance
/// can serve any number of concurrent readers.
class PackFile {
 public:
  static PackFile open(const std::filesystem::path& path);

  PackFile(PackFile&& other) noexcept;
  PackFile& operator=(PackFile&& other) noexcept;
  PackFile(const PackFile&) = delete;
  PackFile& operator=(const PackFile&) = delete;
  ~PackFile();

  const PackHeader& header() const noexcept { return header_; }
  const std::vector<PackIndexEntry>& index() const noexcept { return index_; }
  std::size_t size() const noexcept { return index_.size(); }
  int class_id(std::size_t idx) const;

  std::vector<std::uint8_t> read_raw(std::size_t idx) const;
  PackRecord read_record(std::size_t idx) const;

 private:
  PackFile() = default;
  int fd_ = -1;
  PackHeader header_;
  std::vector<PackIndexEntry> index_;
};

struct PackBuildOptions {
  Split split = Split::train;
  int height = 64;
  int width = 64;
  int channels = 3;
  std::uint64_t seed = 0;
};

struct PackBuildResult {
  PackHeader header;
  /// Manifest entries in record order.
  std::vector<ManifestEntry> order;
};

/// Shuffles the split's entries with the seed, resizes each to the target
/// dims and writes one record per entry.
PackBuildResult build_pack(const Manifest& manifest, const PackBuildOptions& options,
                           const std::filesystem::path& out_path);

}  // namespace skl
