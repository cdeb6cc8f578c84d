#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skl {

enum class Split { train, validation, test, unassigned };
enum class Origin { original, augmented };

std::string_view to_string(Split split) noexcept;
std::string_view to_string(Origin origin) noexcept;
Split parse_split(std::string_view text);
Origin parse_origin(std::string_view text);

struct ManifestEntry {
  std::string path;
  int class_id = 0;
  std::string class_name;
  Split split = Split::unassigned;
  Origin origin = Origin::original;
  std::optional<std::string> parent;
  std::string source_tag;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Dataset catalog. Relative entry paths resolve against base_dir, which is
/// the directory of the manifest file when it was read from disk.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::vector<std::string> provenance;
  std::filesystem::path base_dir;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::filesystem::path resolve(const ManifestEntry& entry) const;
  /// Shortest stable spelling of `file` for storage in an entry.
  std::string relativize(const std::filesystem::path& file) const;

  /// Throws invalid_argument naming the first violated invariant.
  void validate() const;

  /// Builds class_names from the (class_id, class_name) pairs in entries.
  static Manifest from_entries(std::vector<ManifestEntry> entries);
};

/// One JSON object per line, UTF-8.
std::string to_jsonl(const Manifest& manifest);
Manifest parse_jsonl(std::string_view text);

/// Writes `path` plus a `<path>.meta.json` sidecar holding the class-name
/// list and provenance stamps.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Reads `path`; class names come from the sidecar when present.
Manifest read_manifest(const std::filesystem::path& path);

std::filesystem::path meta_path(const std::filesystem::path& manifest_path);

}  // namespace skl
