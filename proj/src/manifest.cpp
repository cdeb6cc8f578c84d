#include "skl/manifest.hpp"

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "skl/error.hpp"

namespace skl {

using nlohmann::json;

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

std::string_view to_string(Origin origin) noexcept {
  return origin == Origin::original ? "original" : "augmented";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation" || text == "val") return Split::validation;
  if (text == "test") return Split::test;
  if (text == "unassigned") return Split::unassigned;
  fail(Errc::invalid_argument, "unknown split label: " + std::string(text));
}

Origin parse_origin(std::string_view text) {
  if (text == "original") return Origin::original;
  if (text == "augmented") return Origin::augmented;
  fail(Errc::invalid_argument, "unknown origin: " + std::string(text));
}

std::filesystem::path Manifest::resolve(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::string Manifest::relativize(const std::filesystem::path& file) const {
  if (base_dir.empty()) return file.lexically_normal().string();
  auto abs_base = std::filesystem::absolute(base_dir).lexically_normal();
  auto abs_file = std::filesystem::absolute(file).lexically_normal();
  auto rel = abs_file.lexically_relative(abs_base);
  if (rel.empty() || *rel.begin() == "..") return abs_file.string();
  return rel.string();
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& name : class_names)
    if (!seen.insert(name).second) fail(Errc::invalid_argument, "duplicate class name: " + name);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string where = "manifest entry " + std::to_string(i) + " (" + e.path + ")";
    if (e.class_id < 0 || std::size_t(e.class_id) >= class_names.size())
      fail(Errc::invalid_argument, where + ": class-id out of range");
    if (class_names[std::size_t(e.class_id)] != e.class_name)
      fail(Errc::invalid_argument, where + ": class-name does not match class-id");
    if (e.origin == Origin::augmented && !e.parent)
      fail(Errc::invalid_argument, where + ": augmented entry without parent");
    if (e.origin == Origin::original && e.parent)
      fail(Errc::invalid_argument, where + ": original entry with a parent");
  }
}

Manifest Manifest::from_entries(std::vector<ManifestEntry> entries) {
  std::map<int, std::string> names;
  for (const auto& e : entries) {
    auto [it, inserted] = names.emplace(e.class_id, e.class_name);
    if (!inserted && it->second != e.class_name)
      fail(Errc::invalid_argument, "class-id " + std::to_string(e.class_id) + " has two names");
  }
  Manifest m;
  int expected = 0;
  for (const auto& [id, name] : names) {
    if (id != expected)
      fail(Errc::invalid_argument, "class ids are not contiguous from 0; missing " + std::to_string(expected));
    m.class_names.push_back(name);
    ++expected;
  }
  m.entries = std::move(entries);
  m.validate();
  return m;
}

namespace {

json entry_to_json(const ManifestEntry& e) {
  json j = json::object();
  j["path"] = e.path;
  j["class_id"] = e.class_id;
  j["class_name"] = e.class_name;
  j["split"] = std::string(to_string(e.split));
  j["origin"] = std::string(to_string(e.origin));
  j["parent"] = e.parent ? json(*e.parent) : json(nullptr);
  j["source_tag"] = e.source_tag;
  return j;
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.path = j.at("path").get<std::string>();
  e.class_id = j.at("class_id").get<int>();
  e.class_name = j.at("class_name").get<std::string>();
  e.split = parse_split(j.value("split", std::string("unassigned")));
  e.origin = parse_origin(j.value("origin", std::string("original")));
  if (j.contains("parent") && !j.at("parent").is_null()) e.parent = j.at("parent").get<std::string>();
  e.source_tag = j.value("source_tag", std::string());
  return e;
}

std::vector<ManifestEntry> parse_entries(std::string_view text) {
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      entries.push_back(entry_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      fail(Errc::corrupt_stream, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::file_not_found, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot write " + path.string());
  out << text;
  if (!out) fail(Errc::io_failure, "short write to " + path.string());
}

}  // namespace

std::string to_jsonl(const Manifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    out += entry_to_json(e).dump();
    out += '\n';
  }
  return out;
}

Manifest parse_jsonl(std::string_view text) { return Manifest::from_entries(parse_entries(text)); }

std::filesystem::path meta_path(const std::filesystem::path& manifest_path) {
  return manifest_path.string() + ".meta.json";
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  manifest.validate();
  dump(path, to_jsonl(manifest));
  json meta = {{"class_names", manifest.class_names}, {"provenance", manifest.provenance}};
  dump(meta_path(path), meta.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(Errc::file_not_found, "no such manifest: " + path.string());
  const std::string text = slurp(path);
  Manifest m;
  const auto meta_file = meta_path(path);
  if (std::filesystem::is_regular_file(meta_file, ec)) {
    json meta = json::parse(slurp(meta_file));
    // The sidecar's class list is authoritative since a class may have no entries.
    m.entries = parse_entries(text);
    m.class_names = meta.at("class_names").get<std::vector<std::string>>();
    m.provenance = meta.value("provenance", std::vector<std::string>{});
    m.validate();
  } else {
    m = parse_jsonl(text);
  }
  m.base_dir = path.parent_path();
  return m;
}

}  // namespace skl
