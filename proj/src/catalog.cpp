#include "longvid/catalog.hpp"

#include <algorithm>
#include <filesystem>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

using nlohmann::json;

VideoManifest parse_manifest(const json& j, const std::string& source) {
  if (!j.is_object()) raise(Errc::parse_error, source + ": manifest must be an object");
  VideoManifest m;
  if (!j.contains("video_id") || !j["video_id"].is_string() ||
      j["video_id"].get<std::string>().empty()) {
    raise(Errc::parse_error, source + ": manifest needs a nonempty video_id");
  }
  m.meta.video_id = j["video_id"].get<std::string>();
  if (!j.contains("duration_s") || !j["duration_s"].is_number() ||
      j["duration_s"].get<double>() <= 0.0) {
    raise(Errc::parse_error, source + ": manifest needs duration_s > 0");
  }
  m.meta.duration_s = j["duration_s"].get<double>();
  m.meta.fps = j.value("fps", 1.0);
  if (m.meta.fps <= 0.0) raise(Errc::parse_error, source + ": fps must be positive");
  m.meta.uri = j.value("uri", source);
  std::string kind = j.value("kind", "virtual");
  m.meta.kind = (kind == "file") ? VideoKind::real_file : VideoKind::virtual_manifest;
  m.background_caption = j.value("background_caption", std::string());
  if (j.contains("events")) {
    if (!j["events"].is_array()) raise(Errc::parse_error, source + ": events must be an array");
    m.events = j["events"];
  }
  return m;
}

json manifest_to_json(const VideoManifest& m) {
  json j{{"video_id", m.meta.video_id},
         {"duration_s", m.meta.duration_s},
         {"fps", m.meta.fps},
         {"kind", m.meta.kind == VideoKind::real_file ? "file" : "virtual"}};
  if (!m.background_caption.empty()) j["background_caption"] = m.background_caption;
  if (!m.events.empty()) j["events"] = m.events;
  return j;
}

void VideoCatalog::add(VideoManifest manifest) {
  const std::string& id = manifest.meta.video_id;
  if (by_id_.count(id)) raise(Errc::invalid_argument, "duplicate video_id " + id);
  by_id_.emplace(id, std::move(manifest));
}

const VideoManifest* VideoCatalog::find(const std::string& id_or_uri) const {
  auto it = by_id_.find(id_or_uri);
  if (it != by_id_.end()) return &it->second;
  for (const auto& [id, m] : by_id_) {
    if (m.meta.uri == id_or_uri) return &m;
  }
  return nullptr;
}

const VideoManifest& VideoCatalog::require(const std::string& id_or_uri) const {
  const VideoManifest* m = find(id_or_uri);
  if (!m) raise(Errc::invalid_argument, "unknown video " + id_or_uri);
  return *m;
}

std::vector<const VideoManifest*> VideoCatalog::all() const {
  std::vector<const VideoManifest*> out;
  out.reserve(by_id_.size());
  for (const auto& [id, m] : by_id_) out.push_back(&m);
  return out;
}

VideoCatalog VideoCatalog::load_dir(const std::string& manifests_dir) {
  VideoCatalog catalog;
  std::vector<std::string> paths;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(manifests_dir, ec)) {
    if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
  }
  if (ec) raise(Errc::io_error, "cannot list " + manifests_dir);
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) raise(Errc::parse_error, path + ": invalid JSON");
    catalog.add(parse_manifest(j, path));
  }
  return catalog;
}

void VideoCatalog::save_dir(const std::string& manifests_dir) const {
  ensure_dir(manifests_dir);
  for (const auto& [id, m] : by_id_) {
    write_file(manifests_dir + "/" + id + ".json", manifest_to_json(m).dump(2) + "\n");
  }
}

}  // namespace longvid
