#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "longvid/media.hpp"

namespace longvid {

// A video as the runtime sees it: metadata plus whatever the manifest carried.
// Virtual manifests can plant events (interval/caption/subtitle/answer_key)
// for the synthetic harness; this layer keeps them as raw JSON so it stays
// ignorant of harness semantics.
struct VideoManifest {
  VideoMeta meta;
  std::string background_caption;
  nlohmann::json events = nlohmann::json::array();
};

VideoManifest parse_manifest(const nlohmann::json& j, const std::string& source);
nlohmann::json manifest_to_json(const VideoManifest& m);

class VideoCatalog {
 public:
  void add(VideoManifest manifest);
  const VideoManifest* find(const std::string& id_or_uri) const;
  const VideoManifest& require(const std::string& id_or_uri) const;
  bool has(const std::string& id_or_uri) const { return find(id_or_uri) != nullptr; }
  size_t size() const { return by_id_.size(); }

  // Sorted by video_id for deterministic iteration.
  std::vector<const VideoManifest*> all() const;

  static VideoCatalog load_dir(const std::string& manifests_dir);
  void save_dir(const std::string& manifests_dir) const;

 private:
  std::map<std::string, VideoManifest> by_id_;
};

}  // namespace longvid
