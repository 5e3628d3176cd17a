#include "longvid/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

using nlohmann::json;

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    raise(Errc::dimension_mismatch,
          std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    acc += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
  }
  return acc;
}

double l2_norm(const EmbeddingVector& v) {
  double acc = 0.0;
  for (float x : v.values) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

void normalize_l2(EmbeddingVector& v) {
  double norm = l2_norm(v);
  if (norm <= 0.0) raise(Errc::zero_content, "cannot normalize a zero vector");
  for (float& x : v.values) x = static_cast<float>(static_cast<double>(x) / norm);
}

HashingEmbeddingProvider::HashingEmbeddingProvider(size_t dim, uint64_t seed,
                                                   const ClipTextSource* clips)
    : dim_(dim), seed_(seed), clips_(clips) {
  if (dim_ == 0) raise(Errc::invalid_argument, "embedding dim must be positive");
}

std::string HashingEmbeddingProvider::name() const {
  return "hashing-" + std::to_string(dim_) + "-" + hex64(seed_);
}

EmbeddingVector HashingEmbeddingProvider::embed_text(const std::string& text) const {
  std::vector<std::string> tokens = tokenize_words(text);
  if (tokens.empty()) raise(Errc::zero_content, "no tokens to embed");
  EmbeddingVector v;
  v.values.assign(dim_, 0.0f);
  for (const auto& tok : tokens) {
    uint64_t h = splitmix64(fnv1a64(tok) ^ seed_);
    size_t bucket = static_cast<size_t>(h % dim_);
    float sign = (h >> 63) ? 1.0f : -1.0f;
    v.values[bucket] += sign;
  }
  double norm = l2_norm(v);
  if (norm <= 0.0) {
    // Opposite-signed collisions cancelled every bucket; nudge one bucket so
    // the vector stays a function of the content.
    uint64_t h = splitmix64(fnv1a64(tokens.front()) ^ seed_);
    v.values[h % dim_] = 1.0f;
  }
  normalize_l2(v);
  return v;
}

EmbeddingVector HashingEmbeddingProvider::embed_clip(const std::string& video_id,
                                                     const TimeInterval& interval) const {
  if (!clips_) {
    raise(Errc::provider_error, "no clip text source configured for " + name());
  }
  std::string text = clips_->clip_text(video_id, interval);
  if (trim(text).empty()) {
    raise(Errc::zero_content, "clip " + video_id + " [" +
                                  format_seconds(interval.start_s) + ", " +
                                  format_seconds(interval.end_s) + ") has no text");
  }
  return embed_text(text);
}

namespace {

void check_dim(const EmbeddingVector& v, const EmbeddingProvider& provider) {
  if (v.dim() != provider.dim()) {
    raise(Errc::dimension_mismatch,
          "provider " + provider.name() + " returned dim " + std::to_string(v.dim()) +
              ", expected " + std::to_string(provider.dim()));
  }
}

template <typename Entry>
std::vector<RetrievalHit> topk_impl(const std::vector<Entry>& entries,
                                    const EmbeddingVector& query, int k,
                                    const std::function<TimeInterval(const Entry&)>& interval_of,
                                    const std::function<std::optional<std::string>(const Entry&)>& text_of) {
  if (entries.empty()) raise(Errc::empty_index, "no entries to search");
  if (k < 1) raise(Errc::invalid_argument, "topk needs k >= 1");
  if (query.dim() != entries.front().vector.dim()) {
    raise(Errc::dimension_mismatch, "query dim " + std::to_string(query.dim()) +
                                        " vs index dim " +
                                        std::to_string(entries.front().vector.dim()));
  }
  struct Scored {
    double score;
    size_t idx;
    double start;
  };
  std::vector<Scored> scored;
  scored.reserve(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    scored.push_back({dot(query, entries[i].vector), i, interval_of(entries[i]).start_s});
  }
  auto better = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.idx < b.idx;
  };
  size_t take = std::min(static_cast<size_t>(k), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(take),
                    scored.end(), better);
  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (size_t i = 0; i < take; ++i) {
    const Entry& e = entries[scored[i].idx];
    double s = std::clamp(scored[i].score, -1.0, 1.0);
    hits.push_back({interval_of(e), s, text_of(e)});
  }
  return hits;
}

}  // namespace

std::vector<ClipIndexEntry> build_clip_index(const VideoMeta& meta,
                                             const EmbeddingProvider& provider,
                                             double clip_len_s) {
  std::vector<ClipIndexEntry> entries;
  for (const TimeInterval& cell : clip_grid(meta.duration_s, clip_len_s)) {
    EmbeddingVector v = provider.embed_clip(meta.video_id, cell);
    check_dim(v, provider);
    normalize_l2(v);
    entries.push_back({meta.video_id, cell, std::move(v)});
  }
  return entries;
}

std::vector<SubtitleIndexEntry> build_subtitle_index(const SubtitleTrack& track,
                                                     const EmbeddingProvider& provider) {
  std::vector<SubtitleIndexEntry> entries;
  for (const SubtitleSegment& seg : track.segments) {
    EmbeddingVector v = provider.embed_text(seg.text);
    check_dim(v, provider);
    normalize_l2(v);
    entries.push_back({track.video_id, seg, std::move(v)});
  }
  return entries;
}

std::vector<RetrievalHit> topk(const std::vector<ClipIndexEntry>& entries,
                               const EmbeddingVector& query, int k) {
  return topk_impl<ClipIndexEntry>(
      entries, query, k,
      [](const ClipIndexEntry& e) { return e.interval; },
      [](const ClipIndexEntry&) { return std::optional<std::string>{}; });
}

std::vector<RetrievalHit> topk(const std::vector<SubtitleIndexEntry>& entries,
                               const EmbeddingVector& query, int k) {
  return topk_impl<SubtitleIndexEntry>(
      entries, query, k,
      [](const SubtitleIndexEntry& e) { return e.segment.interval; },
      [](const SubtitleIndexEntry& e) { return std::optional<std::string>(e.segment.text); });
}

namespace {

json vector_to_json(const EmbeddingVector& v) {
  json arr = json::array();
  for (float x : v.values) arr.push_back(x);
  return arr;
}

EmbeddingVector vector_from_json(const json& arr, size_t expected_dim, size_t line_no) {
  if (!arr.is_array()) {
    raise(Errc::parse_error, "line " + std::to_string(line_no) + ": vector must be an array");
  }
  EmbeddingVector v;
  v.values.reserve(arr.size());
  for (const auto& x : arr) {
    if (!x.is_number()) {
      raise(Errc::parse_error, "line " + std::to_string(line_no) + ": non-numeric vector value");
    }
    v.values.push_back(x.get<float>());
  }
  if (expected_dim != 0 && v.dim() != expected_dim) {
    raise(Errc::dimension_mismatch,
          "line " + std::to_string(line_no) + ": entry dim " + std::to_string(v.dim()) +
              " does not match header dim " + std::to_string(expected_dim));
  }
  return v;
}

json header_json(const std::string& schema, size_t dim, const std::string& provider) {
  return json{{"schema", schema}, {"dim", dim}, {"provider", provider}};
}

IndexFileInfo parse_header(const std::string& line, const std::string& expected_schema,
                           const std::string& path) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("schema") ||
      !j.contains("dim") || !j.contains("provider")) {
    raise(Errc::parse_error, path + ": malformed index header");
  }
  IndexFileInfo info;
  info.schema = j["schema"].get<std::string>();
  info.dim = j["dim"].get<size_t>();
  info.provider = j["provider"].get<std::string>();
  if (info.schema != expected_schema) {
    raise(Errc::parse_error, path + ": expected schema " + expected_schema + ", found " +
                                 info.schema);
  }
  return info;
}

}  // namespace

void save_clip_index(const std::string& path, const std::vector<ClipIndexEntry>& entries,
                     const std::string& provider_name, size_t dim) {
  std::ostringstream out;
  out << header_json("clip-index/1", dim, provider_name).dump() << "\n";
  for (const auto& e : entries) {
    json line{{"video_id", e.video_id},
              {"start_s", e.interval.start_s},
              {"end_s", e.interval.end_s},
              {"text", nullptr},
              {"vector", vector_to_json(e.vector)}};
    out << line.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<ClipIndexEntry> load_clip_index(const std::string& path, IndexFileInfo* info) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) raise(Errc::parse_error, path + ": empty index file");
  IndexFileInfo header = parse_header(lines[0], "clip-index/1", path);
  std::vector<ClipIndexEntry> entries;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      raise(Errc::parse_error, path + ": bad JSON on line " + std::to_string(i + 1));
    }
    ClipIndexEntry e;
    e.video_id = j.at("video_id").get<std::string>();
    e.interval = {j.at("start_s").get<double>(), j.at("end_s").get<double>()};
    e.vector = vector_from_json(j.at("vector"), header.dim, i + 1);
    entries.push_back(std::move(e));
  }
  if (info) *info = header;
  return entries;
}

void save_subtitle_index(const std::string& path,
                         const std::vector<SubtitleIndexEntry>& entries,
                         const std::string& provider_name, size_t dim) {
  std::ostringstream out;
  out << header_json("subtitle-index/1", dim, provider_name).dump() << "\n";
  for (const auto& e : entries) {
    json line{{"video_id", e.video_id},
              {"start_s", e.segment.interval.start_s},
              {"end_s", e.segment.interval.end_s},
              {"text", e.segment.text},
              {"vector", vector_to_json(e.vector)}};
    out << line.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<SubtitleIndexEntry> load_subtitle_index(const std::string& path,
                                                    IndexFileInfo* info) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) raise(Errc::parse_error, path + ": empty index file");
  IndexFileInfo header = parse_header(lines[0], "subtitle-index/1", path);
  std::vector<SubtitleIndexEntry> entries;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      raise(Errc::parse_error, path + ": bad JSON on line " + std::to_string(i + 1));
    }
    SubtitleIndexEntry e;
    e.video_id = j.at("video_id").get<std::string>();
    e.segment.index = static_cast<int>(entries.size());
    e.segment.interval = {j.at("start_s").get<double>(), j.at("end_s").get<double>()};
    e.segment.text = j.at("text").is_null() ? std::string() : j.at("text").get<std::string>();
    e.vector = vector_from_json(j.at("vector"), header.dim, i + 1);
    entries.push_back(std::move(e));
  }
  if (info) *info = header;
  return entries;
}

}  // namespace longvid
