#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "longvid/media.hpp"
#include "longvid/subtitle.hpp"

namespace longvid {

struct EmbeddingVector {
  std::vector<float> values;

  size_t dim() const { return values.size(); }
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double l2_norm(const EmbeddingVector& v);
void normalize_l2(EmbeddingVector& v);  // zero vector -> zero_content

// Text a clip embeds: planted captions plus subtitle text overlapping the
// clip, supplied by whoever owns that state (the synthetic world at desk
// scale, a caption pipeline otherwise).
class ClipTextSource {
 public:
  virtual ~ClipTextSource() = default;
  virtual std::string clip_text(const std::string& video_id,
                                const TimeInterval& interval) const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual size_t dim() const = 0;
  virtual std::string name() const = 0;
  virtual EmbeddingVector embed_text(const std::string& text) const = 0;
  virtual EmbeddingVector embed_clip(const std::string& video_id,
                                     const TimeInterval& interval) const = 0;
};

// Feature hashing: tokens are hashed into d buckets with +/-1 signs under a
// seeded 64-bit hash, then L2-normalized. A pure function of
// (content, seed, dim), which is what makes desk-scale retrieval testable.
class HashingEmbeddingProvider : public EmbeddingProvider {
 public:
  HashingEmbeddingProvider(size_t dim, uint64_t seed,
                           const ClipTextSource* clips = nullptr);

  size_t dim() const override { return dim_; }
  std::string name() const override;
  EmbeddingVector embed_text(const std::string& text) const override;
  EmbeddingVector embed_clip(const std::string& video_id,
                             const TimeInterval& interval) const override;

 private:
  size_t dim_;
  uint64_t seed_;
  const ClipTextSource* clips_;
};

struct ClipIndexEntry {
  std::string video_id;
  TimeInterval interval;
  EmbeddingVector vector;
};

struct SubtitleIndexEntry {
  std::string video_id;
  SubtitleSegment segment;
  EmbeddingVector vector;
};

struct RetrievalHit {
  TimeInterval interval;
  double score = 0.0;
  std::optional<std::string> text;
};

// One entry per clip_grid cell. Fails whole (no partial result) if the
// provider errors on any clip.
std::vector<ClipIndexEntry> build_clip_index(const VideoMeta& meta,
                                             const EmbeddingProvider& provider,
                                             double clip_len_s = 10.0);

std::vector<SubtitleIndexEntry> build_subtitle_index(const SubtitleTrack& track,
                                                     const EmbeddingProvider& provider);

// Exact brute-force scan. Hits come back sorted by score descending, ties
// broken by earlier interval start. k is clamped to the index size.
std::vector<RetrievalHit> topk(const std::vector<ClipIndexEntry>& entries,
                               const EmbeddingVector& query, int k);
std::vector<RetrievalHit> topk(const std::vector<SubtitleIndexEntry>& entries,
                               const EmbeddingVector& query, int k);

struct IndexFileInfo {
  std::string schema;
  size_t dim = 0;
  std::string provider;
};

void save_clip_index(const std::string& path, const std::vector<ClipIndexEntry>& entries,
                     const std::string& provider_name, size_t dim);
std::vector<ClipIndexEntry> load_clip_index(const std::string& path,
                                            IndexFileInfo* info = nullptr);
void save_subtitle_index(const std::string& path,
                         const std::vector<SubtitleIndexEntry>& entries,
                         const std::string& provider_name, size_t dim);
std::vector<SubtitleIndexEntry> load_subtitle_index(const std::string& path,
                                                    IndexFileInfo* info = nullptr);

}  // namespace longvid
