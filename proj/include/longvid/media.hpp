#pragma once

#include <optional>
#include <string>
#include <vector>

namespace longvid {

// Half-open in spirit but stored as [start_s, end_s]; a valid interval has
// 0 <= start_s < end_s. Aggregate-initialize freely and call valid() or
// make_interval() where the invariant matters.
struct TimeInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }
  bool valid() const { return start_s >= 0.0 && end_s > start_s; }
  double overlap_length(const TimeInterval& other) const;
  bool overlaps(const TimeInterval& other) const { return overlap_length(other) > 0.0; }
  bool operator==(const TimeInterval& other) const {
    return start_s == other.start_s && end_s == other.end_s;
  }
};

TimeInterval make_interval(double start_s, double end_s);

enum class VideoKind { real_file, virtual_manifest };

struct VideoMeta {
  std::string video_id;
  std::string uri;  // media path for real files, manifest path otherwise
  double duration_s = 0.0;
  double fps = 1.0;
  VideoKind kind = VideoKind::virtual_manifest;
};

struct FrameRef {
  std::string video_id;
  double timestamp_s = 0.0;
};

struct FrameSet {
  std::vector<FrameRef> frames;
  std::optional<TimeInterval> source_interval;

  int count() const { return static_cast<int>(frames.size()); }
};

// n frame timestamps at segment midpoints: t_i = (i + 0.5) * L / n.
FrameSet uniform_sample(const VideoMeta& meta, int n);

// Clamps the interval to [0, duration] and returns target_count midpoints of
// equal sub-intervals. A zero-length interval after clamping is an error.
FrameSet resample_interval(const VideoMeta& meta, const TimeInterval& interval,
                           int target_count);

// Consecutive clip_len_s windows covering [0, duration_s]; the last one is
// truncated at the video end. Adjacent intervals chain exactly.
std::vector<TimeInterval> clip_grid(double duration_s, double clip_len_s = 10.0);

TimeInterval clamp_interval(const TimeInterval& interval, double duration_s);

}  // namespace longvid
