#include "longvid/media.hpp"

#include <algorithm>
#include <cmath>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

double TimeInterval::overlap_length(const TimeInterval& other) const {
  double lo = std::max(start_s, other.start_s);
  double hi = std::min(end_s, other.end_s);
  return hi - lo;
}

TimeInterval make_interval(double start_s, double end_s) {
  TimeInterval iv{start_s, end_s};
  if (!iv.valid()) {
    raise(Errc::invalid_interval,
          "[" + format_seconds(start_s) + ", " + format_seconds(end_s) + ")");
  }
  return iv;
}

FrameSet uniform_sample(const VideoMeta& meta, int n) {
  if (n < 1) raise(Errc::invalid_argument, "uniform_sample needs n >= 1");
  if (meta.duration_s <= 0.0) raise(Errc::invalid_argument, "video has no duration");
  FrameSet out;
  out.frames.reserve(static_cast<size_t>(n));
  const double step = meta.duration_s / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    out.frames.push_back({meta.video_id, (static_cast<double>(i) + 0.5) * step});
  }
  out.source_interval = TimeInterval{0.0, meta.duration_s};
  return out;
}

TimeInterval clamp_interval(const TimeInterval& interval, double duration_s) {
  TimeInterval c{std::max(interval.start_s, 0.0), std::min(interval.end_s, duration_s)};
  if (!(c.end_s > c.start_s)) {
    raise(Errc::invalid_interval,
          "interval [" + format_seconds(interval.start_s) + ", " +
              format_seconds(interval.end_s) + ") is empty after clamping to [0, " +
              format_seconds(duration_s) + "]");
  }
  return c;
}

FrameSet resample_interval(const VideoMeta& meta, const TimeInterval& interval,
                           int target_count) {
  if (target_count < 1) raise(Errc::invalid_argument, "resample needs target_count >= 1");
  TimeInterval c = clamp_interval(interval, meta.duration_s);
  FrameSet out;
  out.frames.reserve(static_cast<size_t>(target_count));
  const double step = c.length() / static_cast<double>(target_count);
  for (int i = 0; i < target_count; ++i) {
    out.frames.push_back({meta.video_id, c.start_s + (static_cast<double>(i) + 0.5) * step});
  }
  out.source_interval = c;
  return out;
}

std::vector<TimeInterval> clip_grid(double duration_s, double clip_len_s) {
  if (duration_s <= 0.0) raise(Errc::invalid_argument, "clip_grid needs duration > 0");
  if (clip_len_s <= 0.0) raise(Errc::invalid_argument, "clip_grid needs clip length > 0");
  std::vector<TimeInterval> grid;
  // Boundaries are computed as i * clip_len_s on both sides so consecutive
  // intervals share bit-identical endpoints.
  for (size_t i = 0; static_cast<double>(i) * clip_len_s < duration_s; ++i) {
    double lo = static_cast<double>(i) * clip_len_s;
    double hi = std::min(duration_s, static_cast<double>(i + 1) * clip_len_s);
    grid.push_back({lo, hi});
  }
  return grid;
}

}  // namespace longvid
