#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "longvid/media.hpp"

namespace longvid {

enum class SubtitleFormat { srt, vtt, whisper_json };

const char* subtitle_format_name(SubtitleFormat format);
std::optional<SubtitleFormat> subtitle_format_from_name(std::string_view name);
std::optional<SubtitleFormat> guess_subtitle_format(std::string_view path);

struct SubtitleSegment {
  int index = 0;  // position within the track, renumbered on serialization
  TimeInterval interval;
  std::string text;

  bool operator==(const SubtitleSegment& other) const {
    return interval == other.interval && text == other.text;
  }
};

struct SubtitleTrack {
  std::string video_id;
  std::vector<SubtitleSegment> segments;  // sorted by interval.start_s
  SubtitleFormat source_format = SubtitleFormat::whisper_json;

  bool empty() const { return segments.empty(); }
  std::string joined_text() const;
};

// Accepts a UTF-8 byte stream (BOM tolerated). Blank cues are dropped, cue
// styling is discarded, segments come back sorted by start time.
SubtitleTrack parse_subtitles(std::string_view bytes, SubtitleFormat format,
                              std::string video_id);

// Segments with positive overlap against the interval, in track order.
std::vector<SubtitleSegment> slice_track(const SubtitleTrack& track,
                                         const TimeInterval& interval);

// srt or whisper_json only; vtt output is not supported.
std::string serialize_track(const SubtitleTrack& track, SubtitleFormat format);

std::string format_srt_timestamp(double seconds);

}  // namespace longvid
