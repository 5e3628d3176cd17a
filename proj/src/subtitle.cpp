#include "longvid/subtitle.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

namespace {

using nlohmann::json;

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty() && cur.back() == '\r') cur.pop_back();
  lines.push_back(cur);
  return lines;
}

[[noreturn]] void parse_fail(size_t line_no, const std::string& what) {
  raise(Errc::parse_error, "line " + std::to_string(line_no) + ": " + what);
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

// "HH:MM:SS<sep>mmm" or, when allow_short, "MM:SS<sep>mmm". Hours may have
// more than two digits.
std::optional<double> parse_timestamp(std::string_view s, char ms_sep, bool allow_short) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : s) {
    if (c == ':') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  if (fields.size() != 3 && !(allow_short && fields.size() == 2)) return std::nullopt;

  std::string& last = fields.back();
  size_t sep = last.find(ms_sep);
  if (sep == std::string::npos) return std::nullopt;
  std::string sec_part = last.substr(0, sep);
  std::string ms_part = last.substr(sep + 1);
  if (!all_digits(sec_part) || !all_digits(ms_part) || ms_part.size() != 3) {
    return std::nullopt;
  }
  for (size_t i = 0; i + 1 < fields.size(); ++i) {
    if (!all_digits(fields[i])) return std::nullopt;
  }
  double hours = 0.0, minutes = 0.0;
  if (fields.size() == 3) {
    hours = std::stod(fields[0]);
    minutes = std::stod(fields[1]);
  } else {
    minutes = std::stod(fields[0]);
  }
  double secs = std::stod(sec_part);
  double ms = std::stod(ms_part);
  return hours * 3600.0 + minutes * 60.0 + secs + ms / 1000.0;
}

struct CueTimes {
  double start = 0.0;
  double end = 0.0;
};

std::optional<CueTimes> parse_cue_line(const std::string& line, char ms_sep,
                                       bool allow_short) {
  size_t arrow = line.find(" --> ");
  if (arrow == std::string::npos) return std::nullopt;
  std::string lhs = trim(line.substr(0, arrow));
  std::string rhs = trim(line.substr(arrow + 5));
  // VTT cue settings may trail the end timestamp; drop them.
  size_t space = rhs.find(' ');
  if (space != std::string::npos) rhs = rhs.substr(0, space);
  auto start = parse_timestamp(lhs, ms_sep, allow_short);
  auto end = parse_timestamp(rhs, ms_sep, allow_short);
  if (!start || !end) return std::nullopt;
  return CueTimes{*start, *end};
}

void push_cue(std::vector<SubtitleSegment>& segments, double start, double end,
              std::vector<std::string>& text_lines) {
  std::string text;
  for (size_t i = 0; i < text_lines.size(); ++i) {
    if (i) text += "\n";
    text += text_lines[i];
  }
  text_lines.clear();
  text = trim(text);
  if (text.empty()) return;       // blank cue
  if (!(end > start) || start < 0.0) return;  // degenerate timing
  SubtitleSegment seg;
  seg.index = static_cast<int>(segments.size());
  seg.interval = {start, end};
  seg.text = std::move(text);
  segments.push_back(std::move(seg));
}

std::vector<SubtitleSegment> parse_srt_body(const std::vector<std::string>& lines) {
  std::vector<SubtitleSegment> segments;
  size_t i = 0;
  const size_t n = lines.size();
  while (i < n) {
    while (i < n && trim(lines[i]).empty()) ++i;
    if (i >= n) break;
    // Optional numeric counter line.
    if (all_digits(trim(lines[i]))) {
      ++i;
      if (i >= n) parse_fail(i, "expected timestamp line after cue counter");
    }
    // SRT uses a comma before milliseconds; a period shows up in the wild
    // often enough to accept.
    auto times = parse_cue_line(lines[i], ',', false);
    if (!times) times = parse_cue_line(lines[i], '.', false);
    if (!times) parse_fail(i + 1, "malformed timestamp line: \"" + lines[i] + "\"");
    ++i;
    std::vector<std::string> text_lines;
    while (i < n && !trim(lines[i]).empty()) {
      text_lines.push_back(lines[i]);
      ++i;
    }
    push_cue(segments, times->start, times->end, text_lines);
  }
  return segments;
}

std::vector<SubtitleSegment> parse_vtt_body(const std::vector<std::string>& lines) {
  if (lines.empty() || trim(lines[0]).rfind("WEBVTT", 0) != 0) {
    parse_fail(1, "missing WEBVTT header");
  }
  std::vector<SubtitleSegment> segments;
  size_t i = 1;
  const size_t n = lines.size();
  while (i < n) {
    while (i < n && trim(lines[i]).empty()) ++i;
    if (i >= n) break;
    std::string head = trim(lines[i]);
    // NOTE / STYLE / REGION blocks carry no cues.
    if (head.rfind("NOTE", 0) == 0 || head == "STYLE" || head == "REGION") {
      while (i < n && !trim(lines[i]).empty()) ++i;
      continue;
    }
    // Optional cue identifier line before the timestamps.
    if (lines[i].find("-->") == std::string::npos) {
      ++i;
      if (i >= n || lines[i].find("-->") == std::string::npos) {
        parse_fail(i + 1, "expected cue timing line");
      }
    }
    auto times = parse_cue_line(lines[i], '.', true);
    if (!times) parse_fail(i + 1, "malformed timestamp line: \"" + lines[i] + "\"");
    ++i;
    std::vector<std::string> text_lines;
    while (i < n && !trim(lines[i]).empty()) {
      text_lines.push_back(lines[i]);
      ++i;
    }
    push_cue(segments, times->start, times->end, text_lines);
  }
  return segments;
}

std::vector<SubtitleSegment> parse_whisper_body(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) parse_fail(1, "invalid JSON");
  if (!j.is_object() || !j.contains("segments") || !j["segments"].is_array()) {
    parse_fail(1, "expected object with a \"segments\" array");
  }
  std::vector<SubtitleSegment> segments;
  for (const auto& item : j["segments"]) {
    if (!item.is_object() || !item.contains("start") || !item.contains("end") ||
        !item.contains("text") || !item["start"].is_number() ||
        !item["end"].is_number() || !item["text"].is_string()) {
      parse_fail(1, "segment entries need numeric start/end and string text");
    }
    double start = item["start"].get<double>();
    double end = item["end"].get<double>();
    std::vector<std::string> text_lines{item["text"].get<std::string>()};
    push_cue(segments, start, end, text_lines);
  }
  return segments;
}

}  // namespace

const char* subtitle_format_name(SubtitleFormat format) {
  switch (format) {
    case SubtitleFormat::srt: return "srt";
    case SubtitleFormat::vtt: return "vtt";
    case SubtitleFormat::whisper_json: return "whisper-json";
  }
  return "unknown";
}

std::optional<SubtitleFormat> subtitle_format_from_name(std::string_view name) {
  if (name == "srt") return SubtitleFormat::srt;
  if (name == "vtt" || name == "webvtt") return SubtitleFormat::vtt;
  if (name == "whisper-json" || name == "json") return SubtitleFormat::whisper_json;
  return std::nullopt;
}

std::optional<SubtitleFormat> guess_subtitle_format(std::string_view path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() &&
           path.substr(path.size() - suffix.size()) == suffix;
  };
  if (ends_with(".srt")) return SubtitleFormat::srt;
  if (ends_with(".vtt")) return SubtitleFormat::vtt;
  if (ends_with(".json")) return SubtitleFormat::whisper_json;
  return std::nullopt;
}

std::string SubtitleTrack::joined_text() const {
  std::string out;
  for (const auto& seg : segments) {
    if (!out.empty()) out += " ";
    out += seg.text;
  }
  return out;
}

SubtitleTrack parse_subtitles(std::string_view bytes, SubtitleFormat format,
                              std::string video_id) {
  std::string_view body = strip_utf8_bom(bytes);
  size_t bad = 0;
  if (!is_valid_utf8(body, &bad)) {
    raise(Errc::encoding_error,
          "invalid UTF-8 at byte offset " + std::to_string(bad));
  }
  SubtitleTrack track;
  track.video_id = std::move(video_id);
  track.source_format = format;
  switch (format) {
    case SubtitleFormat::srt:
      track.segments = parse_srt_body(split_lines(body));
      break;
    case SubtitleFormat::vtt:
      track.segments = parse_vtt_body(split_lines(body));
      break;
    case SubtitleFormat::whisper_json:
      track.segments = parse_whisper_body(body);
      break;
  }
  std::stable_sort(track.segments.begin(), track.segments.end(),
                   [](const SubtitleSegment& a, const SubtitleSegment& b) {
                     return a.interval.start_s < b.interval.start_s;
                   });
  for (size_t i = 0; i < track.segments.size(); ++i) {
    track.segments[i].index = static_cast<int>(i);
  }
  return track;
}

std::vector<SubtitleSegment> slice_track(const SubtitleTrack& track,
                                         const TimeInterval& interval) {
  std::vector<SubtitleSegment> out;
  for (const auto& seg : track.segments) {
    if (seg.interval.overlaps(interval)) out.push_back(seg);
  }
  return out;
}

std::string format_srt_timestamp(double seconds) {
  int64_t total_ms = round_ms(seconds);
  if (total_ms < 0) total_ms = 0;
  int64_t ms = total_ms % 1000;
  int64_t total_s = total_ms / 1000;
  int64_t s = total_s % 60;
  int64_t m = (total_s / 60) % 60;
  int64_t h = total_s / 3600;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld,%03lld",
                static_cast<long long>(h), static_cast<long long>(m),
                static_cast<long long>(s), static_cast<long long>(ms));
  return buf;
}

std::string serialize_track(const SubtitleTrack& track, SubtitleFormat format) {
  if (format == SubtitleFormat::srt) {
    std::ostringstream out;
    int counter = 1;
    for (const auto& seg : track.segments) {
      out << counter++ << "\n"
          << format_srt_timestamp(seg.interval.start_s) << " --> "
          << format_srt_timestamp(seg.interval.end_s) << "\n"
          << seg.text << "\n\n";
    }
    return out.str();
  }
  if (format == SubtitleFormat::whisper_json) {
    json j;
    j["segments"] = json::array();
    for (const auto& seg : track.segments) {
      j["segments"].push_back({{"start", seg.interval.start_s},
                               {"end", seg.interval.end_s},
                               {"text", seg.text}});
    }
    return j.dump();
  }
  raise(Errc::invalid_argument, "serialization supports srt and whisper-json only");
}

}  // namespace longvid
