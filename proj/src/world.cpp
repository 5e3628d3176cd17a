#include "longvid/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

namespace {

// Slot vocabularies. Question/caption words, subtitle cues, distractor lines
// and background captions use disjoint content words so retrieval margins in
// generated worlds are controlled, not accidental.

const std::vector<std::string>& persons() {
  static const std::vector<std::string> v = {"woman",  "man",    "girl",   "boy",
                                             "farmer", "teacher", "dancer", "singer",
                                             "painter", "doctor"};
  return v;
}

const std::vector<std::string>& accessories() {
  static const std::vector<std::string> v = {"pink hat",       "blue scarf",
                                             "silver watch",   "leather satchel",
                                             "straw basket",   "red umbrella",
                                             "green backpack", "wool mittens"};
  return v;
}

const std::vector<std::string>& garments() {
  static const std::vector<std::string> v = {
      "a red short-sleeve shirt", "a blue denim jacket",    "a green wool sweater",
      "a yellow raincoat",        "a black overcoat",       "a white linen dress",
      "a purple velvet vest",     "an orange hoodie",       "a gray cardigan",
      "a brown corduroy poncho"};
  return v;
}

const std::vector<std::string>& cue_phrases() {
  static const std::vector<std::string> v = {
      "the festival drums start",        "the mayor announces the winners",
      "the children recite a poem",      "the conductor waves the flag",
      "the baker opens the oven",        "the crowd sings the anthem",
      "the fisherman hauls the net",     "the bell rings twice",
      "the chef plates the dessert",     "the referee blows the whistle",
      "the pilot greets the passengers", "the librarian stamps the card",
      "the vendor counts the coins",     "the captain reads the forecast",
      "the nurse checks the chart",      "the clown juggles three pins",
      "the guide points at the mural",   "the judge raises the scorecard",
      "the florist trims the stems",     "the barber sharpens the razor",
      "the tailor measures the cuff",    "the miner lights the lantern",
      "the skater lands the jump",       "the beekeeper lifts the frame",
      "the potter spins the wheel",      "the archer releases the arrow",
      "the cashier rings the total",     "the coach calls a timeout",
      "the magician reveals the trick",  "the drummer counts to four"};
  return v;
}

const std::vector<std::string>& cue_suffixes() {
  static const std::vector<std::string> v = {
      "before sunrise",        "after the parade",     "during the intermission",
      "near the fountain",     "at the north gate",    "after the speech",
      "before the storm",      "by the old bridge",    "at closing time",
      "during the rehearsal",  "after the toast",      "before the auction",
      "at the halfway mark",   "after the encore",     "during the recess",
      "by the ticket booth",   "before the ceremony",  "at the last stop",
      "after the announcement", "during the lull"};
  return v;
}

const std::vector<std::string>& distractor_subjects() {
  static const std::vector<std::string> v = {
      "the granite cliffs", "the tide pools",    "the cargo barges",
      "the maple groves",   "the limestone caves", "the gravel roads",
      "the wind turbines",  "the clock towers",  "the coral reefs",
      "the silted canals"};
  return v;
}

const std::vector<std::string>& distractor_verbs() {
  static const std::vector<std::string> v = {
      "erode slowly",          "glisten after rain",   "drift through the locks",
      "stand bare in winter",  "stay cool all summer", "crunch underfoot",
      "hum on windy days",     "chime out of tune",    "bleach in warm currents",
      "flood every spring"};
  return v;
}

const std::vector<std::string>& backgrounds() {
  static const std::vector<std::string> v = {
      "an empty hallway with flickering lights", "a quiet meadow under a flat sky",
      "a slow pan across rooftops",              "an idle harbor at low tide",
      "a dusty workshop between shifts",         "a corridor of parked bicycles",
      "a field of unmown grass",                 "a silent station platform"};
  return v;
}

constexpr const char* kDefaultBackground = "an unremarkable scene";

// Timestamps land on the millisecond grid so subtitle round-trips are exact.
double quantize_s(double seconds) {
  return static_cast<double>(round_ms(seconds)) / 1000.0;
}

std::string padded_id(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05d", prefix, n);
  return buf;
}

std::optional<std::string> question_line(const std::string& text) {
  static const std::string kPrefix = "Question: ";
  size_t pos;
  if (text.rfind(kPrefix, 0) == 0) {
    pos = kPrefix.size();
  } else {
    size_t at = text.find("\n" + kPrefix);
    if (at == std::string::npos) return std::nullopt;
    pos = at + 1 + kPrefix.size();
  }
  size_t end = text.find('\n', pos);
  if (end == std::string::npos) end = text.size();
  return text.substr(pos, end - pos);
}

}  // namespace

void EventCaptionStore::add_event(const std::string& video_id, PlantedEvent event) {
  events_[video_id].push_back(std::move(event));
}

void EventCaptionStore::set_background(const std::string& video_id, std::string caption) {
  background_[video_id] = std::move(caption);
}

std::string EventCaptionStore::caption(const std::string& video_id,
                                       const TimeInterval& interval) {
  auto bg = background_.find(video_id);
  const std::string& background = bg != background_.end() ? bg->second : kDefaultBackground;
  if (interval.length() > coarse_cutoff_) return background;

  auto it = events_.find(video_id);
  if (it == events_.end()) return background;
  std::vector<const PlantedEvent*> hits;
  for (const PlantedEvent& e : it->second) {
    if (e.interval.overlaps(interval)) hits.push_back(&e);
  }
  if (hits.empty()) return background;
  std::sort(hits.begin(), hits.end(), [](const PlantedEvent* a, const PlantedEvent* b) {
    return a->interval.start_s < b->interval.start_s;
  });
  std::string out;
  for (size_t i = 0; i < hits.size(); ++i) {
    if (i) out += "; ";
    out += hits[i]->caption;
  }
  return out;
}

const std::vector<PlantedEvent>* EventCaptionStore::events_for(
    const std::string& video_id) const {
  auto it = events_.find(video_id);
  return it == events_.end() ? nullptr : &it->second;
}

EventCaptionStore EventCaptionStore::from_catalog(const VideoCatalog& catalog) {
  EventCaptionStore store;
  for (const VideoManifest* m : catalog.all()) {
    store.set_background(m->meta.video_id, m->background_caption.empty()
                                               ? kDefaultBackground
                                               : m->background_caption);
    for (const auto& e : m->events) {
      PlantedEvent event;
      event.interval = {e.value("start_s", 0.0), e.value("end_s", 0.0)};
      event.caption = e.value("caption", "");
      if (e.contains("subtitle") && e["subtitle"].is_string()) {
        event.subtitle = e["subtitle"].get<std::string>();
      }
      const std::string key = e.value("answer_key", "");
      if (!key.empty()) event.answer_key = key[0];
      store.add_event(m->meta.video_id, std::move(event));
    }
  }
  return store;
}

std::string WorldClipText::clip_text(const std::string& video_id,
                                     const TimeInterval& interval) const {
  std::string text = captions_->caption(video_id, interval);
  if (tracks_) {
    auto it = tracks_->find(video_id);
    if (it != tracks_->end()) {
      for (const SubtitleSegment& seg : slice_track(it->second, interval)) {
        text += ' ';
        text += seg.text;
      }
    }
  }
  return text;
}

GammaProfile GammaProfile::staircase() {
  GammaProfile p;
  p.p_correct = {0.30, 0.35, 0.40, 0.45, 0.48, 0.60, 0.70, 0.80, 0.85, 0.90};
  return p;
}

void validate_spec(const WorldSpec& spec) {
  if (spec.video_count < 1) raise(Errc::config_error, "video_count must be >= 1");
  if (spec.tasks_per_video < 1) raise(Errc::config_error, "tasks_per_video must be >= 1");
  if (!(spec.min_minutes > 0.0) || spec.max_minutes < spec.min_minutes) {
    raise(Errc::config_error, "need 0 < min_minutes <= max_minutes");
  }
  if (spec.distractor_lines < 0) raise(Errc::config_error, "distractor_lines must be >= 0");
  if (spec.option_count < 2 || spec.option_count > static_cast<int>(garments().size())) {
    raise(Errc::config_error,
          "option_count must be in [2, " + std::to_string(garments().size()) + "]");
  }
  const int cells_at_min = static_cast<int>(spec.min_minutes * 60.0 / 10.0);
  if (spec.tasks_per_video > cells_at_min) {
    raise(Errc::config_error, "tasks_per_video exceeds the clip cells of the shortest video");
  }
  const long combos = static_cast<long>(persons().size()) * accessories().size() *
                      cue_phrases().size() * cue_suffixes().size();
  if (static_cast<long>(spec.video_count) * spec.tasks_per_video > combos) {
    raise(Errc::config_error,
          "world needs more unique questions than the vocabulary offers (" +
              std::to_string(combos) + ")");
  }
  for (double p : spec.gamma_profile.p_correct) {
    if (p < 0.0 || p > 1.0) raise(Errc::config_error, "gamma profile entries must be in [0,1]");
  }
  if (!(spec.tool_gamma > 0.0) || spec.tool_gamma > 1.0) {
    raise(Errc::config_error, "tool_gamma must be in (0,1]");
  }
}

nlohmann::json spec_to_json(const WorldSpec& spec) {
  return nlohmann::json{{"seed", spec.seed},
                        {"video_count", spec.video_count},
                        {"tasks_per_video", spec.tasks_per_video},
                        {"min_minutes", spec.min_minutes},
                        {"max_minutes", spec.max_minutes},
                        {"distractor_lines", spec.distractor_lines},
                        {"option_count", spec.option_count},
                        {"tool_gamma", spec.tool_gamma},
                        {"gamma_profile", spec.gamma_profile.p_correct}};
}

WorldSpec spec_from_json(const nlohmann::json& j, const std::string& source) {
  WorldSpec spec;
  spec.seed = j.value("seed", spec.seed);
  spec.video_count = j.value("video_count", spec.video_count);
  spec.tasks_per_video = j.value("tasks_per_video", spec.tasks_per_video);
  spec.min_minutes = j.value("min_minutes", spec.min_minutes);
  spec.max_minutes = j.value("max_minutes", spec.max_minutes);
  spec.distractor_lines = j.value("distractor_lines", spec.distractor_lines);
  spec.option_count = j.value("option_count", spec.option_count);
  spec.tool_gamma = j.value("tool_gamma", spec.tool_gamma);
  if (j.contains("gamma_profile")) {
    const auto& arr = j["gamma_profile"];
    if (!arr.is_array() || arr.size() != spec.gamma_profile.p_correct.size()) {
      raise(Errc::parse_error, source + ": gamma_profile must hold 10 numbers");
    }
    for (size_t i = 0; i < spec.gamma_profile.p_correct.size(); ++i) {
      spec.gamma_profile.p_correct[i] = arr[i].get<double>();
    }
  }
  validate_spec(spec);
  return spec;
}

World generate_world(const WorldSpec& spec) {
  validate_spec(spec);
  World w;
  w.spec = spec;
  Rng root(spec.seed);

  const int total_tasks = spec.video_count * spec.tasks_per_video;
  const int combo_space = static_cast<int>(persons().size() * accessories().size() *
                                           cue_phrases().size() * cue_suffixes().size());
  // Unique (person, accessory, cue) combos: questions double as script keys.
  std::vector<int> combos(combo_space);
  std::iota(combos.begin(), combos.end(), 0);
  Rng combo_rng = root.fork("combos");
  combo_rng.shuffle(combos);
  combos.resize(total_tasks);

  Rng dur_rng = root.fork("durations");
  int task_counter = 0;
  for (int vi = 0; vi < spec.video_count; ++vi) {
    const std::string video_id = padded_id("vid-", vi);
    const double duration =
        quantize_s(dur_rng.in(spec.min_minutes * 60.0, spec.max_minutes * 60.0));

    VideoManifest man;
    man.meta.video_id = video_id;
    man.meta.uri = "virtual://" + video_id;
    man.meta.duration_s = duration;
    man.meta.fps = 1.0;
    man.meta.kind = VideoKind::virtual_manifest;
    man.background_caption = backgrounds()[vi % backgrounds().size()];
    w.captions.set_background(video_id, man.background_caption);

    const std::vector<TimeInterval> grid = clip_grid(duration, 10.0);
    std::vector<int> cells;  // cells a subtitle line comfortably fits into
    for (size_t i = 0; i < grid.size(); ++i) {
      if (grid[i].length() >= 5.0) cells.push_back(static_cast<int>(i));
    }
    Rng event_rng = root.fork(video_id + ":events");
    event_rng.shuffle(cells);

    std::vector<SubtitleSegment> segments;
    for (int ti = 0; ti < spec.tasks_per_video; ++ti) {
      const TimeInterval cell = grid[cells[ti]];
      const std::string task_id = padded_id("task-", task_counter);
      const int combo = combos[task_counter];
      ++task_counter;

      const std::string& person = persons()[combo % persons().size()];
      const std::string& accessory =
          accessories()[(combo / persons().size()) % accessories().size()];
      const std::string cue =
          cue_phrases()[(combo / (persons().size() * accessories().size())) %
                        cue_phrases().size()] +
          " " +
          cue_suffixes()[(combo / (persons().size() * accessories().size() *
                                   cue_phrases().size())) %
                         cue_suffixes().size()];

      // Options: a seeded pick of garments, correct one at a random letter.
      Rng option_rng = root.fork(task_id + ":options");
      std::vector<int> garment_idx(garments().size());
      std::iota(garment_idx.begin(), garment_idx.end(), 0);
      option_rng.shuffle(garment_idx);
      const int correct_pos = option_rng.below(spec.option_count);

      QATask task;
      task.task_id = task_id;
      task.video_id = video_id;
      for (int k = 0; k < spec.option_count; ++k) {
        task.options.push_back(
            {static_cast<char>('A' + k), garments()[garment_idx[k]]});
      }
      task.answer = static_cast<char>('A' + correct_pos);
      const std::string& garment = garments()[garment_idx[correct_pos]];
      const std::string caption =
          "the " + person + " with the " + accessory + " is wearing " + garment;
      task.question = "What is the " + person + " with the " + accessory +
                      " wearing when the subtitle mentions '" + cue + "'?";
      validate_task(task);

      w.task_event[task_id] = {video_id, cell};
      PlantedEvent event{cell, caption, cue, task.answer};
      w.captions.add_event(video_id, event);
      man.events.push_back({{"start_s", cell.start_s},
                            {"end_s", cell.end_s},
                            {"caption", caption},
                            {"subtitle", cue},
                            {"answer_key", std::string(1, task.answer)}});
      segments.push_back({0,
                          {quantize_s(cell.start_s + 0.1 * cell.length()),
                           quantize_s(cell.start_s + 0.4 * cell.length())},
                          cue});

      // Scripted direct stage: confidence drawn from the profile.
      Rng gamma_rng = root.fork(task_id + ":gamma");
      double gamma;
      do {
        gamma = gamma_rng.unit();
      } while (gamma <= 0.0);
      const int bin = std::min(static_cast<int>(gamma * 10.0), 9);
      const bool direct_correct = gamma_rng.unit() < spec.gamma_profile.p_correct[bin];
      char direct_letter = task.answer;
      if (!direct_correct) {
        int wrong = gamma_rng.below(spec.option_count - 1);
        for (const QAOption& o : task.options) {
          if (o.letter == task.answer) continue;
          if (wrong-- == 0) {
            direct_letter = o.letter;
            break;
          }
        }
      }
      w.task_gamma[task_id] = gamma;

      ScriptEntry direct;
      direct.match = task.question;
      direct.turn = 0;
      direct.reusable = true;
      direct.text = "<answer>" + std::string(1, direct_letter) + "</answer>";
      direct.logprobs = std::vector<double>{std::log(gamma)};
      w.direct_script.push_back(std::move(direct));

      // Scripted tool stage: retrieve the cue, zoom into its cell, answer.
      ScriptEntry t0;
      t0.match = task.question;
      t0.turn = 0;
      t0.reusable = true;
      t0.text = "I should find when the subtitle mentions the cue.\n" +
                serialize_tool_call({tool_names::subtitle_retrieval,
                                     {{"video_path", video_id},
                                      {"query", cue},
                                      {"topk", 1}}});
      w.tool_script.push_back(std::move(t0));

      ScriptEntry t1;
      t1.match = task.question;
      t1.turn = 1;
      t1.reusable = true;
      t1.text = "Zooming into the retrieved moment.\n" +
                serialize_tool_call({tool_names::frame_zoom,
                                     {{"video_path", video_id},
                                      {"start", cell.start_s},
                                      {"end", cell.end_s}}});
      w.tool_script.push_back(std::move(t1));

      ScriptEntry t2;
      t2.match = task.question;
      t2.turn = 2;
      t2.reusable = true;
      t2.text =
          "The segment settles it.\n<answer>" + std::string(1, task.answer) + "</answer>";
      t2.logprobs = std::vector<double>{std::log(spec.tool_gamma)};
      w.tool_script.push_back(std::move(t2));

      w.tasks.push_back(std::move(task));
    }

    // Distractor lines live in cells without events.
    Rng distractor_rng = root.fork(video_id + ":distractors");
    std::vector<int> pool(cells.begin() + spec.tasks_per_video, cells.end());
    if (!pool.empty()) {
      for (int di = 0; di < spec.distractor_lines; ++di) {
        const TimeInterval cell = grid[pool[distractor_rng.below(static_cast<int>(pool.size()))]];
        const std::string line =
            distractor_subjects()[distractor_rng.below(
                static_cast<int>(distractor_subjects().size()))] +
            " " +
            distractor_verbs()[distractor_rng.below(
                static_cast<int>(distractor_verbs().size()))];
        segments.push_back({0,
                            {quantize_s(cell.start_s + 0.5 * cell.length()),
                             quantize_s(cell.start_s + 0.9 * cell.length())},
                            line});
      }
    }

    std::stable_sort(segments.begin(), segments.end(),
                     [](const SubtitleSegment& a, const SubtitleSegment& b) {
                       return a.interval.start_s < b.interval.start_s;
                     });
    for (size_t i = 0; i < segments.size(); ++i) segments[i].index = static_cast<int>(i + 1);

    SubtitleTrack track;
    track.video_id = video_id;
    track.segments = std::move(segments);
    track.source_format = SubtitleFormat::whisper_json;
    w.store.tracks[video_id] = std::move(track);
    w.catalog.add(std::move(man));
  }
  return w;
}

void save_world(const std::string& dir, const World& world) {
  ensure_dir(dir);
  world.catalog.save_dir(dir + "/manifests");

  ensure_dir(dir + "/subtitles");
  for (const auto& [video_id, track] : world.store.tracks) {
    write_file(dir + "/subtitles/" + video_id + ".json",
               serialize_track(track, SubtitleFormat::whisper_json));
  }

  // Per-cell caption store, derived from the planted events.
  EventCaptionStore captions = EventCaptionStore::from_catalog(world.catalog);
  std::string caption_lines;
  for (const VideoManifest* m : world.catalog.all()) {
    for (const TimeInterval& cell : clip_grid(m->meta.duration_s)) {
      caption_lines += nlohmann::json{{"video_id", m->meta.video_id},
                                      {"start_s", cell.start_s},
                                      {"end_s", cell.end_s},
                                      {"caption", captions.caption(m->meta.video_id, cell)}}
                           .dump();
      caption_lines += '\n';
    }
  }
  write_file(dir + "/captions.jsonl", caption_lines);

  save_tasks(dir + "/tasks.jsonl", world.tasks);

  ensure_dir(dir + "/scripts");
  write_file(dir + "/scripts/direct_backend.json",
             script_to_json(world.direct_script).dump(2) + "\n");
  write_file(dir + "/scripts/tool_backend.json",
             script_to_json(world.tool_script).dump(2) + "\n");

  nlohmann::json task_event = nlohmann::json::object();
  for (const auto& [task_id, ref] : world.task_event) {
    task_event[task_id] = {{"video_id", ref.video_id},
                           {"start_s", ref.interval.start_s},
                           {"end_s", ref.interval.end_s}};
  }
  nlohmann::json world_json{{"schema", "world/1"},
                            {"spec", spec_to_json(world.spec)},
                            {"task_event", task_event},
                            {"task_gamma", world.task_gamma}};
  write_file(dir + "/world.json", world_json.dump(2) + "\n");
}

World load_world(const std::string& dir) {
  nlohmann::json world_json;
  try {
    world_json = nlohmann::json::parse(read_file(dir + "/world.json"));
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::parse_error, dir + "/world.json: " + e.what());
  }
  if (world_json.value("schema", "") != "world/1") {
    raise(Errc::parse_error, dir + "/world.json: expected schema 'world/1'");
  }

  World w;
  w.spec = spec_from_json(world_json["spec"], dir + "/world.json");
  w.catalog = VideoCatalog::load_dir(dir + "/manifests");
  w.captions = EventCaptionStore::from_catalog(w.catalog);
  for (const VideoManifest* m : w.catalog.all()) {
    const std::string path = dir + "/subtitles/" + m->meta.video_id + ".json";
    w.store.tracks[m->meta.video_id] =
        parse_subtitles(read_file(path), SubtitleFormat::whisper_json, m->meta.video_id);
  }
  w.tasks = load_tasks(dir + "/tasks.jsonl");

  auto load_script = [&](const char* name) {
    const std::string path = dir + "/scripts/" + name;
    try {
      return parse_script(nlohmann::json::parse(read_file(path)), path);
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::parse_error, path + ": " + e.what());
    }
  };
  w.direct_script = load_script("direct_backend.json");
  w.tool_script = load_script("tool_backend.json");

  const nlohmann::json task_event = world_json.value("task_event", nlohmann::json::object());
  for (const auto& [task_id, ref] : task_event.items()) {
    w.task_event[task_id] = {ref.value("video_id", ""),
                             {ref.value("start_s", 0.0), ref.value("end_s", 0.0)}};
  }
  const nlohmann::json task_gamma = world_json.value("task_gamma", nlohmann::json::object());
  for (const auto& [task_id, gamma] : task_gamma.items()) {
    w.task_gamma[task_id] = gamma.get<double>();
  }
  return w;
}

char oracle_answer(const World& world, const QATask& task) {
  auto it = world.task_event.find(task.task_id);
  if (it == world.task_event.end()) {
    raise(Errc::unknown_task, "task " + task.task_id + " is not part of this world");
  }
  const std::vector<PlantedEvent>* events = world.captions.events_for(it->second.video_id);
  if (!events) {
    raise(Errc::unknown_task, "no events recorded for video " + it->second.video_id);
  }
  const PlantedEvent* planted = nullptr;
  for (const PlantedEvent& e : *events) {
    if (e.interval == it->second.interval) {
      planted = &e;
      break;
    }
  }
  if (!planted) {
    raise(Errc::unknown_task, "event for task " + task.task_id + " is missing");
  }
  for (const QAOption& o : task.options) {
    if (planted->caption.find(o.text) != std::string::npos) return o.letter;
  }
  raise(Errc::invalid_argument,
        "no option of task " + task.task_id + " matches its event caption");
}

void build_world_indexes(World& world, const EmbeddingProvider& provider) {
  for (const VideoManifest* m : world.catalog.all()) {
    world.store.clips[m->meta.video_id] = build_clip_index(m->meta, provider);
    auto t = world.store.tracks.find(m->meta.video_id);
    if (t != world.store.tracks.end() && !t->second.segments.empty()) {
      world.store.subtitles[m->meta.video_id] = build_subtitle_index(t->second, provider);
    }
  }
}

QuestionRoutedBackend::QuestionRoutedBackend(std::vector<ScriptEntry> entries,
                                             std::string model_name)
    : entries_(std::move(entries)),
      used_(entries_.size(), false),
      model_name_(std::move(model_name)) {
  for (size_t i = 0; i < entries_.size(); ++i) {
    by_match_[entries_[i].match].push_back(i);
  }
}

GenerationOutput QuestionRoutedBackend::generate(const std::vector<ChatMessage>& messages,
                                                 const GenerationParams&) {
  std::lock_guard<std::mutex> lock(mu_);
  ScriptPosition pos = script_position(messages);
  int idx = -1;
  if (std::optional<std::string> q = question_line(pos.last_user)) {
    auto it = by_match_.find(*q);
    if (it != by_match_.end()) idx = select_script_entry(entries_, used_, pos, &it->second);
  }
  if (idx < 0) idx = select_script_entry(entries_, used_, pos, nullptr);
  if (idx < 0) raise_script_miss(pos);
  used_[idx] = true;
  ++calls_;
  GenerationOutput out;
  out.text = entries_[idx].text;
  out.token_logprobs = entries_[idx].logprobs;
  return out;
}

int QuestionRoutedBackend::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

void QuestionRoutedBackend::reset() {
  std::lock_guard<std::mutex> lock(mu_);
  std::fill(used_.begin(), used_.end(), false);
  calls_ = 0;
}

std::shared_ptr<ChatBackend> make_direct_backend(const World& world) {
  return std::make_shared<QuestionRoutedBackend>(world.direct_script, "world-direct");
}

std::shared_ptr<ChatBackend> make_tool_backend(const World& world) {
  return std::make_shared<QuestionRoutedBackend>(world.tool_script, "world-tool");
}

}  // namespace longvid
