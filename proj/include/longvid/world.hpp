#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "longvid/catalog.hpp"
#include "longvid/embed.hpp"
#include "longvid/gateway.hpp"
#include "longvid/synthesis.hpp"
#include "longvid/tools.hpp"

namespace longvid {

struct PlantedEvent {
  TimeInterval interval;
  std::string caption;
  std::optional<std::string> subtitle;
  char answer_key = 0;  // option letter this event evidences
};

// Ground-truth captioner for virtual videos. Short intervals overlapping
// planted events return their captions verbatim ("; "-joined in temporal
// order); everything else gets the video's background caption. Intervals
// longer than the coarse cutoff are deliberately vague, so zooming in is the
// only way to see event details.
class EventCaptionStore : public Captioner {
 public:
  void add_event(const std::string& video_id, PlantedEvent event);
  void set_background(const std::string& video_id, std::string caption);
  void set_coarse_cutoff(double seconds) { coarse_cutoff_ = seconds; }

  std::string caption(const std::string& video_id, const TimeInterval& interval) override;
  const std::vector<PlantedEvent>* events_for(const std::string& video_id) const;

  static EventCaptionStore from_catalog(const VideoCatalog& catalog);

 private:
  std::map<std::string, std::vector<PlantedEvent>> events_;
  std::map<std::string, std::string> background_;
  double coarse_cutoff_ = 60.0;
};

// Embedding text for a clip cell: its caption plus any overlapping subtitle
// lines, which is what clip-level retrieval indexes.
class WorldClipText : public ClipTextSource {
 public:
  WorldClipText(EventCaptionStore* captions, const std::map<std::string, SubtitleTrack>* tracks)
      : captions_(captions), tracks_(tracks) {}

  std::string clip_text(const std::string& video_id,
                        const TimeInterval& interval) const override;

 private:
  EventCaptionStore* captions_;
  const std::map<std::string, SubtitleTrack>* tracks_;
};

// P(correct | gamma bin) for scripted direct stages, 10 equal-width bins.
struct GammaProfile {
  std::array<double, 10> p_correct{};

  // Rises with confidence and tops out at 0.9, the shape real calibration
  // curves show.
  static GammaProfile staircase();
};

struct WorldSpec {
  uint64_t seed = 7;
  int video_count = 10;
  int tasks_per_video = 1;
  double min_minutes = 2.0;
  double max_minutes = 30.0;
  int distractor_lines = 12;
  int option_count = 4;
  double tool_gamma = 0.95;  // scripted tool-stage answer confidence
  GammaProfile gamma_profile = GammaProfile::staircase();
};

void validate_spec(const WorldSpec& spec);
nlohmann::json spec_to_json(const WorldSpec& spec);
WorldSpec spec_from_json(const nlohmann::json& j, const std::string& source);

struct PlantedEventRef {
  std::string video_id;
  TimeInterval interval;
};

struct World {
  WorldSpec spec;
  VideoCatalog catalog;
  IndexStore store;  // tracks always; clip/subtitle indexes after build_world_indexes
  EventCaptionStore captions;
  std::vector<QATask> tasks;
  std::vector<ScriptEntry> direct_script;
  std::vector<ScriptEntry> tool_script;
  std::map<std::string, PlantedEventRef> task_event;
  std::map<std::string, double> task_gamma;  // scripted direct-stage confidence
};

// Pure function of its WorldSpec: same settings, same world, file for file.
World generate_world(const WorldSpec& spec);

void save_world(const std::string& dir, const World& world);
World load_world(const std::string& dir);

// The planted ground truth, read from world state: the letter of the option
// whose text appears in the task's event caption.
char oracle_answer(const World& world, const QATask& task);

// Embedding machinery wired to a world's caption store and subtitle tracks.
// Keep the world alive and in place while this is used.
struct WorldEmbeddings {
  WorldClipText text_source;
  HashingEmbeddingProvider provider;

  explicit WorldEmbeddings(World& world, int dim = 256, uint64_t seed = 17)
      : text_source(&world.captions, &world.store.tracks),
        provider(dim, seed, &text_source) {}
};

// Fills world.store with clip and subtitle indexes for every video.
void build_world_indexes(World& world, const EmbeddingProvider& provider);

// Scripted backend for large worlds: routes on the exact "Question: ..." line
// of the last user message, so lookup cost does not grow with the script.
// Assumes world-generated scripts (every match is a full, unique question);
// messages without a routable question fall back to the ordinary linear scan.
class QuestionRoutedBackend : public ChatBackend {
 public:
  explicit QuestionRoutedBackend(std::vector<ScriptEntry> entries,
                                 std::string model_name = "world-scripted");

  std::string model_name() const override { return model_name_; }
  GenerationOutput generate(const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override;

  int calls() const;
  void reset();

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> entries_;
  std::vector<bool> used_;
  std::map<std::string, std::vector<size_t>> by_match_;
  std::string model_name_;
  int calls_ = 0;
};

std::shared_ptr<ChatBackend> make_direct_backend(const World& world);
std::shared_ptr<ChatBackend> make_tool_backend(const World& world);

}  // namespace longvid
