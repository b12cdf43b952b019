#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nirstext::corpus {

struct Topic {
  std::string name;
  std::vector<std::string> keywords;   // >= 3, unique within the topic
  std::vector<std::string> templates;  // each contains "{kw}" once and the topic name
};

// Parses and validates the topic corpus. Violations throw DataError naming
// the offending topic.
std::vector<Topic> load_topics(const std::filesystem::path& path);

enum class EventKind { imagine, rest, brk };

const char* event_kind_name(EventKind k);

struct Event {
  EventKind kind = EventKind::imagine;
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string topic;    // imagine events only
  std::string keyword;  // imagine events only
};

struct SchedParams {
  double imagine_s = 7.0;
  double rest_s = 20.0;
  double break_s = 10.0;
  int topics_per_run = 3;
  int imagines_per_topic = 3;
};

struct RunSchedule {
  int run_index = 0;
  std::vector<Event> events;  // tile [0, duration_s) with no gaps or overlap
  double duration_s = 0.0;
};

// Consumes topics without repetition (seeded order) across the produced runs:
// one rest per run at a seeded position (begin / middle / end), 10 s breaks
// in the interior topic-block gaps the rest does not occupy. Throws
// ConfigError when n_runs * topics_per_run exceeds the corpus.
std::vector<RunSchedule> build_schedule(const std::vector<Topic>& topics,
                                        int n_runs, std::uint64_t seed,
                                        const SchedParams& params = {});

struct Sentence {
  int run_index = 0;
  int trial_index = 0;  // index among the run's imagine events
  std::string topic;
  std::string keyword;
  std::string text;
};

// One sentence per imagine event; the template is a seeded choice among the
// topic's templates, independent per trial.
std::vector<Sentence> realize_sentences(const std::vector<RunSchedule>& runs,
                                        const std::vector<Topic>& topics,
                                        std::uint64_t seed);

// Every template x keyword rendering in deterministic order; the toy LM's
// training corpus.
std::vector<std::string> all_renderings(const std::vector<Topic>& topics);

std::string render_template(const std::string& tmpl, const std::string& kw);
int count_words(const std::string& text);

// kind,onset_s,duration_s,topic,keyword
std::string schedule_csv(const std::vector<RunSchedule>& runs);
std::vector<RunSchedule> schedule_from_csv(const std::string& text);

// run_index \t trial_index \t topic \t keyword \t sentence
std::string sentences_tsv(const std::vector<Sentence>& sentences);
std::vector<Sentence> sentences_from_tsv(const std::string& text);

}  // namespace nirstext::corpus
