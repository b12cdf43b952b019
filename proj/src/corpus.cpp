#include "nirstext/corpus.hpp"

#include <json.hpp>
#include <set>
#include <sstream>

#include "nirstext/errors.hpp"
#include "nirstext/fileio.hpp"
#include "nirstext/rng.hpp"

namespace nirstext::corpus {

using nlohmann::json;

namespace {

constexpr const char* kSlot = "{kw}";

void validate_topic(const Topic& t) {
  if (t.name.empty()) throw DataError("topics file: empty topic name");
  if (t.keywords.size() < 3)
    throw DataError("topic '" + t.name + "': needs at least 3 keywords");
  std::set<std::string> uniq(t.keywords.begin(), t.keywords.end());
  if (uniq.size() != t.keywords.size())
    throw DataError("topic '" + t.name + "': duplicate keywords");
  for (const auto& kw : t.keywords)
    if (kw.empty() || kw.find(' ') != std::string::npos)
      throw DataError("topic '" + t.name + "': bad keyword '" + kw + "'");
  if (t.templates.empty())
    throw DataError("topic '" + t.name + "': needs at least 1 template");
  for (const auto& tpl : t.templates) {
    const auto first = tpl.find(kSlot);
    if (first == std::string::npos ||
        tpl.find(kSlot, first + 1) != std::string::npos)
      throw DataError("topic '" + t.name + "': template must contain {kw} exactly once: " + tpl);
    if (tpl.find(t.name) == std::string::npos)
      throw DataError("topic '" + t.name + "': template does not mention the topic: " + tpl);
    // {kw} is one rendered word, so template word count == sentence word count
    if (count_words(render_template(tpl, "x")) < 4)
      throw DataError("topic '" + t.name + "': rendered sentence shorter than 4 words: " + tpl);
  }
}

}  // namespace

std::vector<Topic> load_topics(const std::filesystem::path& path) {
  json root;
  try {
    root = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw DataError("topics file " + path.string() + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("topics") || !root["topics"].is_array())
    throw DataError("topics file " + path.string() + ": expected {\"topics\": [...]}");

  std::vector<Topic> topics;
  std::set<std::string> names;
  for (const auto& jt : root["topics"]) {
    Topic t;
    try {
      t.name = jt.at("name").get<std::string>();
      t.keywords = jt.at("keywords").get<std::vector<std::string>>();
      t.templates = jt.at("templates").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw DataError("topics file " + path.string() + ": bad topic entry: " + e.what());
    }
    validate_topic(t);
    if (!names.insert(t.name).second)
      throw DataError("topics file: duplicate topic '" + t.name + "'");
    topics.push_back(std::move(t));
  }
  if (topics.empty()) throw DataError("topics file " + path.string() + ": no topics");
  return topics;
}

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::imagine: return "imagine";
    case EventKind::rest: return "rest";
    case EventKind::brk: return "break";
  }
  return "?";
}

std::vector<RunSchedule> build_schedule(const std::vector<Topic>& topics,
                                        int n_runs, std::uint64_t seed,
                                        const SchedParams& p) {
  if (n_runs <= 0) throw ConfigError("build_schedule: n_runs must be positive");
  const std::size_t need = static_cast<std::size_t>(n_runs) *
                           static_cast<std::size_t>(p.topics_per_run);
  if (need > topics.size())
    throw ConfigError("build_schedule: " + std::to_string(n_runs) + " runs need " +
                      std::to_string(need) + " topics but the corpus has " +
                      std::to_string(topics.size()));

  std::vector<std::size_t> order(topics.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng topic_rng(derive_seed(seed, "schedule.topics"));
  topic_rng.shuffle(order);

  std::vector<RunSchedule> runs;
  std::size_t next_topic = 0;
  for (int r = 0; r < n_runs; ++r) {
    Rng rng(derive_seed(seed, "schedule.run", static_cast<std::uint64_t>(r)));
    // 0 = before the first block, 1 = mid-run (between blocks 2 and 3),
    // 2 = after the last block. The rest replaces the break in its gap.
    const int rest_pos = static_cast<int>(rng.below(3));

    RunSchedule run;
    run.run_index = r;
    double t = 0.0;
    auto push = [&](EventKind kind, double dur, const std::string& topic = "",
                    const std::string& kw = "") {
      run.events.push_back({kind, t, dur, topic, kw});
      t += dur;
    };

    if (rest_pos == 0) push(EventKind::rest, p.rest_s);
    for (int b = 0; b < p.topics_per_run; ++b) {
      const Topic& topic = topics[order[next_topic++]];
      std::vector<std::string> kws = topic.keywords;
      rng.shuffle(kws);
      for (int i = 0; i < p.imagines_per_topic; ++i)
        push(EventKind::imagine, p.imagine_s, topic.name,
             kws[static_cast<std::size_t>(i) % kws.size()]);
      const bool last = (b == p.topics_per_run - 1);
      if (!last) {
        if (rest_pos == 1 && b == p.topics_per_run - 2) push(EventKind::rest, p.rest_s);
        else push(EventKind::brk, p.break_s);
      } else if (rest_pos == 2) {
        push(EventKind::rest, p.rest_s);
      }
    }
    run.duration_s = t;
    runs.push_back(std::move(run));
  }
  return runs;
}

std::string render_template(const std::string& tmpl, const std::string& kw) {
  const auto pos = tmpl.find(kSlot);
  if (pos == std::string::npos) throw DataError("template has no {kw} slot: " + tmpl);
  std::string out = tmpl;
  out.replace(pos, std::string(kSlot).size(), kw);
  return out;
}

int count_words(const std::string& text) {
  std::istringstream ss(text);
  std::string w;
  int n = 0;
  while (ss >> w) ++n;
  return n;
}

std::vector<Sentence> realize_sentences(const std::vector<RunSchedule>& runs,
                                        const std::vector<Topic>& topics,
                                        std::uint64_t seed) {
  std::vector<Sentence> out;
  std::uint64_t global = 0;
  for (const auto& run : runs) {
    int trial = 0;
    for (const auto& ev : run.events) {
      if (ev.kind != EventKind::imagine) continue;
      const Topic* topic = nullptr;
      for (const auto& t : topics)
        if (t.name == ev.topic) {
          topic = &t;
          break;
        }
      if (!topic) throw DataError("realize_sentences: unknown topic '" + ev.topic + "'");
      Rng rng(derive_seed(seed, "realize", global));
      const auto& tpl = topic->templates[rng.below(topic->templates.size())];
      Sentence s;
      s.run_index = run.run_index;
      s.trial_index = trial;
      s.topic = ev.topic;
      s.keyword = ev.keyword;
      s.text = render_template(tpl, ev.keyword);
      out.push_back(std::move(s));
      ++trial;
      ++global;
    }
  }
  return out;
}

std::vector<std::string> all_renderings(const std::vector<Topic>& topics) {
  std::vector<std::string> out;
  for (const auto& t : topics)
    for (const auto& tpl : t.templates)
      for (const auto& kw : t.keywords) out.push_back(render_template(tpl, kw));
  return out;
}

std::string schedule_csv(const std::vector<RunSchedule>& runs) {
  std::string out = "run,kind,onset_s,duration_s,topic,keyword\n";
  for (const auto& run : runs) {
    for (const auto& ev : run.events) {
      out += io::join_row({std::to_string(run.run_index), event_kind_name(ev.kind),
                           io::fmt_double(ev.onset_s), io::fmt_double(ev.duration_s),
                           ev.topic, ev.keyword},
                          ',');
      out.push_back('\n');
    }
  }
  return out;
}

std::vector<RunSchedule> schedule_from_csv(const std::string& text) {
  const auto lines = io::split_lines(text);
  if (lines.empty() || lines[0] != "run,kind,onset_s,duration_s,topic,keyword")
    throw DataError("schedule csv: bad header");
  std::vector<RunSchedule> runs;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_row(lines[i], ',');
    if (f.size() != 6) throw DataError("schedule csv: bad row: " + lines[i]);
    const int run_idx = std::stoi(f[0]);
    while (runs.size() <= static_cast<std::size_t>(run_idx)) {
      RunSchedule r;
      r.run_index = static_cast<int>(runs.size());
      runs.push_back(r);
    }
    Event ev;
    if (f[1] == "imagine") ev.kind = EventKind::imagine;
    else if (f[1] == "rest") ev.kind = EventKind::rest;
    else if (f[1] == "break") ev.kind = EventKind::brk;
    else throw DataError("schedule csv: unknown kind " + f[1]);
    ev.onset_s = std::stod(f[2]);
    ev.duration_s = std::stod(f[3]);
    ev.topic = f[4];
    ev.keyword = f[5];
    auto& run = runs[static_cast<std::size_t>(run_idx)];
    run.events.push_back(ev);
    run.duration_s = std::max(run.duration_s, ev.onset_s + ev.duration_s);
  }
  return runs;
}

std::string sentences_tsv(const std::vector<Sentence>& sentences) {
  std::string out = "run\ttrial\ttopic\tkeyword\tsentence\n";
  for (const auto& s : sentences) {
    out += io::join_row({std::to_string(s.run_index), std::to_string(s.trial_index),
                         s.topic, s.keyword, s.text},
                        '\t');
    out.push_back('\n');
  }
  return out;
}

std::vector<Sentence> sentences_from_tsv(const std::string& text) {
  const auto lines = io::split_lines(text);
  if (lines.empty() || lines[0] != "run\ttrial\ttopic\tkeyword\tsentence")
    throw DataError("sentences tsv: bad header");
  std::vector<Sentence> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_row(lines[i], '\t');
    if (f.size() != 5) throw DataError("sentences tsv: bad row: " + lines[i]);
    Sentence s;
    s.run_index = std::stoi(f[0]);
    s.trial_index = std::stoi(f[1]);
    s.topic = f[2];
    s.keyword = f[3];
    s.text = f[4];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nirstext::corpus
