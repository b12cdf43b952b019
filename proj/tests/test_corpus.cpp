#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "nirstext/corpus.hpp"
#include "nirstext/errors.hpp"

namespace cp = nirstext::corpus;
using nirstext::ConfigError;
using nirstext::DataError;

#ifndef NIRSTEXT_SOURCE_DIR
#error "NIRSTEXT_SOURCE_DIR must be defined for tests"
#endif

namespace {

const std::vector<cp::Topic>& shipped_topics() {
  static const auto topics =
      cp::load_topics(std::string(NIRSTEXT_SOURCE_DIR) + "/data/topics.json");
  return topics;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("shipped corpus has 272 valid topics with sensible sentence lengths") {
  const auto& topics = shipped_topics();
  REQUIRE(topics.size() == 272);

  double total_words = 0.0;
  std::size_t n_sentences = 0;
  for (const auto& t : topics) {
    CHECK(t.keywords.size() >= 3);
    CHECK(t.templates.size() >= 1);
    for (const auto& tpl : t.templates) {
      for (const auto& kw : t.keywords) {
        const auto s = cp::render_template(tpl, kw);
        const int n = cp::count_words(s);
        REQUIRE(n >= 4);
        total_words += n;
        ++n_sentences;
      }
    }
  }
  const double mean_len = total_words / static_cast<double>(n_sentences);
  // paper-scale average sentence length
  CHECK(mean_len > 8.3);
  CHECK(mean_len < 10.4);
}

TEST_CASE("library topic reproduces the pinned example sentence") {
  const auto& topics = shipped_topics();
  const cp::Topic* lib = nullptr;
  for (const auto& t : topics)
    if (t.name == "library") lib = &t;
  REQUIRE(lib != nullptr);
  REQUIRE(std::count(lib->keywords.begin(), lib->keywords.end(), "borrow") == 1);
  bool found = false;
  for (const auto& tpl : lib->templates)
    found = found ||
            cp::render_template(tpl, "borrow") ==
                "I used to frequently borrow books from the library.";
  CHECK(found);
}

TEST_CASE("load_topics validates structure") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "nirstext_corpus_test";
  fs::create_directories(dir);
  auto write = [&](const std::string& body) {
    const auto p = dir / "t.json";
    std::ofstream(p) << body;
    return p;
  };
  CHECK_THROWS_AS(cp::load_topics(write("{\"topics\": []}")), DataError);
  CHECK_THROWS_AS(cp::load_topics(write("not json")), DataError);
  // too few keywords
  CHECK_THROWS_AS(cp::load_topics(write(
                      R"({"topics":[{"name":"x","keywords":["a","b"],"templates":["a {kw} near the x now"]}]})")),
                  DataError);
  // template without slot
  CHECK_THROWS_AS(cp::load_topics(write(
                      R"({"topics":[{"name":"x","keywords":["a","b","c"],"templates":["no slot mentions x here"]}]})")),
                  DataError);
  // template not mentioning topic
  CHECK_THROWS_AS(cp::load_topics(write(
                      R"({"topics":[{"name":"x","keywords":["a","b","c"],"templates":["we {kw} things around here"]}]})")),
                  DataError);
  // valid minimal file
  const auto ok = cp::load_topics(write(
      R"({"topics":[{"name":"x","keywords":["a","b","c"],"templates":["we {kw} near the x daily"]}]})"));
  CHECK(ok.size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("build_schedule produces 9 imagines and 1 rest per run, tiled") {
  const auto& topics = shipped_topics();
  const auto runs = cp::build_schedule(topics, 4, 0);
  REQUIRE(runs.size() == 4);
  std::set<std::string> topics_seen;
  for (const auto& run : runs) {
    int imagines = 0, rests = 0, breaks = 0;
    double t = 0.0;
    for (const auto& ev : run.events) {
      CHECK(ev.onset_s == doctest::Approx(t));  // tiling, no gaps or overlap
      t += ev.duration_s;
      if (ev.kind == cp::EventKind::imagine) {
        ++imagines;
        CHECK(ev.duration_s == doctest::Approx(7.0));
        CHECK(!ev.topic.empty());
        CHECK(!ev.keyword.empty());
        topics_seen.insert(ev.topic);
      } else if (ev.kind == cp::EventKind::rest) {
        ++rests;
        CHECK(ev.duration_s == doctest::Approx(20.0));
      } else {
        ++breaks;
        CHECK(ev.duration_s == doctest::Approx(10.0));
      }
    }
    CHECK(imagines == 9);
    CHECK(rests == 1);
    CHECK(breaks >= 1);
    CHECK(breaks <= 2);
    CHECK(run.duration_s == doctest::Approx(t));
    // three distinct topics per run, three distinct keywords per topic
    std::map<std::string, std::set<std::string>> per_topic;
    for (const auto& ev : run.events)
      if (ev.kind == cp::EventKind::imagine) per_topic[ev.topic].insert(ev.keyword);
    CHECK(per_topic.size() == 3);
    for (const auto& [tp, kws] : per_topic) CHECK(kws.size() == 3);
  }
  // no topic repeats across runs until the corpus is exhausted
  CHECK(topics_seen.size() == 12);
}

TEST_CASE("rest position covers begin, middle and end across seeds") {
  const auto& topics = shipped_topics();
  std::set<std::string> positions;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto runs = cp::build_schedule(topics, 1, seed);
    const auto& evs = runs[0].events;
    if (evs.front().kind == cp::EventKind::rest) positions.insert("begin");
    else if (evs.back().kind == cp::EventKind::rest) positions.insert("end");
    else positions.insert("middle");
  }
  CHECK(positions.size() == 3);
}

TEST_CASE("build_schedule is deterministic and rejects topic exhaustion") {
  const auto& topics = shipped_topics();
  const auto a = cp::build_schedule(topics, 3, 42);
  const auto b = cp::build_schedule(topics, 3, 42);
  REQUIRE(a.size() == b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    REQUIRE(a[r].events.size() == b[r].events.size());
    for (std::size_t i = 0; i < a[r].events.size(); ++i) {
      CHECK(a[r].events[i].onset_s == b[r].events[i].onset_s);
      CHECK(a[r].events[i].topic == b[r].events[i].topic);
      CHECK(a[r].events[i].keyword == b[r].events[i].keyword);
    }
  }
  CHECK_THROWS_AS(cp::build_schedule(topics, 91, 0), ConfigError);  // 273 topics needed
}

TEST_CASE("realize_sentences renders one sentence per imagine with topic and keyword") {
  const auto& topics = shipped_topics();
  const auto runs = cp::build_schedule(topics, 2, 7);
  const auto sents = cp::realize_sentences(runs, topics, 7);
  REQUIRE(sents.size() == 18);
  for (const auto& s : sents) {
    CHECK(s.text.find(s.keyword) != std::string::npos);
    CHECK(s.text.find(s.topic) != std::string::npos);
    CHECK(cp::count_words(s.text) >= 4);
  }
  const auto again = cp::realize_sentences(runs, topics, 7);
  for (std::size_t i = 0; i < sents.size(); ++i) CHECK(sents[i].text == again[i].text);
}

TEST_CASE("schedule and sentence serialization round trips") {
  const auto& topics = shipped_topics();
  const auto runs = cp::build_schedule(topics, 2, 3);
  const auto csv = cp::schedule_csv(runs);
  const auto back = cp::schedule_from_csv(csv);
  REQUIRE(back.size() == runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    REQUIRE(back[r].events.size() == runs[r].events.size());
    for (std::size_t i = 0; i < runs[r].events.size(); ++i) {
      CHECK(back[r].events[i].kind == runs[r].events[i].kind);
      CHECK(back[r].events[i].onset_s == doctest::Approx(runs[r].events[i].onset_s));
      CHECK(back[r].events[i].keyword == runs[r].events[i].keyword);
    }
    CHECK(back[r].duration_s == doctest::Approx(runs[r].duration_s));
  }

  const auto sents = cp::realize_sentences(runs, topics, 3);
  const auto tsv = cp::sentences_tsv(sents);
  const auto sback = cp::sentences_from_tsv(tsv);
  REQUIRE(sback.size() == sents.size());
  for (std::size_t i = 0; i < sents.size(); ++i) {
    CHECK(sback[i].text == sents[i].text);
    CHECK(sback[i].run_index == sents[i].run_index);
  }
}

TEST_CASE("all_renderings covers every template keyword pair") {
  const auto& topics = shipped_topics();
  std::size_t expected = 0;
  for (const auto& t : topics) expected += t.templates.size() * t.keywords.size();
  const auto all = cp::all_renderings(topics);
  CHECK(all.size() == expected);
  CHECK(std::set<std::string>(all.begin(), all.end()).size() == all.size());
}

}  // TEST_SUITE
