#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirstext/corpus.hpp"
#include "nirstext/errors.hpp"
#include "nirstext/glm.hpp"
#include "nirstext/hash.hpp"
#include "nirstext/log.hpp"
#include "nirstext/montage.hpp"
#include "nirstext/rng.hpp"
#include "nirstext/sigproc.hpp"
#include "nirstext/synth.hpp"

#ifndef NIRSTEXT_SOURCE_DIR
#error "NIRSTEXT_SOURCE_DIR must be defined for tests"
#endif

using namespace nirstext;
namespace gm = nirstext::glm;
namespace sp = nirstext::sigproc;
namespace sy = nirstext::synth;
namespace cp = nirstext::corpus;
namespace fs = std::filesystem;

namespace {

const fs::path kExtinctionPath =
    fs::path(NIRSTEXT_SOURCE_DIR) / "data" / "extinction.json";
const fs::path kTopicsPath =
    fs::path(NIRSTEXT_SOURCE_DIR) / "data" / "topics.json";

struct WarnCapture {
  std::vector<std::string> msgs;
  WarnCapture() {
    log::set_sink([this](log::Level level, const std::string& m) {
      if (level == log::Level::warn) msgs.push_back(m);
    });
  }
  ~WarnCapture() { log::set_sink(nullptr); }
};

cp::Event make_event(cp::EventKind kind, double onset, double dur) {
  cp::Event ev;
  ev.kind = kind;
  ev.onset_s = onset;
  ev.duration_s = dur;
  if (kind == cp::EventKind::imagine) {
    ev.topic = "t";
    ev.keyword = "k";
  }
  return ev;
}

cp::RunSchedule schedule_of(std::vector<cp::Event> events) {
  cp::RunSchedule run;
  run.events = std::move(events);
  for (const auto& ev : run.events)
    run.duration_s = std::max(run.duration_s, ev.onset_s + ev.duration_s);
  return run;
}

sp::HaemoSeries series_from(const Mat& x, double sfreq) {
  sp::HaemoSeries h;
  h.sfreq = sfreq;
  h.haemo = Mat(x.rows, x.cols);
  for (std::int64_t t = 0; t < x.rows; ++t)
    for (std::int64_t c = 0; c < x.cols; ++c) h.haemo.at(t, c) = x.at(t, c);
  return h;
}

std::vector<double> column(const Mat& m, std::int64_t c) {
  std::vector<double> v(static_cast<std::size_t>(m.rows));
  for (std::int64_t t = 0; t < m.rows; ++t)
    v[static_cast<std::size_t>(t)] = m.at(t, c);
  return v;
}

// Unit-norm embedding drawn from a hash of the text; dimension-generic
// stand-in for the LM's sentence code.
sy::Embedder hash_embedder(int dim) {
  return [dim](const std::string& text) {
    Rng r(fnv1a64(text.data(), text.size()));
    Mat e(1, dim);
    double norm2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double v = r.normal();
      e.at(0, i) = v;
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    for (int i = 0; i < dim; ++i) e.at(0, i) /= norm;
    return e;
  };
}

// Shared fixture for the end-to-end delay and contrast tests: a small
// montage, a seeded semantic map and rendered runs from the real scheduler.
struct StudyFixture {
  sy::ExtinctionTable ext = sy::ExtinctionTable::load(kExtinctionPath);
  sy::Montage montage = sy::Montage::from_distances(
      {21.0, 24.0, 26.0, 28.0, 30.0, 31.0, 33.0, 35.0, 36.0, 38.0, 40.0, 42.0},
      {8.0, 8.0});
  sy::SemanticMap semmap;
  sy::Embedder embed = hash_embedder(4);
  std::vector<cp::RunSchedule> runs;
  std::vector<std::vector<cp::Sentence>> run_sentences;

  explicit StudyFixture(int n_runs, double amp_um, std::uint64_t seed) {
    semmap = sy::make_semantic_map(12, 4, 0.6, amp_um, 1.0, seed);
    const auto topics = cp::load_topics(kTopicsPath);
    runs = cp::build_schedule(topics, n_runs, seed);
    const auto sentences = cp::realize_sentences(runs, topics, seed + 1);
    run_sentences.resize(runs.size());
    for (const auto& s : sentences)
      run_sentences[static_cast<std::size_t>(s.run_index)].push_back(s);
  }

  // Rendered intensities for one run at default (scale 1) noise.
  sy::RawRecording render(int run, std::uint64_t seed) const {
    const sy::NoiseConfig noise;
    const sy::RenderOptions opts;
    return sy::render_run(runs[static_cast<std::size_t>(run)],
                          run_sentences[static_cast<std::size_t>(run)], embed,
                          semmap, sy::HrfParams::fast_dataset(), noise,
                          montage, ext, opts,
                          derive_seed(seed, "run", run));
  }

  // Haemoglobin chain without the final band-pass: the GLM designs carry
  // their own drift columns, and the OLS variance estimate is only
  // calibrated when the residual spectrum stays broadband.
  sp::HaemoSeries preprocess(const sy::RawRecording& raw) const {
    sp::PreprocOptions opts;
    opts.bandpass = false;
    return sp::preprocess_run(raw, montage, ext, opts);
  }

  // Across-short-channel average of the detrended OD, the GLM nuisance.
  std::vector<double> short_nuisance(const sy::RawRecording& raw) const {
    const auto od = sp::select_short(sp::detrend(sp::to_optical_density(raw)),
                                     montage);
    std::vector<double> avg(static_cast<std::size_t>(od.od.rows), 0.0);
    for (std::int64_t t = 0; t < od.od.rows; ++t) {
      double s = 0.0;
      for (std::int64_t c = 0; c < od.od.cols; ++c) s += od.od.at(t, c);
      avg[static_cast<std::size_t>(t)] = s / static_cast<double>(od.od.cols);
    }
    return avg;
  }
};

}  // namespace

TEST_SUITE("glm") {

TEST_CASE("bin-mean resampling averages whole bins and drops the tail") {
  std::vector<double> v(12);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);

  SUBCASE("integer ratio") {
    const auto out = gm::resample_bins(v, 2.0, 0.5);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(5.5).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(9.5).epsilon(1e-12));
  }
  SUBCASE("trailing partial bin is dropped") {
    std::vector<double> w(14, 1.0);
    CHECK(gm::resample_bins(w, 2.0, 0.5).size() == 3);
  }
  SUBCASE("non-integer ratio splits samples by start time") {
    std::vector<double> ramp(60);
    for (std::size_t i = 0; i < ramp.size(); ++i)
      ramp[i] = static_cast<double>(i);
    const auto out = gm::resample_bins(ramp, 5.9, 0.5);
    REQUIRE(out.size() == 5);
    // bins hold samples 0-11, 12-23, 24-35, 36-47, 48-58
    CHECK(out[0] == doctest::Approx(5.5).epsilon(1e-12));
    CHECK(out[4] == doctest::Approx(53.0).epsilon(1e-12));
  }
  SUBCASE("rate errors") {
    CHECK_THROWS_AS(gm::resample_bins(v, 0.5, 2.0), ConfigError);
    CHECK_THROWS_AS(gm::resample_bins(v, -1.0, 0.5), ConfigError);
    std::vector<double> one(1, 0.0);
    CHECK_THROWS_AS(gm::resample_bins(one, 1.0, 0.5), DataError);
  }
}

TEST_CASE("series resampling keeps channels aligned and records provenance") {
  Mat x(24, 2);
  for (std::int64_t t = 0; t < x.rows; ++t) {
    x.at(t, 0) = static_cast<double>(t);
    x.at(t, 1) = -2.0 * static_cast<double>(t);
  }
  auto h = series_from(x, 2.0);
  h.provenance.push_back({"bandpass", {}});

  const auto out = gm::resample_bins(h, 0.5);
  CHECK(out.sfreq == 0.5);
  REQUIRE(out.haemo.rows == 6);
  REQUIRE(out.haemo.cols == 2);
  for (std::int64_t t = 0; t < out.haemo.rows; ++t)
    CHECK(out.haemo.at(t, 1) == doctest::Approx(-2.0 * out.haemo.at(t, 0))
                                    .epsilon(1e-12));
  REQUIRE(out.provenance.size() == 2);
  CHECK(out.provenance.back().name == "resample");
  CHECK(out.provenance.back().params.at("target_hz") == "0.5");
}

TEST_CASE("FIR design counts columns and names them by condition and delay") {
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 0.0, 7.0),
                                make_event(cp::EventKind::imagine, 16.0, 7.0),
                                make_event(cp::EventKind::rest, 30.0, 20.0)});
  std::vector<double> nuisance(67);
  for (std::size_t t = 0; t < nuisance.size(); ++t)
    nuisance[t] = std::sin(0.37 * static_cast<double>(t));

  // 67 bins at 0.5 Hz = 134 s, so the 0.01 Hz cosine set holds
  // floor(2 * 134 * 0.01) = 2 functions.
  const auto d = gm::fir_design(run, 0.5, 67, 5, 0.01, nuisance);
  CHECK(d.x.rows == 67);
  CHECK(d.x.cols == 10 + 2 + 2);
  REQUIRE(d.names.size() == 14);
  CHECK(d.names[0] == "wordcloud_d1");
  CHECK(d.names[4] == "wordcloud_d5");
  CHECK(d.names[5] == "rest_d1");
  CHECK(d.names[10] == "drift_1");
  CHECK(d.names[12] == "short");
  CHECK(d.names[13] == "intercept");
  CHECK(d.col("wordcloud_d3") == 2);
  CHECK_THROWS_AS(d.col("nope"), DataError);

  // the nuisance column is copied verbatim and the intercept is all ones
  for (std::int64_t t = 0; t < d.x.rows; ++t) {
    CHECK(d.x.at(t, 12) == nuisance[static_cast<std::size_t>(t)]);
    CHECK(d.x.at(t, 13) == 1.0);
  }
}

TEST_CASE("FIR delay columns are the event indicator shifted by whole bins") {
  // One-bin word cloud event at t=0 plus a rest block well clear of it.
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 0.0, 2.0),
                                make_event(cp::EventKind::rest, 20.0, 10.0)});
  const auto d = gm::fir_design(run, 0.5, 20, 5, 0.01, {});
  CHECK(d.x.cols == 11);  // no drifts below 50 s of data, no nuisance

  for (int k = 1; k <= 5; ++k) {
    const auto col = d.col("wordcloud_d" + std::to_string(k));
    for (std::int64_t t = 0; t < d.x.rows; ++t)
      CHECK(d.x.at(t, col) == (t == k ? 1.0 : 0.0));
  }
  // delay-3 support sits 3 bins = 6 s after the event
  CHECK(d.x.at(3, d.col("wordcloud_d3")) == 1.0);
  // the rest indicator (bins 10..14) shifts the same way
  const auto r1 = d.col("rest_d1");
  for (std::int64_t t = 0; t < d.x.rows; ++t)
    CHECK(d.x.at(t, r1) == (t >= 11 && t <= 15 ? 1.0 : 0.0));
}

TEST_CASE("FIR indicators carry fractional bin coverage") {
  // event [3, 10) against 2 s bins: half of bin 1, all of bins 2-4
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 3.0, 7.0),
                                make_event(cp::EventKind::rest, 20.0, 10.0)});
  const auto d = gm::fir_design(run, 0.5, 20, 3, 0.01, {});
  const auto c1 = d.col("wordcloud_d1");
  const double expect[20] = {0, 0, 0.5, 1, 1, 1, 0, 0, 0, 0,
                             0, 0, 0,   0, 0, 0, 0, 0, 0, 0};
  for (std::int64_t t = 0; t < 20; ++t)
    CHECK(d.x.at(t, c1) == doctest::Approx(expect[t]).epsilon(1e-12));
}

TEST_CASE("identical condition timings make the design rank-deficient") {
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 0.0, 7.0),
                                make_event(cp::EventKind::rest, 0.0, 7.0)});
  CHECK_THROWS_WITH_AS(gm::fir_design(run, 0.5, 30, 5, 0.01, {}),
                       "rank-deficient design matrix", NumericError);
}

TEST_CASE("design argument validation") {
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 0.0, 2.0),
                                make_event(cp::EventKind::rest, 20.0, 10.0)});
  CHECK_THROWS_AS(gm::fir_design(run, 0.0, 20, 5, 0.01, {}), ConfigError);
  CHECK_THROWS_AS(gm::fir_design(run, 0.5, 20, 0, 0.01, {}), ConfigError);
  CHECK_THROWS_AS(gm::fir_design(run, 0.5, 20, 5, -0.1, {}), ConfigError);
  std::vector<double> short_nuis(19, 0.0);
  CHECK_THROWS_AS(gm::fir_design(run, 0.5, 20, 5, 0.01, short_nuis),
                  DataError);
}

TEST_CASE("OLS reproduces exact coefficients on spanned responses") {
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 0.0, 2.0),
                                make_event(cp::EventKind::rest, 20.0, 10.0)});
  const auto d = gm::fir_design(run, 0.5, 20, 5, 0.01, {});

  Mat y(20, 2);
  const auto wc2 = d.col("wordcloud_d2");
  const auto r1 = d.col("rest_d1");
  const auto icpt = d.col("intercept");
  for (std::int64_t t = 0; t < 20; ++t) {
    y.at(t, 0) = 2.0 * d.x.at(t, wc2);
    y.at(t, 1) = 1.5 * d.x.at(t, icpt) - 3.0 * d.x.at(t, r1);
  }
  const auto fit = gm::fit_ols(d, series_from(y, 0.5));
  CHECK(fit.dof == 20 - d.x.cols);
  CHECK(fit.beta.at(wc2, 0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(fit.beta.at(icpt, 1) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(fit.beta.at(r1, 1) == doctest::Approx(-3.0).epsilon(1e-9));
  for (std::int64_t j = 0; j < d.x.cols; ++j) {
    if (j != wc2) CHECK(std::abs(fit.beta.at(j, 0)) < 1e-9);
  }
  // exactly spanned responses leave no residual variance
  CHECK(fit.sigma2[0] < 1e-18);
  CHECK(fit.sigma2[1] < 1e-18);
}

TEST_CASE("OLS matches the independent pseudo-inverse oracle") {
  // Deterministic trig toy problem; reference values from an SVD
  // pseudo-inverse, a fully separate solution path from the Cholesky
  // normal equations used here.
  gm::DesignMatrix d;
  d.sfreq = 1.0;
  d.x = Mat(12, 5);
  for (std::int64_t i = 0; i < 12; ++i)
    for (std::int64_t j = 0; j < 5; ++j)
      d.x.at(i, j) = std::sin(3.0 * static_cast<double>(i) +
                              7.0 * static_cast<double>(j)) +
                     (i == j ? 0.5 : 0.0);
  for (std::int64_t j = 0; j < 5; ++j)
    d.names.push_back("x" + std::to_string(j));
  Mat y(12, 3);
  for (std::int64_t i = 0; i < 12; ++i)
    for (std::int64_t k = 0; k < 3; ++k)
      y.at(i, k) = std::cos(2.0 * static_cast<double>(i) -
                            5.0 * static_cast<double>(k));

  const auto fit = gm::fit_ols(d, series_from(y, 1.0));
  CHECK(fit.dof == 7);

  const double beta_ref[5][3] = {
      {1.2468918784046763, -0.81088453343159961, -1.7069264362277483},
      {-0.20431217232616794, -0.53865261961200417, -0.10127858624309791},
      {-1.7190567506059822, 0.017654883303752936, 1.729072796170064},
      {2.7605301382626317, 2.1800730285840522, -1.5237215787474585},
      {-0.63690382180404403, -2.8489555067722594, -0.9793780688729804}};
  for (std::int64_t j = 0; j < 5; ++j)
    for (std::int64_t k = 0; k < 3; ++k)
      CHECK(fit.beta.at(j, k) ==
            doctest::Approx(beta_ref[j][k]).epsilon(1e-8));

  const double sigma2_ref[3] = {0.53831267572758112, 0.3698965745129873,
                                0.53843917031588184};
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(fit.sigma2[k] == doctest::Approx(sigma2_ref[k]).epsilon(1e-8));

  const double diag_ref[5] = {6.5242489990768791, 9.2720955196304402,
                              4.8702988589484884, 5.7954291322972162,
                              5.5711457778914415};
  for (std::int64_t j = 0; j < 5; ++j)
    CHECK(fit.xtx_inv.at(j, j) == doctest::Approx(diag_ref[j]).epsilon(1e-8));
  CHECK(fit.xtx_inv.at(0, 1) ==
        doctest::Approx(-6.2720065719137335).epsilon(1e-8));
  CHECK(fit.xtx_inv.at(2, 4) ==
        doctest::Approx(2.5930304327830913).epsilon(1e-8));
}

TEST_CASE("cosine drift columns follow the DCT-II basis") {
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 0.0, 4.0),
                                make_event(cp::EventKind::rest, 12.0, 8.0)});
  // 20 bins at 0.5 Hz = 40 s; request a cutoff that yields two drifts
  const auto d = gm::fir_design(run, 0.5, 20, 2, 0.03, {});
  const auto d1 = d.col("drift_1");
  const auto d2 = d.col("drift_2");
  CHECK(d.x.at(0, d1) == doctest::Approx(0.31525294134988951).epsilon(1e-12));
  CHECK(d.x.at(5, d1) == doctest::Approx(0.20537350546744942).epsilon(1e-12));
  CHECK(d.x.at(19, d1) ==
        doctest::Approx(-0.31525294134988951).epsilon(1e-12));
  CHECK(d.x.at(0, d2) == doctest::Approx(0.31233447746727816).epsilon(1e-12));
  CHECK(d.x.at(5, d2) ==
        doctest::Approx(-0.049468921407711253).epsilon(1e-12));
  // each drift is orthogonal to the intercept
  double s1 = 0.0, s2 = 0.0;
  for (std::int64_t t = 0; t < 20; ++t) {
    s1 += d.x.at(t, d1);
    s2 += d.x.at(t, d2);
  }
  CHECK(std::abs(s1) < 1e-12);
  CHECK(std::abs(s2) < 1e-12);
}

TEST_CASE("fit input validation") {
  gm::DesignMatrix d;
  d.sfreq = 1.0;
  d.x = Mat(6, 6);
  for (std::int64_t i = 0; i < 6; ++i)
    for (std::int64_t j = 0; j < 6; ++j)
      d.x.at(i, j) = std::sin(3.0 * static_cast<double>(i) +
                              7.0 * static_cast<double>(j)) +
                     (i == j ? 1.0 : 0.0);
  for (std::int64_t j = 0; j < 6; ++j)
    d.names.push_back("x" + std::to_string(j));

  SUBCASE("row mismatch") {
    CHECK_THROWS_AS(gm::fit_ols(d, series_from(Mat(5, 1), 1.0)), DataError);
  }
  SUBCASE("no residual degrees of freedom") {
    CHECK_THROWS_WITH_AS(gm::fit_ols(d, series_from(Mat(6, 1), 1.0)),
                         doctest::Contains("degrees of freedom"), DataError);
  }
}

// Hand-built two-channel fits (pair 0 HbO + HbR) with identity xtx_inv, so
// each coefficient's variance is just the channel's sigma2.
namespace {

gm::GlmFit toy_fit(double wc_d1_hbo, double hbr_value, double sigma2_hbo) {
  gm::GlmFit f;
  f.names = {"wordcloud_d1", "wordcloud_d2", "rest_d1", "rest_d2",
             "intercept"};
  f.beta = Mat(5, 2);
  f.beta.at(0, 0) = wc_d1_hbo;
  f.beta.at(0, 1) = hbr_value;
  f.sigma2 = {sigma2_hbo, 1.0};
  f.xtx_inv = Mat(5, 5);
  for (std::int64_t i = 0; i < 5; ++i) f.xtx_inv.at(i, i) = 1.0;
  f.dof = 10;
  return f;
}

}  // namespace

TEST_CASE("delay aggregation pools runs with inverse-variance weights") {
  SUBCASE("identical runs reproduce the fit with zero SE") {
    const auto table =
        gm::aggregate_delays({toy_fit(1.25, -0.5, 1.0), toy_fit(1.25, -0.5, 1.0)}, 1);
    CHECK(table.n_delays == 2);
    CHECK(table.at(gm::DelayTable::kWordcloud, gm::DelayTable::kHbo, 1).mean ==
          doctest::Approx(1.25).epsilon(1e-12));
    CHECK(table.at(gm::DelayTable::kWordcloud, gm::DelayTable::kHbo, 1).se ==
          doctest::Approx(0.0));
    // the HbR channel pools into its own row
    CHECK(table.at(gm::DelayTable::kWordcloud, gm::DelayTable::kHbr, 1).mean ==
          doctest::Approx(-0.5).epsilon(1e-12));
  }
  SUBCASE("equal variances average plainly") {
    const auto table =
        gm::aggregate_delays({toy_fit(1.0, 0.0, 1.0), toy_fit(3.0, 0.0, 1.0)}, 1);
    CHECK(table.at(0, 0, 1).mean == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("weights follow the coefficient variances") {
    // brute force: w = {1, 1/4}, mean = (1*1 + 0.25*3) / 1.25 = 1.4,
    // se = sqrt((1*0.16 + 0.25*2.56) / 1.25 / 1) = 0.8
    const auto table =
        gm::aggregate_delays({toy_fit(1.0, 0.0, 1.0), toy_fit(3.0, 0.0, 4.0)}, 1);
    CHECK(table.at(0, 0, 1).mean == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(table.at(0, 0, 1).se == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(gm::aggregate_delays({toy_fit(1.0, 0.0, 1.0)}, 1),
                    DataError);
    auto gap = toy_fit(1.0, 0.0, 1.0);
    gap.names[1] = "wordcloud_d3";  // delays {1, 3}: d2 missing in both fits
    CHECK_THROWS_WITH_AS(gm::aggregate_delays({gap, gap}, 1),
                         doctest::Contains("missing FIR delay"), DataError);
    auto other = toy_fit(1.0, 0.0, 1.0);
    other.names[1] = "wordcloud_d3";
    other.names[3] = "rest_d3";
    CHECK_THROWS_WITH_AS(
        gm::aggregate_delays({toy_fit(1.0, 0.0, 1.0), other}, 1),
        doctest::Contains("inconsistent designs"), DataError);
    auto renamed = toy_fit(1.0, 0.0, 1.0);
    renamed.names[4] = "constant";
    CHECK_THROWS_WITH_AS(
        gm::aggregate_delays({toy_fit(1.0, 0.0, 1.0), renamed}, 1),
        doctest::Contains("inconsistent designs"), DataError);
    CHECK_THROWS_AS(gm::aggregate_delays(
                        {toy_fit(1.0, 0.0, 1.0), toy_fit(1.0, 0.0, 1.0)}, 2),
                    DataError);
    auto no_fir = toy_fit(1.0, 0.0, 1.0);
    no_fir.names = {"wordcloud", "rest", "c", "d", "intercept"};
    CHECK_THROWS_WITH_AS(gm::aggregate_delays({no_fir, no_fir}, 1),
                         doctest::Contains("no FIR delay"), DataError);
  }
}

TEST_CASE("delay choice is the upper edge of the winning bin") {
  gm::DelayTable table;
  table.n_delays = 5;
  auto& row = table.cells[gm::DelayTable::kWordcloud][gm::DelayTable::kHbo];
  auto set_means = [&](std::vector<double> m) {
    row.clear();
    for (double v : m) row.push_back({v, 0.1});
  };

  set_means({0.0, 0.0, 1.0, 0.0, 0.0});
  CHECK(gm::pick_delay(table) == 6.0);
  set_means({0.0, 0.0, 0.0, 1.0, 0.0});
  CHECK(gm::pick_delay(table) == 8.0);

  SUBCASE("ties keep the smaller delay and warn") {
    WarnCapture capture;
    set_means({0.0, 1.0, 1.0, 0.0, 0.0});
    CHECK(gm::pick_delay(table) == 4.0);
    REQUIRE(capture.msgs.size() == 1);
    CHECK(capture.msgs[0].find("tie") != std::string::npos);
  }
  SUBCASE("empty table") {
    row.clear();
    CHECK_THROWS_AS(gm::pick_delay(table), DataError);
  }
}

TEST_CASE("delay report serializes the full table") {
  gm::DelayTable table;
  table.n_delays = 2;
  for (int cond = 0; cond < 2; ++cond)
    for (int chromo = 0; chromo < 2; ++chromo)
      table.cells[cond][chromo] = {{0.5 * cond + 0.25 * chromo, 0.05},
                                   {1.0, 0.1}};
  const auto text = gm::delay_report_json(table, "p3", 6.0);
  const auto j = nlohmann::json::parse(text);
  CHECK(j.at("participant") == "p3");
  CHECK(j.at("chosen_delay_s") == 6.0);
  CHECK(j.at("delays_s") == nlohmann::json({2.0, 4.0}));
  CHECK(j.at("coefficients").at("wordcloud").at("hbo").size() == 2);
  CHECK(j.at("coefficients").at("rest").at("hbr")[0].at("mean") == 0.75);
  CHECK(j.at("coefficients").at("rest").at("hbr")[0].at("se") == 0.05);
}

TEST_CASE("contrast z formula and CSV naming") {
  gm::GlmFit f;
  f.names = {"wordcloud", "rest", "intercept"};
  f.beta = Mat(3, 2);
  f.beta.at(0, 0) = 2.0;
  f.beta.at(1, 0) = 0.5;
  f.beta.at(0, 1) = -1.0;
  f.beta.at(1, 1) = -0.25;
  f.sigma2 = {0.25, 1.0};
  f.xtx_inv = Mat(3, 3);
  f.xtx_inv.at(0, 0) = 2.0;
  f.xtx_inv.at(1, 1) = 1.0;
  f.xtx_inv.at(0, 1) = f.xtx_inv.at(1, 0) = 0.5;
  f.xtx_inv.at(2, 2) = 1.0;
  f.dof = 10;

  // c^T xtx_inv c = 2 - 2*0.5 + 1 = 2
  const auto z = gm::contrast_z(f, "wordcloud", "rest");
  REQUIRE(z.size() == 2);
  CHECK(z[0] == doctest::Approx(1.5 / std::sqrt(0.25 * 2.0)).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(-0.75 / std::sqrt(2.0)).epsilon(1e-12));

  // negating the contrast flips the sign exactly
  const auto zneg = gm::contrast_z(f, "rest", "wordcloud");
  CHECK(zneg[0] == -z[0]);
  CHECK(zneg[1] == -z[1]);

  // contrasting a condition against itself puts c in the null space
  const auto zself = gm::contrast_z(f, "wordcloud", "wordcloud");
  CHECK(zself[0] == 0.0);
  CHECK(zself[1] == 0.0);

  CHECK_THROWS_AS(gm::contrast_z(f, "wordcloud", "absent"), DataError);

  const auto csv = gm::contrast_csv(z, 1);
  CHECK(csv.rfind("channel,z\n", 0) == 0);
  CHECK(csv.find("hbo_0,") != std::string::npos);
  CHECK(csv.find("hbr_0,") != std::string::npos);
  CHECK_THROWS_AS(gm::contrast_csv(z, 3), DataError);
}

TEST_CASE("canonical-HRF regressors rise after the event and stay causal") {
  const auto run = schedule_of({make_event(cp::EventKind::imagine, 10.0, 7.0),
                                make_event(cp::EventKind::rest, 30.0, 20.0)});
  const auto d = gm::hrf_design(run, 5.0, 300, 0.005, {});
  CHECK(d.names == std::vector<std::string>{"wordcloud", "rest", "intercept"});

  const auto wc = column(d.x, d.col("wordcloud"));
  // strictly zero before the event onset
  for (std::int64_t t = 0; t < 50; ++t) CHECK(wc[static_cast<std::size_t>(t)] == 0.0);
  // peak lands between onset + hrf peak and event end + hrf peak
  const auto peak = static_cast<std::int64_t>(
      std::max_element(wc.begin(), wc.end()) - wc.begin());
  CHECK(peak >= static_cast<std::int64_t>(14.0 * 5.0));
  CHECK(peak <= static_cast<std::int64_t>(24.0 * 5.0));
}

TEST_CASE("a rendered study recovers the injected 5 s onset delay") {
  // Two runs from the real scheduler at default noise; the renderer shifts
  // every response 5 s after its event, so the pooled FIR profile must peak
  // in the 4-6 s bin and the chosen delay land on its 6 s upper edge.
  StudyFixture study(2, 1.0, 41);

  std::vector<gm::GlmFit> fits;
  for (int r = 0; r < 2; ++r) {
    const auto raw = study.render(r, 2026);
    const auto haemo = study.preprocess(raw);
    const auto binned = gm::resample_bins(haemo, 0.5);
    const auto nuisance =
        gm::resample_bins(study.short_nuisance(raw), haemo.sfreq, 0.5);
    const auto design =
        gm::fir_design(study.runs[static_cast<std::size_t>(r)], 0.5,
                       binned.haemo.rows, 5, 0.01, nuisance);
    fits.push_back(gm::fit_ols(design, binned));
  }

  const auto table = gm::aggregate_delays(fits, 12);
  CHECK(gm::pick_delay(table) == 6.0);

  const auto& hbo = table.cells[gm::DelayTable::kWordcloud][gm::DelayTable::kHbo];
  REQUIRE(hbo.size() == 5);
  CHECK(hbo[2].mean > 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    if (k != 2) CHECK(hbo[2].mean > hbo[k].mean);
  }
  // deoxy mirrors oxy: its profile bottoms out in the same bin
  const auto& hbr = table.cells[gm::DelayTable::kWordcloud][gm::DelayTable::kHbr];
  CHECK(hbr[2].mean < 0.0);

  const auto report = gm::delay_report_json(table, "p1", gm::pick_delay(table));
  const auto j = nlohmann::json::parse(report);
  CHECK(j.at("chosen_delay_s") == 6.0);
}

TEST_CASE("contrast maps separate active from inactive channels") {
  StudyFixture study(1, 1.0, 17);
  const auto raw = study.render(0, 512);
  const auto haemo = study.preprocess(raw);
  const auto nuisance = study.short_nuisance(raw);
  REQUIRE(nuisance.size() == static_cast<std::size_t>(haemo.haemo.rows));

  const auto& sched = study.runs[0];
  const auto z = gm::contrast_z(haemo, sched, study.montage, nuisance);
  REQUIRE(z.size() == 24);
  for (std::int64_t p = 0; p < 12; ++p) {
    CAPTURE(p);
    if (study.semmap.active[static_cast<std::size_t>(p)]) {
      CHECK(z[static_cast<std::size_t>(p)] > 3.0);
    } else {
      CHECK(std::abs(z[static_cast<std::size_t>(p)]) < 2.0);
    }
  }

  SUBCASE("channel count must match the montage") {
    auto wrong = haemo;
    wrong.haemo = Mat(haemo.haemo.rows, 3);
    CHECK_THROWS_AS(gm::contrast_z(wrong, sched, study.montage, nuisance),
                    DataError);
  }
}

}  // TEST_SUITE
