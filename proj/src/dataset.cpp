#include "nirstext/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirstext/errors.hpp"
#include "nirstext/fileio.hpp"
#include "nirstext/hash.hpp"
#include "nirstext/kernels.hpp"
#include "nirstext/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nirstext::dataset {

namespace {

std::string run_dir_name(int run) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "run%02d", run);
  return buf;
}

json hrf_json(const synth::HrfParams& h) {
  return json{{"peak_delay_s", h.peak_delay_s},
              {"under_delay_s", h.under_delay_s},
              {"peak_disp_s", h.peak_disp_s},
              {"under_disp_s", h.under_disp_s},
              {"undershoot_ratio", h.undershoot_ratio},
              {"duration_s", h.duration_s},
              {"true_onset_delay_s", h.true_onset_delay_s}};
}

synth::HrfParams hrf_from_json(const json& j) {
  synth::HrfParams h;
  h.peak_delay_s = j.at("peak_delay_s").get<double>();
  h.under_delay_s = j.at("under_delay_s").get<double>();
  h.peak_disp_s = j.at("peak_disp_s").get<double>();
  h.under_disp_s = j.at("under_disp_s").get<double>();
  h.undershoot_ratio = j.at("undershoot_ratio").get<double>();
  h.duration_s = j.at("duration_s").get<double>();
  h.true_onset_delay_s = j.at("true_onset_delay_s").get<double>();
  return h;
}

json noise_json(const synth::NoiseConfig& n) {
  return json{{"white_od_sd", n.white_od_sd},   {"cardiac_hz", n.cardiac_hz},
              {"cardiac_amp", n.cardiac_amp},   {"resp_hz", n.resp_hz},
              {"resp_amp", n.resp_amp},         {"mayer_hz", n.mayer_hz},
              {"mayer_amp", n.mayer_amp},       {"drift_od_per_s", n.drift_od_per_s},
              {"spikes_per_min", n.spikes_per_min}, {"spike_od", n.spike_od},
              {"scale", n.scale}};
}

synth::NoiseConfig noise_from_json(const json& j) {
  synth::NoiseConfig n;
  n.white_od_sd = j.at("white_od_sd").get<double>();
  n.cardiac_hz = j.at("cardiac_hz").get<double>();
  n.cardiac_amp = j.at("cardiac_amp").get<double>();
  n.resp_hz = j.at("resp_hz").get<double>();
  n.resp_amp = j.at("resp_amp").get<double>();
  n.mayer_hz = j.at("mayer_hz").get<double>();
  n.mayer_amp = j.at("mayer_amp").get<double>();
  n.drift_od_per_s = j.at("drift_od_per_s").get<double>();
  n.spikes_per_min = j.at("spikes_per_min").get<double>();
  n.spike_od = j.at("spike_od").get<double>();
  n.scale = j.at("scale").get<double>();
  return n;
}

std::vector<corpus::Sentence> run_sentences(const std::vector<corpus::Sentence>& all,
                                            int run) {
  std::vector<corpus::Sentence> out;
  for (const auto& s : all)
    if (s.run_index == run) out.push_back(s);
  return out;
}

}  // namespace

Mat unit_embedding(const lm::FrozenLM& model, const std::string& sentence) {
  Mat e = lm::sentence_embedding(model, sentence);
  double norm = std::sqrt(kernels::dot(e.row(0), e.row(0), static_cast<std::size_t>(e.cols)));
  if (!(norm > 0.0)) throw NumericError("unit_embedding: zero-norm sentence embedding");
  for (std::int64_t j = 0; j < e.cols; ++j) e.at(0, j) /= norm;
  return e;
}

synth::Embedder make_lm_embedder(const lm::FrozenLM& model) {
  auto shared = std::make_shared<lm::FrozenLM>(model);
  return [shared](const std::string& sentence) { return unit_embedding(*shared, sentence); };
}

Mat Dataset::raw(int participant, int run) const {
  const RunData& rd = participants.at(static_cast<std::size_t>(participant))
                          .runs.at(static_cast<std::size_t>(run));
  return io::read_f32(rd.raw_path, rd.n_samples, montage.n_cols());
}

lm::FrozenLM Dataset::load_lm() const {
  lm::FrozenLM model = lm::load_checkpoint(lm_path());
  if (model.checksum() != lm_checksum)
    throw DataError("lm.ckpt does not match the dataset manifest");
  return model;
}

Dataset generate(const fs::path& dir, const std::vector<corpus::Topic>& topics,
                 const lm::FrozenLM& model, const synth::ExtinctionTable& ext,
                 const Params& params, const std::string& config_hash) {
  if (params.participants < 1) throw ConfigError("dataset: participants must be >= 1");
  if (params.runs < 1) throw ConfigError("dataset: runs must be >= 1");
  if (params.sfreq <= 0.0) throw ConfigError("dataset: sfreq must be positive");

  fs::create_directories(dir);
  if (fs::exists(dir / "manifest.json"))
    throw DataError("dataset already exists at " + dir.string());

  Dataset ds;
  ds.dir = dir;
  ds.params = params;
  ds.montage = synth::Montage::standard(params.seed);
  ds.config_hash = config_hash;
  ds.lm_checksum = model.checksum();
  ds.embed_dim = model.cfg.embed;

  lm::save_checkpoint(dir / "lm.ckpt", model);
  synth::Embedder embed = make_lm_embedder(model);

  synth::RenderOptions opts;
  opts.sfreq = params.sfreq;
  opts.padding_s = params.padding_s;
  opts.ppf = params.ppf;
  opts.hbr_ratio = params.hbr_ratio;

  json jparts = json::array();
  for (int p = 1; p <= params.participants; ++p) {
    ParticipantData pd;
    pd.index = p;
    pd.semmap = synth::make_semantic_map(
        ds.montage.n_long_pairs, ds.embed_dim, params.active_frac, params.amp_um,
        params.baseline_um, derive_seed(params.seed, "semmap", static_cast<std::uint64_t>(p)));

    auto runs = corpus::build_schedule(
        topics, params.runs, derive_seed(params.seed, "schedule", static_cast<std::uint64_t>(p)));
    auto sents = corpus::realize_sentences(
        runs, topics, derive_seed(params.seed, "sentences", static_cast<std::uint64_t>(p)));

    fs::path pdir = dir / ("p" + std::to_string(p));
    fs::create_directories(pdir);
    io::write_f32(pdir / "semmap.f32", pd.semmap.loading);

    json jruns = json::array();
    for (int r = 0; r < params.runs; ++r) {
      RunData rd;
      rd.schedule = runs[static_cast<std::size_t>(r)];
      rd.sentences = run_sentences(sents, r);

      auto rec = synth::render_run(
          rd.schedule, rd.sentences, embed, pd.semmap, params.hrf, params.noise,
          ds.montage, ext, opts,
          derive_seed(params.seed, "render", static_cast<std::uint64_t>(p) * 1000 + static_cast<std::uint64_t>(r)));
      rd.n_samples = rec.intensity.rows;

      fs::path rdir = pdir / run_dir_name(r);
      fs::create_directories(rdir);
      rd.raw_path = rdir / "raw.f32";
      io::write_f32(rd.raw_path, rec.intensity);
      io::write_text(rdir / "events.csv", corpus::schedule_csv({rd.schedule}));
      io::write_text(rdir / "sentences.tsv", corpus::sentences_tsv(rd.sentences));

      jruns.push_back(json{{"n_samples", rd.n_samples}});
      pd.runs.push_back(std::move(rd));
    }

    json jactive = json::array();
    for (auto a : pd.semmap.active) jactive.push_back(static_cast<int>(a));
    jparts.push_back(json{{"index", p}, {"active", jactive}, {"runs", jruns}});
    ds.participants.push_back(std::move(pd));
  }

  std::vector<double> long_mm, short_mm;
  for (int i = 0; i < ds.montage.n_long_pairs; ++i) long_mm.push_back(ds.montage.long_distance(i));
  for (int i = 0; i < ds.montage.n_short_pairs; ++i) short_mm.push_back(ds.montage.short_distance(i));

  json manifest{
      {"format", "nirstext-dataset"},
      {"version", 1},
      {"config_hash", config_hash},
      {"seed", params.seed},
      {"params",
       json{{"participants", params.participants},
            {"runs", params.runs},
            {"sfreq", params.sfreq},
            {"padding_s", params.padding_s},
            {"active_frac", params.active_frac},
            {"amp_um", params.amp_um},
            {"baseline_um", params.baseline_um},
            {"ppf", params.ppf},
            {"hbr_ratio", params.hbr_ratio}}},
      {"hrf", hrf_json(params.hrf)},
      {"noise", noise_json(params.noise)},
      {"montage", json{{"long_mm", long_mm}, {"short_mm", short_mm}}},
      {"lm",
       json{{"checksum", hex64(ds.lm_checksum)},
            {"embed", ds.embed_dim},
            {"vocab_size", model.vocab.size()}}},
      {"participants", jparts}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return ds;
}

Dataset open(const fs::path& dir) {
  fs::path mpath = dir / "manifest.json";
  json m;
  try {
    m = json::parse(io::read_text(mpath));
  } catch (const json::exception& e) {
    throw DataError("failed to parse " + mpath.string() + ": " + e.what());
  }

  Dataset ds;
  ds.dir = dir;
  try {
    if (m.at("format").get<std::string>() != "nirstext-dataset")
      throw DataError("not a dataset manifest: " + mpath.string());
    if (m.at("version").get<int>() != 1)
      throw DataError("unsupported dataset version in " + mpath.string());

    ds.config_hash = m.at("config_hash").get<std::string>();
    const json& jp = m.at("params");
    ds.params.participants = jp.at("participants").get<int>();
    ds.params.runs = jp.at("runs").get<int>();
    ds.params.sfreq = jp.at("sfreq").get<double>();
    ds.params.padding_s = jp.at("padding_s").get<double>();
    ds.params.active_frac = jp.at("active_frac").get<double>();
    ds.params.amp_um = jp.at("amp_um").get<double>();
    ds.params.baseline_um = jp.at("baseline_um").get<double>();
    ds.params.ppf = jp.at("ppf").get<double>();
    ds.params.hbr_ratio = jp.at("hbr_ratio").get<double>();
    ds.params.seed = m.at("seed").get<std::uint64_t>();
    ds.params.hrf = hrf_from_json(m.at("hrf"));
    ds.params.noise = noise_from_json(m.at("noise"));

    auto long_mm = m.at("montage").at("long_mm").get<std::vector<double>>();
    auto short_mm = m.at("montage").at("short_mm").get<std::vector<double>>();
    ds.montage = synth::Montage::from_distances(long_mm, short_mm);

    ds.lm_checksum = std::stoull(m.at("lm").at("checksum").get<std::string>(), nullptr, 16);
    ds.embed_dim = m.at("lm").at("embed").get<int>();

    for (const json& jpart : m.at("participants")) {
      ParticipantData pd;
      pd.index = jpart.at("index").get<int>();
      fs::path pdir = dir / ("p" + std::to_string(pd.index));

      pd.semmap.loading = io::read_f32(pdir / "semmap.f32", ds.montage.n_long_pairs, ds.embed_dim);
      pd.semmap.baseline_um = ds.params.baseline_um;
      for (const json& a : jpart.at("active"))
        pd.semmap.active.push_back(static_cast<std::uint8_t>(a.get<int>()));
      if (pd.semmap.active.size() != static_cast<std::size_t>(ds.montage.n_long_pairs))
        throw DataError("manifest active flags do not match the montage");

      const json& jruns = jpart.at("runs");
      for (int r = 0; r < static_cast<int>(jruns.size()); ++r) {
        RunData rd;
        fs::path rdir = pdir / run_dir_name(r);
        auto parsed = corpus::schedule_from_csv(io::read_text(rdir / "events.csv"));
        if (static_cast<int>(parsed.size()) <= r || parsed[static_cast<std::size_t>(r)].events.empty())
          throw DataError("events.csv in " + rdir.string() + " does not describe run " + std::to_string(r));
        rd.schedule = parsed[static_cast<std::size_t>(r)];
        rd.sentences = corpus::sentences_from_tsv(io::read_text(rdir / "sentences.tsv"));
        rd.raw_path = rdir / "raw.f32";
        rd.n_samples = jruns[static_cast<std::size_t>(r)].at("n_samples").get<std::int64_t>();
        pd.runs.push_back(std::move(rd));
      }
      ds.participants.push_back(std::move(pd));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest " + mpath.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace nirstext::dataset
