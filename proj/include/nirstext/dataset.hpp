#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nirstext/corpus.hpp"
#include "nirstext/lm.hpp"
#include "nirstext/mat.hpp"
#include "nirstext/montage.hpp"
#include "nirstext/synth.hpp"

namespace nirstext::dataset {

struct Params {
  int participants = 4;
  int runs = 8;  // per participant
  double sfreq = 5.9;
  double padding_s = 20.0;
  double active_frac = 0.6;
  double amp_um = 5.0;
  double baseline_um = 1.0;
  double ppf = 6.0;
  double hbr_ratio = 1.0 / 3.0;
  synth::HrfParams hrf = synth::HrfParams::fast_dataset();
  synth::NoiseConfig noise;
  std::uint64_t seed = 0;
};

struct RunData {
  corpus::RunSchedule schedule;
  std::vector<corpus::Sentence> sentences;  // trial order
  std::filesystem::path raw_path;           // float32 [n_samples x montage.n_cols()]
  std::int64_t n_samples = 0;
};

struct ParticipantData {
  int index = 1;  // 1-based, matches the p<i> directory
  synth::SemanticMap semmap;
  std::vector<RunData> runs;
};

// On-disk layout:
//   dir/manifest.json
//   dir/lm.ckpt
//   dir/p<i>/semmap.f32
//   dir/p<i>/run<rr>/{raw.f32, events.csv, sentences.tsv}
struct Dataset {
  std::filesystem::path dir;
  Params params;
  synth::Montage montage;
  std::string config_hash;
  std::uint64_t lm_checksum = 0;
  int embed_dim = 0;
  std::vector<ParticipantData> participants;

  Mat raw(int participant, int run) const;
  std::filesystem::path lm_path() const { return dir / "lm.ckpt"; }
  // Loads dir/lm.ckpt and checks its checksum against the manifest.
  lm::FrozenLM load_lm() const;
};

// The sentence-level semantic code: the toy LM's mean token embedding,
// normalized to unit length so the semantic map alone sets response
// amplitudes. Both rendering and decoding targets go through this.
Mat unit_embedding(const lm::FrozenLM& model, const std::string& sentence);
synth::Embedder make_lm_embedder(const lm::FrozenLM& model);

// Renders the complete synthetic study under `dir` and returns the loaded
// handle. Fails (DataError) if `dir` already contains a manifest.
Dataset generate(const std::filesystem::path& dir,
                 const std::vector<corpus::Topic>& topics,
                 const lm::FrozenLM& model, const synth::ExtinctionTable& ext,
                 const Params& params, const std::string& config_hash);

Dataset open(const std::filesystem::path& dir);

}  // namespace nirstext::dataset
