#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "nirstext/mat.hpp"
#include "nirstext/nn.hpp"
#include "nirstext/rng.hpp"

namespace nirstext::encoder {

struct EncoderConfig {
  int input_channels = 388;  // 100 when the cross-participant alignment front-end is active
  int hidden = 100;
  int encoder_layers = 1;
  int heads = 4;          // must divide hidden
  double dropout = 0.3;   // train-mode only
  int output_width = 64;  // E, the language model's embedding width
  int brain_slots = 4;    // K
};

enum class Mode { train, eval };

// Saved activations for one epoch, consumed by the backward pass. Dropout
// masks live here too so a training step (or a finite-difference probe) can
// replay exactly the masks the forward draw used.
struct EncFwd {
  bool dropped = false;  // train-mode forward with dropout > 0
  Mat trial;             // input rows, [T x C]
  Mat x0;                // projected input + positions, [T x H]
  std::vector<std::uint8_t> drop0;
  struct Layer {
    Mat x_in, ln1out, q, k, v, ctx, x_mid, ln2out, h1, act;
    nn::LnCtx ln1, ln2;
    std::vector<Mat> probs;  // per head [T x T]
    std::vector<std::uint8_t> drop_attn, drop_mlp;
  };
  std::vector<Layer> layers;
  Mat y;    // encoder-stage output, [T x H]
  Mat yln;  // normalized keys/values input
  nn::LnCtx yln_ctx;
  Mat q, k, v, ctx;        // cross-attention: q [K x H], k/v [T x H]
  std::vector<Mat> probs;  // per head [K x T]
  std::vector<std::uint8_t> drop_dec;
  Mat s_mid;  // slots + attended context, [K x H]
  Mat lnf_out;
  nn::LnCtx lnf;
  Mat out;  // [K x E]
};

// Maps a [T x input_channels] epoch to K slot vectors of width E: a linear
// input projection with sinusoidal positions, encoder_layers bidirectional
// self-attention blocks, and a decoder stage where K learned query slots
// attend over the encoded sequence once and project to the output width.
class BrainEncoder {
 public:
  EncoderConfig cfg;
  nn::ParamStore params;
  Rng drop_rng{0};  // reseeded by init, advanced by train-mode encode() calls

  // Xavier-uniform weights, zero biases, unit layernorm gains. Throws
  // ConfigError on an invalid config.
  void init(const EncoderConfig& cfg, std::uint64_t seed);

  // mode == train applies dropout: with `rng` it draws fresh masks into
  // `out`; with rng == nullptr it replays the masks already recorded there
  // (shape-checked), which keeps re-evaluations differentiable against a
  // fixed draw. Eval mode ignores rng and touches no random state.
  void forward(const Mat& trial, Mode mode, Rng* rng, EncFwd& out) const;

  // dOut is the loss gradient at fwd.out, [K x E]. Parameter gradients
  // accumulate when want_param_grads; the return value is the gradient with
  // respect to the input trial rows.
  Mat backward(const EncFwd& fwd, const Mat& dOut, bool want_param_grads);

  std::uint64_t checksum() const;  // FNV-1a over the float32 value blob
};

BrainEncoder init_encoder(const EncoderConfig& cfg, std::uint64_t seed);

// Convenience single-epoch call, [T x input_channels] -> [K x E]. Train mode
// draws dropout from the encoder's internal stream, so repeated calls differ;
// eval mode is deterministic and does not mutate the encoder.
Mat encode(const Mat& trial, BrainEncoder& enc, Mode mode);

// Mean squared error over all entries (the pretraining objective); dpred is
// the gradient at pred.
struct MseOut {
  double loss = 0.0;
  Mat dpred;
};
MseOut mse_loss(const Mat& pred, const Mat& target);

void save_checkpoint(const std::filesystem::path& path, const BrainEncoder& enc);
BrainEncoder load_checkpoint(const std::filesystem::path& path);

// One preprocessed epoch with its sentence-level target code. Targets are
// shared across participants for the same sentence; that sharing is what
// pins every participant's map to a common feature space.
struct AlignTrial {
  Mat x;       // [T x channels]
  Mat target;  // [1 x W] sentence embedding
};

// Per-participant ridge maps into the shared feature space. Maps are stored
// input-side, [channels x features], applied as X * map.
struct AlignmentModel {
  double lambda = 1.0;
  std::int64_t in_dim = 0;
  std::int64_t out_dim = 0;
  std::map<int, Mat> maps;  // participant index -> [in_dim x out_dim]

  bool has(int participant) const { return maps.count(participant) != 0; }
};

// Closed-form ridge per participant (lambda == 0 falls back to plain least
// squares). When the target width already equals out_dim the embeddings are
// used directly; otherwise a fixed seed-derived Gaussian lift raises them to
// out_dim first, identically for every participant. Every sample of a trial
// shares the trial's target row. Requires >= 2 participants and >= 10 trials
// each.
AlignmentModel fit_alignment(const std::map<int, std::vector<AlignTrial>>& trials,
                             double lambda = 1.0, std::uint64_t seed = 0,
                             std::int64_t out_dim = 100);

// [T x in_dim] -> [T x out_dim], per-sample linear projection with no
// intercept. Throws DataError for an unfitted participant.
Mat apply_alignment(const Mat& trial, int participant, const AlignmentModel& model);

void save_alignment(const std::filesystem::path& path, const AlignmentModel& model);
AlignmentModel load_alignment(const std::filesystem::path& path);

}  // namespace nirstext::encoder
