#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "nirstext/mat.hpp"
#include "nirstext/nn.hpp"

namespace nirstext::lm {

// Word-level, case-preserving tokens; punctuation characters split into
// their own tokens so that detokenize(tokenize(s)) == s exactly for
// in-vocabulary sentences.
std::vector<std::string> word_tokens(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

struct Vocabulary {
  // fixed special ids
  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int brain_open = 3;   // <brain/>
  static constexpr int brain_close = 4;  // </brain>
  static constexpr int first_word = 5;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  bool has(const std::string& tok) const { return token_to_id.count(tok) != 0; }
  // Throws DataError naming the token when out of vocabulary.
  int id(const std::string& tok) const;

  // Specials first, then corpus tokens by descending frequency,
  // lexicographic among ties.
  static Vocabulary build(const std::vector<std::string>& sentences);
};

constexpr int kMaxTokens = 32;

struct TokenSeq {
  std::vector<int> ids;  // length exactly kMaxTokens, pad-filled
  int real_len = 0;      // leading non-pad count (bos + words + eos)
};

// [bos, words..., eos] padded to kMaxTokens; sentences that do not fit throw
// DataError quoting the sentence.
TokenSeq tokenize(const std::string& sentence, const Vocabulary& vocab);
// Drops specials and reattaches punctuation.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

struct LmConfig {
  int embed = 64;
  int layers = 2;
  int heads = 4;
  int max_ctx = 96;
  int mlp_mult = 4;
};

// Saved activations for one sequence, consumed by the backward pass.
struct LmFwd {
  Mat x0;  // embeddings + positions, [T x E]
  std::vector<std::uint8_t> mask;
  struct Layer {
    Mat x_in, ln1out, q, k, v, ctx, x_mid, ln2out, h1, act;
    nn::LnCtx ln1, ln2;
    std::vector<Mat> probs;  // per head [T x T]
  };
  std::vector<Layer> layers;
  Mat x_last;  // residual stream before the final layernorm
  nn::LnCtx lnf;
  Mat hidden;  // [T x E]
};

// Decoder-only transformer over the vocabulary above. "Frozen" refers to its
// role during prompt tuning: the trainer never touches these weights, which
// the checkpoint checksum pins down.
class FrozenLM {
 public:
  LmConfig cfg;
  Vocabulary vocab;
  nn::ParamStore params;

  void init(const LmConfig& cfg, Vocabulary vocab, std::uint64_t seed);

  // Token embedding rows scaled by sqrt(E); positions are added inside
  // forward, so mixed prompts (token rows + encoder slots) stay consistent.
  Mat embed_rows(const std::vector<int>& ids) const;

  // X_in: position-free input rows. mask: 1 = real key, 0 = masked out.
  void forward(const Mat& X_in, const std::vector<std::uint8_t>& mask,
               LmFwd& out) const;

  // Logits rows for the given positions, [n x V].
  Mat logits_at(const LmFwd& fwd, const std::vector<int>& positions) const;

  // Propagates dLogits (rows aligned with `positions`) through the output
  // head; returns dHidden [T x E]. Accumulates head gradients when training.
  Mat head_backward(const LmFwd& fwd, const Mat& dLogits,
                    const std::vector<int>& positions, bool want_param_grads);

  // Backward through the blocks from dHidden; returns the gradient w.r.t.
  // the position-free input rows. Embedding-table gradients are accumulated
  // by the caller (train_toy_lm) via scatter-add of the returned rows.
  Mat backward(const LmFwd& fwd, const Mat& dHidden, bool want_param_grads);

  std::uint64_t checksum() const;  // FNV-1a over the float32 value blob
};

// Softmax cross-entropy over logits rows with integer labels; dlogits is the
// unscaled (softmax - onehot) gradient.
struct CeOut {
  double loss_sum = 0.0;
  int count = 0;
  Mat dlogits;
};
CeOut ce_loss(const Mat& logits, const std::vector<int>& labels);

struct TrainLmParams {
  int max_epochs = 30;
  int patience = 5;    // 0 disables early stopping
  double lr = 2e-3;
  int batch = 32;
  double val_frac = 0.1;
  double clip = 10.0;
  std::uint64_t seed = 0;
};

// Builds the vocabulary from the corpus and trains until the validation
// perplexity plateaus. Corpora under 100 sentences log a warning (and under
// 10 reuse the training set for validation).
FrozenLM train_toy_lm(const std::vector<std::string>& corpus,
                      const LmConfig& cfg, const TrainLmParams& params);

// Greedy argmax continuation from already-assembled prompt rows. Stops at
// eos or max_new tokens; ties resolve to the lowest token id.
std::vector<int> greedy_generate(const FrozenLM& lm, const Mat& prompt_rows,
                                 int max_new = kMaxTokens);

void save_checkpoint(const std::filesystem::path& path, const FrozenLM& lm);
FrozenLM load_checkpoint(const std::filesystem::path& path);

// Mean scaled token embedding of a sentence's word tokens, [1 x E]. Used as
// the sentence-level semantic code by the synthetic forward model and the
// cross-participant alignment targets.
Mat sentence_embedding(const FrozenLM& lm, const std::string& sentence);

// Contextual hidden states for arbitrary (possibly lowercased) tokens:
// resolves each token against the vocabulary (exact match, then capitalized),
// runs [bos tokens eos] through the model, and returns one row per input
// token. Unresolvable tokens get a deterministic pseudo-random unit vector.
Mat hidden_state_rows(const FrozenLM& lm, const std::vector<std::string>& tokens);

}  // namespace nirstext::lm
