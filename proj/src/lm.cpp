#include "nirstext/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "nirstext/errors.hpp"
#include "nirstext/hash.hpp"
#include "nirstext/kernels.hpp"
#include "nirstext/log.hpp"
#include "nirstext/rng.hpp"

namespace nirstext::lm {

namespace nk = nirstext::kernels;

namespace {

bool is_punct_char(char c) {
  return std::strchr(".,!?;:\"()[]", c) != nullptr;
}

bool is_pure_punct(const std::string& t) {
  for (char c : t)
    if (!is_punct_char(c)) return false;
  return !t.empty();
}

}  // namespace

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    if (is_punct_char(text[i])) {
      out.emplace_back(1, text[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j])) &&
           !is_punct_char(text[j]))
      ++j;
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty() && !is_pure_punct(t)) out.push_back(' ');
    out += t;
  }
  return out;
}

int Vocabulary::id(const std::string& tok) const {
  const auto it = token_to_id.find(tok);
  if (it == token_to_id.end())
    throw DataError("out-of-vocabulary token '" + tok + "'");
  return it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& sentences) {
  Vocabulary v;
  v.id_to_token = {"<pad>", "<bos>", "<eos>", "<brain/>", "</brain>"};
  std::map<std::string, std::int64_t> freq;
  for (const auto& s : sentences)
    for (const auto& t : word_tokens(s)) ++freq[t];
  std::vector<std::pair<std::string, std::int64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, f] : items) v.id_to_token.push_back(tok);
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

TokenSeq tokenize(const std::string& sentence, const Vocabulary& vocab) {
  const auto words = word_tokens(sentence);
  if (static_cast<int>(words.size()) + 2 > kMaxTokens)
    throw DataError("sentence exceeds " + std::to_string(kMaxTokens) +
                    " tokens: " + sentence);
  TokenSeq seq;
  seq.ids.reserve(kMaxTokens);
  seq.ids.push_back(Vocabulary::bos);
  for (const auto& w : words) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(Vocabulary::eos);
  seq.real_len = static_cast<int>(seq.ids.size());
  seq.ids.resize(kMaxTokens, Vocabulary::pad);
  return seq;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> toks;
  for (int id : ids) {
    if (id == Vocabulary::pad || id == Vocabulary::bos || id == Vocabulary::eos ||
        id == Vocabulary::brain_open || id == Vocabulary::brain_close)
      continue;
    if (id < 0 || id >= vocab.size())
      throw DataError("detokenize: id out of range: " + std::to_string(id));
    toks.push_back(vocab.id_to_token[static_cast<std::size_t>(id)]);
  }
  return join_tokens(toks);
}

void FrozenLM::init(const LmConfig& c, Vocabulary v, std::uint64_t seed) {
  cfg = c;
  vocab = std::move(v);
  params = nn::ParamStore();
  Rng rng(derive_seed(seed, "lm.init"));
  const int E = cfg.embed;
  const int M = cfg.mlp_mult * E;
  const int V = vocab.size();

  auto& emb = params.add("tok_emb", V, E);
  nn::xavier_uniform(emb.w, rng, V, E);

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    auto& ln1g = params.add(p + "ln1.g", 1, E);
    ln1g.w.fill(1.0);
    params.add(p + "ln1.b", 1, E);
    for (const char* nm : {"wq", "wk", "wv", "wo"}) {
      auto& w = params.add(p + "attn." + nm, E, E);
      nn::xavier_uniform(w.w, rng, E, E);
      params.add(p + "attn.b" + std::string(nm + 1), 1, E);
    }
    auto& ln2g = params.add(p + "ln2.g", 1, E);
    ln2g.w.fill(1.0);
    params.add(p + "ln2.b", 1, E);
    auto& w1 = params.add(p + "mlp.w1", M, E);
    nn::xavier_uniform(w1.w, rng, E, M);
    params.add(p + "mlp.b1", 1, M);
    auto& w2 = params.add(p + "mlp.w2", E, M);
    nn::xavier_uniform(w2.w, rng, M, E);
    params.add(p + "mlp.b2", 1, E);
  }
  auto& lnfg = params.add("lnf.g", 1, E);
  lnfg.w.fill(1.0);
  params.add("lnf.b", 1, E);
  auto& head = params.add("head.w", V, E);
  nn::xavier_uniform(head.w, rng, E, V);
  params.add("head.b", 1, V);
}

Mat FrozenLM::embed_rows(const std::vector<int>& ids) const {
  const auto& emb = params.at("tok_emb").w;
  const double s = std::sqrt(static_cast<double>(cfg.embed));
  Mat X(static_cast<std::int64_t>(ids.size()), cfg.embed);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || id >= vocab.size())
      throw DataError("embed_rows: id out of range: " + std::to_string(id));
    const double* src = emb.row(id);
    double* dst = X.row(static_cast<std::int64_t>(r));
    for (int j = 0; j < cfg.embed; ++j) dst[j] = s * src[j];
  }
  return X;
}

namespace {

// Multi-head causal self-attention with key masking. Head slices are
// contiguous within each row, so per-head work runs on strided row chunks.
void attention_fwd(const Mat& q, const Mat& k, const Mat& v,
                   const std::vector<std::uint8_t>& mask, int heads,
                   std::vector<Mat>& probs, Mat& ctx) {
  const std::int64_t T = q.rows;
  const std::int64_t E = q.cols;
  const std::int64_t dh = E / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ctx = Mat(T, E);
  probs.assign(static_cast<std::size_t>(heads), Mat());
  std::vector<double> score(static_cast<std::size_t>(T));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t off = h * dh;
    Mat& P = probs[static_cast<std::size_t>(h)];
    P = Mat(T, T);  // zero; masked and acausal entries stay exactly 0
    for (std::int64_t i = 0; i < T; ++i) {
      double mx = -1e300;
      for (std::int64_t j = 0; j <= i; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        score[static_cast<std::size_t>(j)] =
            nk::dot(q.row(i) + off, k.row(j) + off, static_cast<std::size_t>(dh)) * scale;
        mx = std::max(mx, score[static_cast<std::size_t>(j)]);
      }
      if (mx <= -1e299) continue;  // fully masked query row: zero context
      double* prow = P.row(i);
      double sum = 0.0;
      for (std::int64_t j = 0; j <= i; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        prow[j] = std::exp(score[static_cast<std::size_t>(j)] - mx);
        sum += prow[j];
      }
      const double inv = 1.0 / sum;
      double* crow = ctx.row(i) + off;
      for (std::int64_t j = 0; j <= i; ++j) {
        if (prow[j] == 0.0) continue;
        prow[j] *= inv;
        nk::axpy(prow[j], v.row(j) + off, crow, static_cast<std::size_t>(dh));
      }
    }
  }
}

void attention_bwd(const Mat& q, const Mat& k, const Mat& v,
                   const std::vector<Mat>& probs, int heads, const Mat& dctx,
                   Mat& dq, Mat& dk, Mat& dv) {
  const std::int64_t T = q.rows;
  const std::int64_t E = q.cols;
  const std::int64_t dh = E / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Mat(T, E);
  dk = Mat(T, E);
  dv = Mat(T, E);
  std::vector<double> dp(static_cast<std::size_t>(T));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t off = h * dh;
    const Mat& P = probs[static_cast<std::size_t>(h)];
    for (std::int64_t i = 0; i < T; ++i) {
      const double* prow = P.row(i);
      const double* dc = dctx.row(i) + off;
      double dot_pp = 0.0;
      for (std::int64_t j = 0; j <= i; ++j) {
        if (prow[j] == 0.0) {
          dp[static_cast<std::size_t>(j)] = 0.0;
          continue;
        }
        const double d = nk::dot(dc, v.row(j) + off, static_cast<std::size_t>(dh));
        dp[static_cast<std::size_t>(j)] = d;
        dot_pp += prow[j] * d;
        nk::axpy(prow[j], dc, dv.row(j) + off, static_cast<std::size_t>(dh));
      }
      for (std::int64_t j = 0; j <= i; ++j) {
        if (prow[j] == 0.0) continue;
        const double ds = prow[j] * (dp[static_cast<std::size_t>(j)] - dot_pp) * scale;
        nk::axpy(ds, k.row(j) + off, dq.row(i) + off, static_cast<std::size_t>(dh));
        nk::axpy(ds, q.row(i) + off, dk.row(j) + off, static_cast<std::size_t>(dh));
      }
    }
  }
}

void add_rows(Mat& acc, const Mat& x) {
  nk::axpy(1.0, x.data(), acc.data(), acc.size());
}

}  // namespace

void FrozenLM::forward(const Mat& X_in, const std::vector<std::uint8_t>& mask,
                       LmFwd& out) const {
  if (X_in.cols != cfg.embed) throw NumericError("lm forward: wrong embed width");
  if (X_in.rows > cfg.max_ctx)
    throw DataError("lm forward: sequence length " + std::to_string(X_in.rows) +
                    " exceeds max context " + std::to_string(cfg.max_ctx));
  if (mask.size() != static_cast<std::size_t>(X_in.rows))
    throw NumericError("lm forward: mask length mismatch");

  out.x0 = X_in;
  nn::add_sinusoidal_positions(out.x0);
  out.mask = mask;
  out.layers.assign(static_cast<std::size_t>(cfg.layers), LmFwd::Layer());

  Mat x = out.x0;
  for (int l = 0; l < cfg.layers; ++l) {
    auto& L = out.layers[static_cast<std::size_t>(l)];
    const std::string p = "l" + std::to_string(l) + ".";
    L.x_in = x;
    nn::layernorm_fwd(x, params.at(p + "ln1.g").w, params.at(p + "ln1.b").w,
                      L.ln1out, L.ln1);
    nn::linear_fwd(L.ln1out, params.at(p + "attn.wq").w, params.at(p + "attn.bq").w, L.q);
    nn::linear_fwd(L.ln1out, params.at(p + "attn.wk").w, params.at(p + "attn.bk").w, L.k);
    nn::linear_fwd(L.ln1out, params.at(p + "attn.wv").w, params.at(p + "attn.bv").w, L.v);
    attention_fwd(L.q, L.k, L.v, mask, cfg.heads, L.probs, L.ctx);
    Mat attn_out;
    nn::linear_fwd(L.ctx, params.at(p + "attn.wo").w, params.at(p + "attn.bo").w, attn_out);
    L.x_mid = L.x_in;
    add_rows(L.x_mid, attn_out);

    nn::layernorm_fwd(L.x_mid, params.at(p + "ln2.g").w, params.at(p + "ln2.b").w,
                      L.ln2out, L.ln2);
    nn::linear_fwd(L.ln2out, params.at(p + "mlp.w1").w, params.at(p + "mlp.b1").w, L.h1);
    nn::gelu_fwd(L.h1, L.act);
    Mat mlp_out;
    nn::linear_fwd(L.act, params.at(p + "mlp.w2").w, params.at(p + "mlp.b2").w, mlp_out);
    x = L.x_mid;
    add_rows(x, mlp_out);
  }
  out.x_last = x;
  nn::layernorm_fwd(x, params.at("lnf.g").w, params.at("lnf.b").w, out.hidden, out.lnf);
}

Mat FrozenLM::logits_at(const LmFwd& fwd, const std::vector<int>& positions) const {
  const auto& W = params.at("head.w").w;
  const auto& b = params.at("head.b").w;
  Mat rows(static_cast<std::int64_t>(positions.size()), cfg.embed);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int pos = positions[i];
    if (pos < 0 || pos >= fwd.hidden.rows)
      throw NumericError("logits_at: position out of range");
    std::memcpy(rows.row(static_cast<std::int64_t>(i)), fwd.hidden.row(pos),
                sizeof(double) * static_cast<std::size_t>(cfg.embed));
  }
  Mat logits;
  nn::linear_fwd(rows, W, b, logits);
  return logits;
}

Mat FrozenLM::head_backward(const LmFwd& fwd, const Mat& dLogits,
                            const std::vector<int>& positions,
                            bool want_param_grads) {
  auto& head = params.at("head.w");
  auto& headb = params.at("head.b");
  Mat rows(static_cast<std::int64_t>(positions.size()), cfg.embed);
  for (std::size_t i = 0; i < positions.size(); ++i)
    std::memcpy(rows.row(static_cast<std::int64_t>(i)), fwd.hidden.row(positions[i]),
                sizeof(double) * static_cast<std::size_t>(cfg.embed));
  Mat dRows;
  nn::linear_bwd(rows, head.w, dLogits, &dRows,
                 want_param_grads ? &head.g : nullptr,
                 want_param_grads ? &headb.g : nullptr);
  Mat dHidden(fwd.hidden.rows, fwd.hidden.cols);
  for (std::size_t i = 0; i < positions.size(); ++i)
    nk::axpy(1.0, dRows.row(static_cast<std::int64_t>(i)), dHidden.row(positions[i]),
             static_cast<std::size_t>(cfg.embed));
  return dHidden;
}

Mat FrozenLM::backward(const LmFwd& fwd, const Mat& dHidden, bool want_param_grads) {
  auto grad_or_null = [&](const std::string& name) -> Mat* {
    return want_param_grads ? &params.at(name).g : nullptr;
  };

  Mat dx;
  nn::layernorm_bwd(fwd.x_last, params.at("lnf.g").w, fwd.lnf, dHidden, &dx,
                    grad_or_null("lnf.g"), grad_or_null("lnf.b"));

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& L = fwd.layers[static_cast<std::size_t>(l)];
    const std::string p = "l" + std::to_string(l) + ".";

    // MLP branch: x = x_mid + W2 gelu(W1 ln2(x_mid))
    Mat dAct;
    nn::linear_bwd(L.act, params.at(p + "mlp.w2").w, dx, &dAct,
                   grad_or_null(p + "mlp.w2"), grad_or_null(p + "mlp.b2"));
    Mat dH1;
    nn::gelu_bwd(L.h1, dAct, dH1);
    Mat dLn2;
    nn::linear_bwd(L.ln2out, params.at(p + "mlp.w1").w, dH1, &dLn2,
                   grad_or_null(p + "mlp.w1"), grad_or_null(p + "mlp.b1"));
    Mat dXmid;
    nn::layernorm_bwd(L.x_mid, params.at(p + "ln2.g").w, L.ln2, dLn2, &dXmid,
                      grad_or_null(p + "ln2.g"), grad_or_null(p + "ln2.b"));
    add_rows(dXmid, dx);  // residual path

    // attention branch: x_mid = x_in + Wo attn(q,k,v)
    Mat dCtx;
    nn::linear_bwd(L.ctx, params.at(p + "attn.wo").w, dXmid, &dCtx,
                   grad_or_null(p + "attn.wo"), grad_or_null(p + "attn.bo"));
    Mat dq, dk, dv;
    attention_bwd(L.q, L.k, L.v, L.probs, cfg.heads, dCtx, dq, dk, dv);
    Mat dLn1(L.ln1out.rows, L.ln1out.cols);
    {
      Mat tmp;
      nn::linear_bwd(L.ln1out, params.at(p + "attn.wq").w, dq, &tmp,
                     grad_or_null(p + "attn.wq"), grad_or_null(p + "attn.bq"));
      add_rows(dLn1, tmp);
      nn::linear_bwd(L.ln1out, params.at(p + "attn.wk").w, dk, &tmp,
                     grad_or_null(p + "attn.wk"), grad_or_null(p + "attn.bk"));
      add_rows(dLn1, tmp);
      nn::linear_bwd(L.ln1out, params.at(p + "attn.wv").w, dv, &tmp,
                     grad_or_null(p + "attn.wv"), grad_or_null(p + "attn.bv"));
      add_rows(dLn1, tmp);
    }
    Mat dXin;
    nn::layernorm_bwd(L.x_in, params.at(p + "ln1.g").w, L.ln1, dLn1, &dXin,
                      grad_or_null(p + "ln1.g"), grad_or_null(p + "ln1.b"));
    add_rows(dXin, dXmid);  // residual path
    dx = std::move(dXin);
  }
  return dx;  // gradient w.r.t. x0 (positions are additive constants)
}

std::uint64_t FrozenLM::checksum() const {
  const auto blob = params.value_blob_f32();
  return fnv1a64(blob.data(), blob.size() * sizeof(float));
}

CeOut ce_loss(const Mat& logits, const std::vector<int>& labels) {
  if (logits.rows != static_cast<std::int64_t>(labels.size()))
    throw NumericError("ce_loss: label count mismatch");
  CeOut out;
  out.dlogits = Mat(logits.rows, logits.cols);
  for (std::int64_t r = 0; r < logits.rows; ++r) {
    const double* x = logits.row(r);
    double* d = out.dlogits.row(r);
    double mx = x[0];
    for (std::int64_t j = 1; j < logits.cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < logits.cols; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols) throw NumericError("ce_loss: label out of range");
    out.loss_sum += lse - x[y];
    ++out.count;
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < logits.cols; ++j) d[j] = std::exp(x[j] - mx) * inv;
    d[y] -= 1.0;
  }
  return out;
}

namespace {

double evaluate_ce(FrozenLM& lm, const std::vector<TokenSeq>& seqs,
                   const std::vector<std::size_t>& idx) {
  double loss = 0.0;
  int count = 0;
  LmFwd fwd;
  for (const std::size_t si : idx) {
    const auto& seq = seqs[si];
    const int T = seq.real_len;
    std::vector<int> ids(seq.ids.begin(), seq.ids.begin() + T);
    const Mat X = lm.embed_rows(ids);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(T), 1);
    lm.forward(X, mask, fwd);
    std::vector<int> positions(static_cast<std::size_t>(T - 1));
    std::vector<int> labels(static_cast<std::size_t>(T - 1));
    for (int t = 0; t + 1 < T; ++t) {
      positions[static_cast<std::size_t>(t)] = t;
      labels[static_cast<std::size_t>(t)] = ids[static_cast<std::size_t>(t + 1)];
    }
    const Mat logits = lm.logits_at(fwd, positions);
    const auto ce = ce_loss(logits, labels);
    loss += ce.loss_sum;
    count += ce.count;
  }
  return loss / std::max(count, 1);
}

}  // namespace

FrozenLM train_toy_lm(const std::vector<std::string>& corpus,
                      const LmConfig& cfg, const TrainLmParams& tp) {
  if (corpus.empty()) throw DataError("train_toy_lm: empty corpus");
  if (corpus.size() < 100)
    log::warn("train_toy_lm: corpus has only " + std::to_string(corpus.size()) +
              " sentences (fewer than the recommended 100)");

  FrozenLM lm;
  lm.init(cfg, Vocabulary::build(corpus), tp.seed);

  std::vector<TokenSeq> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) seqs.push_back(tokenize(s, lm.vocab));

  // validation split
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(tp.seed, "lm.valsplit"));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(tp.val_frac * static_cast<double>(seqs.size())));
  if (seqs.size() < 10) n_val = 0;
  n_val = std::min(n_val, seqs.size() - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (val_idx.empty()) val_idx = train_idx;

  nn::AdamParams adam;
  adam.lr = tp.lr;
  int adam_t = 0;
  double best_val = 1e300;
  int since_best = 0;
  std::vector<float> best_blob;

  LmFwd fwd;
  for (int epoch = 0; epoch < tp.max_epochs; ++epoch) {
    Rng erng(derive_seed(tp.seed, "lm.epoch", static_cast<std::uint64_t>(epoch)));
    erng.shuffle(train_idx);
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(tp.batch)) {
      const std::size_t stop =
          std::min(train_idx.size(), start + static_cast<std::size_t>(tp.batch));
      lm.params.zero_grad();
      int label_count = 0;
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const auto& seq = seqs[train_idx[bi]];
        const int T = seq.real_len;
        std::vector<int> ids(seq.ids.begin(), seq.ids.begin() + T);
        const Mat X = lm.embed_rows(ids);
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(T), 1);
        lm.forward(X, mask, fwd);
        std::vector<int> positions(static_cast<std::size_t>(T - 1));
        std::vector<int> labels(static_cast<std::size_t>(T - 1));
        for (int t = 0; t + 1 < T; ++t) {
          positions[static_cast<std::size_t>(t)] = t;
          labels[static_cast<std::size_t>(t)] = ids[static_cast<std::size_t>(t + 1)];
        }
        const Mat logits = lm.logits_at(fwd, positions);
        auto ce = ce_loss(logits, labels);
        batch_loss += ce.loss_sum;
        label_count += ce.count;
        const Mat dHidden = lm.head_backward(fwd, ce.dlogits, positions, true);
        const Mat dX0 = lm.backward(fwd, dHidden, true);
        // embedding-table gradient: scatter rows (chain through the sqrt(E) scale)
        auto& emb = lm.params.at("tok_emb");
        const double s = std::sqrt(static_cast<double>(cfg.embed));
        for (int t = 0; t < T; ++t)
          nk::axpy(s, dX0.row(t), emb.g.row(ids[static_cast<std::size_t>(t)]),
                   static_cast<std::size_t>(cfg.embed));
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("toy LM training diverged (non-finite loss)");
      // mean over label positions
      const double inv = 1.0 / std::max(label_count, 1);
      for (auto& p : lm.params.all()) nk::scale(inv, p.g.data(), p.g.size());
      nn::clip_global_norm(lm.params, tp.clip);
      nn::adam_step(lm.params, adam, ++adam_t);
    }

    const double val_ce = evaluate_ce(lm, seqs, val_idx);
    if (!std::isfinite(val_ce))
      throw NumericError("toy LM training diverged (non-finite validation loss)");
    if (val_ce < best_val - 1e-4) {
      best_val = val_ce;
      since_best = 0;
      best_blob = lm.params.value_blob_f32();
    } else if (tp.patience > 0 && ++since_best >= tp.patience) {
      break;
    }
  }
  if (!best_blob.empty()) lm.params.load_value_blob_f32(best_blob);
  return lm;
}

std::vector<int> greedy_generate(const FrozenLM& lm, const Mat& prompt_rows,
                                 int max_new) {
  std::vector<int> out;
  Mat x = prompt_rows;
  LmFwd fwd;
  for (int step = 0; step < max_new; ++step) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(x.rows), 1);
    lm.forward(x, mask, fwd);
    const Mat logits = lm.logits_at(fwd, {static_cast<int>(x.rows - 1)});
    const double* row = logits.row(0);
    int best = 0;
    for (int j = 1; j < lm.vocab.size(); ++j)
      if (row[j] > row[best]) best = j;  // strict >: ties keep the lowest id
    if (best == Vocabulary::eos) break;
    out.push_back(best);
    const Mat newrow = lm.embed_rows({best});
    Mat grown(x.rows + 1, x.cols);
    std::memcpy(grown.data(), x.data(), sizeof(double) * x.size());
    std::memcpy(grown.row(x.rows), newrow.data(),
                sizeof(double) * static_cast<std::size_t>(x.cols));
    x = std::move(grown);
  }
  return out;
}

namespace {

constexpr std::uint32_t kMagic = 0x4d4c544eu;  // "NTLM" little-endian
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::string& buf, const T& x) {
  buf.append(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw DataError("checkpoint truncated");
  T x;
  std::memcpy(&x, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return x;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FrozenLM& lm) {
  std::string buf;
  put(buf, kMagic);
  put(buf, kVersion);
  for (int x : {lm.cfg.embed, lm.cfg.layers, lm.cfg.heads, lm.cfg.max_ctx,
                lm.cfg.mlp_mult, lm.vocab.size()})
    put(buf, static_cast<std::int32_t>(x));
  for (const auto& tok : lm.vocab.id_to_token) {
    put(buf, static_cast<std::uint32_t>(tok.size()));
    buf += tok;
  }
  const auto blob = lm.params.value_blob_f32();
  put(buf, static_cast<std::uint64_t>(blob.size()));
  buf.append(reinterpret_cast<const char*>(blob.data()), blob.size() * sizeof(float));
  put(buf, fnv1a64(blob.data(), blob.size() * sizeof(float)));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("short write: " + path.string());
}

FrozenLM load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path.string());
  std::string buf(static_cast<std::size_t>(f.tellg()), '\0');
  f.seekg(0);
  f.read(buf.data(), static_cast<std::streamsize>(buf.size()));

  std::size_t off = 0;
  if (take<std::uint32_t>(buf, off) != kMagic)
    throw DataError("not a toy LM checkpoint: " + path.string());
  if (take<std::uint32_t>(buf, off) != kVersion)
    throw DataError("unsupported checkpoint version");
  LmConfig cfg;
  cfg.embed = take<std::int32_t>(buf, off);
  cfg.layers = take<std::int32_t>(buf, off);
  cfg.heads = take<std::int32_t>(buf, off);
  cfg.max_ctx = take<std::int32_t>(buf, off);
  cfg.mlp_mult = take<std::int32_t>(buf, off);
  const int vsize = take<std::int32_t>(buf, off);
  Vocabulary vocab;
  for (int i = 0; i < vsize; ++i) {
    const auto len = take<std::uint32_t>(buf, off);
    if (off + len > buf.size()) throw DataError("checkpoint truncated");
    vocab.id_to_token.push_back(buf.substr(off, len));
    off += len;
  }
  for (std::size_t i = 0; i < vocab.id_to_token.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);

  const auto n = take<std::uint64_t>(buf, off);
  if (off + n * sizeof(float) + sizeof(std::uint64_t) > buf.size())
    throw DataError("checkpoint truncated");
  std::vector<float> blob(n);
  std::memcpy(blob.data(), buf.data() + off, n * sizeof(float));
  off += n * sizeof(float);
  const auto stored = take<std::uint64_t>(buf, off);
  if (stored != fnv1a64(blob.data(), blob.size() * sizeof(float)))
    throw DataError("checkpoint checksum mismatch: " + path.string());

  FrozenLM lm;
  lm.init(cfg, std::move(vocab), 0);
  lm.params.load_value_blob_f32(blob);
  return lm;
}

Mat sentence_embedding(const FrozenLM& lm, const std::string& sentence) {
  const auto words = word_tokens(sentence);
  if (words.empty()) throw DataError("sentence_embedding: empty sentence");
  std::vector<int> ids;
  for (const auto& w : words) ids.push_back(lm.vocab.id(w));
  const Mat rows = lm.embed_rows(ids);
  Mat mean(1, rows.cols);
  for (std::int64_t r = 0; r < rows.rows; ++r)
    nk::axpy(1.0 / static_cast<double>(rows.rows), rows.row(r), mean.data(),
             static_cast<std::size_t>(rows.cols));
  return mean;
}

Mat hidden_state_rows(const FrozenLM& lm, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  std::vector<bool> resolved;
  for (const auto& t : tokens) {
    if (lm.vocab.has(t)) {
      ids.push_back(lm.vocab.token_to_id.at(t));
      resolved.push_back(true);
    } else {
      std::string cap = t;
      if (!cap.empty()) cap[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cap[0])));
      if (lm.vocab.has(cap)) {
        ids.push_back(lm.vocab.token_to_id.at(cap));
        resolved.push_back(true);
      } else {
        ids.push_back(Vocabulary::pad);
        resolved.push_back(false);
      }
    }
  }
  std::vector<int> seq;
  seq.push_back(Vocabulary::bos);
  seq.insert(seq.end(), ids.begin(), ids.end());
  seq.push_back(Vocabulary::eos);
  LmFwd fwd;
  std::vector<std::uint8_t> mask(seq.size(), 1);
  lm.forward(lm.embed_rows(seq), mask, fwd);

  Mat out(static_cast<std::int64_t>(tokens.size()), lm.cfg.embed);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    double* dst = out.row(static_cast<std::int64_t>(i));
    if (resolved[i]) {
      std::memcpy(dst, fwd.hidden.row(static_cast<std::int64_t>(i + 1)),
                  sizeof(double) * static_cast<std::size_t>(lm.cfg.embed));
    } else {
      // deterministic unit vector per unknown token
      Rng r(fnv1a64(tokens[i].data(), tokens[i].size()));
      double ss = 0.0;
      for (int j = 0; j < lm.cfg.embed; ++j) {
        dst[j] = r.normal();
        ss += dst[j] * dst[j];
      }
      const double inv = 1.0 / std::sqrt(ss);
      for (int j = 0; j < lm.cfg.embed; ++j) dst[j] *= inv;
    }
  }
  return out;
}

}  // namespace nirstext::lm
