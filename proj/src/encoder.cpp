#include "nirstext/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "nirstext/errors.hpp"
#include "nirstext/hash.hpp"
#include "nirstext/kernels.hpp"
#include "nirstext/linalg.hpp"

namespace nirstext::encoder {

namespace nk = nirstext::kernels;

namespace {

constexpr int kMlpMult = 4;

void check_config(const EncoderConfig& c) {
  if (c.input_channels <= 0) throw ConfigError("encoder: input_channels must be positive");
  if (c.hidden <= 0) throw ConfigError("encoder: hidden must be positive");
  if (c.encoder_layers <= 0) throw ConfigError("encoder: encoder_layers must be positive");
  if (c.heads <= 0) throw ConfigError("encoder: heads must be positive");
  if (c.hidden % c.heads != 0)
    throw ConfigError("encoder: hidden must be divisible by heads");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    throw ConfigError("encoder: dropout must be in [0, 1)");
  if (c.output_width <= 0) throw ConfigError("encoder: output_width must be positive");
  if (c.brain_slots <= 0) throw ConfigError("encoder: brain_slots must be positive");
}

// Full bidirectional attention; queries and keys may have different lengths
// (the decoder stage attends K slot queries over T encoded keys).
void xattn_fwd(const Mat& q, const Mat& k, const Mat& v, int heads,
               std::vector<Mat>& probs, Mat& ctx) {
  const std::int64_t Tq = q.rows;
  const std::int64_t Tk = k.rows;
  const std::int64_t H = q.cols;
  const std::int64_t dh = H / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ctx = Mat(Tq, H);
  probs.assign(static_cast<std::size_t>(heads), Mat());
  for (int h = 0; h < heads; ++h) {
    const std::int64_t off = h * dh;
    Mat& P = probs[static_cast<std::size_t>(h)];
    P = Mat(Tq, Tk);
    for (std::int64_t i = 0; i < Tq; ++i) {
      double* prow = P.row(i);
      double mx = -1e300;
      for (std::int64_t j = 0; j < Tk; ++j) {
        prow[j] = nk::dot(q.row(i) + off, k.row(j) + off,
                          static_cast<std::size_t>(dh)) * scale;
        mx = std::max(mx, prow[j]);
      }
      double sum = 0.0;
      for (std::int64_t j = 0; j < Tk; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        sum += prow[j];
      }
      const double inv = 1.0 / sum;
      double* crow = ctx.row(i) + off;
      for (std::int64_t j = 0; j < Tk; ++j) {
        prow[j] *= inv;
        nk::axpy(prow[j], v.row(j) + off, crow, static_cast<std::size_t>(dh));
      }
    }
  }
}

void xattn_bwd(const Mat& q, const Mat& k, const Mat& v,
               const std::vector<Mat>& probs, int heads, const Mat& dctx,
               Mat& dq, Mat& dk, Mat& dv) {
  const std::int64_t Tq = q.rows;
  const std::int64_t Tk = k.rows;
  const std::int64_t H = q.cols;
  const std::int64_t dh = H / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Mat(Tq, H);
  dk = Mat(Tk, H);
  dv = Mat(Tk, H);
  std::vector<double> dp(static_cast<std::size_t>(Tk));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t off = h * dh;
    const Mat& P = probs[static_cast<std::size_t>(h)];
    for (std::int64_t i = 0; i < Tq; ++i) {
      const double* prow = P.row(i);
      const double* dc = dctx.row(i) + off;
      double dot_pp = 0.0;
      for (std::int64_t j = 0; j < Tk; ++j) {
        const double d = nk::dot(dc, v.row(j) + off, static_cast<std::size_t>(dh));
        dp[static_cast<std::size_t>(j)] = d;
        dot_pp += prow[j] * d;
        nk::axpy(prow[j], dc, dv.row(j) + off, static_cast<std::size_t>(dh));
      }
      for (std::int64_t j = 0; j < Tk; ++j) {
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

// Train-mode dropout on an activation: fresh draw when rng is given,
// otherwise replay of a previously recorded mask (same inverted scaling).
void apply_dropout(Mat& x, double rate, Rng* rng, std::vector<std::uint8_t>& mask) {
  if (rng != nullptr) {
    nn::dropout_fwd(x, rate, *rng, mask);
    return;
  }
  if (mask.size() != x.size())
    throw NumericError("encoder: dropout replay without matching recorded masks");
  nn::dropout_bwd(x, rate, mask);
}

}  // namespace

void BrainEncoder::init(const EncoderConfig& c, std::uint64_t seed) {
  check_config(c);
  cfg = c;
  params = nn::ParamStore();
  drop_rng = Rng(derive_seed(seed, "encoder.dropout"));
  Rng rng(derive_seed(seed, "encoder.init"));
  const int C = cfg.input_channels;
  const int H = cfg.hidden;
  const int M = kMlpMult * H;
  const int E = cfg.output_width;
  const int K = cfg.brain_slots;

  auto& in_w = params.add("in_proj.w", H, C);
  nn::xavier_uniform(in_w.w, rng, C, H);
  params.add("in_proj.b", 1, H);

  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = "e" + std::to_string(l) + ".";
    auto& ln1g = params.add(p + "ln1.g", 1, H);
    ln1g.w.fill(1.0);
    params.add(p + "ln1.b", 1, H);
    for (const char* nm : {"wq", "wk", "wv", "wo"}) {
      auto& w = params.add(p + "attn." + nm, H, H);
      nn::xavier_uniform(w.w, rng, H, H);
      params.add(p + "attn.b" + std::string(nm + 1), 1, H);
    }
    auto& ln2g = params.add(p + "ln2.g", 1, H);
    ln2g.w.fill(1.0);
    params.add(p + "ln2.b", 1, H);
    auto& w1 = params.add(p + "mlp.w1", M, H);
    nn::xavier_uniform(w1.w, rng, H, M);
    params.add(p + "mlp.b1", 1, M);
    auto& w2 = params.add(p + "mlp.w2", H, M);
    nn::xavier_uniform(w2.w, rng, M, H);
    params.add(p + "mlp.b2", 1, H);
  }

  auto& slots = params.add("slots", K, H);
  nn::xavier_uniform(slots.w, rng, K, H);
  auto& dlng = params.add("dec.ln.g", 1, H);
  dlng.w.fill(1.0);
  params.add("dec.ln.b", 1, H);
  for (const char* nm : {"wq", "wk", "wv", "wo"}) {
    auto& w = params.add("dec.attn." + std::string(nm), H, H);
    nn::xavier_uniform(w.w, rng, H, H);
    params.add("dec.attn.b" + std::string(nm + 1), 1, H);
  }
  auto& lnfg = params.add("lnf.g", 1, H);
  lnfg.w.fill(1.0);
  params.add("lnf.b", 1, H);
  auto& out_w = params.add("out_proj.w", E, H);
  nn::xavier_uniform(out_w.w, rng, H, E);
  params.add("out_proj.b", 1, E);
}

void BrainEncoder::forward(const Mat& trial, Mode mode, Rng* rng, EncFwd& out) const {
  if (trial.cols != cfg.input_channels)
    throw DataError("encoder: expected " + std::to_string(cfg.input_channels) +
                    " channels, got " + std::to_string(trial.cols));
  if (trial.rows < 1) throw DataError("encoder: empty trial");

  const bool dropped = mode == Mode::train && cfg.dropout > 0.0;
  out.dropped = dropped;
  out.trial = trial;
  out.layers.resize(static_cast<std::size_t>(cfg.encoder_layers));

  nn::linear_fwd(trial, params.at("in_proj.w").w, params.at("in_proj.b").w, out.x0);
  nn::add_sinusoidal_positions(out.x0);
  if (dropped) apply_dropout(out.x0, cfg.dropout, rng, out.drop0);

  Mat x = out.x0;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    auto& L = out.layers[static_cast<std::size_t>(l)];
    const std::string p = "e" + std::to_string(l) + ".";
    L.x_in = x;
    nn::layernorm_fwd(x, params.at(p + "ln1.g").w, params.at(p + "ln1.b").w,
                      L.ln1out, L.ln1);
    nn::linear_fwd(L.ln1out, params.at(p + "attn.wq").w, params.at(p + "attn.bq").w, L.q);
    nn::linear_fwd(L.ln1out, params.at(p + "attn.wk").w, params.at(p + "attn.bk").w, L.k);
    nn::linear_fwd(L.ln1out, params.at(p + "attn.wv").w, params.at(p + "attn.bv").w, L.v);
    xattn_fwd(L.q, L.k, L.v, cfg.heads, L.probs, L.ctx);
    Mat attn_out;
    nn::linear_fwd(L.ctx, params.at(p + "attn.wo").w, params.at(p + "attn.bo").w, attn_out);
    if (dropped) apply_dropout(attn_out, cfg.dropout, rng, L.drop_attn);
    L.x_mid = L.x_in;
    add_rows(L.x_mid, attn_out);

    nn::layernorm_fwd(L.x_mid, params.at(p + "ln2.g").w, params.at(p + "ln2.b").w,
                      L.ln2out, L.ln2);
    nn::linear_fwd(L.ln2out, params.at(p + "mlp.w1").w, params.at(p + "mlp.b1").w, L.h1);
    nn::gelu_fwd(L.h1, L.act);
    Mat mlp_out;
    nn::linear_fwd(L.act, params.at(p + "mlp.w2").w, params.at(p + "mlp.b2").w, mlp_out);
    if (dropped) apply_dropout(mlp_out, cfg.dropout, rng, L.drop_mlp);
    x = L.x_mid;
    add_rows(x, mlp_out);
  }
  out.y = std::move(x);

  nn::layernorm_fwd(out.y, params.at("dec.ln.g").w, params.at("dec.ln.b").w,
                    out.yln, out.yln_ctx);
  nn::linear_fwd(params.at("slots").w, params.at("dec.attn.wq").w,
                 params.at("dec.attn.bq").w, out.q);
  nn::linear_fwd(out.yln, params.at("dec.attn.wk").w, params.at("dec.attn.bk").w, out.k);
  nn::linear_fwd(out.yln, params.at("dec.attn.wv").w, params.at("dec.attn.bv").w, out.v);
  xattn_fwd(out.q, out.k, out.v, cfg.heads, out.probs, out.ctx);
  Mat o;
  nn::linear_fwd(out.ctx, params.at("dec.attn.wo").w, params.at("dec.attn.bo").w, o);
  if (dropped) apply_dropout(o, cfg.dropout, rng, out.drop_dec);
  out.s_mid = params.at("slots").w;
  add_rows(out.s_mid, o);
  nn::layernorm_fwd(out.s_mid, params.at("lnf.g").w, params.at("lnf.b").w,
                    out.lnf_out, out.lnf);
  nn::linear_fwd(out.lnf_out, params.at("out_proj.w").w, params.at("out_proj.b").w,
                 out.out);
}

Mat BrainEncoder::backward(const EncFwd& fwd, const Mat& dOut, bool want_param_grads) {
  auto grad_or_null = [&](const std::string& name) -> Mat* {
    return want_param_grads ? &params.at(name).g : nullptr;
  };

  Mat dLnfOut;
  nn::linear_bwd(fwd.lnf_out, params.at("out_proj.w").w, dOut, &dLnfOut,
                 grad_or_null("out_proj.w"), grad_or_null("out_proj.b"));
  Mat dSmid;
  nn::layernorm_bwd(fwd.s_mid, params.at("lnf.g").w, fwd.lnf, dLnfOut, &dSmid,
                    grad_or_null("lnf.g"), grad_or_null("lnf.b"));

  // s_mid = slots + dropout(Wo ctx + bo)
  Mat dO = dSmid;
  if (fwd.dropped) nn::dropout_bwd(dO, cfg.dropout, fwd.drop_dec);
  Mat dCtx;
  nn::linear_bwd(fwd.ctx, params.at("dec.attn.wo").w, dO, &dCtx,
                 grad_or_null("dec.attn.wo"), grad_or_null("dec.attn.bo"));
  Mat dq, dk, dv;
  xattn_bwd(fwd.q, fwd.k, fwd.v, fwd.probs, cfg.heads, dCtx, dq, dk, dv);
  Mat dYln(fwd.yln.rows, fwd.yln.cols);
  {
    Mat tmp;
    nn::linear_bwd(fwd.yln, params.at("dec.attn.wk").w, dk, &tmp,
                   grad_or_null("dec.attn.wk"), grad_or_null("dec.attn.bk"));
    add_rows(dYln, tmp);
    nn::linear_bwd(fwd.yln, params.at("dec.attn.wv").w, dv, &tmp,
                   grad_or_null("dec.attn.wv"), grad_or_null("dec.attn.bv"));
    add_rows(dYln, tmp);
  }
  if (want_param_grads) {
    Mat dSlotsQ;
    nn::linear_bwd(params.at("slots").w, params.at("dec.attn.wq").w, dq, &dSlotsQ,
                   grad_or_null("dec.attn.wq"), grad_or_null("dec.attn.bq"));
    auto& gs = params.at("slots").g;
    add_rows(gs, dSlotsQ);
    add_rows(gs, dSmid);  // residual path
  }
  Mat dx;
  nn::layernorm_bwd(fwd.y, params.at("dec.ln.g").w, fwd.yln_ctx, dYln, &dx,
                    grad_or_null("dec.ln.g"), grad_or_null("dec.ln.b"));

  for (int l = cfg.encoder_layers - 1; l >= 0; --l) {
    const auto& L = fwd.layers[static_cast<std::size_t>(l)];
    const std::string p = "e" + std::to_string(l) + ".";

    // MLP branch: x = x_mid + dropout(W2 gelu(W1 ln2(x_mid)))
    Mat dMlpOut = dx;
    if (fwd.dropped) nn::dropout_bwd(dMlpOut, cfg.dropout, L.drop_mlp);
    Mat dAct;
    nn::linear_bwd(L.act, params.at(p + "mlp.w2").w, dMlpOut, &dAct,
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

    // attention branch: x_mid = x_in + dropout(Wo attn(q,k,v) + bo)
    Mat dAttnOut = dXmid;
    if (fwd.dropped) nn::dropout_bwd(dAttnOut, cfg.dropout, L.drop_attn);
    Mat dCtxL;
    nn::linear_bwd(L.ctx, params.at(p + "attn.wo").w, dAttnOut, &dCtxL,
                   grad_or_null(p + "attn.wo"), grad_or_null(p + "attn.bo"));
    Mat dqL, dkL, dvL;
    xattn_bwd(L.q, L.k, L.v, L.probs, cfg.heads, dCtxL, dqL, dkL, dvL);
    Mat dLn1(L.ln1out.rows, L.ln1out.cols);
    {
      Mat tmp;
      nn::linear_bwd(L.ln1out, params.at(p + "attn.wq").w, dqL, &tmp,
                     grad_or_null(p + "attn.wq"), grad_or_null(p + "attn.bq"));
      add_rows(dLn1, tmp);
      nn::linear_bwd(L.ln1out, params.at(p + "attn.wk").w, dkL, &tmp,
                     grad_or_null(p + "attn.wk"), grad_or_null(p + "attn.bk"));
      add_rows(dLn1, tmp);
      nn::linear_bwd(L.ln1out, params.at(p + "attn.wv").w, dvL, &tmp,
                     grad_or_null(p + "attn.wv"), grad_or_null(p + "attn.bv"));
      add_rows(dLn1, tmp);
    }
    Mat dXin;
    nn::layernorm_bwd(L.x_in, params.at(p + "ln1.g").w, L.ln1, dLn1, &dXin,
                      grad_or_null(p + "ln1.g"), grad_or_null(p + "ln1.b"));
    add_rows(dXin, dXmid);  // residual path
    dx = std::move(dXin);
  }

  if (fwd.dropped) nn::dropout_bwd(dx, cfg.dropout, fwd.drop0);
  // positions are additive constants, so dx is also the gradient at the
  // projection output
  Mat dTrial;
  nn::linear_bwd(fwd.trial, params.at("in_proj.w").w, dx, &dTrial,
                 grad_or_null("in_proj.w"), grad_or_null("in_proj.b"));
  return dTrial;
}

std::uint64_t BrainEncoder::checksum() const {
  const auto blob = params.value_blob_f32();
  return fnv1a64(blob.data(), blob.size() * sizeof(float));
}

BrainEncoder init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  BrainEncoder enc;
  enc.init(cfg, seed);
  return enc;
}

Mat encode(const Mat& trial, BrainEncoder& enc, Mode mode) {
  EncFwd fwd;
  enc.forward(trial, mode, mode == Mode::train ? &enc.drop_rng : nullptr, fwd);
  return fwd.out;
}

MseOut mse_loss(const Mat& pred, const Mat& target) {
  if (!pred.same_shape(target)) throw NumericError("mse_loss: shape mismatch");
  if (pred.size() == 0) throw NumericError("mse_loss: empty input");
  MseOut out;
  out.dpred = Mat(pred.rows, pred.cols);
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.v[i] - target.v[i];
    out.loss += d * d * inv;
    out.dpred.v[i] = 2.0 * d * inv;
  }
  return out;
}

namespace {

// Shares the checkpoint container layout with the language model files:
// magic, version, config header, float32 value blob, FNV-1a checksum.
constexpr std::uint32_t kEncMagic = 0x4542544eu;    // "NTBE" little-endian
constexpr std::uint32_t kAlignMagic = 0x4c41544eu;  // "NTAL" little-endian
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

void write_file(const std::filesystem::path& path, const std::string& buf) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("short write: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path.string());
  std::string buf(static_cast<std::size_t>(f.tellg()), '\0');
  f.seekg(0);
  f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  return buf;
}

void put_blob(std::string& buf, const std::vector<float>& blob) {
  put(buf, static_cast<std::uint64_t>(blob.size()));
  buf.append(reinterpret_cast<const char*>(blob.data()), blob.size() * sizeof(float));
  put(buf, fnv1a64(blob.data(), blob.size() * sizeof(float)));
}

std::vector<float> take_blob(const std::string& buf, std::size_t& off,
                             const std::filesystem::path& path) {
  const auto n = take<std::uint64_t>(buf, off);
  if (off + n * sizeof(float) + sizeof(std::uint64_t) > buf.size())
    throw DataError("checkpoint truncated");
  std::vector<float> blob(n);
  std::memcpy(blob.data(), buf.data() + off, n * sizeof(float));
  off += n * sizeof(float);
  if (take<std::uint64_t>(buf, off) != fnv1a64(blob.data(), blob.size() * sizeof(float)))
    throw DataError("checkpoint checksum mismatch: " + path.string());
  return blob;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const BrainEncoder& enc) {
  std::string buf;
  put(buf, kEncMagic);
  put(buf, kVersion);
  for (int x : {enc.cfg.input_channels, enc.cfg.hidden, enc.cfg.encoder_layers,
                enc.cfg.heads, enc.cfg.output_width, enc.cfg.brain_slots})
    put(buf, static_cast<std::int32_t>(x));
  put(buf, enc.cfg.dropout);
  put_blob(buf, enc.params.value_blob_f32());
  write_file(path, buf);
}

BrainEncoder load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  std::size_t off = 0;
  if (take<std::uint32_t>(buf, off) != kEncMagic)
    throw DataError("not a brain encoder checkpoint: " + path.string());
  if (take<std::uint32_t>(buf, off) != kVersion)
    throw DataError("unsupported checkpoint version");
  EncoderConfig cfg;
  cfg.input_channels = take<std::int32_t>(buf, off);
  cfg.hidden = take<std::int32_t>(buf, off);
  cfg.encoder_layers = take<std::int32_t>(buf, off);
  cfg.heads = take<std::int32_t>(buf, off);
  cfg.output_width = take<std::int32_t>(buf, off);
  cfg.brain_slots = take<std::int32_t>(buf, off);
  cfg.dropout = take<double>(buf, off);
  const auto blob = take_blob(buf, off, path);
  BrainEncoder enc;
  enc.init(cfg, 0);
  enc.params.load_value_blob_f32(blob);
  return enc;
}

AlignmentModel fit_alignment(const std::map<int, std::vector<AlignTrial>>& trials,
                             double lambda, std::uint64_t seed,
                             std::int64_t out_dim) {
  if (trials.size() < 2)
    throw DataError("alignment needs at least 2 participants, got " +
                    std::to_string(trials.size()));
  if (lambda < 0.0) throw ConfigError("alignment lambda must be >= 0");
  if (out_dim <= 0) throw ConfigError("alignment out_dim must be positive");

  std::int64_t in_dim = 0;
  std::int64_t target_w = 0;
  for (const auto& [pid, ts] : trials) {
    if (ts.size() < 10)
      throw DataError("participant " + std::to_string(pid) + " has only " +
                      std::to_string(ts.size()) + " alignment trials (minimum 10)");
    for (const auto& t : ts) {
      if (t.x.rows < 1 || t.x.cols < 1)
        throw DataError("alignment: empty trial for participant " + std::to_string(pid));
      if (t.target.rows != 1 || t.target.cols < 1)
        throw DataError("alignment: target must be a single row");
      if (in_dim == 0) in_dim = t.x.cols;
      if (target_w == 0) target_w = t.target.cols;
      if (t.x.cols != in_dim)
        throw DataError("alignment: inconsistent channel counts across trials");
      if (t.target.cols != target_w)
        throw DataError("alignment: inconsistent target widths across trials");
    }
  }

  // Embeddings narrower or wider than the shared space go through one fixed
  // Gaussian lift; seeding it once keeps every participant's targets in the
  // same coordinates.
  Mat lift;
  if (target_w != out_dim) {
    Rng rng(derive_seed(seed, "align.lift"));
    lift = Mat(out_dim, target_w);
    const double s = 1.0 / std::sqrt(static_cast<double>(target_w));
    for (std::size_t i = 0; i < lift.size(); ++i) lift.v[i] = s * rng.normal();
  }

  AlignmentModel model;
  model.lambda = lambda;
  model.in_dim = in_dim;
  model.out_dim = out_dim;
  for (const auto& [pid, ts] : trials) {
    std::int64_t n = 0;
    for (const auto& t : ts) n += t.x.rows;
    Mat X(n, in_dim);
    Mat Y(n, out_dim);
    std::int64_t r = 0;
    for (const auto& t : ts) {
      Mat target = t.target;
      if (lift.size() != 0) target = linalg::matmul_nt(t.target, lift);
      for (std::int64_t i = 0; i < t.x.rows; ++i, ++r) {
        std::memcpy(X.row(r), t.x.row(i), sizeof(double) * static_cast<std::size_t>(in_dim));
        std::memcpy(Y.row(r), target.row(0), sizeof(double) * static_cast<std::size_t>(out_dim));
      }
    }
    model.maps[pid] =
        lambda == 0.0 ? linalg::ols(X, Y).beta : linalg::ridge(X, Y, lambda);
  }
  return model;
}

Mat apply_alignment(const Mat& trial, int participant, const AlignmentModel& model) {
  const auto it = model.maps.find(participant);
  if (it == model.maps.end())
    throw DataError("no alignment map for participant " + std::to_string(participant));
  if (trial.cols != model.in_dim)
    throw DataError("alignment: expected " + std::to_string(model.in_dim) +
                    " channels, got " + std::to_string(trial.cols));
  return linalg::matmul(trial, it->second);
}

void save_alignment(const std::filesystem::path& path, const AlignmentModel& model) {
  std::string buf;
  put(buf, kAlignMagic);
  put(buf, kVersion);
  put(buf, model.lambda);
  put(buf, static_cast<std::int64_t>(model.in_dim));
  put(buf, static_cast<std::int64_t>(model.out_dim));
  put(buf, static_cast<std::int32_t>(model.maps.size()));
  std::vector<float> blob;
  for (const auto& [pid, w] : model.maps) {  // std::map: ascending, stable bytes
    put(buf, static_cast<std::int32_t>(pid));
    for (double x : w.v) blob.push_back(static_cast<float>(x));
  }
  put_blob(buf, blob);
  write_file(path, buf);
}

AlignmentModel load_alignment(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  std::size_t off = 0;
  if (take<std::uint32_t>(buf, off) != kAlignMagic)
    throw DataError("not an alignment model file: " + path.string());
  if (take<std::uint32_t>(buf, off) != kVersion)
    throw DataError("unsupported alignment file version");
  AlignmentModel model;
  model.lambda = take<double>(buf, off);
  model.in_dim = take<std::int64_t>(buf, off);
  model.out_dim = take<std::int64_t>(buf, off);
  const int n_maps = take<std::int32_t>(buf, off);
  std::vector<int> pids;
  for (int i = 0; i < n_maps; ++i) pids.push_back(take<std::int32_t>(buf, off));
  const auto blob = take_blob(buf, off, path);
  const std::size_t per_map =
      static_cast<std::size_t>(model.in_dim) * static_cast<std::size_t>(model.out_dim);
  if (blob.size() != per_map * pids.size())
    throw DataError("alignment file size mismatch: " + path.string());
  std::size_t at = 0;
  for (int pid : pids) {
    Mat w(model.in_dim, model.out_dim);
    for (std::size_t i = 0; i < per_map; ++i) w.v[i] = blob[at++];
    model.maps[pid] = std::move(w);
  }
  return model;
}

}  // namespace nirstext::encoder
