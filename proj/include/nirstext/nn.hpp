#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "nirstext/mat.hpp"
#include "nirstext/rng.hpp"

// Building blocks for the two small transformer models. Everything computes
// in double; float32 appears only in checkpoints. Backward passes are written
// out explicitly per op, and parameter gradients accumulate so that a batch
// is a sequence of per-example backward calls.
namespace nirstext::nn {

struct Param {
  std::string name;
  Mat w;  // value
  Mat g;  // gradient accumulator
  Mat m;  // adam first moment
  Mat v;  // adam second moment
};

class ParamStore {
 public:
  // References returned by add/at stay valid for the life of the store
  // (deque storage), so callers can hold on to them across registrations.
  Param& add(const std::string& name, std::int64_t rows, std::int64_t cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }

  void zero_grad();
  std::size_t scalar_count() const;

  // Registration-order concatenation of parameter values as float32; the
  // checkpoint format and checksum are defined over this blob.
  std::vector<float> value_blob_f32() const;
  void load_value_blob_f32(const std::vector<float>& blob);

 private:
  std::deque<Param> params_;
};

// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); variance 2/(fan_in+fan_out).
void xavier_uniform(Mat& w, Rng& rng, std::int64_t fan_in, std::int64_t fan_out);

// Y = X W^T + b with W stored [out x in], b [1 x out] (empty b allowed).
void linear_fwd(const Mat& X, const Mat& W, const Mat& b, Mat& Y);
// dW += dY^T X, db += column sums of dY, dX = dY W (written, not accumulated)
// whenever the respective pointer is non-null.
void linear_bwd(const Mat& X, const Mat& W, const Mat& dY, Mat* dX, Mat* dW,
                Mat* db);

struct LnCtx {
  std::vector<double> mean;
  std::vector<double> rstd;
};

constexpr double kLnEps = 1e-5;

void layernorm_fwd(const Mat& X, const Mat& gamma, const Mat& beta, Mat& Y,
                   LnCtx& ctx);
// dGamma/dBeta accumulate; dX is written.
void layernorm_bwd(const Mat& X, const Mat& gamma, const LnCtx& ctx,
                   const Mat& dY, Mat* dX, Mat* dGamma, Mat* dBeta);

// tanh-approximation GELU (smooth, finite-difference friendly).
void gelu_fwd(const Mat& X, Mat& Y);
void gelu_bwd(const Mat& X, const Mat& dY, Mat& dX);

// In-place, max-subtracted, row-wise.
void softmax_rows(Mat& X);

// Inverted dropout on the full matrix. Forward scales kept entries by
// 1/(1-rate) and records the mask; backward replays it.
void dropout_fwd(Mat& X, double rate, Rng& rng, std::vector<std::uint8_t>& mask);
void dropout_bwd(Mat& dX, double rate, const std::vector<std::uint8_t>& mask);

// Interleaved sin/cos positional encodings added in place; row r gets
// position offset + r.
void add_sinusoidal_positions(Mat& X, std::int64_t offset = 0);

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// t is the 1-based step count (bias correction).
void adam_step(ParamStore& params, const AdamParams& ap, int t);

double global_grad_norm(const ParamStore& params);
// Scales all gradients so the global norm is at most max_norm.
void clip_global_norm(ParamStore& params, double max_norm);

}  // namespace nirstext::nn
