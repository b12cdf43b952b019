#include "nirstext/nn.hpp"

#include <cmath>
#include <numbers>

#include "nirstext/errors.hpp"
#include "nirstext/kernels.hpp"

namespace nirstext::nn {

namespace nk = nirstext::kernels;

Param& ParamStore::add(const std::string& name, std::int64_t rows, std::int64_t cols) {
  for (const auto& p : params_)
    if (p.name == name) throw NumericError("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.w = Mat(rows, cols);
  p.g = Mat(rows, cols);
  p.m = Mat(rows, cols);
  p.v = Mat(rows, cols);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw NumericError("no such parameter: " + name);
}

const Param& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw NumericError("no such parameter: " + name);
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.g.fill(0.0);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.w.size();
  return n;
}

std::vector<float> ParamStore::value_blob_f32() const {
  std::vector<float> blob;
  blob.reserve(scalar_count());
  for (const auto& p : params_)
    for (double x : p.w.v) blob.push_back(static_cast<float>(x));
  return blob;
}

void ParamStore::load_value_blob_f32(const std::vector<float>& blob) {
  if (blob.size() != scalar_count())
    throw DataError("parameter blob size mismatch: expected " +
                    std::to_string(scalar_count()) + " scalars, got " +
                    std::to_string(blob.size()));
  std::size_t i = 0;
  for (auto& p : params_)
    for (double& x : p.w.v) x = static_cast<double>(blob[i++]);
}

void xavier_uniform(Mat& w, Rng& rng, std::int64_t fan_in, std::int64_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : w.v) x = rng.uniform(-a, a);
}

void linear_fwd(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
  const auto N = static_cast<std::size_t>(X.rows);
  const auto in = static_cast<std::size_t>(X.cols);
  const auto out = static_cast<std::size_t>(W.rows);
  if (W.cols != X.cols) throw NumericError("linear_fwd: weight shape mismatch");
  Y = Mat(X.rows, W.rows);
  nk::gemm_nt(false, N, in, out, X.data(), W.data(), Y.data());
  if (b.size() != 0) {
    if (b.cols != W.rows) throw NumericError("linear_fwd: bias shape mismatch");
    for (std::int64_t r = 0; r < Y.rows; ++r)
      nk::axpy(1.0, b.data(), Y.row(r), out);
  }
}

void linear_bwd(const Mat& X, const Mat& W, const Mat& dY, Mat* dX, Mat* dW,
                Mat* db) {
  const auto N = static_cast<std::size_t>(X.rows);
  const auto in = static_cast<std::size_t>(X.cols);
  const auto out = static_cast<std::size_t>(W.rows);
  if (dW) {
    // dW[out x in] += dY^T[out x N] * X[N x in]
    nk::gemm_tn(true, N, out, in, dY.data(), X.data(), dW->data());
  }
  if (db) {
    for (std::int64_t r = 0; r < dY.rows; ++r)
      nk::axpy(1.0, dY.row(r), db->data(), out);
  }
  if (dX) {
    *dX = Mat(X.rows, X.cols);
    nk::gemm_nn(false, N, out, in, dY.data(), W.data(), dX->data());
  }
}

void layernorm_fwd(const Mat& X, const Mat& gamma, const Mat& beta, Mat& Y,
                   LnCtx& ctx) {
  const auto D = static_cast<std::size_t>(X.cols);
  Y = Mat(X.rows, X.cols);
  ctx.mean.assign(static_cast<std::size_t>(X.rows), 0.0);
  ctx.rstd.assign(static_cast<std::size_t>(X.rows), 0.0);
  for (std::int64_t r = 0; r < X.rows; ++r) {
    const double* x = X.row(r);
    const double mu = nk::sum(x, D) / static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double d = x[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(D);
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    ctx.mean[static_cast<std::size_t>(r)] = mu;
    ctx.rstd[static_cast<std::size_t>(r)] = rstd;
    double* y = Y.row(r);
    for (std::size_t j = 0; j < D; ++j)
      y[j] = (x[j] - mu) * rstd * gamma.v[j] + beta.v[j];
  }
}

void layernorm_bwd(const Mat& X, const Mat& gamma, const LnCtx& ctx,
                   const Mat& dY, Mat* dX, Mat* dGamma, Mat* dBeta) {
  const auto D = static_cast<std::size_t>(X.cols);
  if (dX) *dX = Mat(X.rows, X.cols);
  for (std::int64_t r = 0; r < X.rows; ++r) {
    const double* x = X.row(r);
    const double* dy = dY.row(r);
    const double mu = ctx.mean[static_cast<std::size_t>(r)];
    const double rstd = ctx.rstd[static_cast<std::size_t>(r)];
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double xhat = (x[j] - mu) * rstd;
      const double dxhat = dy[j] * gamma.v[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      if (dGamma) dGamma->v[j] += dy[j] * xhat;
      if (dBeta) dBeta->v[j] += dy[j];
    }
    if (dX) {
      double* dx = dX->row(r);
      const double inv_d = 1.0 / static_cast<double>(D);
      for (std::size_t j = 0; j < D; ++j) {
        const double xhat = (x[j] - mu) * rstd;
        const double dxhat = dy[j] * gamma.v[j];
        dx[j] = rstd * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
      }
    }
  }
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

void gelu_fwd(const Mat& X, Mat& Y) {
  Y = Mat(X.rows, X.cols);
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double x = X.v[i];
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    Y.v[i] = 0.5 * x * (1.0 + t);
  }
}

void gelu_bwd(const Mat& X, const Mat& dY, Mat& dX) {
  dX = Mat(X.rows, X.cols);
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double x = X.v[i];
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    dX.v[i] = dY.v[i] * d;
  }
}

void softmax_rows(Mat& X) {
  for (std::int64_t r = 0; r < X.rows; ++r) {
    double* x = X.row(r);
    double mx = x[0];
    for (std::int64_t j = 1; j < X.cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < X.cols; ++j) {
      x[j] = std::exp(x[j] - mx);
      s += x[j];
    }
    const double inv = 1.0 / s;
    for (std::int64_t j = 0; j < X.cols; ++j) x[j] *= inv;
  }
}

void dropout_fwd(Mat& X, double rate, Rng& rng, std::vector<std::uint8_t>& mask) {
  if (rate <= 0.0) {
    mask.assign(X.size(), 1);
    return;
  }
  if (rate >= 1.0) throw NumericError("dropout rate must be < 1");
  mask.resize(X.size());
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (rng.uniform() < keep) {
      mask[i] = 1;
      X.v[i] *= scale;
    } else {
      mask[i] = 0;
      X.v[i] = 0.0;
    }
  }
}

void dropout_bwd(Mat& dX, double rate, const std::vector<std::uint8_t>& mask) {
  if (rate <= 0.0) return;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < dX.size(); ++i)
    dX.v[i] = mask[i] ? dX.v[i] * scale : 0.0;
}

void add_sinusoidal_positions(Mat& X, std::int64_t offset) {
  const auto D = X.cols;
  for (std::int64_t r = 0; r < X.rows; ++r) {
    const double pos = static_cast<double>(offset + r);
    double* x = X.row(r);
    for (std::int64_t j = 0; j + 1 < D; j += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(D));
      x[j] += std::sin(pos * freq);
      x[j + 1] += std::cos(pos * freq);
    }
  }
}

void adam_step(ParamStore& params, const AdamParams& ap, int t) {
  const double bc1 = 1.0 - std::pow(ap.beta1, t);
  const double bc2 = 1.0 - std::pow(ap.beta2, t);
  for (auto& p : params.all()) {
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      const double g = p.g.v[i];
      p.m.v[i] = ap.beta1 * p.m.v[i] + (1.0 - ap.beta1) * g;
      p.v.v[i] = ap.beta2 * p.v.v[i] + (1.0 - ap.beta2) * g * g;
      const double mhat = p.m.v[i] / bc1;
      const double vhat = p.v.v[i] / bc2;
      p.w.v[i] -= ap.lr * mhat / (std::sqrt(vhat) + ap.eps);
    }
  }
}

double global_grad_norm(const ParamStore& params) {
  double ss = 0.0;
  for (const auto& p : params.all())
    ss += nk::sumsq(p.g.data(), p.g.size());
  return std::sqrt(ss);
}

void clip_global_norm(ParamStore& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& p : params.all()) nk::scale(s, p.g.data(), p.g.size());
}

}  // namespace nirstext::nn
