#include "nirstext/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nirstext/errors.hpp"
#include "nirstext/fileio.hpp"
#include "nirstext/log.hpp"

namespace nirstext::sigproc {

namespace {

constexpr double kPi = 3.141592653589793;

std::string fmt(double x) { return io::fmt_double(x); }

double column_mean(const Mat& m, std::int64_t c) {
  double s = 0.0;
  for (std::int64_t r = 0; r < m.rows; ++r) s += m.at(r, c);
  return s / static_cast<double>(m.rows);
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  double hi = *mid;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

// Natural cubic spline through (t[i], y[i]); clamps outside the knot range.
class Spline {
 public:
  Spline(std::vector<double> t, std::vector<double> y)
      : t_(std::move(t)), y_(std::move(y)), m2_(t_.size(), 0.0) {
    const std::size_t n = t_.size();
    if (n < 3) return;  // linear / constant fallback handled in eval
    std::vector<double> diag(n, 0.0), rhs(n, 0.0), sub(n, 0.0), sup(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = t_[i] - t_[i - 1];
      const double h1 = t_[i + 1] - t_[i];
      sub[i] = h0;
      diag[i] = 2.0 * (h0 + h1);
      sup[i] = h1;
      rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    // Thomas algorithm on rows 1..n-2 (natural ends: m2 = 0)
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double w = sub[i] / diag[i - 1];
      diag[i] -= w * sup[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      const double upper = (i + 2 < n) ? sup[i] * m2_[i + 1] : 0.0;
      m2_[i] = (rhs[i] - upper) / diag[i];
      if (i == 1) break;
    }
  }

  double eval(double x) const {
    const std::size_t n = t_.size();
    if (x <= t_.front()) return y_.front();
    if (x >= t_.back()) return y_.back();
    if (n == 2) {
      const double u = (x - t_[0]) / (t_[1] - t_[0]);
      return y_[0] + u * (y_[1] - y_[0]);
    }
    const auto it = std::upper_bound(t_.begin(), t_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - t_.begin()) - 1;
    const double h = t_[i + 1] - t_[i];
    const double a = (t_[i + 1] - x) / h;
    const double b = (x - t_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m2_[i] + (b * b * b - b) * m2_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> t_, y_, m2_;
};

}  // namespace

std::string provenance_json(const std::vector<ProvStep>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : s.params) params[k] = v;
    arr.push_back(nlohmann::json{{"step", s.name}, {"params", params}});
  }
  return arr.dump(2) + "\n";
}

std::vector<ProvStep> provenance_from_json(const std::string& text) {
  std::vector<ProvStep> out;
  try {
    const auto arr = nlohmann::json::parse(text);
    for (const auto& j : arr) {
      ProvStep s;
      s.name = j.at("step").get<std::string>();
      for (const auto& [k, v] : j.at("params").items())
        s.params[k] = v.get<std::string>();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed provenance: ") + e.what());
  }
  return out;
}

ODSeries to_optical_density(const synth::RawRecording& raw) {
  const Mat& in = raw.intensity;
  if (in.rows < 1 || in.cols < 1) throw DataError("empty recording");
  ODSeries s;
  s.od = Mat(in.rows, in.cols);
  s.sfreq = raw.sfreq;
  for (std::int64_t c = 0; c < in.cols; ++c) {
    double mean = 0.0;
    for (std::int64_t t = 0; t < in.rows; ++t) {
      const double x = in.at(t, c);
      if (!(x > 0.0))
        throw DataError("non-positive intensity at sample " + std::to_string(t) +
                        ", channel " + std::to_string(c));
      mean += x;
    }
    mean /= static_cast<double>(in.rows);
    for (std::int64_t t = 0; t < in.rows; ++t) s.od.at(t, c) = -std::log(in.at(t, c) / mean);
  }
  s.provenance.push_back({"optical_density", {{"baseline", "run_mean"}}});
  return s;
}

ODSeries detrend(ODSeries s) {
  const auto n = s.od.rows;
  if (n < 3) throw DataError("detrend needs at least 3 samples");
  const double tbar = static_cast<double>(n - 1) / 2.0;
  double stt = 0.0;
  for (std::int64_t t = 0; t < n; ++t) stt += (static_cast<double>(t) - tbar) * (static_cast<double>(t) - tbar);
  for (std::int64_t c = 0; c < s.od.cols; ++c) {
    const double xbar = column_mean(s.od, c);
    double sxt = 0.0;
    for (std::int64_t t = 0; t < n; ++t)
      sxt += (static_cast<double>(t) - tbar) * (s.od.at(t, c) - xbar);
    const double slope = sxt / stt;
    for (std::int64_t t = 0; t < n; ++t)
      s.od.at(t, c) -= xbar + slope * (static_cast<double>(t) - tbar);
  }
  s.provenance.push_back({"detrend", {{"model", "linear"}}});
  return s;
}

ODSeries select_long(const ODSeries& s, const synth::Montage& m) {
  if (s.od.cols != m.n_cols()) throw DataError("series does not match the montage");
  ODSeries out;
  out.sfreq = s.sfreq;
  out.provenance = s.provenance;
  out.od = Mat(s.od.rows, m.n_long_cols());
  for (std::int64_t t = 0; t < s.od.rows; ++t)
    std::copy(s.od.row(t), s.od.row(t) + m.n_long_cols(), out.od.row(t));
  return out;
}

ODSeries select_short(const ODSeries& s, const synth::Montage& m) {
  if (s.od.cols != m.n_cols()) throw DataError("series does not match the montage");
  ODSeries out;
  out.sfreq = s.sfreq;
  out.od = Mat(s.od.rows, s.od.cols - m.n_long_cols());
  for (std::int64_t t = 0; t < s.od.rows; ++t)
    std::copy(s.od.row(t) + m.n_long_cols(), s.od.row(t) + s.od.cols, out.od.row(t));
  return out;
}

ODSeries short_channel_regress(ODSeries long_od, const ODSeries& short_od) {
  if (short_od.od.cols < 1) throw DataError("short-channel regression needs at least one short channel");
  if (short_od.od.rows < long_od.od.rows)
    throw DataError("short series shorter than long series");
  if (short_od.od.rows != long_od.od.rows)
    throw DataError("short and long series length mismatch");

  const auto n = long_od.od.rows;
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < short_od.od.cols; ++c) acc += short_od.od.at(t, c);
    s[static_cast<std::size_t>(t)] = acc / static_cast<double>(short_od.od.cols);
  }
  double sbar = 0.0;
  for (double x : s) sbar += x;
  sbar /= static_cast<double>(n);
  double sss = 0.0;
  for (double x : s) sss += (x - sbar) * (x - sbar);

  for (std::int64_t c = 0; c < long_od.od.cols; ++c) {
    const double xbar = column_mean(long_od.od, c);
    double sxs = 0.0;
    for (std::int64_t t = 0; t < n; ++t)
      sxs += (long_od.od.at(t, c) - xbar) * (s[static_cast<std::size_t>(t)] - sbar);
    const double beta = sss > 0.0 ? sxs / sss : 0.0;
    for (std::int64_t t = 0; t < n; ++t)
      long_od.od.at(t, c) -= xbar + beta * (s[static_cast<std::size_t>(t)] - sbar);
  }
  long_od.provenance.push_back(
      {"short_channel_regression",
       {{"n_short", std::to_string(short_od.od.cols)}, {"regressor", "short_mean"}}});
  return long_od;
}

ODSeries motion_correct(ODSeries s, double z_thresh) {
  if (z_thresh <= 0.0) throw ConfigError("motion_correct: z_thresh must be positive");
  const auto n = s.od.rows;

  // MAD -> sd consistency constant for the 5-point median residual of
  // Gaussian noise (simulated; the residual has a point mass at zero because
  // the center sample is its own window median a fifth of the time, so the
  // Gaussian 1.4826 would overshoot the z-scores).
  constexpr double kResidScale = 1.9205;

  std::int64_t corrected = 0;
  std::vector<double> resid(static_cast<std::size_t>(n), 0.0);
  std::vector<double> absdev;
  std::vector<std::uint8_t> flag(static_cast<std::size_t>(n));
  for (std::int64_t c = 0; c < s.od.cols; ++c) {
    // Residual against a centered 5-sample rolling median. Any locally
    // monotone stretch has residual exactly zero, so smooth haemodynamic
    // edges never register; spikes (1-2 samples) survive the median and
    // stand out at full height. The two samples at each end stay zero.
    std::fill(resid.begin(), resid.end(), 0.0);
    for (std::int64_t t = 2; t + 2 < n; ++t) {
      double v[5];
      for (int j = 0; j < 5; ++j) v[j] = s.od.at(t - 2 + j, c);
      std::nth_element(v, v + 2, v + 5);
      resid[static_cast<std::size_t>(t)] = s.od.at(t, c) - v[2];
    }

    const double med = median_of(resid);
    absdev.assign(resid.begin(), resid.end());
    for (auto& x : absdev) x = std::abs(x - med);
    const double sigma = kResidScale * median_of(absdev);
    if (sigma <= 0.0) continue;  // noiseless channel: no scale to judge against

    std::fill(flag.begin(), flag.end(), 0);
    std::int64_t n_flagged = 0;
    for (std::int64_t t = 0; t < n; ++t) {
      if (std::abs(resid[static_cast<std::size_t>(t)] - med) > z_thresh * sigma) {
        flag[static_cast<std::size_t>(t)] = 1;
        ++n_flagged;
      }
    }
    if (n_flagged == 0) continue;
    if (n - n_flagged < 4) {
      log::warn("motion_correct: channel " + std::to_string(c) +
                " has too few clean samples; left unchanged");
      continue;
    }
    std::vector<double> kt, ky;
    kt.reserve(static_cast<std::size_t>(n - n_flagged));
    ky.reserve(kt.capacity());
    for (std::int64_t t = 0; t < n; ++t) {
      if (!flag[static_cast<std::size_t>(t)]) {
        kt.push_back(static_cast<double>(t));
        ky.push_back(s.od.at(t, c));
      }
    }
    const Spline sp(std::move(kt), std::move(ky));
    for (std::int64_t t = 0; t < n; ++t)
      if (flag[static_cast<std::size_t>(t)]) s.od.at(t, c) = sp.eval(static_cast<double>(t));
    corrected += n_flagged;
  }
  s.provenance.push_back({"motion_correction",
                          {{"method", "median_residual_spline"},
                           {"z_thresh", fmt(z_thresh)},
                           {"corrected", std::to_string(corrected)}}});
  return s;
}

HaemoSeries beer_lambert(const ODSeries& od, const synth::Montage& m,
                         const synth::ExtinctionTable& ext, double ppf) {
  if (ppf <= 0.0) throw ConfigError("beer_lambert: ppf must be positive");
  const auto pairs = static_cast<std::int64_t>(m.n_long_pairs);
  if (od.od.cols != 2 * pairs)
    throw DataError("beer_lambert: expected both wavelengths for every pair (" +
                    std::to_string(2 * pairs) + " columns, got " +
                    std::to_string(od.od.cols) + ")");
  const double det = ext.hbo[0] * ext.hbr[1] - ext.hbr[0] * ext.hbo[1];
  if (std::abs(det) < 1e-18) throw NumericError("extinction matrix is singular");

  HaemoSeries h;
  h.sfreq = od.sfreq;
  h.provenance = od.provenance;
  h.haemo = Mat(od.od.rows, 2 * pairs);
  for (std::int64_t p = 0; p < pairs; ++p) {
    const double path = m.long_distance(static_cast<int>(p)) * ppf;
    const double inv = 1.0 / (det * path);
    for (std::int64_t t = 0; t < od.od.rows; ++t) {
      const double d760 = od.od.at(t, p);
      const double d850 = od.od.at(t, pairs + p);
      h.haemo.at(t, p) = (ext.hbr[1] * d760 - ext.hbr[0] * d850) * inv;
      h.haemo.at(t, pairs + p) = (ext.hbo[0] * d850 - ext.hbo[1] * d760) * inv;
    }
  }
  h.provenance.push_back({"beer_lambert", {{"ppf", fmt(ppf)}, {"units", "uM"}}});
  return h;
}

std::vector<Biquad> butter_bandpass(int order, double lo_hz, double hi_hz,
                                    double sfreq) {
  if (sfreq <= 0.0) throw ConfigError("butter_bandpass: sfreq must be positive");
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < sfreq / 2.0))
    throw ConfigError("butter_bandpass: need 0 < lo < hi < sfreq/2");
  if (order < 1 || order > 12) throw ConfigError("butter_bandpass: order out of range");

  using cd = std::complex<double>;
  // Edges pre-warped for the bilinear map (internal rate 2, matched below).
  const double fs2 = 4.0;
  const double w1 = fs2 * std::tan(kPi * lo_hz / sfreq);
  const double w2 = fs2 * std::tan(kPi * hi_hz / sfreq);
  const double bw = w2 - w1;
  const double wo = std::sqrt(w1 * w2);

  // Butterworth prototype poles -> band-pass poles -> digital plane. The
  // analog gain is bw^order with `order` zeros at s = 0, so the bilinear map
  // contributes fs2^order on top and (fs2 - s_p) per pole underneath.
  std::vector<cd> zpoles;
  const cd gain_num = std::pow(cd(bw * fs2, 0.0), order);
  cd gain_den = 1.0;
  for (int m = -order + 1; m <= order - 1; m += 2) {
    const cd proto = -std::exp(cd(0.0, kPi * m / (2.0 * order)));
    const cd t = proto * (bw / 2.0);
    const cd disc = std::sqrt(t * t - cd(wo * wo, 0.0));
    for (const cd sp : {t + disc, t - disc}) {
      zpoles.push_back((cd(fs2, 0.0) + sp) / (cd(fs2, 0.0) - sp));
      gain_den *= cd(fs2, 0.0) - sp;
    }
  }
  // `order` digital zeros sit at z = +1 and `order` more at z = -1
  const double k = (gain_num / gain_den).real();

  for (const cd& p : zpoles)
    if (std::abs(p) >= 1.0) throw NumericError("butter_bandpass: unstable design");

  // group into conjugate pairs
  struct Pair {
    double re, im, mag;
  };
  std::vector<cd> pending = zpoles;
  std::vector<Pair> pairs;
  while (!pending.empty()) {
    cd p = pending.back();
    pending.pop_back();
    std::size_t mate = pending.size();
    double best = 1e300;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const double d = std::abs(pending[i] - std::conj(p));
      if (d < best) {
        best = d;
        mate = i;
      }
    }
    if (mate == pending.size() || best > 1e-8)
      throw NumericError("butter_bandpass: poles do not pair into real sections");
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(mate));
    pairs.push_back({p.real(), std::abs(p.imag()), std::abs(p)});
  }
  // farthest-from-unit-circle section first; the gain lands there
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.mag != b.mag) return a.mag < b.mag;
    return a.re < b.re;
  });

  // Sections closest to the unit circle pick their nearest zero flavour
  // first: +1 (DC zeros) for poles near z = 1, -1 (Nyquist) otherwise.
  int stock_pos = order, stock_neg = order;
  std::vector<int> kind(pairs.size(), 0);  // +1, -1, or 0 = mixed
  for (std::size_t i = pairs.size(); i-- > 0;) {
    const double dist_pos = std::hypot(pairs[i].re - 1.0, pairs[i].im);
    const double dist_neg = std::hypot(pairs[i].re + 1.0, pairs[i].im);
    const bool prefer_pos = dist_pos <= dist_neg;
    if (prefer_pos && stock_pos >= 2) {
      kind[i] = +1;
      stock_pos -= 2;
    } else if (!prefer_pos && stock_neg >= 2) {
      kind[i] = -1;
      stock_neg -= 2;
    } else if (stock_pos >= 2) {
      kind[i] = +1;
      stock_pos -= 2;
    } else if (stock_neg >= 2) {
      kind[i] = -1;
      stock_neg -= 2;
    } else {
      kind[i] = 0;
      --stock_pos;
      --stock_neg;
    }
  }

  std::vector<Biquad> sos(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Biquad& q = sos[i];
    q.b0 = 1.0;
    q.b1 = kind[i] == +1 ? -2.0 : (kind[i] == -1 ? 2.0 : 0.0);
    q.b2 = kind[i] == 0 ? -1.0 : 1.0;
    q.a1 = -2.0 * pairs[i].re;
    q.a2 = pairs[i].re * pairs[i].re + pairs[i].im * pairs[i].im;
  }
  sos[0].b0 *= k;
  sos[0].b1 *= k;
  sos[0].b2 *= k;
  return sos;
}

double sos_gain_at(const std::vector<Biquad>& sos, double f_hz, double sfreq) {
  const std::complex<double> z = std::exp(std::complex<double>(0.0, 2.0 * kPi * f_hz / sfreq));
  const std::complex<double> zi = 1.0 / z;
  std::complex<double> h = 1.0;
  for (const auto& q : sos)
    h *= (q.b0 + q.b1 * zi + q.b2 * zi * zi) / (1.0 + q.a1 * zi + q.a2 * zi * zi);
  return std::abs(h);
}

namespace {

// steady-state (unit step) state per section, cascaded DC gains applied
std::vector<std::pair<double, double>> sos_step_state(const std::vector<Biquad>& sos) {
  std::vector<std::pair<double, double>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const auto& q = sos[i];
    const double asum = 1.0 + q.a1 + q.a2;
    const double g = (q.b0 + q.b1 + q.b2) / asum;
    zi[i] = {scale * (g - q.b0), scale * (q.b2 - q.a2 * g)};
    scale *= g;
  }
  return zi;
}

void sosfilt_inplace(const std::vector<Biquad>& sos, std::vector<double>& x,
                     const std::vector<std::pair<double, double>>& zi_base,
                     double x0) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    double s0 = zi_base[s].first * x0;
    double s1 = zi_base[s].second * x0;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + s0;
      s0 = q.b1 * in - q.a1 * out + s1;
      s1 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

std::int64_t filtfilt_padlen(const std::vector<Biquad>& sos) {
  std::int64_t b2z = 0, a2z = 0;
  for (const auto& q : sos) {
    if (q.b2 == 0.0) ++b2z;
    if (q.a2 == 0.0) ++a2z;
  }
  return 3 * (2 * static_cast<std::int64_t>(sos.size()) + 1 - std::min(b2z, a2z));
}

}  // namespace

std::vector<double> sosfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  if (x.empty()) return {};
  std::vector<double> y = x;
  sosfilt_inplace(sos, y, sos_step_state(sos), x[0]);
  return y;
}

std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos,
                                const std::vector<double>& x) {
  const auto n = static_cast<std::int64_t>(x.size());
  const auto pad = filtfilt_padlen(sos);
  if (n <= pad)
    throw NumericError("series too short for zero-phase filtering (" +
                       std::to_string(n) + " samples, need > " + std::to_string(pad) + ")");

  std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));
  for (std::int64_t i = 0; i < pad; ++i)
    ext[static_cast<std::size_t>(i)] = 2.0 * x[0] - x[static_cast<std::size_t>(pad - i)];
  std::copy(x.begin(), x.end(), ext.begin() + pad);
  for (std::int64_t j = 0; j < pad; ++j)
    ext[static_cast<std::size_t>(n + pad + j)] =
        2.0 * x[static_cast<std::size_t>(n - 1)] - x[static_cast<std::size_t>(n - 2 - j)];

  const auto zi = sos_step_state(sos);
  sosfilt_inplace(sos, ext, zi, ext.front());
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext, zi, ext.front());
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

HaemoSeries bandpass(HaemoSeries h, double lo_hz, double hi_hz, int order) {
  const auto sos = butter_bandpass(order, lo_hz, hi_hz, h.sfreq);
  std::vector<double> col(static_cast<std::size_t>(h.haemo.rows));
  for (std::int64_t c = 0; c < h.haemo.cols; ++c) {
    for (std::int64_t t = 0; t < h.haemo.rows; ++t) col[static_cast<std::size_t>(t)] = h.haemo.at(t, c);
    const auto y = sosfiltfilt(sos, col);
    for (std::int64_t t = 0; t < h.haemo.rows; ++t) h.haemo.at(t, c) = y[static_cast<std::size_t>(t)];
  }
  h.provenance.push_back({"bandpass",
                          {{"design", "butterworth"},
                           {"phase", "zero"},
                           {"order", std::to_string(order)},
                           {"lo_hz", fmt(lo_hz)},
                           {"hi_hz", fmt(hi_hz)}}});
  return h;
}

std::vector<Trial> epoch_trials(const HaemoSeries& h,
                                const corpus::RunSchedule& schedule,
                                double delay_s, double window_s) {
  if (delay_s < 0.0) throw ConfigError("epoch_trials: delay must be non-negative");
  if (window_s <= 0.0) throw ConfigError("epoch_trials: window must be positive");
  const auto T = static_cast<std::int64_t>(std::ceil(window_s * h.sfreq - 1e-9));

  std::vector<Trial> out;
  int trial_index = 0;
  for (const auto& ev : schedule.events) {
    if (ev.kind != corpus::EventKind::imagine) continue;
    const int idx = trial_index++;
    const auto start = static_cast<std::int64_t>(
        std::ceil((ev.onset_s + delay_s) * h.sfreq - 1e-9));
    if (start < 0 || start + T > h.haemo.rows) {
      log::warn("epoch_trials: dropping trial " + std::to_string(idx) + " of run " +
                std::to_string(schedule.run_index) + ": epoch exceeds the recording");
      continue;
    }
    Trial tr;
    tr.run_index = schedule.run_index;
    tr.trial_index = idx;
    tr.topic = ev.topic;
    tr.keyword = ev.keyword;
    tr.onset_s = ev.onset_s;
    tr.window = Mat(T, h.haemo.cols);
    for (std::int64_t t = 0; t < T; ++t)
      std::copy(h.haemo.row(start + t), h.haemo.row(start + t) + h.haemo.cols,
                tr.window.row(t));
    out.push_back(std::move(tr));
  }
  return out;
}

void zscore_by_session(std::vector<Trial>& trials) {
  std::map<int, std::vector<std::size_t>> sessions;
  for (std::size_t i = 0; i < trials.size(); ++i)
    sessions[trials[i].run_index].push_back(i);
  for (const auto& [run, idx] : sessions)
    if (idx.size() < 2)
      throw DataError("zscore_by_session: session " + std::to_string(run) +
                      " has fewer than 2 trials");

  for (const auto& [run, idx] : sessions) {
    const auto cols = trials[idx[0]].window.cols;
    std::int64_t count = 0;
    std::vector<double> mean(static_cast<std::size_t>(cols), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(cols), 0.0);
    for (const auto i : idx) {
      const Mat& w = trials[i].window;
      if (w.cols != cols) throw NumericError("zscore_by_session: channel count mismatch");
      for (std::int64_t t = 0; t < w.rows; ++t)
        for (std::int64_t c = 0; c < cols; ++c) mean[static_cast<std::size_t>(c)] += w.at(t, c);
      count += w.rows;
    }
    for (auto& mval : mean) mval /= static_cast<double>(count);
    for (const auto i : idx) {
      const Mat& w = trials[i].window;
      for (std::int64_t t = 0; t < w.rows; ++t)
        for (std::int64_t c = 0; c < cols; ++c) {
          const double d = w.at(t, c) - mean[static_cast<std::size_t>(c)];
          sq[static_cast<std::size_t>(c)] += d * d;
        }
    }
    int floored = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      double sd = std::sqrt(sq[static_cast<std::size_t>(c)] / static_cast<double>(count));
      if (sd < 1e-8) {
        sd = 1e-8;
        ++floored;
      }
      sq[static_cast<std::size_t>(c)] = sd;
    }
    if (floored > 0)
      log::warn("zscore_by_session: session " + std::to_string(run) + " has " +
                std::to_string(floored) + " zero-variance channel(s); sd floored");
    for (const auto i : idx) {
      Mat& w = trials[i].window;
      for (std::int64_t t = 0; t < w.rows; ++t)
        for (std::int64_t c = 0; c < cols; ++c)
          w.at(t, c) = (w.at(t, c) - mean[static_cast<std::size_t>(c)]) / sq[static_cast<std::size_t>(c)];
    }
  }
}

HaemoSeries preprocess_run(const synth::RawRecording& raw, const synth::Montage& m,
                           const synth::ExtinctionTable& ext,
                           const PreprocOptions& opts) {
  auto od = detrend(to_optical_density(raw));
  auto shorts = select_short(od, m);
  auto longs = short_channel_regress(select_long(od, m), shorts);
  longs = motion_correct(std::move(longs), opts.motion_z);
  auto h = beer_lambert(longs, m, ext, opts.ppf);
  if (!opts.bandpass) return h;
  return bandpass(std::move(h), opts.bp_lo_hz, opts.bp_hi_hz, opts.bp_order);
}

void save_haemo(const std::filesystem::path& dir, const HaemoSeries& h) {
  std::filesystem::create_directories(dir);
  io::write_f32(dir / "haemo.f32", h.haemo);
  io::write_text(dir / "provenance.json", provenance_json(h.provenance));
}

HaemoSeries load_haemo(const std::filesystem::path& dir, double sfreq,
                       std::int64_t n_channels) {
  const auto path = dir / "haemo.f32";
  const auto bytes = static_cast<std::int64_t>(std::filesystem::file_size(path));
  if (n_channels < 1 || bytes % (4 * n_channels) != 0)
    throw DataError("haemo file size does not divide into " +
                    std::to_string(n_channels) + " channels: " + path.string());
  HaemoSeries h;
  h.sfreq = sfreq;
  h.haemo = io::read_f32(path, bytes / (4 * n_channels), n_channels);
  h.provenance = provenance_from_json(io::read_text(dir / "provenance.json"));
  return h;
}

}  // namespace nirstext::sigproc
