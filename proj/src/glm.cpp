#include "nirstext/glm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nirstext/errors.hpp"
#include "nirstext/fileio.hpp"
#include "nirstext/linalg.hpp"
#include "nirstext/log.hpp"
#include "nirstext/synth.hpp"

namespace nirstext::glm {

namespace {

constexpr double kPi = 3.141592653589793;

std::string fmt(double x) { return io::fmt_double(x); }

// Fraction of each output bin covered by events of the given kind.
std::vector<double> event_indicator(const corpus::RunSchedule& run,
                                    corpus::EventKind kind, double sfreq,
                                    std::int64_t n) {
  std::vector<double> ind(static_cast<std::size_t>(n), 0.0);
  const double bin = 1.0 / sfreq;
  for (const auto& ev : run.events) {
    if (ev.kind != kind) continue;
    const double end = ev.onset_s + ev.duration_s;
    auto first = static_cast<std::int64_t>(std::floor(ev.onset_s * sfreq));
    auto last = static_cast<std::int64_t>(std::ceil(end * sfreq));
    for (std::int64_t i = std::max<std::int64_t>(first, 0);
         i < std::min(last, n); ++i) {
      const double lo = std::max(ev.onset_s, static_cast<double>(i) * bin);
      const double hi = std::min(end, static_cast<double>(i + 1) * bin);
      if (hi > lo) ind[static_cast<std::size_t>(i)] += (hi - lo) * sfreq;
    }
  }
  return ind;
}

// DCT-II basis functions 1..count, the standard cosine drift set.
void append_drifts(Mat& cols, std::vector<std::string>& names,
                   std::int64_t col0, int count) {
  const auto n = cols.rows;
  for (int j = 1; j <= count; ++j) {
    const double scale = std::sqrt(2.0 / static_cast<double>(n));
    for (std::int64_t t = 0; t < n; ++t)
      cols.at(t, col0 + j - 1) =
          scale * std::cos(kPi * static_cast<double>(j) *
                           (2.0 * static_cast<double>(t) + 1.0) /
                           (2.0 * static_cast<double>(n)));
    names.push_back("drift_" + std::to_string(j));
  }
}

int drift_count(std::int64_t n, double sfreq, double hp_hz) {
  const double dur = static_cast<double>(n) / sfreq;
  return static_cast<int>(std::floor(2.0 * dur * hp_hz + 1e-12));
}

void check_common(double sfreq, std::int64_t n_samples, double hp_hz,
                  const std::vector<double>& nuisance) {
  if (sfreq <= 0.0) throw ConfigError("design sfreq must be positive");
  if (n_samples < 1) throw DataError("design needs at least one sample");
  if (hp_hz < 0.0) throw ConfigError("drift cutoff must be non-negative");
  if (!nuisance.empty() &&
      nuisance.size() != static_cast<std::size_t>(n_samples))
    throw DataError("nuisance series length does not match the design");
}

void finish_design(DesignMatrix& d) {
  for (std::size_t i = 0; i < d.names.size(); ++i)
    for (std::size_t j = i + 1; j < d.names.size(); ++j)
      if (d.names[i] == d.names[j])
        throw DataError("duplicate design column name " + d.names[i]);
  Mat xtx = linalg::matmul_tn(d.x, d.x);
  try {
    linalg::cholesky_inplace(xtx);
  } catch (const NumericError&) {
    throw NumericError("rank-deficient design matrix");
  }
}

struct DelayColumns {
  int n_delays = 0;
  // [cond][delay-1] -> column index; cond 0 = wordcloud, 1 = rest
  std::array<std::vector<std::int64_t>, 2> cols;
};

DelayColumns locate_delay_columns(const std::vector<std::string>& names) {
  DelayColumns out;
  std::array<std::vector<std::pair<int, std::int64_t>>, 2> found;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(names.size()); ++i) {
    const auto& name = names[static_cast<std::size_t>(i)];
    for (int cond = 0; cond < 2; ++cond) {
      const std::string prefix = cond == 0 ? "wordcloud_d" : "rest_d";
      if (name.rfind(prefix, 0) != 0) continue;
      const std::string tail = name.substr(prefix.size());
      if (tail.empty() ||
          tail.find_first_not_of("0123456789") != std::string::npos)
        continue;
      found[static_cast<std::size_t>(cond)].emplace_back(std::stoi(tail), i);
      out.n_delays = std::max(out.n_delays, std::stoi(tail));
    }
  }
  if (out.n_delays == 0)
    throw DataError("fit carries no FIR delay columns");
  for (int cond = 0; cond < 2; ++cond) {
    auto& v = found[static_cast<std::size_t>(cond)];
    std::sort(v.begin(), v.end());
    if (static_cast<int>(v.size()) != out.n_delays)
      throw DataError("fit is missing FIR delay columns");
    auto& cols = out.cols[static_cast<std::size_t>(cond)];
    for (int k = 0; k < out.n_delays; ++k) {
      if (v[static_cast<std::size_t>(k)].first != k + 1)
        throw DataError("fit is missing FIR delay columns");
      cols.push_back(v[static_cast<std::size_t>(k)].second);
    }
  }
  return out;
}

}  // namespace

std::int64_t DesignMatrix::col(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<std::int64_t>(i);
  throw DataError("no design column named " + std::string(name));
}

std::vector<double> resample_bins(const std::vector<double>& v, double sfreq,
                                  double target_hz) {
  if (sfreq <= 0.0 || target_hz <= 0.0)
    throw ConfigError("resample rates must be positive");
  if (target_hz > sfreq)
    throw ConfigError("resample target above the native rate");
  const auto n = static_cast<std::int64_t>(v.size());
  const auto n_out = static_cast<std::int64_t>(
      std::floor(static_cast<double>(n) / sfreq * target_hz + 1e-9));
  if (n_out < 1) throw DataError("series too short to resample");
  std::vector<double> sum(static_cast<std::size_t>(n_out), 0.0);
  std::vector<std::int64_t> count(static_cast<std::size_t>(n_out), 0);
  for (std::int64_t t = 0; t < n; ++t) {
    const auto b = static_cast<std::int64_t>(
        std::floor(static_cast<double>(t) / sfreq * target_hz));
    if (b >= n_out) break;
    sum[static_cast<std::size_t>(b)] += v[static_cast<std::size_t>(t)];
    ++count[static_cast<std::size_t>(b)];
  }
  for (std::int64_t b = 0; b < n_out; ++b)
    sum[static_cast<std::size_t>(b)] /=
        static_cast<double>(count[static_cast<std::size_t>(b)]);
  return sum;
}

sigproc::HaemoSeries resample_bins(const sigproc::HaemoSeries& h,
                                   double target_hz) {
  std::vector<double> chan(static_cast<std::size_t>(h.haemo.rows));
  sigproc::HaemoSeries out;
  out.sfreq = target_hz;
  out.provenance = h.provenance;
  out.provenance.push_back({"resample", {{"target_hz", fmt(target_hz)}}});
  for (std::int64_t c = 0; c < h.haemo.cols; ++c) {
    for (std::int64_t t = 0; t < h.haemo.rows; ++t)
      chan[static_cast<std::size_t>(t)] = h.haemo.at(t, c);
    const auto binned = resample_bins(chan, h.sfreq, target_hz);
    if (c == 0)
      out.haemo = Mat(static_cast<std::int64_t>(binned.size()), h.haemo.cols);
    for (std::int64_t t = 0; t < out.haemo.rows; ++t)
      out.haemo.at(t, c) = binned[static_cast<std::size_t>(t)];
  }
  return out;
}

DesignMatrix fir_design(const corpus::RunSchedule& run, double sfreq,
                        std::int64_t n_samples, int n_delays,
                        double hp_cutoff_hz,
                        const std::vector<double>& nuisance) {
  check_common(sfreq, n_samples, hp_cutoff_hz, nuisance);
  if (n_delays < 1) throw ConfigError("n_delays must be at least 1");

  const int n_drift = drift_count(n_samples, sfreq, hp_cutoff_hz);
  DesignMatrix d;
  d.sfreq = sfreq;
  const std::int64_t total = 2 * n_delays + n_drift +
                             (nuisance.empty() ? 0 : 1) + 1;
  d.x = Mat(n_samples, total);
  std::int64_t col = 0;
  for (int cond = 0; cond < 2; ++cond) {
    const auto kind =
        cond == 0 ? corpus::EventKind::imagine : corpus::EventKind::rest;
    const auto ind = event_indicator(run, kind, sfreq, n_samples);
    for (int k = 1; k <= n_delays; ++k) {
      for (std::int64_t t = k; t < n_samples; ++t)
        d.x.at(t, col) = ind[static_cast<std::size_t>(t - k)];
      d.names.push_back((cond == 0 ? "wordcloud_d" : "rest_d") +
                        std::to_string(k));
      ++col;
    }
  }
  append_drifts(d.x, d.names, col, n_drift);
  col += n_drift;
  if (!nuisance.empty()) {
    for (std::int64_t t = 0; t < n_samples; ++t)
      d.x.at(t, col) = nuisance[static_cast<std::size_t>(t)];
    d.names.push_back("short");
    ++col;
  }
  for (std::int64_t t = 0; t < n_samples; ++t) d.x.at(t, col) = 1.0;
  d.names.push_back("intercept");
  finish_design(d);
  return d;
}

DesignMatrix hrf_design(const corpus::RunSchedule& run, double sfreq,
                        std::int64_t n_samples, double hp_cutoff_hz,
                        const std::vector<double>& nuisance) {
  check_common(sfreq, n_samples, hp_cutoff_hz, nuisance);

  const auto kern =
      synth::canonical_hrf(1.0 / sfreq, synth::HrfParams::canonical());
  const int n_drift = drift_count(n_samples, sfreq, hp_cutoff_hz);
  DesignMatrix d;
  d.sfreq = sfreq;
  const std::int64_t total = 2 + n_drift + (nuisance.empty() ? 0 : 1) + 1;
  d.x = Mat(n_samples, total);
  std::int64_t col = 0;
  for (int cond = 0; cond < 2; ++cond) {
    const auto kind =
        cond == 0 ? corpus::EventKind::imagine : corpus::EventKind::rest;
    const auto ind = event_indicator(run, kind, sfreq, n_samples);
    for (std::int64_t t = 0; t < n_samples; ++t) {
      double acc = 0.0;
      const auto j0 = std::max<std::int64_t>(
          0, t - static_cast<std::int64_t>(kern.size()) + 1);
      for (std::int64_t j = j0; j <= t; ++j)
        acc += ind[static_cast<std::size_t>(j)] *
               kern[static_cast<std::size_t>(t - j)];
      d.x.at(t, col) = acc;
    }
    d.names.push_back(cond == 0 ? "wordcloud" : "rest");
    ++col;
  }
  append_drifts(d.x, d.names, col, n_drift);
  col += n_drift;
  if (!nuisance.empty()) {
    for (std::int64_t t = 0; t < n_samples; ++t)
      d.x.at(t, col) = nuisance[static_cast<std::size_t>(t)];
    d.names.push_back("short");
    ++col;
  }
  for (std::int64_t t = 0; t < n_samples; ++t) d.x.at(t, col) = 1.0;
  d.names.push_back("intercept");
  finish_design(d);
  return d;
}

GlmFit fit_ols(const DesignMatrix& design, const sigproc::HaemoSeries& y) {
  if (design.x.rows != y.haemo.rows)
    throw DataError("design rows do not match the series");
  const auto n = design.x.rows;
  const auto p = design.x.cols;
  if (n <= p) throw DataError("design leaves no residual degrees of freedom");

  auto fit = linalg::ols(design.x, y.haemo);
  const Mat pred = linalg::matmul(design.x, fit.beta);
  GlmFit out;
  out.names = design.names;
  out.beta = std::move(fit.beta);
  out.xtx_inv = std::move(fit.xtx_inv);
  out.dof = n - p;
  out.sigma2.assign(static_cast<std::size_t>(y.haemo.cols), 0.0);
  for (std::int64_t c = 0; c < y.haemo.cols; ++c) {
    double rss = 0.0;
    for (std::int64_t t = 0; t < n; ++t) {
      const double r = y.haemo.at(t, c) - pred.at(t, c);
      rss += r * r;
    }
    out.sigma2[static_cast<std::size_t>(c)] =
        rss / static_cast<double>(out.dof);
  }
  return out;
}

DelayTable aggregate_delays(const std::vector<GlmFit>& fits,
                            std::int64_t n_long_pairs) {
  if (fits.size() < 2)
    throw DataError("delay aggregation needs at least two runs");
  if (n_long_pairs < 1) throw DataError("no long pairs to aggregate");
  const auto& first = fits.front();
  for (const auto& f : fits) {
    if (f.names != first.names)
      throw DataError("inconsistent designs across runs");
    if (f.beta.cols != 2 * n_long_pairs ||
        f.sigma2.size() != static_cast<std::size_t>(2 * n_long_pairs))
      throw DataError("fit channel count does not match the montage");
  }
  const auto delay_cols = locate_delay_columns(first.names);

  DelayTable table;
  table.n_delays = delay_cols.n_delays;
  std::vector<double> xs, ws;
  for (int cond = 0; cond < 2; ++cond) {
    for (int chromo = 0; chromo < 2; ++chromo) {
      auto& row = table.cells[static_cast<std::size_t>(cond)]
                             [static_cast<std::size_t>(chromo)];
      row.resize(static_cast<std::size_t>(table.n_delays));
      for (int k = 0; k < table.n_delays; ++k) {
        const auto col = delay_cols.cols[static_cast<std::size_t>(cond)]
                                        [static_cast<std::size_t>(k)];
        xs.clear();
        ws.clear();
        for (const auto& f : fits) {
          // Channels average with equal votes: responding channels carry
          // larger residuals (FIR misfit of the true response), so weighting
          // them by precision would hand the cell to the silent ones.
          double value = 0.0, var = 0.0;
          for (std::int64_t pair = 0; pair < n_long_pairs; ++pair) {
            const auto c = chromo == 0 ? pair : n_long_pairs + pair;
            value += f.beta.at(col, c);
            var += f.sigma2[static_cast<std::size_t>(c)];
          }
          const auto nc = static_cast<double>(n_long_pairs);
          value /= nc;
          var *= f.xtx_inv.at(col, col) / (nc * nc);
          // Exact fits have zero residual variance; a tiny floor keeps
          // their (equal) run weights finite instead of collapsing to inf.
          xs.push_back(value);
          ws.push_back(1.0 / std::max(var, 1e-30));
        }
        double wsum = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
          wsum += ws[i];
          mean += ws[i] * xs[i];
        }
        mean /= wsum;
        double dev = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i)
          dev += ws[i] * (xs[i] - mean) * (xs[i] - mean);
        auto& cell = row[static_cast<std::size_t>(k)];
        cell.mean = mean;
        cell.se = xs.size() > 1 ? std::sqrt(dev / wsum /
                                            static_cast<double>(xs.size() - 1))
                                : 0.0;
      }
    }
  }
  return table;
}

double pick_delay(const DelayTable& table) {
  const auto& row =
      table.cells[DelayTable::kWordcloud][DelayTable::kHbo];
  if (row.empty()) throw DataError("delay table has no word-cloud HbO cells");
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k].mean > row[best].mean) best = k;
  for (std::size_t k = best + 1; k < row.size(); ++k)
    if (row[k].mean == row[best].mean)
      log::warn("delay argmax tie between " +
                fmt(table.bin_s * static_cast<double>(best + 1)) + " s and " +
                fmt(table.bin_s * static_cast<double>(k + 1)) +
                " s; keeping the smaller");
  return table.bin_s * static_cast<double>(best + 1);
}

std::string delay_report_json(const DelayTable& table,
                              const std::string& participant,
                              double chosen_delay_s) {
  nlohmann::ordered_json root;
  root["participant"] = participant;
  auto delays = nlohmann::ordered_json::array();
  for (int k = 1; k <= table.n_delays; ++k)
    delays.push_back(table.bin_s * k);
  root["delays_s"] = delays;
  nlohmann::ordered_json coef = nlohmann::ordered_json::object();
  const char* conds[2] = {"wordcloud", "rest"};
  const char* chromos[2] = {"hbo", "hbr"};
  for (int cond = 0; cond < 2; ++cond) {
    nlohmann::ordered_json by_chromo = nlohmann::ordered_json::object();
    for (int chromo = 0; chromo < 2; ++chromo) {
      auto cells = nlohmann::ordered_json::array();
      for (int k = 1; k <= table.n_delays; ++k) {
        const auto& cell = table.at(cond, chromo, k);
        cells.push_back(nlohmann::ordered_json{{"mean", cell.mean},
                                               {"se", cell.se}});
      }
      by_chromo[chromos[chromo]] = cells;
    }
    coef[conds[cond]] = by_chromo;
  }
  root["coefficients"] = coef;
  root["chosen_delay_s"] = chosen_delay_s;
  return root.dump(2) + "\n";
}

std::vector<double> contrast_z(const GlmFit& fit, std::string_view plus,
                               std::string_view minus) {
  auto find = [&](std::string_view name) {
    for (std::size_t i = 0; i < fit.names.size(); ++i)
      if (fit.names[i] == name) return static_cast<std::int64_t>(i);
    throw DataError("no design column named " + std::string(name));
  };
  const auto a = find(plus);
  const auto b = find(minus);
  const double quad = fit.xtx_inv.at(a, a) - 2.0 * fit.xtx_inv.at(a, b) +
                      fit.xtx_inv.at(b, b);
  std::vector<double> z(fit.sigma2.size(), 0.0);
  for (std::size_t c = 0; c < fit.sigma2.size(); ++c) {
    const double var = fit.sigma2[c] * quad;
    const double num = fit.beta.at(a, static_cast<std::int64_t>(c)) -
                       fit.beta.at(b, static_cast<std::int64_t>(c));
    z[c] = var > 0.0 ? num / std::sqrt(var) : 0.0;
  }
  return z;
}

std::vector<double> contrast_z(const sigproc::HaemoSeries& haemo,
                               const corpus::RunSchedule& run,
                               const synth::Montage& montage,
                               const std::vector<double>& nuisance) {
  if (haemo.haemo.cols != 2 * montage.n_long_pairs)
    throw DataError("series channel count does not match the montage");
  const auto design =
      hrf_design(run, haemo.sfreq, haemo.haemo.rows, 0.005, nuisance);
  return contrast_z(fit_ols(design, haemo), "wordcloud", "rest");
}

std::string contrast_csv(const std::vector<double>& z,
                         std::int64_t n_long_pairs) {
  if (static_cast<std::int64_t>(z.size()) != 2 * n_long_pairs)
    throw DataError("z count does not match the montage");
  std::string out = "channel,z\n";
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(z.size()); ++c) {
    const bool hbo = c < n_long_pairs;
    out += (hbo ? "hbo_" : "hbr_") +
           std::to_string(hbo ? c : c - n_long_pairs) + "," +
           fmt(z[static_cast<std::size_t>(c)]) + "\n";
  }
  return out;
}

}  // namespace nirstext::glm
