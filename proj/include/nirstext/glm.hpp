#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nirstext/corpus.hpp"
#include "nirstext/mat.hpp"
#include "nirstext/montage.hpp"
#include "nirstext/sigproc.hpp"

namespace nirstext::glm {

// Named, full-column-rank regressor matrix. Builders check the rank at
// construction time (NumericError on deficiency) so a fit never sees a
// singular normal system.
struct DesignMatrix {
  Mat x;                           // [samples x regressors]
  std::vector<std::string> names;  // unique, one per column
  double sfreq = 0.0;

  std::int64_t col(std::string_view name) const;  // DataError when absent
};

// Per-run OLS result across every channel of a series. The coefficient
// covariance of channel c is sigma2[c] * xtx_inv.
struct GlmFit {
  std::vector<std::string> names;
  Mat beta;                    // [regressors x channels]
  std::vector<double> sigma2;  // residual variance per channel, RSS / dof
  Mat xtx_inv;                 // [regressors x regressors]
  std::int64_t dof = 0;        // samples - regressors, > 0
};

// Bin-mean downsampling: output bin i averages the samples whose start time
// falls in [i, i+1) / target_hz; a trailing partial bin is dropped. This is
// the "no oversampling" resampling the delay estimation runs at (0.5 Hz).
sigproc::HaemoSeries resample_bins(const sigproc::HaemoSeries& h, double target_hz);
std::vector<double> resample_bins(const std::vector<double>& v, double sfreq,
                                  double target_hz);

// FIR delay design at the resampled rate: for each condition (word cloud,
// rest) and delay k in 1..n_delays, the fractional-coverage event indicator
// shifted k bins, plus cosine drifts up to hp_cutoff_hz, the averaged
// short-channel nuisance (omitted when empty) and an intercept. Bin width is
// 1 / sfreq, i.e. 2 s at 0.5 Hz, so column "wordcloud_d3" carries response
// lagging the stimulus by 4-6 s.
DesignMatrix fir_design(const corpus::RunSchedule& run, double sfreq,
                        std::int64_t n_samples, int n_delays = 5,
                        double hp_cutoff_hz = 0.01,
                        const std::vector<double>& nuisance = {});

// Canonical-HRF design at the native rate: per-condition event boxcars
// convolved with the unit-peak double-gamma kernel, cosine drifts, optional
// short-channel nuisance, intercept.
DesignMatrix hrf_design(const corpus::RunSchedule& run, double sfreq,
                        std::int64_t n_samples, double hp_cutoff_hz = 0.005,
                        const std::vector<double>& nuisance = {});

// Per-channel beta = (X^T X)^{-1} X^T y via the shared Cholesky factor.
GlmFit fit_ols(const DesignMatrix& design, const sigproc::HaemoSeries& y);

struct DelayCell {
  double mean = 0.0;
  double se = 0.0;
};

// mean +- SE per (condition, chromophore, delay), pooled over runs and
// channels with inverse-variance weights.
struct DelayTable {
  static constexpr int kWordcloud = 0, kRest = 1;
  static constexpr int kHbo = 0, kHbr = 1;

  int n_delays = 0;
  double bin_s = 2.0;
  std::array<std::array<std::vector<DelayCell>, 2>, 2> cells;  // [cond][chromo]

  const DelayCell& at(int cond, int chromo, int delay_1based) const {
    return cells[cond][chromo][static_cast<std::size_t>(delay_1based - 1)];
  }
};

// Pools >= 2 per-run FIR fits (identical designs required) into the delay
// table. Channels [0, P) of each fit are HbO, [P, 2P) HbR.
DelayTable aggregate_delays(const std::vector<GlmFit>& fits,
                            std::int64_t n_long_pairs);

// Upper edge of the winning HbO word-cloud bin: bin_s * argmax index
// (1-based), so a peak at the third delay gives 6 s. Ties keep the smaller
// delay and log a warning.
double pick_delay(const DelayTable& table);

// {participant, delays_s, coefficients by condition/chromophore, chosen_delay_s}
std::string delay_report_json(const DelayTable& table,
                              const std::string& participant,
                              double chosen_delay_s);

// z = c^T beta / sqrt(c^T Cov c) per channel for c = e_plus - e_minus.
// Channels whose contrast variance vanishes (exact fits) report 0.
std::vector<double> contrast_z(const GlmFit& fit, std::string_view plus,
                               std::string_view minus);

// Word cloud > rest on a preprocessed run: canonical-HRF design at the native
// rate with event-length boxcars, 0.005 Hz drifts and the given nuisance.
std::vector<double> contrast_z(const sigproc::HaemoSeries& haemo,
                               const corpus::RunSchedule& run,
                               const synth::Montage& montage,
                               const std::vector<double>& nuisance = {});

// channel,z rows named hbo_<pair> / hbr_<pair>.
std::string contrast_csv(const std::vector<double>& z, std::int64_t n_long_pairs);

}  // namespace nirstext::glm
