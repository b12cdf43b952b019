#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nirstext/corpus.hpp"
#include "nirstext/mat.hpp"
#include "nirstext/montage.hpp"
#include "nirstext/synth.hpp"

namespace nirstext::sigproc {

// One applied preprocessing step; the ordered list is the provenance record
// written next to every preprocessed run.
struct ProvStep {
  std::string name;
  std::map<std::string, std::string> params;

  bool operator==(const ProvStep&) const = default;
};

std::string provenance_json(const std::vector<ProvStep>& steps);
std::vector<ProvStep> provenance_from_json(const std::string& text);

struct ODSeries {
  Mat od;  // [samples x channels], natural-log optical density changes
  double sfreq = 0.0;
  std::vector<ProvStep> provenance;
};

struct HaemoSeries {
  Mat haemo;  // [samples x 2P]: HbO pairs 0..P-1 then HbR pairs, micromolar
  double sfreq = 0.0;
  std::vector<ProvStep> provenance;
};

// OD(t) = -ln(I(t) / mean(I)) per channel. Non-positive intensities abort
// with the channel and sample named.
ODSeries to_optical_density(const synth::RawRecording& raw);

// Removes the per-channel least-squares line. Needs >= 3 samples.
ODSeries detrend(ODSeries s);

// Column slices following the montage's fixed raw layout.
ODSeries select_long(const ODSeries& s, const synth::Montage& m);
ODSeries select_short(const ODSeries& s, const synth::Montage& m);

// Regresses the across-short-channel average (with intercept) out of every
// long channel; residuals are exactly uncorrelated with the regressor.
ODSeries short_channel_regress(ODSeries long_od, const ODSeries& short_od);

// Spike detection on the residual against a centered 5-sample rolling
// median, thresholded at z_thresh robust-z units of the channel's own
// residual scale; flagged samples are replaced by a natural cubic spline
// through the surviving ones. Smooth or spike-free series pass through
// bit-identically (locally monotone data has zero residual, and an exactly
// noiseless channel offers no scale to flag against), and the
// corrected-sample count lands in the provenance entry.
ODSeries motion_correct(ODSeries s, double z_thresh = 5.0);

// Inverts dOD(lambda) = [eps_HbO, eps_HbR](lambda) . [dHbO, dHbR] * d * ppf
// per channel pair. Input must be long-channel OD in montage order.
HaemoSeries beer_lambert(const ODSeries& od, const synth::Montage& m,
                         const synth::ExtinctionTable& ext, double ppf = 6.0);

// --- zero-phase Butterworth band-pass ---

struct Biquad {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;  // numerator
  double a1 = 0.0, a2 = 0.0;            // denominator (a0 == 1)
};

// Band-pass design via the analog prototype, lowpass-to-bandpass transform
// and bilinear mapping; `order` counts prototype poles, so the digital filter
// has 2*order poles in `order` sections.
std::vector<Biquad> butter_bandpass(int order, double lo_hz, double hi_hz,
                                    double sfreq);

// Single-pass magnitude response at f (one direction; filtfilt squares it).
double sos_gain_at(const std::vector<Biquad>& sos, double f_hz, double sfreq);

// Forward pass with steady-state initial conditions scaled to x[0].
std::vector<double> sosfilt(const std::vector<Biquad>& sos,
                            const std::vector<double>& x);
// Forward-backward pass with odd-reflection padding; the signal must be
// longer than 3 * (2 * sections + 1) samples.
std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos,
                                const std::vector<double>& x);

HaemoSeries bandpass(HaemoSeries h, double lo_hz = 0.01, double hi_hz = 0.7,
                     int order = 4);

// --- epochs ---

struct Trial {
  Mat window;  // [T x channels]
  int run_index = 0;
  int trial_index = 0;  // position among the run's imagine events
  std::string topic, keyword;
  double onset_s = 0.0;
};

// One [T x channels] segment per imagine event, T = ceil(window_s * sfreq),
// starting at the first sample at or after onset + delay. Epochs that would
// run past the end of the recording are dropped with a warning.
std::vector<Trial> epoch_trials(const HaemoSeries& h,
                                const corpus::RunSchedule& schedule,
                                double delay_s = 6.0, double window_s = 7.0);

// Standardizes each channel within each session (= run), pooling across all
// of the session's trial samples. Zero-variance channels get their sd floored
// at 1e-8 and a warning.
void zscore_by_session(std::vector<Trial>& trials);

// --- orchestration ---

struct PreprocOptions {
  double ppf = 6.0;
  double bp_lo_hz = 0.01;
  double bp_hi_hz = 0.7;
  int bp_order = 4;
  double motion_z = 5.0;
  // The GLM paths fit on the unfiltered series (their designs carry cosine
  // drifts instead, and OLS variance estimates stay calibrated when the
  // residual spectrum is not band-limited); everything else keeps the filter.
  bool bandpass = true;
};

// The full chain in fixed order: OD, detrend, short-channel regression,
// motion correction, Beer-Lambert, band-pass. Provenance records the order.
HaemoSeries preprocess_run(const synth::RawRecording& raw, const synth::Montage& m,
                           const synth::ExtinctionTable& ext,
                           const PreprocOptions& opts = {});

// haemo.f32 (float32 samples x channels) + provenance.json in `dir`.
void save_haemo(const std::filesystem::path& dir, const HaemoSeries& h);
HaemoSeries load_haemo(const std::filesystem::path& dir, double sfreq,
                       std::int64_t n_channels);

}  // namespace nirstext::sigproc
