#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nirstext/corpus.hpp"
#include "nirstext/mat.hpp"
#include "nirstext/montage.hpp"

namespace nirstext::synth {

// Double-gamma impulse response, parameterized by the mode of each gamma so
// that peak_delay_s is literally where the kernel peaks.
struct HrfParams {
  double peak_delay_s = 6.0;
  double under_delay_s = 16.0;
  double peak_disp_s = 1.0;
  double under_disp_s = 1.0;
  double undershoot_ratio = 1.0 / 6.0;
  double duration_s = 32.0;
  double true_onset_delay_s = 5.0;

  static HrfParams canonical() { return HrfParams{}; }
  // Rendering kernel for synthetic datasets: nearly-immediate response so
  // that the observable stimulus-to-response lag is dominated by
  // true_onset_delay_s, which the FIR delay estimator is meant to recover.
  static HrfParams fast_dataset() {
    HrfParams p;
    p.peak_delay_s = 0.5;
    p.under_delay_s = 2.0;
    p.peak_disp_s = 0.3;
    p.under_disp_s = 0.5;
    p.undershoot_ratio = 0.05;
    return p;
  }
};

// Unit-peak kernel sampled at t = 0, dt, ..., duration_s.
std::vector<double> canonical_hrf(double dt, const HrfParams& params);

struct NoiseConfig {
  double white_od_sd = 2e-3;
  double cardiac_hz = 1.0;
  double cardiac_amp = 8e-3;
  double resp_hz = 0.25;
  double resp_amp = 8e-3;
  double mayer_hz = 0.1;
  double mayer_amp = 4e-3;
  double drift_od_per_s = 1e-4;  // per-channel slope drawn U(-x, x)
  double spikes_per_min = 0.3;
  double spike_od = 0.15;
  // Global SNR knob multiplying every stochastic amplitude above; 0 gives a
  // noise-free rendering.
  double scale = 1.0;
};

// Fixed per participant: which long pairs respond at all, and how each
// responding pair loads on the sentence embedding.
struct SemanticMap {
  Mat loading;                       // [n_pairs x embed_dim], zero rows when inactive
  std::vector<std::uint8_t> active;  // per long pair
  double baseline_um = 1.0;          // uniform activation of active pairs per event
};

SemanticMap make_semantic_map(int n_pairs, int embed_dim, double active_frac,
                              double amp_um, double baseline_um,
                              std::uint64_t seed);

// sentence text -> [1 x embed_dim]
using Embedder = std::function<Mat(const std::string&)>;

struct RenderOptions {
  double sfreq = 5.9;
  double padding_s = 20.0;  // tail after the last event so late responses fit
  double ppf = 6.0;
  double hbr_ratio = 1.0 / 3.0;  // dHbR = -ratio * dHbO
};

struct RawRecording {
  Mat intensity;  // [samples x montage.n_cols()], column order per Montage
  double sfreq = 0.0;
};

// Ground-truth oxyhaemoglobin concentrations in micromolar, [samples x
// n_long_pairs]: per imagine event, a boxcar delayed by true_onset_delay_s
// and convolved with the (area-normalized) kernel, scaled per pair by
// baseline + loading * embedding.
Mat semantic_hbo(const corpus::RunSchedule& run,
                 const std::vector<corpus::Sentence>& sentences,
                 const Embedder& embed, const SemanticMap& semmap,
                 const HrfParams& hrf, std::int64_t n_samples, double sfreq);

// Full forward model for one run: semantic haemodynamics through the
// Beer-Lambert relation to optical density, plus shared-phase physiological
// sinusoids, per-channel drift, motion spikes and white noise, exponentiated
// into intensities. Short channels carry only the non-semantic components.
// `sentences` must hold exactly one entry per imagine event, in event order.
RawRecording render_run(const corpus::RunSchedule& run,
                        const std::vector<corpus::Sentence>& sentences,
                        const Embedder& embed, const SemanticMap& semmap,
                        const HrfParams& hrf, const NoiseConfig& noise,
                        const Montage& montage, const ExtinctionTable& ext,
                        const RenderOptions& opts, std::uint64_t seed);

std::int64_t run_sample_count(const corpus::RunSchedule& run,
                              const RenderOptions& opts);

}  // namespace nirstext::synth
