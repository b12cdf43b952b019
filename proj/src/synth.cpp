#include "nirstext/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "nirstext/errors.hpp"
#include "nirstext/kernels.hpp"
#include "nirstext/linalg.hpp"
#include "nirstext/rng.hpp"

namespace nirstext::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kSpikeTauS = 0.3;

// Gamma density with the mode pinned at `mode_s`: shape 1 + mode/disp,
// scale disp. Zero at t = 0 for any positive mode.
double gamma_by_mode(double t, double mode_s, double disp_s) {
  if (t <= 0.0) return 0.0;
  double k = 1.0 + mode_s / disp_s;
  double log_pdf = (k - 1.0) * std::log(t) - t / disp_s -
                   std::lgamma(k) - k * std::log(disp_s);
  return std::exp(log_pdf);
}

// Fraction of the sample bin [n*dt, (n+1)*dt) covered by [on, off).
double bin_coverage(std::int64_t n, double dt, double on, double off) {
  double lo = static_cast<double>(n) * dt;
  double hi = lo + dt;
  double ov = std::min(hi, off) - std::max(lo, on);
  return ov > 0.0 ? ov / dt : 0.0;
}

}  // namespace

std::vector<double> canonical_hrf(double dt, const HrfParams& p) {
  if (dt <= 0.0) throw ConfigError("canonical_hrf: dt must be positive");
  if (p.duration_s < 30.0)
    throw ConfigError("canonical_hrf: duration must cover the undershoot (>= 30 s)");
  if (p.peak_disp_s <= 0.0 || p.under_disp_s <= 0.0 || p.peak_delay_s <= 0.0 ||
      p.under_delay_s <= 0.0)
    throw ConfigError("canonical_hrf: delays and dispersions must be positive");

  auto n = static_cast<std::size_t>(std::floor(p.duration_s / dt)) + 1;
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) * dt;
    h[i] = gamma_by_mode(t, p.peak_delay_s, p.peak_disp_s) -
           p.undershoot_ratio * gamma_by_mode(t, p.under_delay_s, p.under_disp_s);
  }
  double peak = *std::max_element(h.begin(), h.end());
  if (!(peak > 0.0)) throw NumericError("canonical_hrf: non-positive peak");
  for (double& x : h) x /= peak;
  return h;
}

SemanticMap make_semantic_map(int n_pairs, int embed_dim, double active_frac,
                              double amp_um, double baseline_um,
                              std::uint64_t seed) {
  if (n_pairs <= 0 || embed_dim <= 0)
    throw ConfigError("make_semantic_map: n_pairs and embed_dim must be positive");
  if (active_frac <= 0.0 || active_frac > 1.0)
    throw ConfigError("make_semantic_map: active_frac must lie in (0, 1]");
  if (amp_um < 0.0 || baseline_um < 0.0)
    throw ConfigError("make_semantic_map: amplitudes must be non-negative");

  int n_active = static_cast<int>(std::llround(active_frac * n_pairs));
  n_active = std::clamp(n_active, 1, n_pairs);
  if (n_active < embed_dim)
    throw ConfigError("make_semantic_map: " + std::to_string(n_active) +
                      " active pairs cannot span a " + std::to_string(embed_dim) +
                      "-dimensional embedding");

  std::vector<int> order(static_cast<std::size_t>(n_pairs));
  std::iota(order.begin(), order.end(), 0);
  Rng pick(derive_seed(seed, "semmap.active"));
  pick.shuffle(order);

  SemanticMap m;
  m.loading = Mat(n_pairs, embed_dim);
  m.active.assign(static_cast<std::size_t>(n_pairs), 0);
  m.baseline_um = baseline_um;
  for (int i = 0; i < n_active; ++i) m.active[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  Rng load(derive_seed(seed, "semmap.loading"));
  double sd = amp_um / std::sqrt(static_cast<double>(embed_dim));
  for (int p = 0; p < n_pairs; ++p) {
    if (!m.active[static_cast<std::size_t>(p)]) continue;
    double* row = m.loading.row(p);
    for (int j = 0; j < embed_dim; ++j) row[j] = load.normal(0.0, sd);
  }

  // The decoding side solves loading * e = response; that needs the active
  // rows to span the embedding space.
  Mat gram = linalg::matmul_tn(m.loading, m.loading);
  try {
    linalg::cholesky_inplace(gram);
  } catch (const NumericError&) {
    throw NumericError("make_semantic_map: loading matrix is rank-deficient");
  }
  return m;
}

std::int64_t run_sample_count(const corpus::RunSchedule& run,
                              const RenderOptions& opts) {
  double span = run.duration_s + opts.padding_s;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(span * opts.sfreq)));
}

Mat semantic_hbo(const corpus::RunSchedule& run,
                 const std::vector<corpus::Sentence>& sentences,
                 const Embedder& embed, const SemanticMap& semmap,
                 const HrfParams& hrf, std::int64_t n_samples, double sfreq) {
  if (sfreq <= 0.0) throw ConfigError("semantic_hbo: sfreq must be positive");
  double dt = 1.0 / sfreq;
  std::vector<double> kern = canonical_hrf(dt, hrf);
  double area = std::accumulate(kern.begin(), kern.end(), 0.0);
  if (!(area > 0.0)) throw NumericError("semantic_hbo: kernel area must be positive");
  // Unit-area kernel so a sustained event settles at its amplitude in uM.
  for (double& x : kern) x /= area;

  std::vector<const corpus::Event*> imagines;
  for (const auto& ev : run.events)
    if (ev.kind == corpus::EventKind::imagine) imagines.push_back(&ev);
  if (imagines.size() != sentences.size())
    throw DataError("semantic_hbo: run " + std::to_string(run.run_index) + " has " +
                    std::to_string(imagines.size()) + " imagine events but " +
                    std::to_string(sentences.size()) + " sentences");

  auto n_pairs = semmap.loading.rows;
  auto embed_dim = semmap.loading.cols;
  Mat hbo(n_samples, n_pairs);
  std::vector<double> amp(static_cast<std::size_t>(n_pairs));
  std::vector<double> u(static_cast<std::size_t>(n_samples));

  for (std::size_t i = 0; i < imagines.size(); ++i) {
    const corpus::Event& ev = *imagines[i];
    const corpus::Sentence& sent = sentences[i];
    if (static_cast<std::size_t>(sent.trial_index) != i)
      throw DataError("semantic_hbo: sentence order mismatch at trial " +
                      std::to_string(i));
    if (sent.text.empty())
      throw DataError("semantic_hbo: empty sentence at trial " + std::to_string(i));

    Mat e = embed(sent.text);
    if (e.rows != 1 || e.cols != embed_dim)
      throw NumericError("semantic_hbo: embedding shape mismatch");
    for (std::int64_t p = 0; p < n_pairs; ++p) {
      amp[static_cast<std::size_t>(p)] =
          semmap.active[static_cast<std::size_t>(p)]
              ? semmap.baseline_um + kernels::dot(semmap.loading.row(p), e.row(0),
                                                  static_cast<std::size_t>(embed_dim))
              : 0.0;
    }

    double on = ev.onset_s + hrf.true_onset_delay_s;
    double off = on + ev.duration_s;
    auto b0 = static_cast<std::int64_t>(std::floor(on / dt));
    auto b1 = std::min<std::int64_t>(n_samples, static_cast<std::int64_t>(std::ceil(off / dt)));
    b0 = std::max<std::int64_t>(0, b0);

    std::fill(u.begin(), u.end(), 0.0);
    for (std::int64_t b = b0; b < b1; ++b) {
      double w = bin_coverage(b, dt, on, off);
      if (w <= 0.0) continue;
      auto kmax = std::min<std::int64_t>(static_cast<std::int64_t>(kern.size()), n_samples - b);
      for (std::int64_t k = 0; k < kmax; ++k) u[static_cast<std::size_t>(b + k)] += w * kern[static_cast<std::size_t>(k)];
    }
    for (std::int64_t n = 0; n < n_samples; ++n) {
      double un = u[static_cast<std::size_t>(n)];
      if (un != 0.0)
        kernels::axpy(un, amp.data(), hbo.row(n), static_cast<std::size_t>(n_pairs));
    }
  }
  return hbo;
}

RawRecording render_run(const corpus::RunSchedule& run,
                        const std::vector<corpus::Sentence>& sentences,
                        const Embedder& embed, const SemanticMap& semmap,
                        const HrfParams& hrf, const NoiseConfig& noise,
                        const Montage& montage, const ExtinctionTable& ext,
                        const RenderOptions& opts, std::uint64_t seed) {
  if (opts.sfreq <= 0.0) throw ConfigError("render_run: sfreq must be positive");
  if (opts.ppf <= 0.0) throw ConfigError("render_run: ppf must be positive");
  if (opts.padding_s < 0.0) throw ConfigError("render_run: padding must be non-negative");
  if (montage.n_long_pairs != semmap.loading.rows)
    throw DataError("render_run: montage has " + std::to_string(montage.n_long_pairs) +
                    " long pairs but the semantic map covers " +
                    std::to_string(semmap.loading.rows));

  auto n = run_sample_count(run, opts);
  auto n_cols = montage.n_cols();
  double dt = 1.0 / opts.sfreq;

  Mat od(n, n_cols);

  // Haemodynamics into the long channels. dHbR is a fixed negative fraction
  // of dHbO, so each wavelength reduces to one scalar factor per pair.
  Mat hbo = semantic_hbo(run, sentences, embed, semmap, hrf, n, opts.sfreq);
  for (std::int64_t p = 0; p < montage.n_long_pairs; ++p) {
    double d_mm = montage.long_distance(p);
    for (int w = 0; w < 2; ++w) {
      double factor = (ext.hbo[w] - opts.hbr_ratio * ext.hbr[w]) * d_mm * opts.ppf;
      auto col = montage.long_col(p, w);
      for (std::int64_t t = 0; t < n; ++t) od.at(t, col) += factor * hbo.at(t, p);
    }
  }

  // Physiology: one phase per rhythm per run, channel-specific amplitude.
  Rng phase_rng(derive_seed(seed, "physio"));
  double ph_card = phase_rng.uniform(0.0, kTwoPi);
  double ph_resp = phase_rng.uniform(0.0, kTwoPi);
  double ph_mayer = phase_rng.uniform(0.0, kTwoPi);

  Rng gain_rng(derive_seed(seed, "gains"));
  std::vector<double> amp_card(static_cast<std::size_t>(n_cols));
  std::vector<double> amp_resp(static_cast<std::size_t>(n_cols));
  std::vector<double> amp_mayer(static_cast<std::size_t>(n_cols));
  for (std::int64_t c = 0; c < n_cols; ++c) {
    double base = gain_rng.uniform(0.6, 1.4);
    amp_card[static_cast<std::size_t>(c)] = noise.cardiac_amp * noise.scale * base * gain_rng.uniform(0.9, 1.1);
    amp_resp[static_cast<std::size_t>(c)] = noise.resp_amp * noise.scale * base * gain_rng.uniform(0.9, 1.1);
    amp_mayer[static_cast<std::size_t>(c)] = noise.mayer_amp * noise.scale * base * gain_rng.uniform(0.9, 1.1);
  }

  Rng drift_rng(derive_seed(seed, "drift"));
  std::vector<double> slope(static_cast<std::size_t>(n_cols));
  for (auto& s : slope)
    s = drift_rng.uniform(-noise.drift_od_per_s, noise.drift_od_per_s) * noise.scale;

  for (std::int64_t t = 0; t < n; ++t) {
    double ts = static_cast<double>(t) * dt;
    double card = std::sin(kTwoPi * noise.cardiac_hz * ts + ph_card);
    double resp = std::sin(kTwoPi * noise.resp_hz * ts + ph_resp);
    double mayer = std::sin(kTwoPi * noise.mayer_hz * ts + ph_mayer);
    double* row = od.row(t);
    for (std::int64_t c = 0; c < n_cols; ++c) {
      auto ci = static_cast<std::size_t>(c);
      row[c] += amp_card[ci] * card + amp_resp[ci] * resp + amp_mayer[ci] * mayer +
                slope[ci] * ts;
    }
  }

  // Motion spikes: shared event times (the cap moves as a whole), independent
  // per-channel amplitude and sign, exponential recovery.
  Rng spike_rng(derive_seed(seed, "spikes"));
  double total_s = static_cast<double>(n) * dt;
  double lam = noise.spikes_per_min / 60.0 * total_s;
  int n_spikes = 0;
  {
    double l = std::exp(-lam);
    double prod = spike_rng.uniform();
    while (prod > l) {
      ++n_spikes;
      prod *= spike_rng.uniform();
    }
  }
  std::vector<double> spike_t(static_cast<std::size_t>(n_spikes));
  for (auto& st : spike_t) st = spike_rng.uniform(0.0, total_s);
  for (double st : spike_t) {
    auto t0 = static_cast<std::int64_t>(std::ceil(st / dt));
    for (std::int64_t c = 0; c < n_cols; ++c) {
      double a = noise.spike_od * noise.scale * spike_rng.uniform(0.5, 1.5);
      if (spike_rng.uniform() < 0.5) a = -a;
      for (std::int64_t t = t0; t < n; ++t) {
        double decay = std::exp(-(static_cast<double>(t) * dt - st) / kSpikeTauS);
        if (decay < 1e-4) break;
        od.at(t, c) += a * decay;
      }
    }
  }

  double white_sd = noise.white_od_sd * noise.scale;
  if (white_sd > 0.0) {
    Rng white_rng(derive_seed(seed, "white"));
    for (std::int64_t t = 0; t < n; ++t) {
      double* row = od.row(t);
      for (std::int64_t c = 0; c < n_cols; ++c) row[c] += white_rng.normal(0.0, white_sd);
    }
  }

  Rng i0_rng(derive_seed(seed, "i0"));
  std::vector<double> i0(static_cast<std::size_t>(n_cols));
  for (auto& x : i0) x = i0_rng.uniform(0.8, 1.2);

  RawRecording rec;
  rec.sfreq = opts.sfreq;
  rec.intensity = Mat(n, n_cols);
  for (std::int64_t t = 0; t < n; ++t) {
    const double* src = od.row(t);
    double* dst = rec.intensity.row(t);
    for (std::int64_t c = 0; c < n_cols; ++c)
      dst[c] = i0[static_cast<std::size_t>(c)] * std::exp(-src[c]);
  }
  return rec;
}

}  // namespace nirstext::synth
