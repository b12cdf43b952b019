#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace nirstext::synth {

struct Channel {
  int source = 0;
  int detector = 0;
  int wavelength_nm = 760;
  double distance_mm = 0.0;
  bool is_short = false;
};

// Channel geometry plus the fixed column layout of every raw intensity
// buffer: long pairs at 760 nm (cols [0, P)), long pairs at 850 nm
// (cols [P, 2P)), then short pairs in the same wavelength-major order.
struct Montage {
  std::vector<Channel> channels;  // exactly raw-buffer column order
  int n_long_pairs = 0;
  int n_short_pairs = 0;

  int n_cols() const { return 2 * (n_long_pairs + n_short_pairs); }
  int n_long_cols() const { return 2 * n_long_pairs; }
  // wl_idx: 0 = 760 nm, 1 = 850 nm
  int long_col(int pair, int wl_idx) const { return wl_idx * n_long_pairs + pair; }
  int short_col(int pair, int wl_idx) const {
    return 2 * n_long_pairs + wl_idx * n_short_pairs + pair;
  }
  double long_distance(int pair) const;
  double short_distance(int pair) const;

  // Rebuilds the channel list from per-pair distances; optode ids are
  // assigned deterministically from the pair index.
  static Montage from_distances(const std::vector<double>& long_mm,
                                const std::vector<double>& short_mm);
  // 194 long pairs with seeded distances in [21, 42] mm plus 4 short
  // pairs at 8 mm.
  static Montage standard(std::uint64_t seed);
};

// Molar extinction coefficients converted at load time from the tabulated
// log10 cm^-1/M values to natural-log OD per micromolar per millimetre, so
// dOD = k * C_uM * distance_mm * ppf.
struct ExtinctionTable {
  double hbo[2] = {0.0, 0.0};  // index 0 = 760 nm, 1 = 850 nm
  double hbr[2] = {0.0, 0.0};

  static ExtinctionTable load(const std::filesystem::path& path);
};

}  // namespace nirstext::synth
