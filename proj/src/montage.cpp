#include "nirstext/montage.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "nirstext/errors.hpp"
#include "nirstext/rng.hpp"

namespace nirstext::synth {

double Montage::long_distance(int pair) const {
  return channels[static_cast<std::size_t>(long_col(pair, 0))].distance_mm;
}

double Montage::short_distance(int pair) const {
  return channels[static_cast<std::size_t>(short_col(pair, 0))].distance_mm;
}

Montage Montage::from_distances(const std::vector<double>& long_mm,
                                const std::vector<double>& short_mm) {
  Montage m;
  m.n_long_pairs = static_cast<int>(long_mm.size());
  m.n_short_pairs = static_cast<int>(short_mm.size());
  m.channels.reserve(static_cast<std::size_t>(m.n_cols()));
  const int wavelengths[2] = {760, 850};
  for (int wl = 0; wl < 2; ++wl) {
    for (int p = 0; p < m.n_long_pairs; ++p) {
      const double d = long_mm[static_cast<std::size_t>(p)];
      if (d < 10.0) throw DataError("long channel distance below 10 mm");
      // 7 detectors ringed around each source
      m.channels.push_back({p / 7, 100 + p / 7 + p % 7, wavelengths[wl], d, false});
    }
  }
  for (int wl = 0; wl < 2; ++wl) {
    for (int p = 0; p < m.n_short_pairs; ++p) {
      const double d = short_mm[static_cast<std::size_t>(p)];
      if (d >= 10.0) throw DataError("short channel distance not below 10 mm");
      m.channels.push_back({200 + p, 300 + p, wavelengths[wl], d, true});
    }
  }
  return m;
}

Montage Montage::standard(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "montage"));
  std::vector<double> long_mm(194);
  for (auto& d : long_mm) d = std::round(rng.uniform(21.0, 42.0) * 10.0) / 10.0;
  const std::vector<double> short_mm(4, 8.0);
  return from_distances(long_mm, short_mm);
}

ExtinctionTable ExtinctionTable::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open extinction table: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("extinction table " + path.string() + ": " + e.what());
  }
  ExtinctionTable t;
  const double to_natural_per_uM_mm = std::log(10.0) * 1e-7;
  try {
    const char* wl_keys[2] = {"760", "850"};
    for (int i = 0; i < 2; ++i) {
      t.hbo[i] = j.at("hbo2").at(wl_keys[i]).get<double>() * to_natural_per_uM_mm;
      t.hbr[i] = j.at("hb").at(wl_keys[i]).get<double>() * to_natural_per_uM_mm;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("extinction table " + path.string() + ": " + e.what());
  }
  // the Beer-Lambert inversion needs this 2x2 to be invertible
  const double det = t.hbo[0] * t.hbr[1] - t.hbo[1] * t.hbr[0];
  if (std::abs(det) < 1e-18)
    throw NumericError("extinction matrix is singular");
  return t;
}

}  // namespace nirstext::synth
