#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "wise/core.hpp"
#include "wise/random.hpp"

namespace wise::testing {

inline Mask random_mask(Rng& rng, int h, int w, double density) {
  Mask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.uniform() < density);
  return m;
}

inline Mask box_mask(int h, int w, int r0, int c0, int r1, int c1) {
  Mask m(h, w);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) m.set(r, c);
  return m;
}

// Relative error with an absolute floor, for finite-difference checks.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("wise_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace wise::testing
