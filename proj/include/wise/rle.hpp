#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "wise/core.hpp"

namespace wise {

// Row-major run-length encoding. Runs alternate 0s and 1s and always start
// with a (possibly empty) 0-run.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> runs;

  bool operator==(const RleMask&) const = default;
};

inline RleMask encode_rle(const Mask& mask) {
  RleMask rle{mask.height(), mask.width(), {}};
  bool current = false;
  std::int64_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.at(i) != current) {
      rle.runs.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  rle.runs.push_back(run);
  return rle;
}

inline void validate_rle(const RleMask& rle) {
  if (rle.height < 0 || rle.width < 0)
    throw FormatError("rle: negative dimensions");
  if (rle.runs.empty()) throw FormatError("rle: no runs");
  std::int64_t total = 0;
  for (std::size_t i = 0; i < rle.runs.size(); ++i) {
    if (rle.runs[i] < 0) throw FormatError("rle: negative run length");
    if (i > 0 && rle.runs[i] == 0)
      throw FormatError("rle: zero-length run after the leading run");
    total += rle.runs[i];
  }
  const std::int64_t expected =
      static_cast<std::int64_t>(rle.height) * rle.width;
  if (total != expected)
    throw FormatError("rle: run sum " + std::to_string(total) +
                      " does not match " + std::to_string(rle.height) + "x" +
                      std::to_string(rle.width));
}

inline Mask decode_rle(const RleMask& rle) {
  validate_rle(rle);
  Mask mask(rle.height, rle.width);
  std::size_t pos = 0;
  bool value = false;
  for (std::int64_t run : rle.runs) {
    if (value)
      for (std::int64_t k = 0; k < run; ++k) mask.set(pos + k);
    pos += static_cast<std::size_t>(run);
    value = !value;
  }
  return mask;
}

}  // namespace wise
