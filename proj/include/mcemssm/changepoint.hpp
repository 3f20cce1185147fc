#pragma once

#include <vector>

#include "mcemssm/types.hpp"

namespace mcemssm {

/// Segmentation of 1..T into half-open mean-constant pieces. A change
/// point c means the segment ends at index c (1-based): segments are
/// (0, c1], (c1, c2], ..., (ck, T].
struct Segmentation {
  std::vector<int> change_points;  // strictly increasing, interior
  int length = 0;

  std::vector<std::pair<int, int>> segments() const {
    std::vector<std::pair<int, int>> segs;
    int begin = 1;
    for (int cp : change_points) {
      segs.emplace_back(begin, cp);
      begin = cp + 1;
    }
    segs.emplace_back(begin, length);
    return segs;
  }
};

/// Exact penalized segmentation (PELT pruning) under the Gaussian
/// mean-shift cost: sum of within-segment squared deviations plus
/// penalty per change point.
Segmentation detect_changepoints(const std::vector<double>& series, double penalty,
                                 int min_segment_length = 30);

/// BIC-style default penalty 2 * sigma^2 * log T with sigma^2 from
/// first differences.
double choose_penalty(const std::vector<double>& series);

}  // namespace mcemssm
