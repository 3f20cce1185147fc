#include "mcemssm/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mcemssm {

namespace {

// Within-segment squared error for (a, b] via cumulative sums
// (a, b are 0-based prefix indices, segment is series[a..b-1]).
struct SegmentCost {
  std::vector<double> cum, cum2;
  explicit SegmentCost(const std::vector<double>& x)
      : cum(x.size() + 1, 0.0), cum2(x.size() + 1, 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      cum[i + 1] = cum[i] + x[i];
      cum2[i + 1] = cum2[i] + x[i] * x[i];
    }
  }
  double operator()(int a, int b) const {
    double n = b - a;
    double s = cum[b] - cum[a];
    return (cum2[b] - cum2[a]) - s * s / n;
  }
};

}  // namespace

Segmentation detect_changepoints(const std::vector<double>& series, double penalty,
                                 int min_segment_length) {
  const int T = static_cast<int>(series.size());
  if (min_segment_length < 1)
    throw std::invalid_argument("detect_changepoints: min_segment_length must be >= 1");
  if (T < 2 * min_segment_length)
    throw std::invalid_argument("detect_changepoints: series shorter than two segments");
  if (penalty < 0.0)
    throw std::invalid_argument("detect_changepoints: negative penalty");

  SegmentCost cost(series);
  const double inf = std::numeric_limits<double>::infinity();

  // F[t] = optimal cost of series[0..t-1]; last[t] = previous break.
  std::vector<double> F(T + 1, inf);
  std::vector<int> last(T + 1, 0);
  F[0] = -penalty;

  std::vector<int> candidates{0};
  for (int t = min_segment_length; t <= T; ++t) {
    double best = inf;
    int best_s = 0;
    for (int s : candidates) {
      if (t - s < min_segment_length) continue;
      double v = F[s] + cost(s, t) + penalty;
      if (v < best) {
        best = v;
        best_s = s;
      }
    }
    F[t] = best;
    last[t] = best_s;

    // PELT pruning: s can never again be optimal once
    // F[s] + cost(s, t) > F[t].
    std::vector<int> kept;
    kept.reserve(candidates.size() + 1);
    for (int s : candidates) {
      if (t - s < min_segment_length || F[s] + cost(s, t) <= F[t]) kept.push_back(s);
    }
    kept.push_back(t);
    candidates = std::move(kept);
  }

  Segmentation seg;
  seg.length = T;
  int t = T;
  while (t > 0) {
    int s = last[t];
    if (s > 0) seg.change_points.push_back(s);
    t = s;
  }
  std::reverse(seg.change_points.begin(), seg.change_points.end());
  return seg;
}

double choose_penalty(const std::vector<double>& series) {
  const int T = static_cast<int>(series.size());
  if (T < 2) return 0.0;
  // Difference-based variance estimate, robust to mean shifts.
  double s = 0.0;
  for (int i = 1; i < T; ++i) {
    double d = series[i] - series[i - 1];
    s += d * d;
  }
  double sigma2 = s / (2.0 * (T - 1));
  return 2.0 * sigma2 * std::log(static_cast<double>(T));
}

}  // namespace mcemssm
