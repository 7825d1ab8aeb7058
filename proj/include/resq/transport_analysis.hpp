#pragma once

// Superconducting transition detection on resistance-vs-temperature data.
//
// log10(R + eps) is segmented into plateaus by greedy binary segmentation;
// each downward step between neighbouring plateaus of at least
// min_drop_decades is one transition.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "resq/errors.hpp"

namespace resq {

struct ResistanceTrace {
  std::vector<double> temperatures;  // K, strictly monotone in either direction
  std::vector<double> resistances;   // ohm
};

struct Transition {
  double t_c = 0.0;           // K
  double drop_decades = 0.0;  // > 0
};

struct TransitionReport {
  std::vector<Transition> transitions;  // ordered by decreasing t_c
  double normal_resistance = 0.0;       // ohm
  double noise_floor = 0.0;             // ohm, smallest positive resistance
};

inline constexpr std::size_t kMinTransportPoints = 20;
inline constexpr std::size_t kMinSegmentLength = 5;

enum class TcCriterion { midpoint, onset, zero };

namespace detail {

struct SortedTrace {
  std::vector<double> t;
  std::vector<double> r;
};

inline SortedTrace sorted_ascending(const ResistanceTrace& trace) {
  const auto& T = trace.temperatures;
  const auto& R = trace.resistances;
  if (T.size() != R.size()) {
    throw Error(Errc::precondition, "temperatures and resistances differ in length");
  }
  if (T.size() < kMinTransportPoints) {
    throw Error(Errc::too_few_points, "resistance trace has " + std::to_string(T.size()) +
                                          " points; at least " +
                                          std::to_string(kMinTransportPoints) + " are required");
  }
  for (std::size_t i = 0; i < T.size(); ++i) {
    if (!std::isfinite(T[i]) || !std::isfinite(R[i])) {
      throw Error(Errc::precondition, "non-finite sample at index " + std::to_string(i));
    }
  }
  const bool ascending = T[1] > T[0];
  for (std::size_t i = 1; i < T.size(); ++i) {
    if (ascending ? !(T[i] > T[i - 1]) : !(T[i] < T[i - 1])) {
      throw Error(Errc::precondition,
                  "temperatures not strictly monotone at index " + std::to_string(i));
    }
  }
  SortedTrace s{T, R};
  if (!ascending) {
    std::reverse(s.t.begin(), s.t.end());
    std::reverse(s.r.begin(), s.r.end());
  }
  return s;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

struct Segment {
  std::size_t begin;
  std::size_t end;  // exclusive
};

/// Greedy binary segmentation of y. A split is admissible when both sides
/// hold >= kMinSegmentLength samples and their means differ by at least
/// min_jump; the admissible split with the largest SSE reduction is taken
/// first.
inline std::vector<Segment> binary_segmentation(const std::vector<double>& y, double min_jump) {
  const std::size_t n = y.size();
  std::vector<double> s1(n + 1, 0.0);
  std::vector<double> s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + y[i];
    s2[i + 1] = s2[i] + y[i] * y[i];
  }
  auto sse = [&](std::size_t b, std::size_t e) {
    const double m = static_cast<double>(e - b);
    const double s = s1[e] - s1[b];
    return (s2[e] - s2[b]) - s * s / m;
  };
  auto mean = [&](std::size_t b, std::size_t e) {
    return (s1[e] - s1[b]) / static_cast<double>(e - b);
  };

  std::vector<Segment> segs{{0, n}};
  while (true) {
    double best_gain = 0.0;
    std::size_t best_seg = segs.size();
    std::size_t best_k = 0;
    for (std::size_t j = 0; j < segs.size(); ++j) {
      const auto [b, e] = segs[j];
      if (e - b < 2 * kMinSegmentLength) continue;
      const double total = sse(b, e);
      for (std::size_t k = b + kMinSegmentLength; k + kMinSegmentLength <= e; ++k) {
        if (std::abs(mean(b, k) - mean(k, e)) < min_jump) continue;
        const double gain = total - sse(b, k) - sse(k, e);
        if (gain > best_gain) {
          best_gain = gain;
          best_seg = j;
          best_k = k;
        }
      }
    }
    if (best_seg == segs.size()) break;
    const Segment old = segs[best_seg];
    segs[best_seg] = {old.begin, best_k};
    segs.insert(segs.begin() + static_cast<std::ptrdiff_t>(best_seg) + 1, {best_k, old.end});
  }
  return segs;
}

}  // namespace detail

inline TransitionReport detect_transitions(const ResistanceTrace& trace,
                                           double min_drop_decades = 0.3) {
  if (!(min_drop_decades > 0.0)) {
    throw Error(Errc::precondition, "min_drop_decades must be > 0");
  }
  const auto s = detail::sorted_ascending(trace);
  const std::size_t n = s.t.size();

  TransitionReport report;
  const std::size_t top = std::max<std::size_t>(1, (n + 9) / 10);
  report.normal_resistance =
      detail::median(std::vector<double>(s.r.end() - static_cast<std::ptrdiff_t>(top), s.r.end()));
  double floor = std::numeric_limits<double>::infinity();
  for (double r : s.r) {
    if (r > 0.0) floor = std::min(floor, r);
  }
  if (!(report.normal_resistance > 0.0) || !std::isfinite(floor)) {
    throw Error(Errc::no_normal_state, "trace shows no positive normal-state resistance");
  }
  report.noise_floor = floor;

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::log10(std::max(s.r[i], 0.0) + floor);

  const auto segs = detail::binary_segmentation(y, min_drop_decades);
  std::vector<double> level(segs.size());
  std::vector<bool> plateau(segs.size());
  for (std::size_t j = 0; j < segs.size(); ++j) {
    const auto [b, e] = segs[j];
    level[j] = detail::median(std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(b),
                                                  y.begin() + static_cast<std::ptrdiff_t>(e)));
    // A segment whose first and last thirds differ by half a step is part
    // of a broadened transition rather than a plateau.
    const std::size_t third = std::max<std::size_t>(1, (e - b) / 3);
    const double head = std::accumulate(y.begin() + static_cast<std::ptrdiff_t>(b),
                                        y.begin() + static_cast<std::ptrdiff_t>(b + third), 0.0) /
                        static_cast<double>(third);
    const double tail = std::accumulate(y.begin() + static_cast<std::ptrdiff_t>(e - third),
                                        y.begin() + static_cast<std::ptrdiff_t>(e), 0.0) /
                        static_cast<double>(third);
    plateau[j] = std::abs(tail - head) < 0.5 * min_drop_decades;
  }
  plateau.front() = true;
  plateau.back() = true;

  // Walk plateaus from high T to low T.
  std::size_t upper = segs.size() - 1;
  for (std::size_t j = segs.size() - 1; j-- > 0;) {
    if (!plateau[j]) continue;
    const double drop = level[upper] - level[j];
    if (drop >= min_drop_decades) {
      const double mid = 0.5 * (level[upper] + level[j]);
      // First crossing of the mid level scanning down from the upper plateau.
      double t_c = 0.5 * (s.t[segs[j].end - 1] + s.t[segs[upper].begin]);
      for (std::size_t i = segs[upper].begin; i > segs[j].end - 1; --i) {
        if (y[i - 1] < mid && y[i] >= mid) {
          t_c = s.t[i - 1] + (mid - y[i - 1]) / (y[i] - y[i - 1]) * (s.t[i] - s.t[i - 1]);
          break;
        }
      }
      report.transitions.push_back({t_c, drop});
      upper = j;
    } else if (level[j] > level[upper]) {
      upper = j;
    }
  }
  return report;
}

/// Summary T_c from threshold crossings of R / R_normal, scanning down
/// from the highest temperature: onset 90 %, midpoint 50 %, zero 1 %.
inline double critical_temperature(const ResistanceTrace& trace, TcCriterion criterion,
                                   double min_drop_decades = 0.3) {
  const auto report = detect_transitions(trace, min_drop_decades);
  if (report.transitions.empty()) {
    throw Error(Errc::no_transition, "no superconducting transition detected");
  }
  const auto s = detail::sorted_ascending(trace);
  const double fraction = criterion == TcCriterion::onset    ? 0.9
                          : criterion == TcCriterion::midpoint ? 0.5
                                                              : 0.01;
  const double thr = fraction * report.normal_resistance;
  const std::size_t n = s.t.size();
  auto below = [&](double r) { return criterion == TcCriterion::zero ? r <= thr : r < thr; };
  if (below(s.r[n - 1])) return s.t[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    if (below(s.r[i])) {
      const double r0 = s.r[i];
      const double r1 = s.r[i + 1];
      return s.t[i] + (thr - r0) / (r1 - r0) * (s.t[i + 1] - s.t[i]);
    }
  }
  throw Error(Errc::no_transition, "resistance never falls below the criterion threshold");
}

}  // namespace resq
