#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the implementation paths it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hloc/map.hpp"
#include "hloc/signal_io.hpp"

namespace hloc::testing {

// Triple loop over every (anchor, positive, negative) straight from the
// definition: positives are within d_thr in position space, negatives beyond.
struct NaiveTriplet {
  double loss = 0.0;
  std::int64_t active = 0;
};

inline NaiveTriplet naive_batch_all(const Eigen::MatrixXd& emb,
                                    std::span<const Eigen::Vector3d> pos, double d_thr,
                                    double margin) {
  const auto n = static_cast<int>(pos.size());
  double sum = 0.0;
  std::int64_t active = 0;
  for (int a = 0; a < n; ++a) {
    for (int p = 0; p < n; ++p) {
      if (p == a || (pos[a] - pos[p]).norm() > d_thr) continue;
      for (int q = 0; q < n; ++q) {
        if (q == a || (pos[a] - pos[q]).norm() <= d_thr) continue;
        const double h = std::sqrt((emb.row(a) - emb.row(p)).squaredNorm()) -
                         std::sqrt((emb.row(a) - emb.row(q)).squaredNorm()) + margin;
        if (h > 0.0) {
          sum += h;
          ++active;
        }
      }
    }
  }
  return {active ? sum / static_cast<double>(active) : 0.0, active};
}

// Linear scan with the same tie-break as the index: smallest squared distance,
// then lowest source_step_id.
inline std::size_t brute_force_nearest(const std::vector<map::MapEntry>& entries,
                                       const Eigen::Vector2d& q) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double dx = entries[i].xy.x() - q.x();
    const double dy = entries[i].xy.y() - q.y();
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2 ||
        (d2 == best_d2 && entries[i].source_step_id < entries[best].source_step_id)) {
      best = i;
      best_d2 = d2;
    }
  }
  return best;
}

inline double central_difference(const std::function<double(double)>& f, double x,
                                 double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline HapticSignal random_signal(std::mt19937_64& rng, int rows = kSignalLength,
                                  int cols = kSignalChannels, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  HapticSignal s;
  s.samples.resize(rows, cols);
  for (Eigen::Index i = 0; i < s.samples.size(); ++i) s.samples.data()[i] = gauss(rng);
  return s;
}

inline Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Pose p;
  p.translation = {gauss(rng), gauss(rng), gauss(rng)};
  p.rotation = Eigen::Quaterniond(gauss(rng), gauss(rng), gauss(rng), gauss(rng)).normalized();
  return p;
}

// A valid trial with random contents; optional fields present at random.
inline Trial random_trial(std::mt19937_64& rng, int n_events) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> foot(0, 3);
  Trial t;
  t.trial_id = "random-" + std::to_string(rng() % 100000);
  t.metadata["source"] = "random_trial";
  t.metadata["note"] = "quote \" and unicode µ";
  double ts = gauss(rng);
  for (int i = 0; i < n_events; ++i) {
    StepEvent e;
    e.step_id = 10 * i + 3;
    ts += 0.1 + std::abs(gauss(rng));
    e.timestamp = ts;
    e.foot_id = foot(rng);
    e.signal = random_signal(rng, kSignalLength, kSignalChannels, 100.0);
    e.foothold_base = {gauss(rng), gauss(rng), gauss(rng)};
    e.odom_pose = random_pose(rng);
    if (rng() % 2) {
      e.truth_pose = random_pose(rng);
      e.foothold_world_truth = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    } else if (rng() % 2) {
      e.foothold_world_truth = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    }
    t.events.push_back(std::move(e));
  }
  return t;
}

}  // namespace hloc::testing
