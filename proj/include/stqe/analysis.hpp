#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stqe/pcdata.hpp"

namespace stqe {

enum class Axis : int { x = 0, y = 1, z = 2 };

const char* axis_name(Axis a);

// One (signed axis offset, |luma difference|) pair from a sampled
// neighborhood.
struct PairSample {
  Axis axis = Axis::x;
  double d = 0.0;   // signed coordinate difference, neighbor minus center
  double dy = 0.0;  // absolute luma difference, >= 0
};

struct BinnedPair {
  double center = 0.0;
  double mean_dy = 0.0;
  std::size_t count = 0;
};

struct GaussianFit {
  double amplitude = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double offset = 0.0;
  double r_squared = 0.0;
  bool converged = false;
  bool degenerate = false;  // flat data: offset carries the constant
  int iterations = 0;
};

// Picks one seeded-random point, finds its g nearest neighbours and emits
// the per-neighbour pairs. Throws when g >= point count.
std::vector<PairSample> sample_neighborhood(const PointCloud& pc, std::size_t g,
                                            Axis axis, uint64_t rng_seed);

// The point index sample_neighborhood(seed) will pick (exposed so callers
// can construct targeted synthetic inputs and reports can log it).
std::size_t sampled_point_index(const PointCloud& pc, uint64_t rng_seed);

// Uniform bins of the given width from d_min, final bin truncated at d_max
// and closed; centers are edge midpoints; empty bins are omitted.
std::vector<BinnedPair> bin_pairs(const std::vector<PairSample>& pairs,
                                  double bin_width = 0.5);

// a*exp(-(d-mu)^2/(2 s^2)) + c fitted by Levenberg-Marquardt, residuals
// weighted by bin count. R^2 is computed against the (count-weighted) binned
// means. Needs at least 4 bins.
GaussianFit fit_gaussian(const std::vector<BinnedPair>& binned);

double gaussian_model(const GaussianFit& fit, double d);

struct AxisStudy {
  Axis axis = Axis::x;
  std::vector<std::size_t> seed_points;        // one per run
  std::vector<std::vector<PairSample>> runs;   // raw pairs per run
  std::vector<BinnedPair> pooled_bins;         // bins of all runs, pooled
  GaussianFit fit;
};

struct StudyReport {
  std::vector<AxisStudy> axes;
  std::size_t g = 0;
  int n_runs = 0;
  uint64_t seed = 0;
  double bin_width = 0.5;
};

// n_runs independent samplings per axis; per-run bins are pooled across runs
// (weighted by count via the fit) before a single fit per axis.
StudyReport run_experiment(const PointCloud& pc, std::size_t g,
                           const std::vector<Axis>& axes, int n_runs = 3,
                           uint64_t seed = 0, double bin_width = 0.5);

}  // namespace stqe
