#include "stqe/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "stqe/spatial_index.hpp"

namespace stqe {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
  }
  return "?";
}

std::size_t sampled_point_index(const PointCloud& pc, uint64_t rng_seed) {
  Rng rng = Rng::derive(rng_seed, 0xa11a5);
  return std::size_t(rng.below(pc.size()));
}

std::vector<PairSample> sample_neighborhood(const PointCloud& pc, std::size_t g,
                                            Axis axis, uint64_t rng_seed) {
  pc.validate();
  if (g >= pc.size())
    throw Error("sample_neighborhood: g must be smaller than the point count");
  if (g == 0) throw Error("sample_neighborhood: g must be positive");

  const std::size_t p = sampled_point_index(pc, rng_seed);
  SpatialIndex index(pc.geometry);
  // k = g+1 self-query: the first hit is the point itself at distance 0
  std::vector<int32_t> idx(g + 1);
  std::vector<int64_t> d2(g + 1);
  index.query_one(pc.point(p), g + 1, idx.data(), d2.data());

  const int a = int(axis);
  const double yp = double(pc.attr(p, Component::Y));
  std::vector<PairSample> pairs;
  pairs.reserve(g);
  for (std::size_t j = 0; j <= g; ++j) {
    if (std::size_t(idx[j]) == p) continue;  // skip the center itself
    PairSample s;
    s.axis = axis;
    s.d = double(pc.point(std::size_t(idx[j]))[a]) - double(pc.point(p)[a]);
    s.dy = std::abs(double(pc.attr(std::size_t(idx[j]), Component::Y)) - yp);
    pairs.push_back(s);
  }
  return pairs;
}

std::vector<BinnedPair> bin_pairs(const std::vector<PairSample>& pairs,
                                  double bin_width) {
  if (pairs.empty()) throw Error("bin_pairs: no pairs");
  if (!(bin_width > 0.0)) throw Error("bin_pairs: bin width must be positive");

  double dmin = pairs[0].d, dmax = pairs[0].d;
  for (const PairSample& p : pairs) {
    dmin = std::min(dmin, p.d);
    dmax = std::max(dmax, p.d);
  }

  if (dmin == dmax) {
    BinnedPair b;
    b.center = dmin;
    b.count = pairs.size();
    double sum = 0.0;
    for (const PairSample& p : pairs) sum += p.dy;
    b.mean_dy = sum / double(pairs.size());
    return {b};
  }

  const std::size_t nbins = std::size_t(std::ceil((dmax - dmin) / bin_width));
  auto edge = [&](std::size_t i) {
    return i == nbins ? dmax : dmin + double(i) * bin_width;
  };
  std::vector<double> sum(nbins, 0.0);
  std::vector<std::size_t> count(nbins, 0);
  for (const PairSample& p : pairs) {
    std::size_t b = std::size_t((p.d - dmin) / bin_width);
    if (b >= nbins) b = nbins - 1;  // d == dmax lands in the closed last bin
    sum[b] += p.dy;
    count[b] += 1;
  }
  std::vector<BinnedPair> out;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (count[b] == 0) continue;
    BinnedPair bp;
    bp.center = 0.5 * (edge(b) + edge(b + 1));
    bp.mean_dy = sum[b] / double(count[b]);
    bp.count = count[b];
    out.push_back(bp);
  }
  return out;
}

double gaussian_model(const GaussianFit& fit, double d) {
  const double u = d - fit.mean;
  return fit.amplitude * std::exp(-u * u / (2.0 * fit.stddev * fit.stddev)) +
         fit.offset;
}

namespace {

struct Model {
  double a, mu, s, c;
};

double residual_cost(const std::vector<BinnedPair>& bins, const Model& m) {
  double cost = 0.0;
  for (const BinnedPair& b : bins) {
    const double u = b.center - m.mu;
    const double r =
        m.a * std::exp(-u * u / (2.0 * m.s * m.s)) + m.c - b.mean_dy;
    cost += double(b.count) * r * r;
  }
  return cost;
}

// Weighted normal equations for one Levenberg-Marquardt step; returns false
// when the damped system is singular.
bool lm_step(const std::vector<BinnedPair>& bins, const Model& m,
             double lambda, Model& out) {
  double jtj[4][4] = {};
  double jtr[4] = {};
  for (const BinnedPair& b : bins) {
    const double u = b.center - m.mu;
    const double s2 = m.s * m.s;
    const double e = std::exp(-u * u / (2.0 * s2));
    const double f = m.a * e + m.c;
    const double r = f - b.mean_dy;
    const double j[4] = {e, m.a * e * u / s2, m.a * e * u * u / (s2 * m.s), 1.0};
    const double w = double(b.count);
    for (int p = 0; p < 4; ++p) {
      jtr[p] += w * j[p] * r;
      for (int q = 0; q < 4; ++q) jtj[p][q] += w * j[p] * j[q];
    }
  }
  for (int p = 0; p < 4; ++p) jtj[p][p] *= 1.0 + lambda;

  // solve (JtJ + λdiag) δ = Jtr
  double A[4][5];
  for (int p = 0; p < 4; ++p) {
    for (int q = 0; q < 4; ++q) A[p][q] = jtj[p][q];
    A[p][4] = jtr[p];
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (A[piv][col] == 0.0) return false;
    for (int q = 0; q < 5; ++q) std::swap(A[col][q], A[piv][q]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = A[r][col] / A[col][col];
      for (int q = col; q < 5; ++q) A[r][q] -= f * A[col][q];
    }
  }
  double delta[4];
  for (int col = 3; col >= 0; --col) {
    double v = A[col][4];
    for (int q = col + 1; q < 4; ++q) v -= A[col][q] * delta[q];
    delta[col] = v / A[col][col];
  }
  out.a = m.a - delta[0];
  out.mu = m.mu - delta[1];
  out.s = m.s - delta[2];
  out.c = m.c - delta[3];
  if (out.s == 0.0 || !std::isfinite(out.s)) return false;
  return true;
}

double weighted_r_squared(const std::vector<BinnedPair>& bins, const Model& m) {
  double wsum = 0.0, ymean = 0.0;
  for (const BinnedPair& b : bins) {
    wsum += double(b.count);
    ymean += double(b.count) * b.mean_dy;
  }
  ymean /= wsum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (const BinnedPair& b : bins) {
    const double u = b.center - m.mu;
    const double f = m.a * std::exp(-u * u / (2.0 * m.s * m.s)) + m.c;
    ss_res += double(b.count) * (f - b.mean_dy) * (f - b.mean_dy);
    ss_tot += double(b.count) * (b.mean_dy - ymean) * (b.mean_dy - ymean);
  }
  if (ss_tot == 0.0) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

}  // namespace

GaussianFit fit_gaussian(const std::vector<BinnedPair>& binned) {
  if (binned.size() < 4)
    throw Error("fit_gaussian: needs at least 4 bins for 4 free parameters");

  double ymin = binned[0].mean_dy, ymax = binned[0].mean_dy;
  double argmax = binned[0].center;
  double cmin = binned[0].center, cmax = binned[0].center;
  for (const BinnedPair& b : binned) {
    if (b.mean_dy > ymax) {
      ymax = b.mean_dy;
      argmax = b.center;
    }
    ymin = std::min(ymin, b.mean_dy);
    cmin = std::min(cmin, b.center);
    cmax = std::max(cmax, b.center);
  }

  GaussianFit fit;
  if (ymax == ymin) {
    // flat data: every Gaussian with a = 0 fits; report the constant
    fit.amplitude = 0.0;
    fit.mean = 0.5 * (cmin + cmax);
    fit.stddev = std::max(1.0, (cmax - cmin) / 4.0);
    fit.offset = ymin;
    fit.r_squared = 0.0;
    fit.degenerate = true;
    fit.converged = true;
    return fit;
  }

  Model m;
  m.a = ymax - ymin;
  m.mu = argmax;
  m.s = std::max((cmax - cmin) / 4.0, 1e-3);
  m.c = ymin;

  double lambda = 1e-3;
  double cost = residual_cost(binned, m);
  const int max_iter = 200;
  int iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    Model next;
    if (!lm_step(binned, m, lambda, next)) {
      lambda *= 10.0;
      if (lambda > 1e12) break;
      continue;
    }
    const double next_cost = residual_cost(binned, next);
    if (next_cost <= cost) {
      const double rel = (cost - next_cost) / std::max(cost, 1e-300);
      m = next;
      cost = next_cost;
      lambda /= 10.0;
      if (rel < 1e-10) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  fit.amplitude = m.a;
  fit.mean = m.mu;
  fit.stddev = std::abs(m.s);  // the model depends on s^2 only
  fit.offset = m.c;
  fit.iterations = iter;
  fit.converged = converged;
  fit.r_squared = weighted_r_squared(binned, m);
  return fit;
}

StudyReport run_experiment(const PointCloud& pc, std::size_t g,
                           const std::vector<Axis>& axes, int n_runs,
                           uint64_t seed, double bin_width) {
  if (n_runs < 1) throw Error("run_experiment: n_runs must be positive");
  StudyReport report;
  report.g = g;
  report.n_runs = n_runs;
  report.seed = seed;
  report.bin_width = bin_width;
  for (const Axis axis : axes) {
    AxisStudy study;
    study.axis = axis;
    std::vector<BinnedPair> pooled;
    for (int run = 0; run < n_runs; ++run) {
      const uint64_t run_seed =
          seed * 1000003ull + uint64_t(run) * 7919ull + uint64_t(axis);
      study.seed_points.push_back(sampled_point_index(pc, run_seed));
      std::vector<PairSample> pairs = sample_neighborhood(pc, g, axis, run_seed);
      const std::vector<BinnedPair> bins = bin_pairs(pairs, bin_width);
      pooled.insert(pooled.end(), bins.begin(), bins.end());
      study.runs.push_back(std::move(pairs));
    }
    study.pooled_bins = pooled;
    study.fit = fit_gaussian(pooled);
    report.axes.push_back(std::move(study));
  }
  return report;
}

}  // namespace stqe
