#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "stqe/common.hpp"
#include "stqe/metrics.hpp"
#include "stqe/pcdata.hpp"
#include "stqe/tape.hpp"

namespace stqe::test {

// Random voxelized cloud with unique coordinates and uniform attributes.
inline PointCloud random_cloud(Rng& rng, std::size_t n, int bit_depth = 7) {
  PointCloud pc;
  pc.bit_depth = bit_depth;
  const uint64_t limit = uint64_t(1) << bit_depth;
  std::unordered_set<uint64_t> seen;
  seen.reserve(n * 2);
  while (pc.geometry.size() < 3 * n) {
    const int32_t x = int32_t(rng.below(limit));
    const int32_t y = int32_t(rng.below(limit));
    const int32_t z = int32_t(rng.below(limit));
    if (!seen.insert(pack_coord(x, y, z)).second) continue;
    pc.geometry.insert(pc.geometry.end(), {x, y, z});
  }
  pc.attributes.resize(3 * n);
  for (auto& a : pc.attributes) a = float(rng.uniform(0.0, 255.0));
  return pc;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("stqe_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// ------------------------------------------------------ bd-rate oracle ----

// Independent of the production path: monotone piecewise-cubic interpolation
// of log10(rate) over PSNR (Fritsch-Carlson slopes), integrated by trapezoid
// sums at 1e-4 dB resolution.
inline double bd_rate_oracle(const RateDistortionCurve& anchor,
                             const RateDistortionCurve& test) {
  struct Pchip {
    std::vector<double> x, y, m;
    explicit Pchip(const RateDistortionCurve& c) {
      for (const auto& p : c.points) {
        x.push_back(p.psnr);
        y.push_back(std::log10(p.rate));
      }
      const std::size_t n = x.size();
      std::vector<double> d(n - 1);
      for (std::size_t i = 0; i + 1 < n; ++i)
        d[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
      m.resize(n);
      m[0] = d[0];
      m[n - 1] = d[n - 2];
      for (std::size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0.0)
          m[i] = 0.0;
        else {
          const double w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
          const double w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
          m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
      }
    }
    double operator()(double q) const {
      std::size_t i = 0;
      while (i + 2 < x.size() && q > x[i + 1]) ++i;
      const double h = x[i + 1] - x[i];
      const double t = (q - x[i]) / h;
      const double t2 = t * t, t3 = t2 * t;
      return (2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + t) * h * m[i] +
             (-2 * t3 + 3 * t2) * y[i + 1] + (t3 - t2) * h * m[i + 1];
    }
  };
  const Pchip fa(anchor), ft(test);
  const double lo = std::max(fa.x.front(), ft.x.front());
  const double hi = std::min(fa.x.back(), ft.x.back());
  const double step = 1e-4;
  const std::size_t steps = std::size_t((hi - lo) / step);
  double ia = 0.0, it = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double a = lo + double(s) * step;
    const double b = std::min(hi, a + step);
    ia += 0.5 * (fa(a) + fa(b)) * (b - a);
    it += 0.5 * (ft(a) + ft(b)) * (b - a);
  }
  const double avg = (it - ia) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

// ------------------------------------------------- finite differences -----

// Relative error with an absolute floor, the convention used by all
// gradient checks.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central finite differences against the tape gradients of a scalar loss.
// `build` must construct the loss from leaves created on the given tape from
// `inputs` (it is re-invoked for every probe). Checks every element when
// samples_per_tensor == 0, otherwise a seeded sample per tensor.
struct GradCheck {
  double max_err = 0.0;
  std::size_t checked = 0;
};

inline GradCheck check_gradients(
    std::vector<Tensor<double>> inputs,
    const std::function<NodeId(Tape<double>&, std::vector<NodeId>&)>& build,
    std::size_t samples_per_tensor = 0, double h = 1e-5, uint64_t seed = 42) {
  auto eval = [&](const std::vector<Tensor<double>>& vals) {
    Tape<double> tape;
    std::vector<NodeId> ids;
    for (const auto& v : vals) ids.push_back(tape.leaf(Tensor<double>(v)));
    const NodeId loss = build(tape, ids);
    return tape.value(loss).data[0];
  };

  // analytic gradients
  Tape<double> tape;
  std::vector<NodeId> ids;
  for (const auto& v : inputs) ids.push_back(tape.leaf(Tensor<double>(v)));
  const NodeId loss = build(tape, ids);
  tape.backward(loss);

  GradCheck result;
  Rng rng(seed);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::size_t n = inputs[t].data.size();
    std::vector<std::size_t> probe;
    if (samples_per_tensor == 0 || samples_per_tensor >= n) {
      probe.resize(n);
      for (std::size_t i = 0; i < n; ++i) probe[i] = i;
    } else {
      for (std::size_t s = 0; s < samples_per_tensor; ++s)
        probe.push_back(std::size_t(rng.below(n)));
    }
    const Tensor<double>& g = tape.grad(ids[t]);
    for (const std::size_t i : probe) {
      const double saved = inputs[t].data[i];
      inputs[t].data[i] = saved + h;
      const double up = eval(inputs);
      inputs[t].data[i] = saved - h;
      const double down = eval(inputs);
      inputs[t].data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      result.max_err = std::max(result.max_err, rel_err(g.data[i], fd));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace stqe::test
