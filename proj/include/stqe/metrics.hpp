#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "stqe/pcdata.hpp"

namespace stqe {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10*log10(peak^2 / mse); +inf sentinel when the signals are identical.
double psnr(const std::vector<float>& reference, const std::vector<float>& test,
            double peak = 255.0);

inline double delta_psnr(double enhanced, double anchor) {
  return enhanced - anchor;
}

// 6:1:1 weighted combination; any infinite input makes the result infinite.
double ycbcr_psnr(double y, double cb, double cr);

struct RateDistortionPoint {
  double rate = 0.0;  // bits per input point
  double psnr = 0.0;  // dB
};

struct RateDistortionCurve {
  std::vector<RateDistortionPoint> points;

  // ≥4 points, strictly increasing rate, finite PSNR. A PSNR decrease along
  // the curve is reported as a warning, not an error.
  void validate(std::vector<std::string>* warnings = nullptr) const;
};

// Classic Bjøntegaard delta rate: per curve, a cubic polynomial fit of
// log10(rate) as a function of PSNR, integrated analytically over the common
// PSNR interval; returns the average rate change in percent.
double bd_rate(const RateDistortionCurve& anchor, const RateDistortionCurve& test);

// ------------------------------------------------------- sequence eval ----

struct FramePsnr {
  std::array<double, 3> enhanced{};  // Y, Cb, Cr
  std::array<double, 3> anchor{};
  std::array<double, 3> delta{};
  double enhanced_ycbcr = 0.0;
  double anchor_ycbcr = 0.0;
  double delta_ycbcr = 0.0;
};

struct SequenceEval {
  std::vector<FramePsnr> frames;
  FramePsnr mean;
};

// Per-frame PSNR series of enhanced and anchor frames against the original
// frames; points are matched by exact voxel coordinates, so frame files may
// store points in any order.
SequenceEval evaluate_sequence(const std::vector<PointCloud>& enhanced,
                               const std::vector<PointCloud>& anchor,
                               const std::vector<PointCloud>& original);

}  // namespace stqe
