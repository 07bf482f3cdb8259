#include "stqe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace stqe {

double psnr(const std::vector<float>& reference, const std::vector<float>& test,
            double peak) {
  if (reference.size() != test.size())
    throw Error("psnr: length mismatch (" + std::to_string(reference.size()) +
                " vs " + std::to_string(test.size()) + ")");
  if (reference.empty()) throw Error("psnr: empty input");
  if (peak <= 0.0) throw Error("psnr: peak must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = double(reference[i]) - double(test[i]);
    mse += d * d;
  }
  mse /= double(reference.size());
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

double ycbcr_psnr(double y, double cb, double cr) {
  if (std::isinf(y) || std::isinf(cb) || std::isinf(cr)) return kInfinitePsnr;
  return (6.0 * y + cb + cr) / 8.0;
}

void RateDistortionCurve::validate(std::vector<std::string>* warnings) const {
  if (points.size() < 4)
    throw Error("rate-distortion curve: fewer than 4 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].rate > 0.0))
      throw Error("rate-distortion curve: rate must be positive");
    if (std::isinf(points[i].psnr))
      throw Error("rate-distortion curve: infinite PSNR sentinel cannot be fitted");
    if (i > 0 && !(points[i].rate > points[i - 1].rate))
      throw Error("rate-distortion curve: rates must be strictly increasing");
    if (i > 0 && points[i].psnr < points[i - 1].psnr && warnings)
      warnings->push_back("PSNR decreases between rate points " +
                          std::to_string(i - 1) + " and " + std::to_string(i));
  }
}

namespace {

// Least-squares cubic fit of y(x) around x0 (interpolating for 4 points);
// returns coefficients of sum c_j (x - x0)^j.
std::array<double, 4> fit_cubic(const std::vector<double>& x,
                                const std::vector<double>& y, double x0) {
  double ata[4][4] = {};
  double atb[4] = {};
  for (std::size_t i = 0; i < x.size(); ++i) {
    double pow_j[4];
    pow_j[0] = 1.0;
    for (int j = 1; j < 4; ++j) pow_j[j] = pow_j[j - 1] * (x[i] - x0);
    for (int a = 0; a < 4; ++a) {
      atb[a] += pow_j[a] * y[i];
      for (int b = 0; b < 4; ++b) ata[a][b] += pow_j[a] * pow_j[b];
    }
  }
  // Gaussian elimination with partial pivoting on the 4x4 normal system.
  int perm[4] = {0, 1, 2, 3};
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(ata[perm[r]][col]) > std::abs(ata[perm[piv]][col])) piv = r;
    std::swap(perm[col], perm[piv]);
    const double d = ata[perm[col]][col];
    if (d == 0.0) throw Error("bd_rate: singular fit (degenerate PSNR values)");
    for (int r = col + 1; r < 4; ++r) {
      const double f = ata[perm[r]][col] / d;
      for (int c = col; c < 4; ++c) ata[perm[r]][c] -= f * ata[perm[col]][c];
      atb[perm[r]] -= f * atb[perm[col]];
    }
  }
  std::array<double, 4> coef{};
  for (int col = 3; col >= 0; --col) {
    double v = atb[perm[col]];
    for (int c = col + 1; c < 4; ++c) v -= ata[perm[col]][c] * coef[std::size_t(c)];
    coef[std::size_t(col)] = v / ata[perm[col]][col];
  }
  return coef;
}

double integrate_cubic(const std::array<double, 4>& c, double x0, double lo,
                       double hi) {
  auto antiderivative = [&](double x) {
    const double u = x - x0;
    return c[0] * u + c[1] * u * u / 2.0 + c[2] * u * u * u / 3.0 +
           c[3] * u * u * u * u / 4.0;
  };
  return antiderivative(hi) - antiderivative(lo);
}

}  // namespace

double bd_rate(const RateDistortionCurve& anchor, const RateDistortionCurve& test) {
  anchor.validate();
  test.validate();

  auto extract = [](const RateDistortionCurve& c, std::vector<double>& ps,
                    std::vector<double>& lr) {
    for (const auto& p : c.points) {
      ps.push_back(p.psnr);
      lr.push_back(std::log10(p.rate));
    }
  };
  std::vector<double> pa, la, pt, lt;
  extract(anchor, pa, la);
  extract(test, pt, lt);

  const double lo = std::max(*std::min_element(pa.begin(), pa.end()),
                             *std::min_element(pt.begin(), pt.end()));
  const double hi = std::min(*std::max_element(pa.begin(), pa.end()),
                             *std::max_element(pt.begin(), pt.end()));
  if (!(hi > lo)) throw Error("bd_rate: PSNR ranges do not overlap");

  const double x0 = 0.5 * (lo + hi);  // centered abscissa for conditioning
  const auto ca = fit_cubic(pa, la, x0);
  const auto ct = fit_cubic(pt, lt, x0);
  const double avg_diff = (integrate_cubic(ct, x0, lo, hi) -
                           integrate_cubic(ca, x0, lo, hi)) /
                          (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

namespace {

// Reorders `other` channels into the reference point order by exact
// coordinate match.
std::vector<float> aligned_channel(const PointCloud& reference,
                                   const PointCloud& other, Component c) {
  const std::size_t n = reference.size();
  if (other.size() != n)
    throw Error("evaluate_sequence: frames have different point counts");
  if (reference.geometry == other.geometry) return other.channel(c);
  std::unordered_map<uint64_t, std::size_t> where;
  where.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t* p = other.point(i);
    where.emplace(pack_coord(p[0], p[1], p[2]), i);
  }
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t* p = reference.point(i);
    const auto it = where.find(pack_coord(p[0], p[1], p[2]));
    if (it == where.end())
      throw Error("evaluate_sequence: frames do not share geometry (point " +
                  std::to_string(i) + " not found)");
    out[i] = other.attr(it->second, c);
  }
  return out;
}

}  // namespace

SequenceEval evaluate_sequence(const std::vector<PointCloud>& enhanced,
                               const std::vector<PointCloud>& anchor,
                               const std::vector<PointCloud>& original) {
  if (enhanced.size() != original.size() || anchor.size() != original.size())
    throw Error("evaluate_sequence: frame count mismatch");
  if (original.empty()) throw Error("evaluate_sequence: no frames");

  SequenceEval ev;
  std::array<double, 3> sum_e{}, sum_a{};
  for (std::size_t f = 0; f < original.size(); ++f) {
    FramePsnr fp;
    for (int c = 0; c < 3; ++c) {
      const Component comp = Component(c);
      const std::vector<float> ref = original[f].channel(comp);
      fp.enhanced[std::size_t(c)] =
          psnr(ref, aligned_channel(original[f], enhanced[f], comp));
      fp.anchor[std::size_t(c)] =
          psnr(ref, aligned_channel(original[f], anchor[f], comp));
      fp.delta[std::size_t(c)] =
          delta_psnr(fp.enhanced[std::size_t(c)], fp.anchor[std::size_t(c)]);
      sum_e[std::size_t(c)] += fp.enhanced[std::size_t(c)];
      sum_a[std::size_t(c)] += fp.anchor[std::size_t(c)];
    }
    fp.enhanced_ycbcr = ycbcr_psnr(fp.enhanced[0], fp.enhanced[1], fp.enhanced[2]);
    fp.anchor_ycbcr = ycbcr_psnr(fp.anchor[0], fp.anchor[1], fp.anchor[2]);
    fp.delta_ycbcr = delta_psnr(fp.enhanced_ycbcr, fp.anchor_ycbcr);
    ev.frames.push_back(fp);
  }
  const double nf = double(original.size());
  for (int c = 0; c < 3; ++c) {
    ev.mean.enhanced[std::size_t(c)] = sum_e[std::size_t(c)] / nf;
    ev.mean.anchor[std::size_t(c)] = sum_a[std::size_t(c)] / nf;
    ev.mean.delta[std::size_t(c)] =
        ev.mean.enhanced[std::size_t(c)] - ev.mean.anchor[std::size_t(c)];
  }
  ev.mean.enhanced_ycbcr =
      ycbcr_psnr(ev.mean.enhanced[0], ev.mean.enhanced[1], ev.mean.enhanced[2]);
  ev.mean.anchor_ycbcr =
      ycbcr_psnr(ev.mean.anchor[0], ev.mean.anchor[1], ev.mean.anchor[2]);
  ev.mean.delta_ycbcr = ev.mean.enhanced_ycbcr - ev.mean.anchor_ycbcr;
  return ev;
}

}  // namespace stqe
