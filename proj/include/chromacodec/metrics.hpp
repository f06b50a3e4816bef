#pragma once

// Quality metrics (PSNR, SSIM) and rate-distortion comparisons
// (per-point deltas and Bjontegaard deltas).

#include <array>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <vector>

#include "chromacodec/colorspace.hpp"

namespace chromacodec {

// Returned by psnr() for identical inputs.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

double mse(const Plane& a, const Plane& b);
double psnr(const Plane& a, const Plane& b);

struct FramePsnr {
  double y = 0.0;
  double cb = 0.0;
  double cr = 0.0;
  // (4 Y + Cb + Cr) / 6, computed on the per-channel dB values.
  double combined = 0.0;
};

// Both frames must carry chroma in the same layout.
FramePsnr psnr_frame(const Frame& a, const Frame& b);

// Gaussian window 11x11, sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255, averaged
// over all window positions fully inside the plane.
double ssim(const Plane& a, const Plane& b);

struct RdPoint {
  double bitrate_kbps = 0.0;
  double psnr_db = 0.0;
  int qp = -1;
};

using RdCurve = std::vector<RdPoint>;

// Percent and dB change of a proposed point against an anchor point.
double delta_br(const RdPoint& proposed, const RdPoint& anchor);
double delta_psnr(const RdPoint& proposed, const RdPoint& anchor);

// kClassic integrates over [max of minima, min of maxima] even when that
// interval is reversed (disjoint ranges), as the widely used reference
// script does. kStrict throws DataError when the ranges do not overlap.
enum class OverlapPolicy { kClassic, kStrict };

// Cubic least-squares fit y ~ c0 + c1 (x - center) + c2 (x - center)^2 + c3 (x - center)^3.
struct CubicFit {
  double center = 0.0;
  std::array<double, 4> coefficients{};

  double operator()(double x) const;
  // Exact antiderivative, zero at x = center.
  double integral(double x) const;
};

CubicFit fit_cubic(const std::vector<double>& xs, const std::vector<double>& ys);

// Average PSNR gain (dB) of `test` over `anchor` at equal rate.
double bd_psnr(const RdCurve& anchor, const RdCurve& test,
               OverlapPolicy policy = OverlapPolicy::kClassic);
// Average bitrate change (percent) of `test` over `anchor` at equal quality.
double bd_rate(const RdCurve& anchor, const RdCurve& test,
               OverlapPolicy policy = OverlapPolicy::kClassic);

// Checks finiteness, positive rates, at least 4 points and strictly
// increasing bitrate after sorting; returns the sorted copy.
RdCurve validated_curve(const RdCurve& curve);

// CSV with header `qp,bitrate_kbps,psnr_db`.
RdCurve read_rd_csv(std::istream& in);
RdCurve read_rd_csv(const std::filesystem::path& path);
void write_rd_csv(std::ostream& out, const RdCurve& curve);

}  // namespace chromacodec
