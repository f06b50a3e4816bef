#include "chromacodec/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

void require_same_dims(const Plane& a, const Plane& b) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionError("plane dims differ: " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height));
  }
  if (a.samples.empty()) throw DimensionError("empty plane");
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

const std::array<double, kWindow>& gaussian_taps() {
  static const auto taps = [] {
    std::array<double, kWindow> t{};
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kWindow / 2;
      t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      total += t[i];
    }
    for (auto& v : t) v /= total;
    return t;
  }();
  return taps;
}

// Separable weighted window sums at every fully-inside position.
std::vector<double> window_filter(const std::vector<double>& src, std::size_t w, std::size_t h) {
  const auto& g = gaussian_taps();
  const std::size_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * src[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

struct Interval {
  double lo, hi;
};

Interval overlap(const std::vector<double>& a, const std::vector<double>& b, OverlapPolicy policy,
                 const char* axis) {
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const Interval iv{std::max(*amin, *bmin), std::min(*amax, *bmax)};
  if (iv.lo == iv.hi) throw DataError(std::string("degenerate ") + axis + " overlap interval");
  if (policy == OverlapPolicy::kStrict && iv.lo > iv.hi) {
    std::ostringstream msg;
    msg << axis << " ranges do not overlap: [" << *amin << ", " << *amax << "] vs [" << *bmin
        << ", " << *bmax << "]";
    throw DataError(msg.str());
  }
  return iv;
}

double average_gap(const CubicFit& a, const CubicFit& b, Interval iv) {
  const double ia = a.integral(iv.hi) - a.integral(iv.lo);
  const double ib = b.integral(iv.hi) - b.integral(iv.lo);
  return (ib - ia) / (iv.hi - iv.lo);
}

std::vector<double> log_rates(const RdCurve& c) {
  std::vector<double> out;
  for (const auto& p : c) out.push_back(std::log10(p.bitrate_kbps));
  return out;
}

std::vector<double> psnrs(const RdCurve& c) {
  std::vector<double> out;
  for (const auto& p : c) out.push_back(p.psnr_db);
  return out;
}

}  // namespace

double mse(const Plane& a, const Plane& b) {
  require_same_dims(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = double(a.samples[i]) - double(b.samples[i]);
    total += d * d;
  }
  return total / static_cast<double>(a.samples.size());
}

double psnr(const Plane& a, const Plane& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

FramePsnr psnr_frame(const Frame& a, const Frame& b) {
  if (!a.cb || !a.cr || !b.cb || !b.cr) throw ConfigError("psnr_frame needs chroma planes");
  FramePsnr r;
  r.y = psnr(a.y, b.y);
  r.cb = psnr(*a.cb, *b.cb);
  r.cr = psnr(*a.cr, *b.cr);
  r.combined = (4.0 * r.y + r.cb + r.cr) / 6.0;
  return r;
}

double ssim(const Plane& a, const Plane& b) {
  require_same_dims(a, b);
  if (a.width < kWindow || a.height < kWindow) {
    throw DimensionError("ssim needs planes of at least 11x11, got " + std::to_string(a.width) +
                         "x" + std::to_string(a.height));
  }
  const std::size_t n = a.samples.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a.samples[i];
    y[i] = b.samples[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const std::size_t w = a.width, h = a.height;
  const auto mx = window_filter(x, w, h), my = window_filter(y, w, h);
  const auto sxx = window_filter(xx, w, h), syy = window_filter(yy, w, h);
  const auto sxy = window_filter(xy, w, h);
  const double c1 = std::pow(0.01 * 255.0, 2), c2 = std::pow(0.03 * 255.0, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double delta_br(const RdPoint& proposed, const RdPoint& anchor) {
  if (!(anchor.bitrate_kbps > 0.0)) throw DataError("anchor bitrate must be positive");
  return (proposed.bitrate_kbps - anchor.bitrate_kbps) / anchor.bitrate_kbps * 100.0;
}

double delta_psnr(const RdPoint& proposed, const RdPoint& anchor) {
  return proposed.psnr_db - anchor.psnr_db;
}

double CubicFit::operator()(double x) const {
  const double t = x - center;
  return ((coefficients[3] * t + coefficients[2]) * t + coefficients[1]) * t + coefficients[0];
}

double CubicFit::integral(double x) const {
  const double t = x - center;
  return (((coefficients[3] / 4 * t + coefficients[2] / 3) * t + coefficients[1] / 2) * t +
          coefficients[0]) *
         t;
}

CubicFit fit_cubic(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DimensionError("fit_cubic: x/y length mismatch");
  if (xs.size() < 4) throw DataError("cubic fit needs at least 4 points, got " + std::to_string(xs.size()));
  CubicFit fit;
  for (double x : xs) fit.center += x;
  fit.center /= static_cast<double>(xs.size());
  Eigen::MatrixXd v(xs.size(), 4);
  Eigen::VectorXd rhs(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double t = xs[i] - fit.center;
    v(i, 0) = 1.0;
    v(i, 1) = t;
    v(i, 2) = t * t;
    v(i, 3) = t * t * t;
    rhs(i) = ys[i];
  }
  const auto qr = v.colPivHouseholderQr();
  if (qr.rank() < 4) throw DataError("cubic fit is rank deficient (repeated abscissae)");
  const Eigen::VectorXd c = qr.solve(rhs);
  for (int k = 0; k < 4; ++k) fit.coefficients[k] = c(k);
  return fit;
}

RdCurve validated_curve(const RdCurve& curve) {
  if (curve.size() < 4) {
    throw DataError("RD curve needs at least 4 points, got " + std::to_string(curve.size()));
  }
  RdCurve sorted = curve;
  for (const auto& p : sorted) {
    if (!std::isfinite(p.bitrate_kbps) || !std::isfinite(p.psnr_db)) {
      throw DataError("RD point is not finite");
    }
    if (p.bitrate_kbps <= 0.0) throw DataError("RD point bitrate must be positive");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const RdPoint& a, const RdPoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].bitrate_kbps == sorted[i - 1].bitrate_kbps) {
      throw DataError("RD curve has repeated bitrate " + std::to_string(sorted[i].bitrate_kbps));
    }
  }
  return sorted;
}

double bd_psnr(const RdCurve& anchor, const RdCurve& test, OverlapPolicy policy) {
  const RdCurve a = validated_curve(anchor), b = validated_curve(test);
  const auto ra = log_rates(a), rb = log_rates(b);
  const CubicFit fa = fit_cubic(ra, psnrs(a)), fb = fit_cubic(rb, psnrs(b));
  return average_gap(fa, fb, overlap(ra, rb, policy, "log-rate"));
}

double bd_rate(const RdCurve& anchor, const RdCurve& test, OverlapPolicy policy) {
  const RdCurve a = validated_curve(anchor), b = validated_curve(test);
  const auto pa = psnrs(a), pb = psnrs(b);
  const CubicFit fa = fit_cubic(pa, log_rates(a)), fb = fit_cubic(pb, log_rates(b));
  const double avg = average_gap(fa, fb, overlap(pa, pb, policy, "PSNR"));
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

RdCurve read_rd_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("RD csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "qp,bitrate_kbps,psnr_db") throw DataError("RD csv header mismatch: '" + line + "'");
  RdCurve curve;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    RdPoint p;
    char c1 = 0, c2 = 0;
    if (!(row >> p.qp >> c1 >> p.bitrate_kbps >> c2 >> p.psnr_db) || c1 != ',' || c2 != ',') {
      throw DataError("RD csv line " + std::to_string(lineno) + " malformed: '" + line + "'");
    }
    curve.push_back(p);
  }
  return curve;
}

RdCurve read_rd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_rd_csv(in);
}

void write_rd_csv(std::ostream& out, const RdCurve& curve) {
  out << "qp,bitrate_kbps,psnr_db\n";
  const auto old = out.precision(10);
  for (const auto& p : curve) out << p.qp << ',' << p.bitrate_kbps << ',' << p.psnr_db << '\n';
  out.precision(old);
}

}  // namespace chromacodec
