#pragma once

// Independent reference implementations used only by tests. Nothing here
// shares code with the library paths it checks.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

// Textbook six-deep loop cross-correlation, NCHW, zero padding.
inline std::vector<double> direct_conv2d(const std::vector<double>& in, std::size_t n,
                                         std::size_t cin, std::size_t h, std::size_t w,
                                         const std::vector<double>& wt, std::size_t cout,
                                         std::size_t k, const std::vector<double>& bias,
                                         int stride, int pad, std::size_t& ho, std::size_t& wo) {
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * cout * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - pad;
                const long ix = static_cast<long>(ox * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                acc += in[((b * cin + ci) * h + iy) * w + ix] *
                       wt[((co * cin + ci) * k + ky) * k + kx];
              }
          out[((b * cout + co) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

// Composite trapezoid rule with `samples` intervals.
inline double trapezoid(const std::function<double(double)>& f, double a, double b,
                        std::size_t samples) {
  const double h = (b - a) / static_cast<double>(samples);
  double acc = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < samples; ++i) acc += f(a + h * static_cast<double>(i));
  return acc * h;
}

// Horner evaluation, coefficients highest power first.
inline double polyval(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (double v : c) acc = acc * x + v;
  return acc;
}

// Least-squares polynomial fit through normal equations solved by Gaussian
// elimination with partial pivoting. Coefficients highest power first.
inline std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y,
                                   int degree) {
  const int m = degree + 1;
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      double s = 0.0;
      for (double xi : x) s += std::pow(xi, r + c);
      a[r][c] = s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::pow(x[i], r) * y[i];
    a[r][m] = s;
  }
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int r = col + 1; r < m; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> low_first(m);
  for (int i = 0; i < m; ++i) low_first[i] = a[i][m] / a[i][i];
  return {low_first.rbegin(), low_first.rend()};
}

// Average of (fit_b - fit_a) over the overlap of the two abscissa ranges,
// cubic fits on centred abscissae, integrated by dense trapezoid sampling.
inline double bd_gap(const std::vector<double>& xa, const std::vector<double>& ya,
                     const std::vector<double>& xb, const std::vector<double>& yb,
                     std::size_t samples = 100000) {
  auto centred_fit = [](const std::vector<double>& x, const std::vector<double>& y,
                        double& centre) {
    centre = 0.0;
    for (double v : x) centre += v;
    centre /= static_cast<double>(x.size());
    std::vector<double> t;
    for (double v : x) t.push_back(v - centre);
    return polyfit(t, y, 3);
  };
  double ca = 0.0, cb = 0.0;
  const auto pa = centred_fit(xa, ya, ca);
  const auto pb = centred_fit(xb, yb, cb);
  double lo = -INFINITY, hi = INFINITY;
  for (const auto* x : {&xa, &xb}) {
    double mn = INFINITY, mx = -INFINITY;
    for (double v : *x) {
      mn = std::fmin(mn, v);
      mx = std::fmax(mx, v);
    }
    lo = std::fmax(lo, mn);
    hi = std::fmin(hi, mx);
  }
  const auto diff = [&](double x) { return polyval(pb, x - cb) - polyval(pa, x - ca); };
  return trapezoid(diff, lo, hi, samples) / (hi - lo);
}

inline std::vector<double> log10_all(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) out.push_back(std::log10(x));
  return out;
}

inline double bd_psnr(const std::vector<double>& rate_a, const std::vector<double>& psnr_a,
                      const std::vector<double>& rate_b, const std::vector<double>& psnr_b) {
  return bd_gap(log10_all(rate_a), psnr_a, log10_all(rate_b), psnr_b);
}

inline double bd_rate(const std::vector<double>& rate_a, const std::vector<double>& psnr_a,
                      const std::vector<double>& rate_b, const std::vector<double>& psnr_b) {
  const double avg = bd_gap(psnr_a, log10_all(rate_a), psnr_b, log10_all(rate_b));
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

// Sliding-window SSIM evaluated window by window with a 2-D Gaussian.
inline double naive_ssim(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                         std::size_t w, std::size_t h) {
  double g[11][11];
  double total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += g[i][j];
    }
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + 11 <= h; ++y)
    for (std::size_t x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / total;
          ma += wt * a[(y + i) * w + x + j];
          mb += wt * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / total;
          const double da = a[(y + i) * w + x + j] - ma, db = b[(y + i) * w + x + j] - mb;
          va += wt * da * da;
          vb += wt * db * db;
          cov += wt * da * db;
        }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / static_cast<double>(count);
}

}  // namespace oracle
