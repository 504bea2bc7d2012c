#include <cmath>
#include <stdexcept>
#include <vector>

#include "drivesafe/cues.hpp"

// Two-frame dense flow via quadratic polynomial expansion: each neighborhood
// is fit to f(x) ~ x'Ax + b'x + c under a Gaussian applicability window, and
// the displacement solves G d = h with G, h accumulated over a box window,
// iterated coarse-to-fine over an image pyramid.

namespace drivesafe::cues {

namespace {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0) {}

  double at(int x, int y) const {
    x = std::max(0, std::min(width - 1, x));
    y = std::max(0, std::min(height - 1, y));
    return data[static_cast<std::size_t>(y) * width + x];
  }
  double& ref(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  // clamped bilinear sample at a continuous position
  double sample(double x, double y) const {
    x = std::max(0.0, std::min(static_cast<double>(width - 1), x));
    y = std::max(0.0, std::min(static_cast<double>(height - 1), y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double wx = x - x0;
    const double wy = y - y0;
    return (1 - wy) * ((1 - wx) * at(x0, y0) + wx * at(x0 + 1, y0)) +
           wy * ((1 - wx) * at(x0, y0 + 1) + wx * at(x0 + 1, y0 + 1));
  }
};

// Per-pixel expansion coefficients: f ~ c + b'x + x'Ax with
// A = [[a_xx, a_xy], [a_xy, a_yy]], b = (b_x, b_y).
struct Expansion {
  Image bx, by, axx, ayy, axy;
};

Image gaussian_blur3(const Image& src) {
  static const double k[3] = {0.25, 0.5, 0.25};
  Image tmp(src.width, src.height), out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      tmp.ref(x, y) = k[0] * src.at(x - 1, y) + k[1] * src.at(x, y) + k[2] * src.at(x + 1, y);
    }
  }
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      out.ref(x, y) = k[0] * tmp.at(x, y - 1) + k[1] * tmp.at(x, y) + k[2] * tmp.at(x, y + 1);
    }
  }
  return out;
}

Image resize_bilinear(const Image& src, int new_w, int new_h) {
  Image out(new_w, new_h);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      out.ref(x, y) = (1 - wy) * ((1 - wx) * src.at(x0, y0) + wx * src.at(x0 + 1, y0)) +
                      wy * ((1 - wx) * src.at(x0, y0 + 1) + wx * src.at(x0 + 1, y0 + 1));
    }
  }
  return out;
}

// Gaussian-weighted least-squares fit of the six-term quadratic basis,
// computed with separable correlations (kernels g, g*x, g*x^2).
Expansion polynomial_expansion(const Image& img, int poly_n, double sigma) {
  const int radius = (poly_n - 1) / 2;
  std::vector<double> g(static_cast<std::size_t>(poly_n)), gx(g.size()), gxx(g.size());
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    g[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : g) v /= sum;
  for (int i = -radius; i <= radius; ++i) {
    gx[static_cast<std::size_t>(i + radius)] = g[static_cast<std::size_t>(i + radius)] * i;
    gxx[static_cast<std::size_t>(i + radius)] = g[static_cast<std::size_t>(i + radius)] * i * i;
  }

  // basis moments (odd ones vanish)
  double m0 = 0, m2 = 0, m4 = 0, m22 = 0;
  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      const double w = g[static_cast<std::size_t>(i + radius)] * g[static_cast<std::size_t>(j + radius)];
      m0 += w;
      m2 += w * j * j;
      m4 += w * j * j * j * j;
      m22 += w * i * i * j * j;
    }
  }

  // inverse of the symmetric (1, x^2, y^2) moment block
  const double det3 = m0 * (m4 * m4 - m22 * m22) - m2 * (m2 * m4 - m2 * m22) +
                      m2 * (m2 * m22 - m2 * m4);
  if (std::abs(det3) < 1e-30) throw std::runtime_error("flow: singular expansion moment matrix");
  const double inv01 = -(m2 * m4 - m2 * m22) / det3;
  const double inv02 = (m2 * m22 - m2 * m4) / det3;
  const double inv11 = (m0 * m4 - m2 * m2) / det3;
  const double inv12 = -(m0 * m22 - m2 * m2) / det3;
  const double inv22 = inv11;

  const int w = img.width, h = img.height;
  // horizontal pass: correlate rows with g, g*x, g*x^2
  Image r0(w, h), r1(w, h), r2(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s0 = 0, s1 = 0, s2 = 0;
      for (int j = -radius; j <= radius; ++j) {
        const double v = img.at(x + j, y);
        const std::size_t k = static_cast<std::size_t>(j + radius);
        s0 += v * g[k];
        s1 += v * gx[k];
        s2 += v * gxx[k];
      }
      r0.ref(x, y) = s0;
      r1.ref(x, y) = s1;
      r2.ref(x, y) = s2;
    }
  }

  Expansion e;
  e.bx = Image(w, h);
  e.by = Image(w, h);
  e.axx = Image(w, h);
  e.ayy = Image(w, h);
  e.axy = Image(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s00 = 0, s01 = 0, s02 = 0, s10 = 0, s11 = 0, s20 = 0;
      for (int i = -radius; i <= radius; ++i) {
        const std::size_t k = static_cast<std::size_t>(i + radius);
        s00 += r0.at(x, y + i) * g[k];
        s01 += r0.at(x, y + i) * gx[k];
        s02 += r0.at(x, y + i) * gxx[k];
        s10 += r1.at(x, y + i) * g[k];
        s11 += r1.at(x, y + i) * gx[k];
        s20 += r2.at(x, y + i) * g[k];
      }
      // r = (1, x, y, x^2, y^2, xy) coefficients
      const double r_x = s10 / m2;
      const double r_y = s01 / m2;
      const double r_xx = inv01 * s00 + inv11 * s20 + inv12 * s02;
      const double r_yy = inv02 * s00 + inv12 * s20 + inv22 * s02;
      const double r_xy = s11 / m22;
      e.bx.ref(x, y) = r_x;
      e.by.ref(x, y) = r_y;
      e.axx.ref(x, y) = r_xx;
      e.ayy.ref(x, y) = r_yy;
      e.axy.ref(x, y) = 0.5 * r_xy;
    }
  }
  return e;
}

// One displacement refinement sweep: accumulate G = sum w A'A and
// h = sum w A'db over the box window, then solve the per-pixel 2x2 system.
void update_flow(const Expansion& e1, const Expansion& e2, Image& flow_x, Image& flow_y,
                 int window_size) {
  const int w = flow_x.width, h = flow_x.height;
  const int radius = window_size / 2;

  // per-pixel quadratic-form products
  Image g11(w, h), g12(w, h), g22(w, h), h1(w, h), h2(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx_prior = flow_x.at(x, y);
      const double dy_prior = flow_y.at(x, y);
      const double tx = x + dx_prior;
      const double ty = y + dy_prior;

      const double a11 = 0.5 * (e1.axx.at(x, y) + e2.axx.sample(tx, ty));
      const double a12 = 0.5 * (e1.axy.at(x, y) + e2.axy.sample(tx, ty));
      const double a22 = 0.5 * (e1.ayy.at(x, y) + e2.ayy.sample(tx, ty));
      const double db_x =
          -0.5 * (e2.bx.sample(tx, ty) - e1.bx.at(x, y)) + a11 * dx_prior + a12 * dy_prior;
      const double db_y =
          -0.5 * (e2.by.sample(tx, ty) - e1.by.at(x, y)) + a12 * dx_prior + a22 * dy_prior;

      g11.ref(x, y) = a11 * a11 + a12 * a12;
      g12.ref(x, y) = a12 * (a11 + a22);
      g22.ref(x, y) = a12 * a12 + a22 * a22;
      h1.ref(x, y) = a11 * db_x + a12 * db_y;
      h2.ref(x, y) = a12 * db_x + a22 * db_y;
    }
  }

  // box-average the five accumulators (separable running sums kept simple)
  auto box = [radius](const Image& src) {
    Image tmp(src.width, src.height), out(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        double s = 0;
        for (int j = -radius; j <= radius; ++j) s += src.at(x + j, y);
        tmp.ref(x, y) = s;
      }
    }
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += tmp.at(x, y + i);
        out.ref(x, y) = s;
      }
    }
    return out;
  };
  const Image G11 = box(g11), G12 = box(g12), G22 = box(g22), H1 = box(h1), H2 = box(h2);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double det = G11.at(x, y) * G22.at(x, y) - G12.at(x, y) * G12.at(x, y);
      if (std::abs(det) < 1e-12) {
        flow_x.ref(x, y) = 0.0;
        flow_y.ref(x, y) = 0.0;
        continue;
      }
      flow_x.ref(x, y) = (G22.at(x, y) * H1.at(x, y) - G12.at(x, y) * H2.at(x, y)) / det;
      flow_y.ref(x, y) = (G11.at(x, y) * H2.at(x, y) - G12.at(x, y) * H1.at(x, y)) / det;
    }
  }
}

}  // namespace

FlowField compute_dense_flow(const GrayFrame& prev, const GrayFrame& next, const FlowParams& params) {
  prev.validate();
  next.validate();
  if (prev.width != next.width || prev.height != next.height) {
    throw std::invalid_argument("flow: frame dimension mismatch");
  }
  if (params.window_size < 3 || params.window_size % 2 == 0) {
    throw std::invalid_argument("flow: window size must be odd and >= 3");
  }
  if (params.poly_n < 3 || params.poly_n % 2 == 0) {
    throw std::invalid_argument("flow: poly_n must be odd and >= 3");
  }
  if (params.pyr_scale <= 0.0 || params.pyr_scale >= 1.0) {
    throw std::invalid_argument("flow: pyr_scale must lie in (0, 1)");
  }
  if (std::min(prev.width, prev.height) < params.window_size) {
    throw std::invalid_argument("flow: frame too small for window size " +
                                std::to_string(params.window_size));
  }

  Image a(prev.width, prev.height), b(prev.width, prev.height);
  for (std::size_t i = 0; i < prev.pixels.size(); ++i) a.data[i] = prev.pixels[i];
  for (std::size_t i = 0; i < next.pixels.size(); ++i) b.data[i] = next.pixels[i];

  // pyramid, coarsest level still larger than the window
  std::vector<Image> pyr_a{a}, pyr_b{b};
  for (int level = 1; level < std::max(1, params.pyramid_levels); ++level) {
    const Image& pa = pyr_a.back();
    const int nw = static_cast<int>(std::lround(pa.width * params.pyr_scale));
    const int nh = static_cast<int>(std::lround(pa.height * params.pyr_scale));
    if (std::min(nw, nh) < params.window_size) break;
    pyr_a.push_back(resize_bilinear(gaussian_blur3(pyr_a.back()), nw, nh));
    pyr_b.push_back(resize_bilinear(gaussian_blur3(pyr_b.back()), nw, nh));
  }

  Image flow_x, flow_y;
  for (int level = static_cast<int>(pyr_a.size()) - 1; level >= 0; --level) {
    const Image& la = pyr_a[static_cast<std::size_t>(level)];
    const Image& lb = pyr_b[static_cast<std::size_t>(level)];
    if (flow_x.width == 0) {
      flow_x = Image(la.width, la.height);
      flow_y = Image(la.width, la.height);
    } else {
      const double scale_x = static_cast<double>(la.width) / flow_x.width;
      const double scale_y = static_cast<double>(la.height) / flow_y.height;
      Image up_x = resize_bilinear(flow_x, la.width, la.height);
      Image up_y = resize_bilinear(flow_y, la.width, la.height);
      for (auto& v : up_x.data) v *= scale_x;
      for (auto& v : up_y.data) v *= scale_y;
      flow_x = std::move(up_x);
      flow_y = std::move(up_y);
    }

    const Expansion e1 = polynomial_expansion(la, params.poly_n, params.poly_sigma);
    const Expansion e2 = polynomial_expansion(lb, params.poly_n, params.poly_sigma);
    for (int it = 0; it < params.iterations; ++it) {
      update_flow(e1, e2, flow_x, flow_y, params.window_size);
    }
  }

  FlowField out;
  out.width = prev.width;
  out.height = prev.height;
  out.dx.resize(static_cast<std::size_t>(out.width) * out.height);
  out.dy.resize(out.dx.size());
  for (std::size_t i = 0; i < out.dx.size(); ++i) {
    out.dx[i] = static_cast<float>(flow_x.data[i]);
    out.dy[i] = static_cast<float>(flow_y.data[i]);
  }
  return out;
}

}  // namespace drivesafe::cues
