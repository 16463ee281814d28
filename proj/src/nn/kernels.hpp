#pragma once

#include <cstddef>
#include <vector>

// Row-major dense kernels used by the convolution layers. All accumulate into C.
namespace hqa::kernels {

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
                    const double* __restrict b, double* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A^T * B, with A stored k x m and B stored k x n
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
                    const double* __restrict b, double* __restrict c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// dst[cols x rows] = src[rows x cols]^T
inline void transpose(std::size_t rows, std::size_t cols, const double* __restrict src,
                      double* __restrict dst) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile)
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t r1 = r0 + tile < rows ? r0 + tile : rows;
      const std::size_t c1 = c0 + tile < cols ? c0 + tile : cols;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int in_side = 0;
  int out_side = 0;

  std::size_t patch() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
  std::size_t out_pixels() const { return static_cast<std::size_t>(out_side) * out_side; }
  std::size_t in_pixels() const { return static_cast<std::size_t>(in_side) * in_side; }
  bool pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

inline void im2col(const ConvGeometry& g, const double* in, double* col) {
  const int k = g.kernel;
  const std::size_t op = g.out_pixels();
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const double* plane = in + static_cast<std::size_t>(ci) * g.in_pixels();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * op;
        for (int oy = 0; oy < g.out_side; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_side;
          if (iy < 0 || iy >= g.in_side) {
            for (int ox = 0; ox < g.out_side; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.in_side;
          for (int ox = 0; ox < g.out_side; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            dst[ox] = (ix < 0 || ix >= g.in_side) ? 0.0 : src[ix];
          }
        }
      }
  }
}

inline void col2im_add(const ConvGeometry& g, const double* col, double* in) {
  const int k = g.kernel;
  const std::size_t op = g.out_pixels();
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* plane = in + static_cast<std::size_t>(ci) * g.in_pixels();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * op;
        for (int oy = 0; oy < g.out_side; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_side) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_side;
          double* dst = plane + static_cast<std::size_t>(iy) * g.in_side;
          for (int ox = 0; ox < g.out_side; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.in_side) dst[ix] += src[ox];
          }
        }
      }
  }
}

/// out = relu(W * in + b) for one sample. col is scratch space.
inline void conv_relu_forward(const ConvGeometry& g, const double* in, const double* w,
                              const double* bias, double* out, std::vector<double>& col) {
  const std::size_t op = g.out_pixels();
  for (int oc = 0; oc < g.out_channels; ++oc)
    for (std::size_t p = 0; p < op; ++p) out[oc * op + p] = bias[oc];
  const double* src = in;
  if (!g.pointwise()) {
    col.resize(g.patch() * op);
    im2col(g, in, col.data());
    src = col.data();
  }
  gemm_nn(g.out_channels, op, g.patch(), w, src, out);
  for (std::size_t i = 0; i < static_cast<std::size_t>(g.out_channels) * op; ++i)
    if (out[i] < 0.0) out[i] = 0.0;
}

/// Backward through relu(conv) for one sample. dout is the gradient wrt the
/// post-ReLU output and is masked in place. din (optional) is accumulated.
inline void conv_relu_backward(const ConvGeometry& g, const double* in, const double* w,
                               const double* out, double* dout, double* dw, double* db,
                               double* din, std::vector<double>& col,
                               std::vector<double>& scratch) {
  const std::size_t op = g.out_pixels();
  const std::size_t oc_total = static_cast<std::size_t>(g.out_channels) * op;
  for (std::size_t i = 0; i < oc_total; ++i)
    if (out[i] <= 0.0) dout[i] = 0.0;
  for (int oc = 0; oc < g.out_channels; ++oc) {
    double s = 0.0;
    for (std::size_t p = 0; p < op; ++p) s += dout[oc * op + p];
    db[oc] += s;
  }
  const double* src = in;
  if (!g.pointwise()) {
    col.resize(g.patch() * op);
    im2col(g, in, col.data());
    src = col.data();
  }
  scratch.resize(g.patch() * op);
  transpose(g.patch(), op, src, scratch.data());
  gemm_nn(g.out_channels, g.patch(), op, dout, scratch.data(), dw);
  if (din == nullptr) return;
  if (g.pointwise()) {
    gemm_tn(g.patch(), op, g.out_channels, w, dout, din);
  } else {
    std::fill(col.begin(), col.end(), 0.0);
    gemm_tn(g.patch(), op, g.out_channels, w, dout, col.data());
    col2im_add(g, col.data(), din);
  }
}

}  // namespace hqa::kernels
