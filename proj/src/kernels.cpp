#include "fedsim/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace fedsim::kernels {

namespace {
// Parallelism only pays off once a kernel has enough work per invocation;
// below this many output elements the pragma's if-clause keeps it serial.
constexpr long kParMinWork = 4096;
}  // namespace

void dense_forward(const double* x, const double* w, const double* b,
                   double* y, int m, int k, int n) {
  const bool par = long(m) * n * k >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* xi = x + std::size_t(i) * k;
    double* yi = y + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* wj = w + std::size_t(j) * k;
      double acc = b ? b[j] : 0.0;
      for (int t = 0; t < k; ++t) acc += xi[t] * wj[t];
      yi[j] = acc;
    }
  }
}

void dense_forward_serial(const double* x, const double* w, const double* b,
                          double* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = b ? b[j] : 0.0;
      for (int t = 0; t < k; ++t)
        acc += x[std::size_t(i) * k + t] * w[std::size_t(j) * k + t];
      y[std::size_t(i) * n + j] = acc;
    }
  }
}

void dense_backward(const double* x, const double* w, const double* dy,
                    double* dw, double* db, double* dx, int m, int k, int n) {
  if (dw) {
    const bool par = long(n) * k * m >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
    for (int j = 0; j < n; ++j) {
      double* dwj = dw + std::size_t(j) * k;
      for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
          acc += dy[std::size_t(i) * n + j] * x[std::size_t(i) * k + t];
        dwj[t] = acc;
      }
    }
  }
  if (db) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += dy[std::size_t(i) * n + j];
      db[j] = acc;
    }
  }
  if (dx) {
    const bool par = long(m) * k * n >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
    for (int i = 0; i < m; ++i) {
      const double* dyi = dy + std::size_t(i) * n;
      double* dxi = dx + std::size_t(i) * k;
      for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += dyi[j] * w[std::size_t(j) * k + t];
        dxi[t] = acc;
      }
    }
  }
}

void dense_backward_serial(const double* x, const double* w, const double* dy,
                           double* dw, double* db, double* dx, int m, int k,
                           int n) {
  if (dw) {
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
          acc += dy[std::size_t(i) * n + j] * x[std::size_t(i) * k + t];
        dw[std::size_t(j) * k + t] = acc;
      }
  }
  if (db) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += dy[std::size_t(i) * n + j];
      db[j] = acc;
    }
  }
  if (dx) {
    for (int i = 0; i < m; ++i)
      for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += dy[std::size_t(i) * n + j] * w[std::size_t(j) * k + t];
        dx[std::size_t(i) * k + t] = acc;
      }
  }
}

namespace {

inline double conv_cell(const double* in, const double* weight, double bias,
                        int C, int H, int W, int o, int h, int w0) {
  double acc = bias;
  for (int c = 0; c < C; ++c) {
    const double* plane = in + std::size_t(c) * H * W;
    const double* ker = weight + (std::size_t(o) * C + c) * 9;
    for (int kh = 0; kh < 3; ++kh) {
      const int ih = h + kh - 1;
      if (ih < 0 || ih >= H) continue;
      for (int kw = 0; kw < 3; ++kw) {
        const int iw = w0 + kw - 1;
        if (iw < 0 || iw >= W) continue;
        acc += plane[std::size_t(ih) * W + iw] * ker[kh * 3 + kw];
      }
    }
  }
  return acc;
}

}  // namespace

void conv3x3_forward(const double* in, const double* weight, const double* bias,
                     double* out, int B, int C, int H, int W, int O) {
  const bool par = long(B) * O * H * W * C * 9 >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
  for (int b = 0; b < B; ++b) {
    const double* inb = in + std::size_t(b) * C * H * W;
    double* outb = out + std::size_t(b) * O * H * W;
    for (int o = 0; o < O; ++o)
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          outb[(std::size_t(o) * H + h) * W + w0] =
              conv_cell(inb, weight, bias ? bias[o] : 0.0, C, H, W, o, h, w0);
  }
}

void conv3x3_forward_serial(const double* in, const double* weight,
                            const double* bias, double* out, int B, int C,
                            int H, int W, int O) {
  for (int b = 0; b < B; ++b) {
    const double* inb = in + std::size_t(b) * C * H * W;
    double* outb = out + std::size_t(b) * O * H * W;
    for (int o = 0; o < O; ++o)
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          outb[(std::size_t(o) * H + h) * W + w0] =
              conv_cell(inb, weight, bias ? bias[o] : 0.0, C, H, W, o, h, w0);
  }
}

namespace {

// din for one sample: full correlation of dout with flipped kernel.
inline void conv_backward_input_one(const double* weight, const double* doutb,
                                    double* dinb, int C, int H, int W, int O) {
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w0 = 0; w0 < W; ++w0) {
        double acc = 0.0;
        for (int o = 0; o < O; ++o) {
          const double* ker = weight + (std::size_t(o) * C + c) * 9;
          const double* dplane = doutb + std::size_t(o) * H * W;
          for (int kh = 0; kh < 3; ++kh) {
            const int oh = h - kh + 1;
            if (oh < 0 || oh >= H) continue;
            for (int kw = 0; kw < 3; ++kw) {
              const int ow = w0 - kw + 1;
              if (ow < 0 || ow >= W) continue;
              acc += dplane[std::size_t(oh) * W + ow] * ker[kh * 3 + kw];
            }
          }
        }
        dinb[(std::size_t(c) * H + h) * W + w0] = acc;
      }
}

inline void conv_backward_weight_cell(const double* in, const double* dout,
                                      double* dweight, int B, int C, int H,
                                      int W, int O, int o, int c, int kh,
                                      int kw) {
  double acc = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* plane = in + (std::size_t(b) * C + c) * H * W;
    const double* dplane = dout + (std::size_t(b) * O + o) * H * W;
    for (int h = 0; h < H; ++h) {
      const int ih = h + kh - 1;
      if (ih < 0 || ih >= H) continue;
      for (int w0 = 0; w0 < W; ++w0) {
        const int iw = w0 + kw - 1;
        if (iw < 0 || iw >= W) continue;
        acc += plane[std::size_t(ih) * W + iw] * dplane[std::size_t(h) * W + w0];
      }
    }
  }
  dweight[(std::size_t(o) * C + c) * 9 + kh * 3 + kw] = acc;
}

}  // namespace

void conv3x3_backward(const double* in, const double* weight,
                      const double* dout, double* din, double* dweight,
                      double* dbias, int B, int C, int H, int W, int O) {
  if (din) {
    const bool par = long(B) * C * H * W * O * 9 >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
    for (int b = 0; b < B; ++b)
      conv_backward_input_one(weight, dout + std::size_t(b) * O * H * W,
                              din + std::size_t(b) * C * H * W, C, H, W, O);
  }
  if (dweight) {
    const int cells = O * C * 9;
    const bool par = long(cells) * B * H * W >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
    for (int cell = 0; cell < cells; ++cell) {
      const int o = cell / (C * 9);
      const int c = (cell / 9) % C;
      const int kh = (cell % 9) / 3;
      const int kw = cell % 3;
      conv_backward_weight_cell(in, dout, dweight, B, C, H, W, O, o, c, kh, kw);
    }
  }
  if (dbias) {
    for (int o = 0; o < O; ++o) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* dplane = dout + (std::size_t(b) * O + o) * H * W;
        for (int i = 0; i < H * W; ++i) acc += dplane[i];
      }
      dbias[o] = acc;
    }
  }
}

void conv3x3_backward_serial(const double* in, const double* weight,
                             const double* dout, double* din, double* dweight,
                             double* dbias, int B, int C, int H, int W, int O) {
  if (din) {
    for (int b = 0; b < B; ++b)
      conv_backward_input_one(weight, dout + std::size_t(b) * O * H * W,
                              din + std::size_t(b) * C * H * W, C, H, W, O);
  }
  if (dweight) {
    for (int o = 0; o < O; ++o)
      for (int c = 0; c < C; ++c)
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw)
            conv_backward_weight_cell(in, dout, dweight, B, C, H, W, O, o, c,
                                      kh, kw);
  }
  if (dbias) {
    for (int o = 0; o < O; ++o) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* dplane = dout + (std::size_t(b) * O + o) * H * W;
        for (int i = 0; i < H * W; ++i) acc += dplane[i];
      }
      dbias[o] = acc;
    }
  }
}

void maxpool2_forward(const double* in, double* out, int* argmax, int B, int C,
                      int H, int W) {
  const int Ho = H / 2, Wo = W / 2;
  const bool par = long(B) * C * Ho * Wo >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
  for (int bc = 0; bc < B * C; ++bc) {
    const double* plane = in + std::size_t(bc) * H * W;
    double* oplane = out + std::size_t(bc) * Ho * Wo;
    int* aplane = argmax + std::size_t(bc) * Ho * Wo;
    for (int h = 0; h < Ho; ++h)
      for (int w0 = 0; w0 < Wo; ++w0) {
        int best = (2 * h) * W + 2 * w0;
        double bv = plane[best];
        for (int dh = 0; dh < 2; ++dh)
          for (int dw = 0; dw < 2; ++dw) {
            const int idx = (2 * h + dh) * W + 2 * w0 + dw;
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        oplane[std::size_t(h) * Wo + w0] = bv;
        aplane[std::size_t(h) * Wo + w0] = best;
      }
  }
}

void maxpool2_forward_serial(const double* in, double* out, int* argmax, int B,
                             int C, int H, int W) {
  const int Ho = H / 2, Wo = W / 2;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* plane = in + std::size_t(bc) * H * W;
    double* oplane = out + std::size_t(bc) * Ho * Wo;
    int* aplane = argmax + std::size_t(bc) * Ho * Wo;
    for (int h = 0; h < Ho; ++h)
      for (int w0 = 0; w0 < Wo; ++w0) {
        int best = (2 * h) * W + 2 * w0;
        double bv = plane[best];
        for (int dh = 0; dh < 2; ++dh)
          for (int dw = 0; dw < 2; ++dw) {
            const int idx = (2 * h + dh) * W + 2 * w0 + dw;
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        oplane[std::size_t(h) * Wo + w0] = bv;
        aplane[std::size_t(h) * Wo + w0] = best;
      }
  }
}

void maxpool2_backward(const double* dout, const int* argmax, double* din,
                       int B, int C, int H, int W) {
  const int Ho = H / 2, Wo = W / 2;
  std::fill(din, din + std::size_t(B) * C * H * W, 0.0);
  for (int bc = 0; bc < B * C; ++bc) {
    const double* dplane = dout + std::size_t(bc) * Ho * Wo;
    const int* aplane = argmax + std::size_t(bc) * Ho * Wo;
    double* iplane = din + std::size_t(bc) * H * W;
    for (int i = 0; i < Ho * Wo; ++i) iplane[aplane[i]] += dplane[i];
  }
}

void softmax_rows(const double* logits, double* probs, int rows, int cols) {
  const bool par = long(rows) * cols >= kParMinWork;
#pragma omp parallel for if (par) schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* z = logits + std::size_t(r) * cols;
    double* p = probs + std::size_t(r) * cols;
    double mx = z[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, z[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(z[c] - mx);
      sum += p[c];
    }
    for (int c = 0; c < cols; ++c) p[c] /= sum;
  }
}

void softmax_rows_serial(const double* logits, double* probs, int rows,
                         int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* z = logits + std::size_t(r) * cols;
    double* p = probs + std::size_t(r) * cols;
    double mx = z[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, z[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(z[c] - mx);
      sum += p[c];
    }
    for (int c = 0; c < cols; ++c) p[c] /= sum;
  }
}

void relu_forward(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

}  // namespace fedsim::kernels
