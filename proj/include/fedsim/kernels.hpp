#pragma once

#include <cstddef>

namespace fedsim::kernels {

// Compute kernels behind the model stack. Every kernel comes in two builds:
// the default entry point parallelized with OpenMP over independent outputs,
// and a *_serial reference with plain loops. Both use the same per-output
// summation order, so their results are bitwise identical; tests and the
// benchmark tool compare the two.

// y[m x n] = x[m x k] * w[n x k]^T + b[n]   (b may be null)
void dense_forward(const double* x, const double* w, const double* b,
                   double* y, int m, int k, int n);
void dense_forward_serial(const double* x, const double* w, const double* b,
                          double* y, int m, int k, int n);

// dw[n x k] = dy[m x n]^T * x[m x k];  db[n] = column sums of dy;
// dx[m x k] = dy * w[n x k].  Any output pointer may be null to skip it.
void dense_backward(const double* x, const double* w, const double* dy,
                    double* dw, double* db, double* dx, int m, int k, int n);
void dense_backward_serial(const double* x, const double* w, const double* dy,
                           double* dw, double* db, double* dx, int m, int k,
                           int n);

// 3x3 convolution, stride 1, zero ("same") padding.
// in [B,C,H,W], weight [O,C,3,3], bias [O] -> out [B,O,H,W]
void conv3x3_forward(const double* in, const double* weight,
                     const double* bias, double* out, int B, int C, int H,
                     int W, int O);
void conv3x3_forward_serial(const double* in, const double* weight,
                            const double* bias, double* out, int B, int C,
                            int H, int W, int O);

void conv3x3_backward(const double* in, const double* weight,
                      const double* dout, double* din, double* dweight,
                      double* dbias, int B, int C, int H, int W, int O);
void conv3x3_backward_serial(const double* in, const double* weight,
                             const double* dout, double* din, double* dweight,
                             double* dbias, int B, int C, int H, int W, int O);

// 2x2 max pooling, stride 2 (odd trailing row/col dropped).
// in [B,C,H,W] -> out [B,C,H/2,W/2]; argmax stores the flat input offset of
// each winner for the backward pass.
void maxpool2_forward(const double* in, double* out, int* argmax, int B, int C,
                      int H, int W);
void maxpool2_forward_serial(const double* in, double* out, int* argmax, int B,
                             int C, int H, int W);
void maxpool2_backward(const double* dout, const int* argmax, double* din,
                       int B, int C, int H, int W);

// Row-wise stable softmax: probs[r] = softmax(logits[r]).
void softmax_rows(const double* logits, double* probs, int rows, int cols);
void softmax_rows_serial(const double* logits, double* probs, int rows,
                         int cols);

void relu_forward(const double* x, double* y, std::size_t n);
void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);

}  // namespace fedsim::kernels
