#pragma once

#include <limits>
#include <vector>

#include "mbr/core/parallel.hpp"
#include "mbr/core/tensor.hpp"

namespace mbr::nn {

template <typename S>
void relu_inplace(Tensor4<S>& t) {
  auto f = t.flat();
  f = f.cwiseMax(S(0));
}

// grad *= (out > 0); `out` is the post-activation tensor
template <typename S>
void relu_backward_inplace(const Tensor4<S>& out, Tensor4<S>& grad) {
  const S* o = out.data();
  S* g = grad.data();
  const Index n = out.size();
  for (Index i = 0; i < n; ++i)
    if (o[i] <= S(0)) g[i] = S(0);
}

// 3x3/stride-2 style max pooling with argmax bookkeeping for backward.
template <typename S>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  MaxPool2d(Index ksize, Index stride, Index pad) : k_(ksize), stride_(stride), pad_(pad) {}

  Index out_extent(Index d) const { return (d + 2 * pad_ - k_) / stride_ + 1; }

  void forward(const Tensor4<S>& x, Tensor4<S>& y, bool train) {
    const Index oh = out_extent(x.h()), ow = out_extent(x.w());
    y.resize(x.n(), x.c(), oh, ow);
    if (train) argmax_.assign(y.size(), -1);
    in_h_ = x.h();
    in_w_ = x.w();
    run(x, y, train ? argmax_.data() : nullptr);
  }

  void forward_eval(const Tensor4<S>& x, Tensor4<S>& y) const {
    const Index oh = out_extent(x.h()), ow = out_extent(x.w());
    y.resize(x.n(), x.c(), oh, ow);
    run(x, y, nullptr);
  }

  void backward(const Tensor4<S>& dy, Tensor4<S>& dx) const {
    MBR_CHECK(!argmax_.empty(), "pool backward without train forward");
    dx.resize(dy.n(), dy.c(), in_h_, in_w_);
    const Index hw = in_h_ * in_w_;
    const Index ohw = dy.spatial();
    for (Index i = 0; i < dy.n(); ++i)
      for (Index c = 0; c < dy.c(); ++c) {
        const S* src = dy.sample(i) + c * ohw;
        S* dst = dx.sample(i) + c * hw;
        const int* am = argmax_.data() + (i * dy.c() + c) * ohw;
        for (Index o = 0; o < ohw; ++o) dst[am[o]] += src[o];
      }
  }

 private:
  void run(const Tensor4<S>& x, Tensor4<S>& y, int* argmax) const {
    const Index oh = y.h(), ow = y.w(), h = x.h(), w = x.w();
    parallel_for(x.n(), [&](Index i) {
      for (Index c = 0; c < x.c(); ++c) {
        const S* chan = x.sample(i) + c * h * w;
        S* out = y.sample(i) + c * oh * ow;
        int* am = argmax ? argmax + (i * x.c() + c) * oh * ow : nullptr;
        for (Index oy = 0; oy < oh; ++oy)
          for (Index ox = 0; ox < ow; ++ox) {
            S best = -std::numeric_limits<S>::infinity();
            Index best_idx = -1;
            for (Index ky = 0; ky < k_; ++ky) {
              const Index iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= h) continue;
              for (Index kx = 0; kx < k_; ++kx) {
                const Index ix = ox * stride_ + kx - pad_;
                if (ix < 0 || ix >= w) continue;
                const S v = chan[iy * w + ix];
                if (v > best) {
                  best = v;
                  best_idx = iy * w + ix;
                }
              }
            }
            out[oy * ow + ox] = best;
            if (am) am[oy * ow + ox] = int(best_idx);
          }
      }
    });
  }

  Index k_ = 3, stride_ = 2, pad_ = 1;
  Index in_h_ = 0, in_w_ = 0;
  std::vector<int> argmax_;
};

// spatial mean per channel -> (N, C)
template <typename S>
void global_avg_pool(const Tensor4<S>& x, RowMatX<S>& out) {
  out.resize(x.n(), x.c());
  const S inv = S(1) / S(x.spatial());
  for (Index i = 0; i < x.n(); ++i) out.row(i) = x.chw(i).rowwise().sum().transpose() * inv;
}

template <typename S>
void global_avg_pool_backward(const RowMatX<S>& dout, Index h, Index w, Tensor4<S>& dx) {
  dx.resize(dout.rows(), dout.cols(), h, w);
  const S inv = S(1) / S(h * w);
  for (Index i = 0; i < dout.rows(); ++i) {
    auto m = dx.chw(i);
    for (Index c = 0; c < dout.cols(); ++c) m.row(c).setConstant(dout(i, c) * inv);
  }
}

// row-wise x / (||x|| + eps); returns norms for the backward pass
template <typename S>
void l2_normalize_rows(const RowMatX<S>& x, RowMatX<S>& y, VecX<S>& norms, S eps = S(1e-12)) {
  y.resize(x.rows(), x.cols());
  norms.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const S n = x.row(i).norm();
    norms[i] = n;
    y.row(i) = x.row(i) / (n + eps);
  }
}

template <typename S>
void l2_normalize_rows_backward(const RowMatX<S>& x, const VecX<S>& norms, const RowMatX<S>& dy,
                                RowMatX<S>& dx, S eps = S(1e-12)) {
  dx.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const S r = norms[i], re = r + eps;
    const S xdy = x.row(i).dot(dy.row(i));
    if (r > S(0))
      dx.row(i) = dy.row(i) / re - x.row(i) * (xdy / (r * re * re));
    else
      dx.row(i) = dy.row(i) / re;
  }
}

}  // namespace mbr::nn
