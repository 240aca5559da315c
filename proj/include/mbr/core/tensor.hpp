#pragma once

#include <Eigen/Dense>

#include <vector>

#include "mbr/core/common.hpp"

namespace mbr {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using MapRowMat = Eigen::Map<RowMatX<S>>;
template <typename S>
using MapConstRowMat = Eigen::Map<const RowMatX<S>>;
template <typename S>
using MapVec = Eigen::Map<VecX<S>>;
template <typename S>
using MapConstVec = Eigen::Map<const VecX<S>>;

// Dense NCHW feature batch. Each sample is channel-major, so sample i views
// naturally as a (C, H*W) row-major matrix for GEMM-based layers. Storage is
// Eigen-allocated: every instance shares the same base alignment, which keeps
// vectorized reductions bitwise reproducible across instances and threads.
template <typename S>
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(Index n, Index c, Index h, Index w) { resize(n, c, h, w); }

  void resize(Index n, Index c, Index h, Index w) {
    n_ = n; c_ = c; h_ = h; w_ = w;
    data_.setZero(n * c * h * w);
  }
  void set_zero() { data_.setZero(); }

  Index n() const { return n_; }
  Index c() const { return c_; }
  Index h() const { return h_; }
  Index w() const { return w_; }
  Index spatial() const { return h_ * w_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S* sample(Index i) { return data_.data() + i * c_ * h_ * w_; }
  const S* sample(Index i) const { return data_.data() + i * c_ * h_ * w_; }

  // (C, H*W) view of one sample
  MapRowMat<S> chw(Index i) { return MapRowMat<S>(sample(i), c_, h_ * w_); }
  MapConstRowMat<S> chw(Index i) const { return MapConstRowMat<S>(sample(i), c_, h_ * w_); }

  // flat views
  MapVec<S> flat() { return MapVec<S>(data_.data(), size()); }
  MapConstVec<S> flat() const { return MapConstVec<S>(data_.data(), size()); }

  S& at(Index i, Index ch, Index y, Index x) {
    return data_[((i * c_ + ch) * h_ + y) * w_ + x];
  }
  S at(Index i, Index ch, Index y, Index x) const {
    return data_[((i * c_ + ch) * h_ + y) * w_ + x];
  }

  bool same_shape(const Tensor4& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

 private:
  Index n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  VecX<S> data_;
};

// Copies a channel slice [c0, c1) of `src` into `dst`.
template <typename S>
void slice_channels(const Tensor4<S>& src, Index c0, Index c1, Tensor4<S>& dst) {
  MBR_CHECK(c0 >= 0 && c1 <= src.c() && c0 < c1, "bad channel slice");
  dst.resize(src.n(), c1 - c0, src.h(), src.w());
  for (Index i = 0; i < src.n(); ++i)
    dst.chw(i) = src.chw(i).middleRows(c0, c1 - c0);
}

// dst[:, c0:c1] += src
template <typename S>
void add_into_channel_slice(const Tensor4<S>& src, Index c0, Tensor4<S>& dst) {
  for (Index i = 0; i < src.n(); ++i)
    dst.chw(i).middleRows(c0, src.c()) += src.chw(i);
}

}  // namespace mbr
