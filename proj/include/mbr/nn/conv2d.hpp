#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "mbr/core/parallel.hpp"
#include "mbr/core/rng.hpp"
#include "mbr/core/tensor.hpp"
#include "mbr/nn/param.hpp"

namespace mbr::nn {

// Grouped 2-D convolution, bias-free, im2col + GEMM. Group g consumes input
// channels [g*Cin/G, (g+1)*Cin/G) and owns output channels
// [g*Cout/G, (g+1)*Cout/G), so groups are fully channel-local.
template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_ch, Index out_ch, Index ksize, Index stride, Index pad, Index groups = 1)
      : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride), pad_(pad), groups_(groups) {
    MBR_CHECK(groups >= 1 && in_ch % groups == 0 && out_ch % groups == 0,
              "conv groups must divide channels: in=", in_ch, " out=", out_ch, " g=", groups);
    weight_.init(out_ch_ * (in_ch_ / groups_) * k_ * k_);
  }

  void init_he(Rng& rng) {
    // kaiming-normal, fan_out mode
    const double fan_out = double(out_ch_) * k_ * k_ / double(groups_);
    const double stddev = std::sqrt(2.0 / fan_out);
    for (Index i = 0; i < weight_.value.size(); ++i)
      weight_.value[i] = S(rng.normal(0.0, stddev));
  }

  Index in_channels() const { return in_ch_; }
  Index out_channels() const { return out_ch_; }
  Index ksize() const { return k_; }
  Index stride() const { return stride_; }
  Index pad() const { return pad_; }
  Index groups() const { return groups_; }
  Index out_extent(Index d) const { return (d + 2 * pad_ - k_) / stride_ + 1; }

  Param<S>& weight() { return weight_; }
  const Param<S>& weight() const { return weight_; }

  void collect(const std::string& prefix, ParamRefs<S>& out) {
    out.push_back({prefix + ".w", &weight_});
  }

  Index param_count() const { return out_ch_ * (in_ch_ / groups_) * k_ * k_; }
  // multiply-accumulates for one sample at the given input extent
  Index macs(Index h, Index w) const {
    return out_extent(h) * out_extent(w) * param_count();
  }

  void forward(const Tensor4<S>& x, Tensor4<S>& y) const {
    check_input(x);
    const Index oh = out_extent(x.h()), ow = out_extent(x.w());
    y.resize(x.n(), out_ch_, oh, ow);
    const Index cg = in_ch_ / groups_, ocg = out_ch_ / groups_;
    MapConstRowMat<S> wm(weight_.value.data(), out_ch_, cg * k_ * k_);
    parallel_shards(x.n(), [&](int, Index b0, Index b1) {
      RowMatX<S> col(cg * k_ * k_, oh * ow);
      for (Index i = b0; i < b1; ++i) {
        for (Index g = 0; g < groups_; ++g) {
          im2col_group(x, i, g * cg, cg, col);
          y.chw(i).middleRows(g * ocg, ocg).noalias() = wm.middleRows(g * ocg, ocg) * col;
        }
      }
    });
  }

  // Accumulates weight gradient; writes input gradient into dx when non-null.
  void backward(const Tensor4<S>& x, const Tensor4<S>& dy, Tensor4<S>* dx) {
    check_input(x);
    const Index oh = out_extent(x.h()), ow = out_extent(x.w());
    MBR_CHECK(dy.n() == x.n() && dy.c() == out_ch_ && dy.h() == oh && dy.w() == ow,
              "conv backward shape mismatch");
    if (dx) dx->resize(x.n(), in_ch_, x.h(), x.w());
    const Index cg = in_ch_ / groups_, ocg = out_ch_ / groups_;
    MapConstRowMat<S> wm(weight_.value.data(), out_ch_, cg * k_ * k_);

    const int shards = shard_count(x.n());
    std::vector<VecX<S>> dw_parts(shards);
    parallel_shards(x.n(), [&](int s, Index b0, Index b1) {
      VecX<S>& dwp = dw_parts[s];
      dwp.setZero(weight_.value.size());
      MapRowMat<S> dwm(dwp.data(), out_ch_, cg * k_ * k_);
      RowMatX<S> col(cg * k_ * k_, oh * ow), dcol(cg * k_ * k_, oh * ow);
      for (Index i = b0; i < b1; ++i) {
        for (Index g = 0; g < groups_; ++g) {
          im2col_group(x, i, g * cg, cg, col);
          auto dyg = dy.chw(i).middleRows(g * ocg, ocg);
          dwm.middleRows(g * ocg, ocg).noalias() += dyg * col.transpose();
          if (dx) {
            dcol.noalias() = wm.middleRows(g * ocg, ocg).transpose() * dyg;
            col2im_group_add(dcol, *dx, i, g * cg, cg);
          }
        }
      }
    });
    for (auto& part : dw_parts) weight_.grad += part;
  }

 private:
  void check_input(const Tensor4<S>& x) const {
    MBR_CHECK(x.c() == in_ch_, "conv expects ", in_ch_, " input channels, got ", x.c());
    MBR_CHECK(x.h() + 2 * pad_ >= k_ && x.w() + 2 * pad_ >= k_, "input smaller than kernel");
  }

  void im2col_group(const Tensor4<S>& x, Index sample, Index c0, Index cg, RowMatX<S>& col) const {
    const Index h = x.h(), w = x.w();
    const Index oh = out_extent(h), ow = out_extent(w);
    const S* xs = x.sample(sample);
    for (Index c = 0; c < cg; ++c) {
      const S* chan = xs + (c0 + c) * h * w;
      for (Index ky = 0; ky < k_; ++ky)
        for (Index kx = 0; kx < k_; ++kx) {
          S* dst = col.data() + ((c * k_ + ky) * k_ + kx) * oh * ow;
          for (Index oy = 0; oy < oh; ++oy) {
            const Index iy = oy * stride_ + ky - pad_;
            S* drow = dst + oy * ow;
            if (iy < 0 || iy >= h) {
              std::memset(drow, 0, sizeof(S) * ow);
              continue;
            }
            const S* srow = chan + iy * w;
            if (stride_ == 1) {
              // valid ox range is contiguous
              const Index ox0 = std::max<Index>(0, pad_ - kx);
              const Index ox1 = std::min<Index>(ow, w + pad_ - kx);
              if (ox0 > 0) std::memset(drow, 0, sizeof(S) * ox0);
              if (ox1 > ox0) std::memcpy(drow + ox0, srow + ox0 + kx - pad_, sizeof(S) * (ox1 - ox0));
              if (ox1 < ow) std::memset(drow + ox1, 0, sizeof(S) * (ow - ox1));
            } else {
              for (Index ox = 0; ox < ow; ++ox) {
                const Index ix = ox * stride_ + kx - pad_;
                drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : S(0);
              }
            }
          }
        }
    }
  }

  void col2im_group_add(const RowMatX<S>& dcol, Tensor4<S>& dx, Index sample, Index c0,
                        Index cg) const {
    const Index h = dx.h(), w = dx.w();
    const Index oh = out_extent(h), ow = out_extent(w);
    S* xs = dx.sample(sample);
    for (Index c = 0; c < cg; ++c) {
      S* chan = xs + (c0 + c) * h * w;
      for (Index ky = 0; ky < k_; ++ky)
        for (Index kx = 0; kx < k_; ++kx) {
          const S* src = dcol.data() + ((c * k_ + ky) * k_ + kx) * oh * ow;
          for (Index oy = 0; oy < oh; ++oy) {
            const Index iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= h) continue;
            const S* srow = src + oy * ow;
            S* drow = chan + iy * w;
            for (Index ox = 0; ox < ow; ++ox) {
              const Index ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < w) drow[ix] += srow[ox];
            }
          }
        }
    }
  }

  Index in_ch_ = 0, out_ch_ = 0, k_ = 1, stride_ = 1, pad_ = 0, groups_ = 1;
  Param<S> weight_;
};

}  // namespace mbr::nn
