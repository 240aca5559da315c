#pragma once

#include <cmath>
#include <vector>

#include "mbr/core/parallel.hpp"
#include "mbr/core/rng.hpp"
#include "mbr/core/tensor.hpp"
#include "mbr/nn/conv2d.hpp"

namespace mbr::nn {

// All-to-all multi-head self-attention over the 2-D positions of a feature
// map, with learnable per-axis position embeddings sized to a fixed map
// extent. Query/key/value are grouped 1x1 convolutions; attention runs
// independently per channel group (so grouped branches stay channel-local)
// and per head. logits(i,j) = q_i . (k_j + p_j) / sqrt(d_head), where
// p = rel_h[y] + rel_w[x].
template <typename S>
class Mhsa2d {
 public:
  Mhsa2d() = default;
  Mhsa2d(Index channels, Index heads, Index map_h, Index map_w, Index groups = 1)
      : channels_(channels), heads_(heads), map_h_(map_h), map_w_(map_w), groups_(groups),
        q_(channels, channels, 1, 1, 0, groups),
        k_(channels, channels, 1, 1, 0, groups),
        v_(channels, channels, 1, 1, 0, groups) {
    MBR_CHECK(channels % groups == 0, "channels not divisible by groups");
    const Index cg = channels / groups;
    MBR_CHECK(cg % heads == 0, "per-group channels ", cg, " not divisible by ", heads, " heads");
    rel_h_.init(channels_ * map_h_);
    rel_w_.init(channels_ * map_w_);
  }

  void init(Rng& rng) {
    q_.init_he(rng);
    k_.init_he(rng);
    v_.init_he(rng);
    for (Index i = 0; i < rel_h_.value.size(); ++i) rel_h_.value[i] = S(rng.normal(0.0, 0.02));
    for (Index i = 0; i < rel_w_.value.size(); ++i) rel_w_.value[i] = S(rng.normal(0.0, 0.02));
  }

  Index channels() const { return channels_; }
  Index heads() const { return heads_; }
  Index groups() const { return groups_; }
  Index map_h() const { return map_h_; }
  Index map_w() const { return map_w_; }
  Conv2d<S>& query() { return q_; }
  Conv2d<S>& key() { return k_; }
  Conv2d<S>& value() { return v_; }
  const Conv2d<S>& query() const { return q_; }
  const Conv2d<S>& key() const { return k_; }
  const Conv2d<S>& value() const { return v_; }

  Index pos_param_count() const { return channels_ * (map_h_ + map_w_); }
  // attention multiply-accumulates per sample: content (qk), position (qp)
  // and aggregation (Av) products
  Index attn_macs() const {
    const Index n = map_h_ * map_w_;
    return 3 * n * n * channels_;
  }

  void collect(const std::string& prefix, ParamRefs<S>& out) {
    q_.collect(prefix + ".q", out);
    k_.collect(prefix + ".k", out);
    v_.collect(prefix + ".v", out);
    out.push_back({prefix + ".rel_h", &rel_h_});
    out.push_back({prefix + ".rel_w", &rel_w_});
  }

  void forward(const Tensor4<S>& x, Tensor4<S>& y, bool train) {
    check_map(x);
    q_.forward(x, qt_);
    k_.forward(x, kt_);
    v_.forward(x, vt_);
    build_pos();
    const Index cg = channels_ / groups_, dh = cg / heads_, n = map_h_ * map_w_;
    const S scale = S(1) / std::sqrt(S(dh));
    y.resize(x.n(), channels_, map_h_, map_w_);
    if (train) attn_.assign(x.n() * groups_ * heads_, RowMatX<S>());
    parallel_for(x.n(), [&](Index i) {
      RowMatX<S> logits(n, n);
      for (Index g = 0; g < groups_; ++g)
        for (Index hd = 0; hd < heads_; ++hd) {
          const Index row0 = g * cg + hd * dh;
          auto qh = qt_.chw(i).middleRows(row0, dh);
          auto kh = kt_.chw(i).middleRows(row0, dh);
          auto vh = vt_.chw(i).middleRows(row0, dh);
          const RowMatX<S>& p = pos_[g * heads_ + hd];
          logits.noalias() = qh.transpose() * (kh + p);
          logits *= scale;
          softmax_rows(logits);
          y.chw(i).middleRows(row0, dh).noalias() = vh * logits.transpose();
          if (train) attn_[(i * groups_ + g) * heads_ + hd] = logits;
        }
    });
    if (!train) {
      qt_.resize(0, 0, 0, 0);
      kt_.resize(0, 0, 0, 0);
      vt_.resize(0, 0, 0, 0);
    }
  }

  void forward_eval(const Tensor4<S>& x, Tensor4<S>& y) const {
    check_map(x);
    Tensor4<S> qt, kt, vt;
    q_.forward(x, qt);
    k_.forward(x, kt);
    v_.forward(x, vt);
    std::vector<RowMatX<S>> pos = make_pos();
    const Index cg = channels_ / groups_, dh = cg / heads_, n = map_h_ * map_w_;
    const S scale = S(1) / std::sqrt(S(dh));
    y.resize(x.n(), channels_, map_h_, map_w_);
    parallel_for(x.n(), [&](Index i) {
      RowMatX<S> logits(n, n);
      for (Index g = 0; g < groups_; ++g)
        for (Index hd = 0; hd < heads_; ++hd) {
          const Index row0 = g * cg + hd * dh;
          logits.noalias() = qt.chw(i).middleRows(row0, dh).transpose() *
                             (kt.chw(i).middleRows(row0, dh) + pos[g * heads_ + hd]);
          logits *= scale;
          softmax_rows(logits);
          y.chw(i).middleRows(row0, dh).noalias() =
              vt.chw(i).middleRows(row0, dh) * logits.transpose();
        }
    });
  }

  void backward(const Tensor4<S>& x, const Tensor4<S>& dy, Tensor4<S>* dx) {
    MBR_CHECK(!attn_.empty(), "mhsa backward without train forward");
    const Index cg = channels_ / groups_, dh = cg / heads_, n = map_h_ * map_w_;
    const S scale = S(1) / std::sqrt(S(dh));
    Tensor4<S> dqt(x.n(), channels_, map_h_, map_w_);
    Tensor4<S> dkt(x.n(), channels_, map_h_, map_w_);
    Tensor4<S> dvt(x.n(), channels_, map_h_, map_w_);

    const int shards = shard_count(x.n());
    std::vector<std::vector<RowMatX<S>>> dpos_parts(shards);
    parallel_shards(x.n(), [&](int s, Index b0, Index b1) {
      auto& dpos = dpos_parts[s];
      dpos.assign(groups_ * heads_, RowMatX<S>::Zero(dh, n));
      RowMatX<S> dA(n, n), dL(n, n);
      for (Index i = b0; i < b1; ++i)
        for (Index g = 0; g < groups_; ++g)
          for (Index hd = 0; hd < heads_; ++hd) {
            const Index row0 = g * cg + hd * dh;
            const RowMatX<S>& a = attn_[(i * groups_ + g) * heads_ + hd];
            auto qh = qt_.chw(i).middleRows(row0, dh);
            auto kh = kt_.chw(i).middleRows(row0, dh);
            auto vh = vt_.chw(i).middleRows(row0, dh);
            auto dyh = dy.chw(i).middleRows(row0, dh);
            // out = v A^T
            dvt.chw(i).middleRows(row0, dh).noalias() = dyh * a;
            dA.noalias() = dyh.transpose() * vh;
            // softmax backward per row
            for (Index r = 0; r < n; ++r) {
              const S dot = dA.row(r).dot(a.row(r));
              dL.row(r) = (a.row(r).array() * (dA.row(r).array() - dot)).matrix();
            }
            dL *= scale;
            const RowMatX<S>& p = pos_[g * heads_ + hd];
            dqt.chw(i).middleRows(row0, dh).noalias() = (kh + p) * dL.transpose();
            RowMatX<S> dkp = qh * dL;
            dkt.chw(i).middleRows(row0, dh) = dkp;
            dpos[g * heads_ + hd] += dkp;
          }
    });

    // position-embedding gradients, reduced in shard order
    for (int s = 0; s < shards; ++s)
      for (Index g = 0; g < groups_; ++g)
        for (Index hd = 0; hd < heads_; ++hd) {
          const RowMatX<S>& dp = dpos_parts[s][g * heads_ + hd];
          if (dp.size() == 0) continue;
          const Index row0 = (g * (channels_ / groups_)) + hd * dh;
          for (Index d = 0; d < dh; ++d) {
            const Index c = row0 + d;
            for (Index yy = 0; yy < map_h_; ++yy)
              for (Index xx = 0; xx < map_w_; ++xx) {
                const S v = dp(d, yy * map_w_ + xx);
                rel_h_.grad[c * map_h_ + yy] += v;
                rel_w_.grad[c * map_w_ + xx] += v;
              }
          }
        }

    if (dx) {
      Tensor4<S> tmp;
      q_.backward(x, dqt, dx);
      k_.backward(x, dkt, &tmp);
      dx->flat() += tmp.flat();
      v_.backward(x, dvt, &tmp);
      dx->flat() += tmp.flat();
    } else {
      q_.backward(x, dqt, nullptr);
      k_.backward(x, dkt, nullptr);
      v_.backward(x, dvt, nullptr);
    }
  }

  Param<S>& rel_h() { return rel_h_; }
  Param<S>& rel_w() { return rel_w_; }

 private:
  void check_map(const Tensor4<S>& x) const {
    MBR_CHECK(x.c() == channels_, "mhsa channel mismatch");
    MBR_CHECK(x.h() == map_h_ && x.w() == map_w_,
              "mhsa position embeddings sized for ", map_h_, "x", map_w_, ", got ", x.h(), "x",
              x.w());
  }

  static void softmax_rows(RowMatX<S>& m) {
    for (Index r = 0; r < m.rows(); ++r) {
      auto row = m.row(r).array();
      row -= row.maxCoeff();
      row = row.exp();
      row /= row.sum();
    }
  }

  std::vector<RowMatX<S>> make_pos() const {
    const Index cg = channels_ / groups_, dh = cg / heads_, n = map_h_ * map_w_;
    std::vector<RowMatX<S>> pos(groups_ * heads_);
    for (Index g = 0; g < groups_; ++g)
      for (Index hd = 0; hd < heads_; ++hd) {
        RowMatX<S>& p = pos[g * heads_ + hd];
        p.resize(dh, n);
        const Index row0 = g * cg + hd * dh;
        for (Index d = 0; d < dh; ++d) {
          const Index c = row0 + d;
          for (Index yy = 0; yy < map_h_; ++yy)
            for (Index xx = 0; xx < map_w_; ++xx)
              p(d, yy * map_w_ + xx) =
                  rel_h_.value[c * map_h_ + yy] + rel_w_.value[c * map_w_ + xx];
        }
      }
    return pos;
  }

  void build_pos() { pos_ = make_pos(); }

  Index channels_ = 0, heads_ = 4, map_h_ = 0, map_w_ = 0, groups_ = 1;
  Conv2d<S> q_, k_, v_;
  Param<S> rel_h_, rel_w_;
  // forward caches (training)
  Tensor4<S> qt_, kt_, vt_;
  std::vector<RowMatX<S>> attn_;
  std::vector<RowMatX<S>> pos_;
};

}  // namespace mbr::nn
