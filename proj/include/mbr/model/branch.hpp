#pragma once

#include <string>

#include "mbr/model/spec.hpp"
#include "mbr/model/backbone.hpp"
#include "mbr/nn/ops.hpp"

namespace mbr::model {

// One stage-4 branch on a slice of the shared feature map. The whole stage is
// grouped, so group g sees only its input channel slice and owns output
// channels [g*D/G, (g+1)*D/G); the per-group GAP slices are the unit
// embeddings.
template <typename S>
class Branch {
 public:
  Branch() = default;
  Branch(const BranchSpec& bspec, Index map_h, Index map_w, Index stride) : bspec_(bspec) {
    const Index mid = bspec.out_channels / 4;
    std::vector<BlockConfig> cfgs;
    for (Index i = 0; i < 3; ++i) {
      BlockConfig c;
      c.in_ch = i == 0 ? bspec.in_width() : bspec.out_channels;
      c.mid_ch = mid;
      c.out_ch = bspec.out_channels;
      c.groups = bspec.groups;
      c.stride = i == 0 ? stride : 1;
      if (bspec.block == BlockKind::BoT) {
        c.mhsa = true;
        c.heads = 4;
        c.map_h = map_h;
        c.map_w = map_w;
      }
      cfgs.push_back(c);
    }
    stage_ = nn::Stage<S>(cfgs);
  }

  const BranchSpec& bspec() const { return bspec_; }
  nn::Stage<S>& stage() { return stage_; }
  const nn::Stage<S>& stage() const { return stage_; }

  void init(Rng& rng) { stage_.init(rng); }
  void collect(const std::string& prefix, nn::ParamRefs<S>& out) {
    stage_.collect(prefix + ".stage", out);
  }
  void collect_buffers(const std::string& prefix, nn::BufferRefs<S>& out) {
    stage_.collect_buffers(prefix + ".stage", out);
  }

  // raw GAP embedding, (B, out_channels)
  const RowMatX<S>& forward(const Tensor4<S>& fl3, bool train) {
    slice_channels(fl3, bspec_.in_begin, bspec_.in_end, in_);
    const Tensor4<S>& feat = stage_.forward(in_, train);
    out_h_ = feat.h();
    out_w_ = feat.w();
    nn::global_avg_pool(feat, emb_);
    return emb_;
  }

  RowMatX<S> forward_eval(const Tensor4<S>& fl3) const {
    Tensor4<S> in, feat;
    slice_channels(fl3, bspec_.in_begin, bspec_.in_end, in);
    stage_.forward_eval(in, feat);
    RowMatX<S> emb;
    nn::global_avg_pool(feat, emb);
    return emb;
  }

  // accumulates this branch's contribution into d_fl3
  void backward(const RowMatX<S>& demb, Tensor4<S>& d_fl3) {
    Tensor4<S> dfeat, din;
    nn::global_avg_pool_backward(demb, out_h_, out_w_, dfeat);
    stage_.backward(in_, dfeat, din);
    add_into_channel_slice(din, bspec_.in_begin, d_fl3);
  }

 private:
  BranchSpec bspec_;
  nn::Stage<S> stage_;
  Tensor4<S> in_;
  RowMatX<S> emb_;
  Index out_h_ = 0, out_w_ = 0;
};

}  // namespace mbr::model
