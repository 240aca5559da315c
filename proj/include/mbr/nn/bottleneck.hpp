#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbr/nn/conv2d.hpp"
#include "mbr/nn/mhsa.hpp"
#include "mbr/nn/norm.hpp"
#include "mbr/nn/ops.hpp"

namespace mbr::nn {

struct BlockConfig {
  Index in_ch = 0;
  Index mid_ch = 0;
  Index out_ch = 0;
  Index groups = 1;
  Index stride = 1;     // applied at the spatial op and the projection shortcut
  bool ibn = false;     // instance/batch split on the first norm
  bool mhsa = false;    // replace the 3x3 conv with self-attention
  Index heads = 4;
  Index map_h = 0, map_w = 0;  // attention map extent (mhsa only)
};

// Residual bottleneck: 1x1 reduce -> 3x3 (or MHSA) -> 1x1 expand, each
// followed by normalization, with a projection shortcut when shape changes.
template <typename S>
class Bottleneck {
 public:
  Bottleneck() = default;
  explicit Bottleneck(const BlockConfig& cfg)
      : cfg_(cfg),
        conv1_(cfg.in_ch, cfg.mid_ch, 1, 1, 0, cfg.groups),
        conv3_(cfg.mid_ch, cfg.out_ch, 1, 1, 0, cfg.groups),
        bn1_(cfg.mid_ch, cfg.ibn ? NormKind::InstanceBatch : NormKind::Batch),
        bn2_(cfg.mid_ch),
        bn3_(cfg.out_ch) {
    if (cfg.mhsa) {
      MBR_CHECK(cfg.stride == 1, "attention block requires stride 1");
      attn_.emplace(cfg.mid_ch, cfg.heads, cfg.map_h, cfg.map_w, cfg.groups);
    } else {
      conv2_.emplace(cfg.mid_ch, cfg.mid_ch, 3, cfg.stride, 1, cfg.groups);
    }
    if (cfg.in_ch != cfg.out_ch || cfg.stride != 1) {
      down_conv_.emplace(cfg.in_ch, cfg.out_ch, 1, cfg.stride, 0, cfg.groups);
      down_bn_.emplace(cfg.out_ch);
    }
  }

  const BlockConfig& config() const { return cfg_; }
  bool has_down() const { return down_conv_.has_value(); }
  bool has_attn() const { return attn_.has_value(); }
  const Conv2d<S>& conv1() const { return conv1_; }
  const Conv2d<S>& conv3() const { return conv3_; }
  const std::optional<Conv2d<S>>& conv2() const { return conv2_; }
  const std::optional<Mhsa2d<S>>& attn() const { return attn_; }
  const std::optional<Conv2d<S>>& down_conv() const { return down_conv_; }
  Conv2d<S>& conv1() { return conv1_; }
  Conv2d<S>& conv3() { return conv3_; }
  std::optional<Conv2d<S>>& conv2() { return conv2_; }
  std::optional<Mhsa2d<S>>& attn() { return attn_; }
  std::optional<Conv2d<S>>& down_conv() { return down_conv_; }
  Norm2d<S>& bn1() { return bn1_; }
  Norm2d<S>& bn2() { return bn2_; }
  Norm2d<S>& bn3() { return bn3_; }
  std::optional<Norm2d<S>>& down_bn() { return down_bn_; }

  void init(Rng& rng) {
    conv1_.init_he(rng);
    conv3_.init_he(rng);
    if (conv2_) conv2_->init_he(rng);
    if (attn_) attn_->init(rng);
    if (down_conv_) down_conv_->init_he(rng);
  }

  void collect(const std::string& p, ParamRefs<S>& out) {
    conv1_.collect(p + ".conv1", out);
    bn1_.collect(p + ".bn1", out);
    if (conv2_) conv2_->collect(p + ".conv2", out);
    if (attn_) attn_->collect(p + ".attn", out);
    bn2_.collect(p + ".bn2", out);
    conv3_.collect(p + ".conv3", out);
    bn3_.collect(p + ".bn3", out);
    if (down_conv_) {
      down_conv_->collect(p + ".down.conv", out);
      down_bn_->collect(p + ".down.bn", out);
    }
  }
  void collect_buffers(const std::string& p, BufferRefs<S>& out) {
    bn1_.collect_buffers(p + ".bn1", out);
    bn2_.collect_buffers(p + ".bn2", out);
    bn3_.collect_buffers(p + ".bn3", out);
    if (down_bn_) down_bn_->collect_buffers(p + ".down.bn", out);
  }

  const Tensor4<S>& forward(const Tensor4<S>& x, bool train) {
    conv1_.forward(x, a1_);
    bn1_.forward(a1_, r1_, train);
    relu_inplace(r1_);
    if (attn_)
      attn_->forward(r1_, a2_, train);
    else
      conv2_->forward(r1_, a2_);
    bn2_.forward(a2_, r2_, train);
    relu_inplace(r2_);
    conv3_.forward(r2_, a3_);
    bn3_.forward(a3_, out_, train);
    if (down_conv_) {
      down_conv_->forward(x, ad_);
      down_bn_->forward(ad_, short_, train);
      out_.flat() += short_.flat();
    } else {
      out_.flat() += x.flat();
    }
    relu_inplace(out_);
    return out_;
  }

  void forward_eval(const Tensor4<S>& x, Tensor4<S>& y) const {
    Tensor4<S> t1, t2;
    conv1_.forward(x, t1);
    bn1_.forward_eval(t1, t2);
    relu_inplace(t2);
    if (attn_)
      attn_->forward_eval(t2, t1);
    else
      conv2_->forward(t2, t1);
    bn2_.forward_eval(t1, t2);
    relu_inplace(t2);
    conv3_.forward(t2, t1);
    bn3_.forward_eval(t1, y);
    if (down_conv_) {
      Tensor4<S> s1, s2;
      down_conv_->forward(x, s1);
      down_bn_->forward_eval(s1, s2);
      y.flat() += s2.flat();
    } else {
      y.flat() += x.flat();
    }
    relu_inplace(y);
  }

  const Tensor4<S>& output() const { return out_; }

  // x must be the tensor given to the last train-mode forward
  void backward(const Tensor4<S>& x, const Tensor4<S>& dout, Tensor4<S>& dx) {
    ds_ = dout;
    relu_backward_inplace(out_, ds_);

    // main path
    bn3_.backward(a3_, ds_, g1_);
    conv3_.backward(r2_, g1_, &g2_);
    relu_backward_inplace(r2_, g2_);
    bn2_.backward(a2_, g2_, g1_);
    if (attn_)
      attn_->backward(r1_, g1_, &g2_);
    else
      conv2_->backward(r1_, g1_, &g2_);
    relu_backward_inplace(r1_, g2_);
    bn1_.backward(a1_, g2_, g1_);

    // shortcut into dx, then add the main path
    if (down_conv_) {
      down_bn_->backward(ad_, ds_, g2_);
      down_conv_->backward(x, g2_, &dx);
    } else {
      dx = ds_;
    }
    conv1_.backward(x, g1_, &g2_);
    dx.flat() += g2_.flat();
  }

 private:
  BlockConfig cfg_;
  Conv2d<S> conv1_, conv3_;
  std::optional<Conv2d<S>> conv2_;
  std::optional<Mhsa2d<S>> attn_;
  Norm2d<S> bn1_, bn2_, bn3_;
  std::optional<Conv2d<S>> down_conv_;
  std::optional<Norm2d<S>> down_bn_;
  // forward caches
  Tensor4<S> a1_, r1_, a2_, r2_, a3_, ad_, short_, out_;
  // backward scratch
  Tensor4<S> ds_, g1_, g2_;
};

// A sequence of bottleneck blocks (one backbone stage or one branch stage).
template <typename S>
class Stage {
 public:
  Stage() = default;
  explicit Stage(const std::vector<BlockConfig>& cfgs) {
    for (const auto& c : cfgs) blocks_.emplace_back(c);
  }

  std::vector<Bottleneck<S>>& blocks() { return blocks_; }
  const std::vector<Bottleneck<S>>& blocks() const { return blocks_; }

  void init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
  }
  void collect(const std::string& p, ParamRefs<S>& out) {
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(p + "." + std::to_string(i), out);
  }
  void collect_buffers(const std::string& p, BufferRefs<S>& out) {
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect_buffers(p + "." + std::to_string(i), out);
  }

  const Tensor4<S>& forward(const Tensor4<S>& x, bool train) {
    const Tensor4<S>* cur = &x;
    for (auto& b : blocks_) cur = &b.forward(*cur, train);
    return *cur;
  }

  void forward_eval(const Tensor4<S>& x, Tensor4<S>& y) const {
    Tensor4<S> ping;
    const Tensor4<S>* cur = &x;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      Tensor4<S> next;
      blocks_[i].forward_eval(*cur, next);
      ping = std::move(next);
      cur = &ping;
    }
    y = std::move(ping);
  }

  void backward(const Tensor4<S>& x, const Tensor4<S>& dout, Tensor4<S>& dx) {
    Tensor4<S> d = dout;
    for (Index i = Index(blocks_.size()) - 1; i >= 0; --i) {
      const Tensor4<S>& input = i == 0 ? x : blocks_[i - 1].output();
      Tensor4<S> dprev;
      blocks_[i].backward(input, d, dprev);
      d = std::move(dprev);
    }
    dx = std::move(d);
  }

 private:
  std::vector<Bottleneck<S>> blocks_;
};

}  // namespace mbr::nn
