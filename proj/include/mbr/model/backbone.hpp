#pragma once

#include <string>
#include <vector>

#include "mbr/nn/bottleneck.hpp"

namespace mbr::model {

using nn::BlockConfig;

inline std::vector<BlockConfig> resnet_stage(Index in_ch, Index mid_ch, Index out_ch,
                                             Index blocks, Index stride, bool ibn) {
  std::vector<BlockConfig> cfgs;
  for (Index i = 0; i < blocks; ++i) {
    BlockConfig c;
    c.in_ch = i == 0 ? in_ch : out_ch;
    c.mid_ch = mid_ch;
    c.out_ch = out_ch;
    c.stride = i == 0 ? stride : 1;
    c.ibn = ibn;
    cfgs.push_back(c);
  }
  return cfgs;
}

// Shared trunk: stem + stages 1-3 of a ResNet50, optionally with the
// instance/batch norm mix in the residual blocks of those stages.
template <typename S>
class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(const std::string& variant)
      : stem_conv_(3, 64, 7, 2, 3),
        stem_bn_(64),
        pool_(3, 2, 1),
        ibn_(variant == "r50_ibn"),
        layer1_(resnet_stage(64, 64, 256, 3, 1, variant == "r50_ibn")),
        layer2_(resnet_stage(256, 128, 512, 4, 2, variant == "r50_ibn")),
        layer3_(resnet_stage(512, 256, 1024, 6, 2, variant == "r50_ibn")) {}

  void init(Rng& rng) {
    stem_conv_.init_he(rng);
    layer1_.init(rng);
    layer2_.init(rng);
    layer3_.init(rng);
  }

  void collect(nn::ParamRefs<S>& out) {
    stem_conv_.collect("backbone.stem.conv", out);
    stem_bn_.collect("backbone.stem.bn", out);
    layer1_.collect("backbone.layer1", out);
    layer2_.collect("backbone.layer2", out);
    layer3_.collect("backbone.layer3", out);
  }
  void collect_buffers(nn::BufferRefs<S>& out) {
    stem_bn_.collect_buffers("backbone.stem.bn", out);
    layer1_.collect_buffers("backbone.layer1", out);
    layer2_.collect_buffers("backbone.layer2", out);
    layer3_.collect_buffers("backbone.layer3", out);
  }

  const Tensor4<S>& forward(const Tensor4<S>& x, bool train) {
    MBR_CHECK(x.c() == 3, "backbone expects RGB input");
    stem_conv_.forward(x, a0_);
    stem_bn_.forward(a0_, r0_, train);
    nn::relu_inplace(r0_);
    pool_.forward(r0_, p0_, train);
    const Tensor4<S>& o1 = layer1_.forward(p0_, train);
    const Tensor4<S>& o2 = layer2_.forward(o1, train);
    return layer3_.forward(o2, train);
  }

  void forward_eval(const Tensor4<S>& x, Tensor4<S>& fl3) const {
    MBR_CHECK(x.c() == 3, "backbone expects RGB input");
    Tensor4<S> t1, t2;
    stem_conv_.forward(x, t1);
    stem_bn_.forward_eval(t1, t2);
    nn::relu_inplace(t2);
    pool_.forward_eval(t2, t1);
    layer1_.forward_eval(t1, t2);
    layer2_.forward_eval(t2, t1);
    layer3_.forward_eval(t1, fl3);
  }

  void backward(const Tensor4<S>& x, const Tensor4<S>& d_fl3) {
    Tensor4<S> d3, d2, d1, dp, da;
    layer3_.backward(layer2_output(), d_fl3, d3);
    layer2_.backward(layer1_output(), d3, d2);
    layer1_.backward(p0_, d2, d1);
    dp.resize(0, 0, 0, 0);
    pool_.backward(d1, dp);
    nn::relu_backward_inplace(r0_, dp);
    stem_bn_.backward(a0_, dp, da);
    stem_conv_.backward(x, da, nullptr);  // input image gradients are not needed
  }

  const Tensor4<S>& layer1_output() const { return layer1_.blocks().back().output(); }
  const Tensor4<S>& layer2_output() const { return layer2_.blocks().back().output(); }

  bool ibn() const { return ibn_; }
  nn::Conv2d<S>& stem_conv() { return stem_conv_; }
  const nn::Conv2d<S>& stem_conv() const { return stem_conv_; }
  nn::Norm2d<S>& stem_bn() { return stem_bn_; }
  nn::Stage<S>& layer(int i) {
    switch (i) {
      case 1: return layer1_;
      case 2: return layer2_;
      default: return layer3_;
    }
  }
  const nn::Stage<S>& layer(int i) const {
    switch (i) {
      case 1: return layer1_;
      case 2: return layer2_;
      default: return layer3_;
    }
  }

 private:
  nn::Conv2d<S> stem_conv_;
  nn::Norm2d<S> stem_bn_;
  nn::MaxPool2d<S> pool_;
  bool ibn_ = false;
  nn::Stage<S> layer1_, layer2_, layer3_;
  // caches
  Tensor4<S> a0_, r0_, p0_;
};

}  // namespace mbr::model
