#pragma once

#include <string>

#include "mbr/io/blobs.hpp"
#include "mbr/model/model.hpp"

namespace mbr::model {

// Full weight snapshot (parameters + normalization statistics). The
// architecture travels in the metadata so a checkpoint can rebuild its exact
// model.
template <typename S>
io::NamedBlobs snapshot_weights(MbrModel<S>& m) {
  io::NamedBlobs nb;
  nb.meta["spec"] = m.spec().to_json();
  for (const auto& ref : m.params()) {
    std::vector<float> v(size_t(ref.param->size()));
    for (Index i = 0; i < ref.param->size(); ++i) v[size_t(i)] = float(ref.param->value[i]);
    nb.add(ref.name, std::move(v));
  }
  for (const auto& ref : m.buffers()) {
    std::vector<float> v(size_t(ref.buffer->size()));
    for (Index i = 0; i < ref.buffer->size(); ++i) v[size_t(i)] = float((*ref.buffer)[i]);
    nb.add(ref.name, std::move(v));
  }
  return nb;
}

template <typename S>
void restore_weights(MbrModel<S>& m, const io::NamedBlobs& nb) {
  for (const auto& ref : m.params()) {
    const std::vector<float>* v = nb.find(ref.name);
    if (!v) fail("checkpoint is missing tensor '", ref.name, "'");
    if (Index(v->size()) != ref.param->size())
      fail("shape mismatch for '", ref.name, "': checkpoint has ", v->size(), ", model wants ",
           ref.param->size());
    for (Index i = 0; i < ref.param->size(); ++i) ref.param->value[i] = S((*v)[size_t(i)]);
  }
  for (const auto& ref : m.buffers()) {
    const std::vector<float>* v = nb.find(ref.name);
    if (!v) fail("checkpoint is missing buffer '", ref.name, "'");
    if (Index(v->size()) != ref.buffer->size())
      fail("shape mismatch for buffer '", ref.name, "'");
    for (Index i = 0; i < ref.buffer->size(); ++i) (*ref.buffer)[i] = S((*v)[size_t(i)]);
  }
}

namespace detail {

// Copies a block-diagonal slice of a full-width stage-4 conv into a grouped
// (possibly input-sliced) branch conv. Row o of the target maps to source row
// o; its group's input slice starts at src_in_base + group * (target in/G).
template <typename S>
void slice_conv_from_full(nn::Conv2d<S>& dst, const std::vector<float>& src, Index src_in,
                          Index src_in_base) {
  const Index oc = dst.out_channels(), icg = dst.in_channels() / dst.groups();
  const Index k2 = dst.ksize() * dst.ksize();
  const Index ocg = oc / dst.groups();
  MBR_CHECK(Index(src.size()) % (k2 * src_in) == 0, "bad source conv tensor");
  const Index src_oc = Index(src.size()) / (k2 * src_in);
  MBR_CHECK(src_oc >= oc, "source conv too narrow: ", src_oc, " < ", oc);
  for (Index o = 0; o < oc; ++o) {
    const Index grp = o / ocg;
    for (Index c = 0; c < icg; ++c) {
      const Index sc = src_in_base + grp * icg + c;
      MBR_CHECK(sc < src_in, "source channel slice out of range");
      for (Index t = 0; t < k2; ++t)
        dst.weight().value[(o * icg + c) * k2 + t] = S(src[(o * src_in + sc) * k2 + t]);
    }
  }
}

inline const std::vector<float>& need(const io::NamedBlobs& nb, const std::string& name) {
  const std::vector<float>* v = nb.find(name);
  if (!v) fail("pretrained container is missing '", name, "'");
  return *v;
}

template <typename S>
void copy_vec_prefix(VecX<S>& dst, const std::vector<float>& src) {
  MBR_CHECK(Index(src.size()) >= dst.size(), "source tensor too small");
  for (Index i = 0; i < dst.size(); ++i) dst[i] = S(src[size_t(i)]);
}

}  // namespace detail

// Loads pretrained trunk + stage-4 weights from an R50-layout container (the
// snapshot of a single-branch "R50" model). Grouped or input-sliced branches
// take the matching block-diagonal slices; attention blocks keep their random
// initialization apart from the surrounding 1x1 convolutions.
template <typename S>
void load_pretrained_backbone(MbrModel<S>& m, const io::NamedBlobs& nb) {
  // trunk: exact-name copy
  nn::ParamRefs<S> trunk;
  m.backbone().collect(trunk);
  for (auto& ref : trunk) {
    const auto& src = detail::need(nb, ref.name);
    if (Index(src.size()) != ref.param->size())
      fail("pretrained shape mismatch for '", ref.name, "'");
    for (Index i = 0; i < ref.param->size(); ++i) ref.param->value[i] = S(src[size_t(i)]);
  }
  nn::BufferRefs<S> trunk_bufs;
  m.backbone().collect_buffers(trunk_bufs);
  for (auto& ref : trunk_bufs) {
    const auto& src = detail::need(nb, ref.name);
    if (Index(src.size()) != ref.buffer->size())
      fail("pretrained shape mismatch for buffer '", ref.name, "'");
    for (Index i = 0; i < ref.buffer->size(); ++i) (*ref.buffer)[i] = S(src[size_t(i)]);
  }

  // branches: block-diagonal slices of the full-width source stage
  for (size_t b = 0; b < m.branches().size(); ++b) {
    auto& branch = m.branches()[b];
    const BranchSpec& bs = branch.bspec();
    auto& blocks = branch.stage().blocks();
    for (size_t i = 0; i < blocks.size(); ++i) {
      auto& blk = blocks[i];
      const std::string sp = "branch0.stage." + std::to_string(i);
      const Index src_in0 = i == 0 ? 1024 : 2048;
      const Index base0 = i == 0 ? bs.in_begin : 0;

      detail::slice_conv_from_full(blk.conv1(), detail::need(nb, sp + ".conv1.w"), src_in0,
                                   base0);
      detail::slice_conv_from_full(blk.conv3(), detail::need(nb, sp + ".conv3.w"), 512, 0);
      if (blk.conv2())
        detail::slice_conv_from_full(*blk.conv2(), detail::need(nb, sp + ".conv2.w"), 512, 0);
      if (blk.down_conv())
        detail::slice_conv_from_full(*blk.down_conv(), detail::need(nb, sp + ".down.conv.w"),
                                     src_in0, base0);

      // norms: leading-slice copy, consistent with the conv row mapping
      nn::ParamRefs<S> bp;
      blk.collect("blk", bp);
      for (auto& ref : bp) {
        const bool is_norm = ref.name.find(".bn") != std::string::npos &&
                             (ref.name.ends_with(".gamma") || ref.name.ends_with(".beta"));
        if (!is_norm) continue;
        std::string tail = ref.name.substr(4);  // strip "blk."
        detail::copy_vec_prefix(ref.param->value, detail::need(nb, sp + "." + tail));
      }
      nn::BufferRefs<S> bb;
      blk.collect_buffers("blk", bb);
      for (auto& ref : bb) {
        std::string tail = ref.name.substr(4);
        detail::copy_vec_prefix(*ref.buffer, detail::need(nb, sp + "." + tail));
      }
    }
  }
}

inline void save_weights_file(const std::string& path, io::NamedBlobs nb) {
  io::save_blobs(path, nb);
}

}  // namespace mbr::model
