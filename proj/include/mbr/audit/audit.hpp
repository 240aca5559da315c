#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mbr/model/model.hpp"

namespace mbr::audit {

enum class Scope { Core, Head, Lai };

struct LayerStat {
  std::string name;
  long long params = 0;             // closed-form count from the layer config
  long long params_enumerated = 0;  // actual weight-element count
  long long macs = 0;               // multiply-accumulates per sample
  Scope scope = Scope::Core;
};

struct ModelStats {
  std::vector<LayerStat> layers;

  long long params(bool full) const {
    long long t = 0;
    for (const auto& l : layers)
      if (full || l.scope == Scope::Core) t += l.params;
    return t;
  }
  long long params_enumerated(bool full) const {
    long long t = 0;
    for (const auto& l : layers)
      if (full || l.scope == Scope::Core) t += l.params_enumerated;
    return t;
  }
  long long macs(bool full) const {
    long long t = 0;
    for (const auto& l : layers)
      if (full || l.scope == Scope::Core) t += l.macs;
    return t;
  }
};

namespace detail {

template <typename S>
void conv_stat(const nn::Conv2d<S>& c, const std::string& name, Index h, Index w,
               ModelStats& out, Scope scope = Scope::Core) {
  LayerStat s;
  s.name = name;
  s.params = (long long)c.out_channels() * (c.in_channels() / c.groups()) * c.ksize() * c.ksize();
  s.params_enumerated = (long long)c.weight().size();
  s.macs = (long long)c.macs(h, w);
  s.scope = scope;
  out.layers.push_back(s);
}

template <typename S>
void norm_stat(nn::Norm2d<S>& n, const std::string& name, ModelStats& out) {
  LayerStat s;
  s.name = name;
  s.params = 2LL * n.channels();
  s.params_enumerated = n.gamma().size() + n.beta().size();
  s.scope = Scope::Core;
  out.layers.push_back(s);
}

template <typename S>
void block_stats(nn::Bottleneck<S>& b, const std::string& name, Index h, Index w, ModelStats& out,
                 Index& oh, Index& ow) {
  conv_stat(b.conv1(), name + ".conv1", h, w, out);
  norm_stat(b.bn1(), name + ".bn1", out);
  Index mh = h, mw = w;
  if (b.conv2()) {
    conv_stat(*b.conv2(), name + ".conv2", h, w, out);
    mh = b.conv2()->out_extent(h);
    mw = b.conv2()->out_extent(w);
  } else {
    auto& a = *b.attn();
    conv_stat(a.query(), name + ".attn.q", h, w, out);
    conv_stat(a.key(), name + ".attn.k", h, w, out);
    conv_stat(a.value(), name + ".attn.v", h, w, out);
    LayerStat s;
    s.name = name + ".attn";
    s.params = (long long)a.channels() * (a.map_h() + a.map_w());
    s.params_enumerated = a.rel_h().size() + a.rel_w().size();
    s.macs = a.attn_macs();
    out.layers.push_back(s);
  }
  norm_stat(b.bn2(), name + ".bn2", out);
  conv_stat(b.conv3(), name + ".conv3", mh, mw, out);
  norm_stat(b.bn3(), name + ".bn3", out);
  if (b.down_conv()) {
    conv_stat(*b.down_conv(), name + ".down.conv", h, w, out);
    norm_stat(*b.down_bn(), name + ".down.bn", out);
  }
  oh = mh;
  ow = mw;
}

template <typename S>
void stage_stats(nn::Stage<S>& stage, const std::string& name, Index h, Index w, ModelStats& out,
                 Index& oh, Index& ow) {
  Index ch = h, cw = w;
  for (size_t i = 0; i < stage.blocks().size(); ++i) {
    Index nh = ch, nw = cw;
    block_stats(stage.blocks()[i], name + "." + std::to_string(i), ch, cw, out, nh, nw);
    ch = nh;
    cw = nw;
  }
  oh = ch;
  ow = cw;
}

}  // namespace detail

// Analytic + enumerated parameter/MAC walk over a built model at its
// configured input size. Normalizations and activations contribute
// parameters but no MACs; pooling contributes neither.
template <typename S>
ModelStats walk(model::MbrModel<S>& m);

template <typename S>
long long count_params(model::MbrModel<S>& m, bool full_scope) {
  return walk(m).params(full_scope);
}
template <typename S>
long long estimate_macs(model::MbrModel<S>& m) {
  return walk(m).macs(false);
}

// published reference sizes per preset
struct ExpectedRow {
  std::string preset;
  double params_m = 0;   // millions of parameters
  double flops_g = 0;    // giga multiply-accumulates at 256x256x3
  Index dim_slice = 0;   // per-group input slice of the shared map
  Index dim_fg = 0;      // final descriptor length
};
const std::vector<ExpectedRow>& expected_counts();
const ExpectedRow* find_expected(const std::string& preset);

struct AuditRow {
  std::string preset;
  double measured_params_m = 0, expected_params_m = 0, params_dev = 0;
  double measured_flops_g = 0, expected_flops_g = 0, flops_dev = 0;
  Index measured_slice = 0, expected_slice = 0;
  Index measured_fg = 0, expected_fg = 0;
  bool params_pass = false, flops_pass = false, dims_pass = false;
  bool pass() const { return params_pass && flops_pass && dims_pass; }
};

struct AuditReport {
  std::vector<AuditRow> rows;
  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass()) return false;
    return true;
  }
  nlohmann::json to_json() const;
  std::string table() const;
};

inline constexpr double kParamsTolerance = 0.02;
inline constexpr double kFlopsTolerance = 0.05;

// Builds each preset (256x256 input, audit scope) and checks it against the
// published counts.
AuditRow audit_preset(const std::string& preset);
AuditReport audit_presets(const std::vector<std::string>& presets);

template <typename S>
ModelStats walk(model::MbrModel<S>& m) {
  ModelStats out;
  const auto& spec = m.spec();
  const Index in = spec.input_size;

  auto& bb = m.backbone();
  detail::conv_stat(bb.stem_conv(), "backbone.stem.conv", in, in, out);
  Index h = bb.stem_conv().out_extent(in), w = h;
  detail::norm_stat(bb.stem_bn(), "backbone.stem.bn", out);
  h = (h + 2 - 3) / 2 + 1;  // 3x3/2 pool
  w = h;
  Index oh = h, ow = w;
  detail::stage_stats(bb.layer(1), "backbone.layer1", h, w, out, oh, ow);
  detail::stage_stats(bb.layer(2), "backbone.layer2", oh, ow, out, oh, ow);
  detail::stage_stats(bb.layer(3), "backbone.layer3", oh, ow, out, oh, ow);

  for (size_t b = 0; b < m.branches().size(); ++b) {
    Index bh = oh, bw = ow;
    detail::stage_stats(m.branches()[b].stage(), "branch" + std::to_string(b) + ".stage", oh, ow,
                        out, bh, bw);
  }

  for (size_t hidx = 0; hidx < m.heads().size(); ++hidx) {
    auto& head = m.heads()[hidx];
    LayerStat neck;
    neck.name = "head" + std::to_string(hidx) + ".neck";
    neck.params = 2LL * head.neck().features();
    neck.params_enumerated = head.neck().gamma().size() + head.neck().beta().size();
    neck.scope = Scope::Head;
    out.layers.push_back(neck);
    LayerStat fc;
    fc.name = "head" + std::to_string(hidx) + ".fc";
    fc.params = (long long)head.fc().in_features() * head.fc().out_features();
    fc.params_enumerated = head.fc().weight().size();
    fc.macs = fc.params;
    fc.scope = Scope::Head;
    out.layers.push_back(fc);
  }

  if (m.has_lai()) {
    LayerStat s;
    s.name = "lai.table";
    s.params = (long long)m.global_dim() * spec.lai->n_cam * spec.lai->n_view;
    s.params_enumerated = m.lai_table().size();
    s.scope = Scope::Lai;
    out.layers.push_back(s);
  }
  return out;
}

}  // namespace mbr::audit
