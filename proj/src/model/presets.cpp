#include "mbr/model/spec.hpp"

#include <algorithm>

namespace mbr::model {

using loss::Role;
using nlohmann::json;

namespace {

Role role_from(const std::string& s) {
  if (s == "cls") return Role::Cls;
  if (s == "metric") return Role::Metric;
  if (s == "both") return Role::Both;
  fail_validation("unknown loss role '", s, "'");
}

BlockKind block_from(const std::string& s) {
  if (s == "r50") return BlockKind::R50;
  if (s == "bot") return BlockKind::BoT;
  fail_validation("unknown block kind '", s, "'");
}

BranchSpec branch(BlockKind block, Index groups, std::vector<Role> roles, Index in_begin = 0,
                  Index in_end = 1024, Index out_channels = 2048) {
  BranchSpec b;
  b.block = block;
  b.groups = groups;
  b.roles = std::move(roles);
  b.in_begin = in_begin;
  b.in_end = in_end;
  b.out_channels = out_channels;
  return b;
}

// alternating group roles: even group index classification, odd metric
std::vector<Role> lbs_groups(Index groups) {
  std::vector<Role> r;
  for (Index g = 0; g < groups; ++g) r.push_back(g % 2 == 0 ? Role::Cls : Role::Metric);
  return r;
}
std::vector<Role> both_groups(Index groups) {
  return std::vector<Role>(size_t(groups), Role::Both);
}

struct PresetDef {
  const char* name;
  std::vector<BranchSpec> branches;
};

std::vector<PresetDef> build_registry() {
  std::vector<PresetDef> defs;
  const auto R = BlockKind::R50;
  const auto B = BlockKind::BoT;

  // single-branch baselines
  defs.push_back({"R50", {branch(R, 1, both_groups(1))}});
  defs.push_back({"BoT", {branch(B, 1, both_groups(1))}});

  // branching by expansion
  defs.push_back({"R50-2B", {branch(R, 1, both_groups(1)), branch(R, 1, both_groups(1))}});
  defs.push_back({"R50-4B", {branch(R, 1, both_groups(1)), branch(R, 1, both_groups(1)),
                             branch(R, 1, both_groups(1)), branch(R, 1, both_groups(1))}});
  // branching by grouping
  defs.push_back({"R50-2G", {branch(R, 2, both_groups(2))}});
  defs.push_back({"R50-4G", {branch(R, 4, both_groups(4))}});
  // expansion x grouping
  defs.push_back({"R50-2x2G", {branch(R, 2, both_groups(2)), branch(R, 2, both_groups(2))}});

  // loss-branch-split variants: expansion pairs alternate (cls, metric);
  // grouped variants alternate roles across group indices
  defs.push_back({"MBR_R50-2B", {branch(R, 1, {Role::Cls}), branch(R, 1, {Role::Metric})}});
  defs.push_back({"MBR_R50-4B", {branch(R, 1, {Role::Cls}), branch(R, 1, {Role::Metric}),
                                 branch(R, 1, {Role::Cls}), branch(R, 1, {Role::Metric})}});
  defs.push_back({"MBR_R50-2G", {branch(R, 2, lbs_groups(2))}});
  defs.push_back({"MBR_R50-4G", {branch(R, 4, lbs_groups(4))}});
  defs.push_back({"MBR_R50-2x2G", {branch(R, 2, lbs_groups(2)), branch(R, 2, lbs_groups(2))}});

  // hybrid global + attention family. The grouped hybrid splits the shared
  // map (2+2): the first two groups convolve channels [0, 512), the second
  // two attend over channels [512, 1024).
  defs.push_back({"Hybrid-4G", {branch(R, 2, both_groups(2), 0, 512, 1024),
                                branch(B, 2, both_groups(2), 512, 1024, 1024)}});
  defs.push_back({"MBR-4G", {branch(R, 2, lbs_groups(2), 0, 512, 1024),
                             branch(B, 2, lbs_groups(2), 512, 1024, 1024)}});
  defs.push_back({"Hybrid-2x2G", {branch(R, 2, both_groups(2)), branch(B, 2, both_groups(2))}});
  defs.push_back({"MBR-2x2G", {branch(R, 2, lbs_groups(2)), branch(B, 2, lbs_groups(2))}});
  defs.push_back({"Hybrid-4B", {branch(R, 1, both_groups(1)), branch(R, 1, both_groups(1)),
                                branch(B, 1, both_groups(1)), branch(B, 1, both_groups(1))}});
  defs.push_back({"MBR-4B", {branch(R, 1, {Role::Cls}), branch(R, 1, {Role::Metric}),
                             branch(B, 1, {Role::Cls}), branch(B, 1, {Role::Metric})}});
  return defs;
}

const std::vector<PresetDef>& registry() {
  static const std::vector<PresetDef> defs = build_registry();
  return defs;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& d : registry()) names.push_back(d.name);
  return names;
}

bool is_preset(const std::string& name) {
  std::string base = name;
  if (base.size() > 4 && base.substr(base.size() - 4) == "-LAI")
    base = base.substr(0, base.size() - 4);
  for (const auto& d : registry())
    if (base == d.name) return true;
  return false;
}

ArchitectureSpec make_preset(const std::string& name) {
  std::string base = name;
  bool lai = false;
  if (base.size() > 4 && base.substr(base.size() - 4) == "-LAI") {
    lai = true;
    base = base.substr(0, base.size() - 4);
  }
  for (const auto& d : registry()) {
    if (base != d.name) continue;
    ArchitectureSpec spec;
    spec.name = name;
    spec.branches = d.branches;
    if (lai) spec.lai = LaiSpec{20, 8};  // Veri-776 metadata extents by default
    spec.validate();
    return spec;
  }
  std::string known;
  for (const auto& d : registry()) known += std::string(" ") + d.name;
  fail_validation("unknown preset '", name, "'; known presets:", known,
                  " (each also accepts a -LAI suffix)");
}

json ArchitectureSpec::to_json() const {
  json j;
  j["name"] = name;
  j["backbone"] = backbone;
  j["input_size"] = input_size;
  j["embed_dim"] = embed_dim;
  j["n_classes"] = n_classes;
  j["stride_last_stage"] = stride_last_stage;
  j["branches"] = json::array();
  for (const auto& b : branches) {
    json jb;
    jb["block"] = block_kind_name(b.block);
    jb["groups"] = b.groups;
    json roles = json::array();
    for (auto r : b.roles) roles.push_back(loss::role_name(r));
    jb["roles"] = roles;
    jb["in"] = {b.in_begin, b.in_end};
    jb["out_channels"] = b.out_channels;
    j["branches"].push_back(jb);
  }
  if (lai)
    j["lai"] = {{"n_cam", lai->n_cam}, {"n_view", lai->n_view}};
  else
    j["lai"] = nullptr;
  return j;
}

ArchitectureSpec ArchitectureSpec::from_json(const json& j) {
  ArchitectureSpec s;
  s.name = j.at("name").get<std::string>();
  s.backbone = j.at("backbone").get<std::string>();
  s.input_size = j.at("input_size").get<Index>();
  s.embed_dim = j.at("embed_dim").get<Index>();
  s.n_classes = j.at("n_classes").get<Index>();
  s.stride_last_stage = j.at("stride_last_stage").get<Index>();
  for (const auto& jb : j.at("branches")) {
    BranchSpec b;
    b.block = block_from(jb.at("block").get<std::string>());
    b.groups = jb.at("groups").get<Index>();
    for (const auto& r : jb.at("roles")) b.roles.push_back(role_from(r.get<std::string>()));
    b.in_begin = jb.at("in").at(0).get<Index>();
    b.in_end = jb.at("in").at(1).get<Index>();
    b.out_channels = jb.at("out_channels").get<Index>();
    s.branches.push_back(b);
  }
  if (j.contains("lai") && !j.at("lai").is_null())
    s.lai = LaiSpec{j.at("lai").at("n_cam").get<Index>(), j.at("lai").at("n_view").get<Index>()};
  s.validate();
  return s;
}

}  // namespace mbr::model
