#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mbr/core/common.hpp"
#include "mbr/loss/losses.hpp"

namespace mbr::model {

enum class BlockKind { R50, BoT };

inline const char* block_kind_name(BlockKind k) { return k == BlockKind::R50 ? "r50" : "bot"; }

// One stage-4 branch: a block type, an input slice of the shared feature map,
// an internal group count (each group is an implicit sub-branch on its own
// channel slice) and one loss role per group.
struct BranchSpec {
  BlockKind block = BlockKind::R50;
  Index groups = 1;
  std::vector<loss::Role> roles;  // one per group
  Index in_begin = 0;             // f_L3 channel slice consumed by this branch
  Index in_end = 1024;
  Index out_channels = 2048;      // branch embedding width (split across groups)

  Index in_width() const { return in_end - in_begin; }
  Index unit_dim() const { return out_channels / groups; }
};

struct LaiSpec {
  Index n_cam = 1;
  Index n_view = 1;
};

struct ArchitectureSpec {
  std::string name = "custom";
  std::string backbone = "r50_ibn";  // "r50" or "r50_ibn"
  Index input_size = 256;
  Index embed_dim = 2048;  // D: full-width branch output
  Index n_classes = 0;     // 0 = no classification heads
  Index stride_last_stage = 1;
  std::vector<BranchSpec> branches;
  std::optional<LaiSpec> lai;

  Index shared_channels() const { return 1024; }  // f_L3 depth
  Index feature_map_size() const { return input_size / 16; }

  Index global_dim() const {
    Index d = 0;
    for (const auto& b : branches) d += b.out_channels;
    return d;
  }
  Index unit_count() const {
    Index n = 0;
    for (const auto& b : branches) n += b.groups;
    return n;
  }
  bool has_bot() const {
    for (const auto& b : branches)
      if (b.block == BlockKind::BoT) return true;
    return false;
  }

  void validate() const {
    if (branches.empty()) fail_validation("architecture has no branches");
    if (stride_last_stage != 1)
      fail_validation("last-stage stride must be 1, got ", stride_last_stage);
    if (input_size <= 0 || input_size % 16 != 0)
      fail_validation("input size must be a positive multiple of 16, got ", input_size);
    if (backbone != "r50" && backbone != "r50_ibn")
      fail_validation("unknown backbone '", backbone, "'");
    for (size_t i = 0; i < branches.size(); ++i) {
      const auto& b = branches[i];
      if (b.groups < 1) fail_validation("branch ", i, ": groups must be >= 1");
      if (b.roles.size() != size_t(b.groups))
        fail_validation("branch ", i, ": expected ", b.groups, " loss roles, got ",
                        b.roles.size());
      if (b.in_begin < 0 || b.in_end > shared_channels() || b.in_begin >= b.in_end)
        fail_validation("branch ", i, ": bad input slice [", b.in_begin, ", ", b.in_end, ")");
      if (b.in_width() % b.groups != 0)
        fail_validation("branch ", i, ": groups do not divide the input slice width ",
                        b.in_width());
      if (b.out_channels % b.groups != 0)
        fail_validation("branch ", i, ": groups do not divide the output width ",
                        b.out_channels);
      if (b.out_channels % 4 != 0) fail_validation("branch ", i, ": output width not a multiple of 4");
      if ((b.out_channels / 4) % b.groups != 0)
        fail_validation("branch ", i, ": groups do not divide the bottleneck width");
    }
    if (lai) {
      if (lai->n_cam < 1 || lai->n_view < 1)
        fail_validation("side-embedding table needs camera/view extents >= 1 (got cams=",
                        lai->n_cam, ", views=", lai->n_view, ")");
    }
  }

  nlohmann::json to_json() const;
  static ArchitectureSpec from_json(const nlohmann::json& j);
};

// Preset registry. Accepts any registered name plus an optional "-LAI"
// suffix; LAI presets default to 20 cameras x 8 views unless overridden.
std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
ArchitectureSpec make_preset(const std::string& name);

}  // namespace mbr::model
