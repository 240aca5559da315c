#pragma once

#include <string>

#include "json.hpp"

#include "mbr/data/augment.hpp"
#include "mbr/data/sampler.hpp"
#include "mbr/loss/losses.hpp"
#include "mbr/model/spec.hpp"
#include "mbr/train/schedule.hpp"

namespace mbr::cli {

// One declarative document drives every run. Defaults reproduce the
// reference training recipe, so an empty config trains the full method on a
// real dataset; flags and config keys override individual values. Unknown
// keys are rejected with their path.
struct RunConfig {
  std::string preset = "MBR-4B";
  std::string backbone = "r50_ibn";
  Index input_size = 256;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware
  std::string out_dir = "runs";
  std::string run_name;  // default: preset + timestamp

  struct Data {
    std::string root;  // env MBR_DATA_ROOT when empty
    std::string layout = "csv";
  } data;
  std::string pretrained;  // optional trunk weight container

  data::PKBatchSpec pk;       // P=6, K=8
  data::AugmentConfig augment;
  train::TrainPlan plan;
  bool freeze_auto = true;  // derive plan.freeze.enabled from the preset

  struct LossCfg {
    double w_cls = 0.6;
    double w_tri = 1.0;
    double label_smoothing = 0.1;
    double margin = 0.1;
    std::vector<double> w_cls_per_unit;
    std::vector<double> w_tri_per_unit;
  } loss;

  model::LaiSpec lai{20, 8};  // applied when the preset carries -LAI
  struct EvalCfg {
    bool protocol_filter = true;
  } eval;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  // resolves the data root from the environment and the freeze phase from
  // the preset; call once after all overrides are applied
  void finalize();

  model::ArchitectureSpec make_arch(Index n_classes) const;
  template <typename S>
  loss::Weights<S> make_weights() const {
    loss::Weights<S> w;
    w.w_cls = S(loss.w_cls);
    w.w_tri = S(loss.w_tri);
    w.label_smoothing = S(loss.label_smoothing);
    w.margin = S(loss.margin);
    for (double v : loss.w_cls_per_unit) w.w_cls_per_unit.push_back(S(v));
    for (double v : loss.w_tri_per_unit) w.w_tri_per_unit.push_back(S(v));
    return w;
  }
};

RunConfig load_run_config(const std::string& path);

}  // namespace mbr::cli
