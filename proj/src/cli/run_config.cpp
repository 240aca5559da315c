#include "mbr/cli/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace mbr::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& path) {
  if (!j.is_object()) fail_validation("config node '", path, "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      fail_validation("unknown config key '", path.empty() ? key : path + "." + key, "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["preset"] = preset;
  j["backbone"] = backbone;
  j["input_size"] = input_size;
  j["seed"] = seed;
  j["threads"] = threads;
  j["out_dir"] = out_dir;
  j["run_name"] = run_name;
  j["data"] = {{"root", data.root}, {"layout", data.layout}};
  j["pretrained"] = pretrained;
  j["sampler"] = {{"p", pk.p}, {"k", pk.k}};
  j["augment"] = {{"pad", augment.pad},
                  {"hflip_prob", augment.hflip_prob},
                  {"erasing", augment.erasing},
                  {"erase_prob", augment.erase_prob}};
  j["train"] = plan.to_json();
  j["train"]["freeze"]["auto"] = freeze_auto;
  j["loss"] = {{"w_cls", loss.w_cls},
               {"w_tri", loss.w_tri},
               {"label_smoothing", loss.label_smoothing},
               {"margin", loss.margin},
               {"w_cls_per_unit", loss.w_cls_per_unit},
               {"w_tri_per_unit", loss.w_tri_per_unit}};
  j["lai"] = {{"n_cam", lai.n_cam}, {"n_view", lai.n_view}};
  j["eval"] = {{"protocol_filter", eval.protocol_filter}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, {"preset", "backbone", "input_size", "seed", "threads", "out_dir",
                     "run_name", "data", "pretrained", "sampler", "augment", "train", "loss",
                     "lai", "eval"},
                 "");
  get_if(j, "preset", c.preset);
  get_if(j, "backbone", c.backbone);
  get_if(j, "input_size", c.input_size);
  get_if(j, "seed", c.seed);
  get_if(j, "threads", c.threads);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "run_name", c.run_name);
  if (j.contains("data")) {
    reject_unknown(j.at("data"), {"root", "layout"}, "data");
    get_if(j.at("data"), "root", c.data.root);
    get_if(j.at("data"), "layout", c.data.layout);
  }
  get_if(j, "pretrained", c.pretrained);
  if (j.contains("sampler")) {
    reject_unknown(j.at("sampler"), {"p", "k"}, "sampler");
    get_if(j.at("sampler"), "p", c.pk.p);
    get_if(j.at("sampler"), "k", c.pk.k);
  }
  if (j.contains("augment")) {
    reject_unknown(j.at("augment"), {"pad", "hflip_prob", "erasing", "erase_prob"}, "augment");
    get_if(j.at("augment"), "pad", c.augment.pad);
    get_if(j.at("augment"), "hflip_prob", c.augment.hflip_prob);
    get_if(j.at("augment"), "erasing", c.augment.erasing);
    get_if(j.at("augment"), "erase_prob", c.augment.erase_prob);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, {"epochs", "base_lr", "warmup_epochs", "decay_epochs", "decay_factor",
                       "freeze", "checkpoint_every", "log_every"},
                   "train");
    get_if(t, "epochs", c.plan.epochs);
    get_if(t, "base_lr", c.plan.base_lr);
    get_if(t, "warmup_epochs", c.plan.warmup_epochs);
    if (t.contains("decay_epochs"))
      c.plan.decay_epochs = t.at("decay_epochs").get<std::vector<Index>>();
    get_if(t, "decay_factor", c.plan.decay_factor);
    get_if(t, "checkpoint_every", c.plan.checkpoint_every);
    get_if(t, "log_every", c.plan.log_every);
    if (t.contains("freeze")) {
      reject_unknown(t.at("freeze"), {"auto", "enabled", "epochs", "lr"}, "train.freeze");
      get_if(t.at("freeze"), "auto", c.freeze_auto);
      if (t.at("freeze").contains("enabled")) {
        c.freeze_auto = t.at("freeze").value("auto", false);
        c.plan.freeze.enabled = t.at("freeze").at("enabled").get<bool>();
      }
      get_if(t.at("freeze"), "epochs", c.plan.freeze.epochs);
      get_if(t.at("freeze"), "lr", c.plan.freeze.lr);
    }
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    reject_unknown(l, {"w_cls", "w_tri", "label_smoothing", "margin", "w_cls_per_unit",
                       "w_tri_per_unit"},
                   "loss");
    get_if(l, "w_cls", c.loss.w_cls);
    get_if(l, "w_tri", c.loss.w_tri);
    get_if(l, "label_smoothing", c.loss.label_smoothing);
    get_if(l, "margin", c.loss.margin);
    get_if(l, "w_cls_per_unit", c.loss.w_cls_per_unit);
    get_if(l, "w_tri_per_unit", c.loss.w_tri_per_unit);
  }
  if (j.contains("lai")) {
    reject_unknown(j.at("lai"), {"n_cam", "n_view"}, "lai");
    get_if(j.at("lai"), "n_cam", c.lai.n_cam);
    get_if(j.at("lai"), "n_view", c.lai.n_view);
  }
  if (j.contains("eval")) {
    reject_unknown(j.at("eval"), {"protocol_filter"}, "eval");
    get_if(j.at("eval"), "protocol_filter", c.eval.protocol_filter);
  }
  return c;
}

void RunConfig::finalize() {
  if (data.root.empty())
    if (const char* env = std::getenv("MBR_DATA_ROOT")) data.root = env;
  if (!model::is_preset(preset)) (void)model::make_preset(preset);  // throws with the valid list
  if (freeze_auto) plan.freeze.enabled = model::make_preset(preset).has_bot();
  augment.target_size = input_size;
}

model::ArchitectureSpec RunConfig::make_arch(Index n_classes) const {
  model::ArchitectureSpec spec = model::make_preset(preset);
  spec.backbone = backbone;
  spec.input_size = input_size;
  spec.n_classes = n_classes;
  if (spec.lai) spec.lai = lai;  // preset requested a side table; size it from the config
  spec.validate();
  return spec;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail_validation("cannot open config '", path, "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail_validation("config '", path, "' is not valid JSON: ", e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace mbr::cli
