#pragma once

#include <filesystem>
#include <fstream>
#include <functional>

#include "mbr/data/loader.hpp"
#include "mbr/data/sampler.hpp"
#include "mbr/eval/embeddings.hpp"
#include "mbr/loss/losses.hpp"
#include "mbr/model/checkpoint.hpp"
#include "mbr/train/adam.hpp"
#include "mbr/train/schedule.hpp"

namespace mbr::train {

struct IterationLog {
  Index epoch = 0;  // freeze-phase epochs are negative
  Index iter = 0;
  double lr = 0;
  double loss_total = 0;
  std::vector<double> loss_by_unit;
  std::vector<std::string> unit_roles;

  nlohmann::json to_json() const {
    nlohmann::json branches = nlohmann::json::array();
    for (size_t i = 0; i < loss_by_unit.size(); ++i)
      branches.push_back({{"unit", i}, {"role", unit_roles[i]}, {"loss", loss_by_unit[i]}});
    return {{"epoch", epoch}, {"iter", iter}, {"lr", lr}, {"loss_total", loss_total},
            {"loss_by_branch", branches}};
  }
};

struct TrainResult {
  std::vector<IterationLog> log;
  std::string final_checkpoint;
  Index epochs_run = 0;

  double epoch_mean_total(Index epoch) const {
    double sum = 0;
    Index n = 0;
    for (const auto& l : log)
      if (l.epoch == epoch) {
        sum += l.loss_total;
        ++n;
      }
    return n ? sum / double(n) : 0.0;
  }
};

// End-to-end training: optional frozen-trunk alignment phase, then the main
// schedule. Emits one JSONL record per logged iteration, checkpoints
// periodically (atomic write) and aborts with a diagnostic snapshot if the
// loss goes non-finite.
template <typename S>
class Trainer {
 public:
  Trainer(model::MbrModel<S>& m, const data::DatasetManifest& train_split,
          const data::PKBatchSpec& pk, const TrainPlan& plan, const loss::Weights<S>& weights,
          std::string out_dir, std::uint64_t seed)
      : model_(m),
        manifest_(train_split),
        sampler_(train_split, pk),
        plan_(plan),
        weights_(weights),
        out_dir_(std::move(out_dir)),
        seed_(seed),
        labels_(train_split.compact_labels()),
        adam_(m.params()) {
    plan_.validate(m.has_bot());
    MBR_CHECK(m.spec().n_classes == 0 || m.spec().n_classes == manifest_.n_classes(),
              "model built for ", m.spec().n_classes, " classes but the train split has ",
              manifest_.n_classes());
    std::filesystem::create_directories(out_dir_);
  }

  // continue from a checkpoint: restores weights, optimizer state and epoch
  void resume(const std::string& checkpoint_path) {
    io::NamedBlobs nb = io::load_blobs(checkpoint_path);
    model::restore_weights(model_, nb);
    adam_.import_state(nb);
    start_epoch_ = nb.meta.value("epoch", -1) + 1;
    resumed_ = true;
    if (nb.meta.contains("rng")) {
      rng_ = Rng(0);
      rng_.restore(nb.meta.at("rng").get<std::string>());
      rng_restored_ = true;
    }
  }

  TrainResult run(std::function<void(const IterationLog&)> on_log = nullptr) {
    TrainResult result;
    std::ofstream log_stream(std::filesystem::path(out_dir_) / "metrics.jsonl",
                             start_epoch_ > 0 ? std::ios::app : std::ios::trunc);
    if (!rng_restored_) rng_ = Rng(seed_);

    // phase 1: frozen trunk, fixed lr (only when starting fresh)
    if (plan_.freeze.enabled && start_epoch_ == 0 && !resumed_) {
      set_trunk_frozen(true);
      for (Index fe = 0; fe < plan_.freeze.epochs; ++fe)
        run_epoch(fe - plan_.freeze.epochs, plan_.freeze.lr, result, log_stream, on_log);
      set_trunk_frozen(false);
    }

    for (Index epoch = start_epoch_; epoch < plan_.epochs; ++epoch) {
      run_epoch(epoch, lr_at(epoch, plan_), result, log_stream, on_log);
      if (plan_.checkpoint_every > 0 && (epoch + 1) % plan_.checkpoint_every == 0 &&
          epoch + 1 < plan_.epochs)
        save_checkpoint(epoch);
      result.epochs_run = epoch + 1;
    }
    result.final_checkpoint = save_checkpoint(plan_.epochs - 1);
    return result;
  }

  model::MbrModel<S>& model() { return model_; }
  data::ImageCache& cache() { return cache_; }

 private:
  void set_trunk_frozen(bool frozen) {
    for (auto& ref : model_.shared_params()) ref.param->frozen = frozen;
  }

  std::string save_checkpoint(Index epoch) {
    io::NamedBlobs nb = model::snapshot_weights(model_);
    nb.meta["epoch"] = epoch;
    nb.meta["rng"] = rng_.state();
    nb.meta["seed"] = seed_;
    adam_.export_state(nb);
    const std::string path =
        (std::filesystem::path(out_dir_) / ("checkpoint_epoch" + std::to_string(epoch) + ".ckpt"))
            .string();
    io::save_blobs(path, nb);
    // architecture sidecar, so the preset is inspectable without the binary
    std::ofstream spec_os(path + ".spec.json", std::ios::trunc);
    spec_os << nb.meta.at("spec").dump(2) << '\n';
    return path;
  }

  void run_epoch(Index epoch, double lr, TrainResult& result, std::ofstream& log_stream,
                 const std::function<void(const IterationLog&)>& on_log) {
    const Index sampler_epoch = epoch + plan_.freeze.epochs;  // non-negative, unique per phase
    auto batches = sampler_.epoch_batches(sampler_epoch);
    data::AugmentConfig aug = augment_;
    aug.target_size = model_.spec().input_size;

    for (size_t bi = 0; bi < batches.size(); ++bi) {
      Tensor4<float> staging;
      data::BatchMeta meta = data::load_batch(manifest_, batches[bi], labels_, /*train=*/true,
                                              aug, rng_, &cache_, staging);
      Tensor4<S> x(staging.n(), staging.c(), staging.h(), staging.w());
      for (Index i = 0; i < staging.size(); ++i) x.data()[i] = S(staging.data()[i]);

      auto fwd = model_.forward(x, meta.cams, meta.views, /*train=*/true);
      bool finite = true;
      for (size_t u = 0; u < fwd.units.size(); ++u)
        if (!fwd.units[u].allFinite() || (fwd.logits[u].size() && !fwd.logits[u].allFinite()))
          finite = false;
      std::optional<loss::TotalLoss<S>> maybe_total;
      if (finite) {
        std::vector<loss::UnitOutput<S>> units;
        for (size_t u = 0; u < fwd.units.size(); ++u)
          units.push_back({&fwd.units[u], fwd.logits[u].size() ? &fwd.logits[u] : nullptr,
                           fwd.roles[u]});
        maybe_total = loss::lbs_total<S>(units, meta.labels, weights_, /*with_grads=*/true);
      }
      if (!finite || !std::isfinite(double(maybe_total->total))) {
        const std::string snap = save_checkpoint(epoch);
        fail("non-finite loss at epoch ", epoch, " iter ", bi,
             "; diagnostic snapshot written to ", snap);
      }
      auto& total = *maybe_total;

      model_.zero_grad();
      model::UnitGrads<S> grads;
      grads.dunits = std::move(total.demb);
      grads.dlogits = std::move(total.dlogits);
      model_.backward(x, grads);
      adam_.step(lr);

      if (plan_.log_every > 0 && Index(bi) % plan_.log_every == 0) {
        IterationLog entry;
        entry.epoch = epoch;
        entry.iter = Index(bi);
        entry.lr = lr;
        entry.loss_total = double(total.total);
        for (const auto& ul : total.per_unit) {
          entry.loss_by_unit.push_back(double(ul.weighted));
          entry.unit_roles.push_back(loss::role_name(ul.role));
        }
        log_stream << entry.to_json().dump() << '\n';
        log_stream.flush();
        if (on_log) on_log(entry);
        result.log.push_back(std::move(entry));
      }
    }
  }

  model::MbrModel<S>& model_;
  const data::DatasetManifest& manifest_;
  data::PKSampler sampler_;
  TrainPlan plan_;
  loss::Weights<S> weights_;
  std::string out_dir_;
  std::uint64_t seed_;
  std::vector<int> labels_;
  Adam<S> adam_;
  Rng rng_{0};
  bool rng_restored_ = false;
  bool resumed_ = false;
  Index start_epoch_ = 0;
  data::ImageCache cache_;
  data::AugmentConfig augment_;

 public:
  data::AugmentConfig& augment_config() { return augment_; }
};

}  // namespace mbr::train
