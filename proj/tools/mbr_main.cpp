#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "mbr/audit/audit.hpp"
#include "mbr/cli/run_config.hpp"
#include "mbr/core/parallel.hpp"
#include "mbr/data/synth.hpp"
#include "mbr/eval/embeddings.hpp"
#include "mbr/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace mbr;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
  return buf;
}

model::MbrModel<float> model_from_checkpoint(const std::string& path, io::NamedBlobs& nb) {
  nb = io::load_blobs(path);
  if (!nb.meta.contains("spec")) fail("'", path, "' carries no architecture description");
  model::ArchitectureSpec spec = model::ArchitectureSpec::from_json(nb.meta.at("spec"));
  model::MbrModel<float> m(spec, Rng(0));
  model::restore_weights(m, nb);
  return m;
}

data::DatasetManifest manifest_from_args(const std::string& manifest_csv,
                                         const std::string& data_root,
                                         const std::string& layout, const std::string& split) {
  if (!manifest_csv.empty()) {
    data::Split s = split == "train"   ? data::Split::Train
                    : split == "query" ? data::Split::Query
                                       : data::Split::Gallery;
    return data::load_manifest_csv(manifest_csv, s);
  }
  if (data_root.empty())
    fail_validation("pass --manifest or --data-root (or set MBR_DATA_ROOT)");
  data::DatasetTriplet t = data::load_dataset(data_root, layout);
  if (split == "train") return t.train;
  if (split == "query") return t.query;
  if (split == "gallery") return t.gallery;
  fail_validation("unknown split '", split, "'");
}

int cmd_synth(const std::string& out, Index ids, Index cams, Index views, Index per_id,
              std::uint64_t seed, Index size) {
  data::SynthConfig cfg;
  cfg.n_ids = ids;
  cfg.n_cams = cams;
  cfg.n_views = views;
  cfg.imgs_per_id = per_id;
  cfg.seed = seed;
  cfg.size = size;
  data::DatasetTriplet t = data::synth_dataset(out, cfg);
  nlohmann::json summary = {{"root", out},
                            {"train_images", t.train.records.size()},
                            {"query_images", t.query.records.size()},
                            {"gallery_images", t.gallery.records.size()},
                            {"n_classes", t.train.n_classes()}};
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_train(cli::RunConfig cfg, const std::string& resume) {
  cfg.finalize();
  if (cfg.threads > 0) set_num_threads(cfg.threads);
  if (cfg.data.root.empty())
    fail_validation("no dataset root: pass --data-root, set data.root, or export MBR_DATA_ROOT");

  data::DatasetTriplet dataset = data::load_dataset(cfg.data.root, cfg.data.layout);
  const Index n_classes = dataset.train.n_classes();
  model::ArchitectureSpec spec = cfg.make_arch(n_classes);

  const std::string run_name =
      cfg.run_name.empty() ? cfg.preset + "_" + timestamp() : cfg.run_name;
  const fs::path run_dir = fs::path(cfg.out_dir) / run_name;
  fs::create_directories(run_dir);
  {
    std::ofstream os(run_dir / "config.json");
    os << cfg.to_json().dump(2) << '\n';
  }

  model::MbrModel<float> m(spec, Rng(cfg.seed));
  if (!cfg.pretrained.empty()) {
    std::cout << "loading pretrained trunk from " << cfg.pretrained << std::endl;
    model::load_pretrained_backbone(m, io::load_blobs(cfg.pretrained));
  }

  cfg.pk.seed = cfg.seed;
  train::Trainer<float> trainer(m, dataset.train, cfg.pk, cfg.plan, cfg.make_weights<float>(),
                                run_dir.string(), cfg.seed);
  trainer.augment_config() = cfg.augment;
  if (!resume.empty()) trainer.resume(resume);

  auto result = trainer.run([](const train::IterationLog& log) {
    std::cout << "epoch " << log.epoch << " iter " << log.iter << " lr " << log.lr
              << " loss " << log.loss_total << std::endl;
  });
  std::cout << "final checkpoint: " << result.final_checkpoint << std::endl;
  return 0;
}

int cmd_embed(const std::string& checkpoint, const std::string& manifest_csv,
              const std::string& data_root, const std::string& layout, const std::string& split,
              const std::string& out, bool no_lai, Index batch, int threads) {
  if (threads > 0) set_num_threads(threads);
  io::NamedBlobs nb;
  model::MbrModel<float> m = model_from_checkpoint(checkpoint, nb);
  data::DatasetManifest man = manifest_from_args(manifest_csv, data_root, layout, split);
  eval::EmbeddingMatrix emb = eval::extract_embeddings(m, man, !no_lai, batch);
  eval::save_embeddings(out, emb);
  std::cout << "wrote " << emb.count() << " x " << emb.dim() << " embeddings to " << out
            << std::endl;
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& query_csv,
             const std::string& gallery_csv, const std::string& data_root,
             const std::string& layout, bool no_filter, bool no_lai, const std::string& out,
             Index batch, int threads) {
  if (threads > 0) set_num_threads(threads);
  io::NamedBlobs nb;
  model::MbrModel<float> m = model_from_checkpoint(checkpoint, nb);
  data::DatasetManifest q = manifest_from_args(query_csv, data_root, layout, "query");
  data::DatasetManifest g = manifest_from_args(gallery_csv, data_root, layout, "gallery");
  eval::EmbeddingMatrix qe = eval::extract_embeddings(m, q, !no_lai, batch);
  eval::EmbeddingMatrix ge = eval::extract_embeddings(m, g, !no_lai, batch);
  eval::RetrievalResult r = eval::rank_and_score(qe, ge, {!no_filter});
  const std::string text = r.to_json().dump(2);
  std::cout << text << std::endl;
  if (!out.empty()) {
    std::ofstream os(out);
    os << text << '\n';
  }
  return 0;
}

int cmd_audit(std::vector<std::string> presets, const std::string& json_out) {
  if (presets.size() == 1 && presets[0] == "all") {
    presets.clear();
    for (const auto& name : model::preset_names()) presets.push_back(name);
  }
  for (const auto& p : presets)
    if (!model::is_preset(p)) (void)model::make_preset(p);  // throws with the valid list
  audit::AuditReport report = audit::audit_presets(presets);
  std::cout << report.table();
  if (!json_out.empty()) {
    std::ofstream os(json_out);
    os << report.to_json().dump(2) << '\n';
  }
  if (!report.all_pass()) {
    std::cerr << "audit: one or more presets deviate from the published counts" << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-branch vehicle re-identification toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
  std::string synth_out = "synth_data";
  Index s_ids = 10, s_cams = 4, s_views = 2, s_per = 8, s_size = 256;
  std::uint64_t s_seed = 0;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--ids", s_ids, "identity count");
  synth->add_option("--cams", s_cams, "camera count");
  synth->add_option("--views", s_views, "view count");
  synth->add_option("--per-id", s_per, "train images per identity");
  synth->add_option("--seed", s_seed, "seed");
  synth->add_option("--size", s_size, "image size in pixels");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a preset on a dataset");
  std::string config_path, resume, t_preset, t_root, t_layout, t_out, t_run, t_pretrained;
  Index t_epochs = -1, t_input = -1, t_p = -1, t_k = -1;
  std::int64_t t_seed = -1;
  int t_threads = -1;
  double t_lr = -1;
  train_cmd->add_option("--config", config_path, "JSON run config");
  train_cmd->add_option("--preset", t_preset, "architecture preset");
  train_cmd->add_option("--data-root", t_root, "dataset root (or MBR_DATA_ROOT)");
  train_cmd->add_option("--layout", t_layout, "dataset layout: csv|veri776");
  train_cmd->add_option("--out", t_out, "output directory");
  train_cmd->add_option("--run-name", t_run, "run directory name (default preset+timestamp)");
  train_cmd->add_option("--epochs", t_epochs, "training epochs");
  Index t_warmup = -1;
  std::vector<Index> t_decays;
  auto* decay_opt =
      train_cmd->add_option("--decay-epochs", t_decays, "learning-rate step epochs");
  train_cmd->add_option("--warmup", t_warmup, "warm-up epochs");
  train_cmd->add_option("--input-size", t_input, "input resolution");
  train_cmd->add_option("--seed", t_seed, "seed");
  train_cmd->add_option("--threads", t_threads, "worker threads");
  train_cmd->add_option("--lr", t_lr, "base learning rate");
  train_cmd->add_option("--p", t_p, "identities per batch");
  train_cmd->add_option("--k", t_k, "samples per identity");
  train_cmd->add_option("--pretrained", t_pretrained, "pretrained trunk weight container");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  // embed
  auto* embed = app.add_subcommand("embed", "extract descriptors into a binary container");
  std::string e_ckpt, e_manifest, e_root, e_layout = "csv", e_split = "query",
              e_out = "embeddings.bin";
  bool e_no_lai = false;
  Index e_batch = 16;
  int e_threads = 0;
  embed->add_option("--checkpoint", e_ckpt)->required();
  embed->add_option("--manifest", e_manifest, "manifest CSV");
  embed->add_option("--data-root", e_root);
  embed->add_option("--layout", e_layout);
  embed->add_option("--split", e_split, "train|query|gallery");
  embed->add_option("--out", e_out);
  embed->add_flag("--no-lai", e_no_lai, "skip side embeddings");
  embed->add_option("--batch", e_batch);
  embed->add_option("--threads", e_threads);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "retrieval evaluation (mAP, CMC)");
  std::string v_ckpt, v_query, v_gallery, v_root, v_layout = "csv", v_out;
  bool v_no_filter = false, v_no_lai = false;
  Index v_batch = 16;
  int v_threads = 0;
  eval_cmd->add_option("--checkpoint", v_ckpt)->required();
  eval_cmd->add_option("--query", v_query, "query manifest CSV");
  eval_cmd->add_option("--gallery", v_gallery, "gallery manifest CSV");
  eval_cmd->add_option("--data-root", v_root);
  eval_cmd->add_option("--layout", v_layout);
  eval_cmd->add_flag("--no-protocol-filter", v_no_filter,
                     "keep same-identity same-camera gallery entries");
  eval_cmd->add_flag("--no-lai", v_no_lai);
  eval_cmd->add_option("--out", v_out, "write the JSON result here too");
  eval_cmd->add_option("--batch", v_batch);
  eval_cmd->add_option("--threads", v_threads);

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "verify parameter/FLOP/dimension counts");
  std::vector<std::string> a_presets = {"all"};
  std::string a_json;
  audit_cmd->add_option("--presets", a_presets, "preset names or 'all'");
  audit_cmd->add_option("--json", a_json, "write the JSON report here");

  try {
    app.parse(argc, argv);

    if (*synth) return cmd_synth(synth_out, s_ids, s_cams, s_views, s_per, s_seed, s_size);
    if (*train_cmd) {
      cli::RunConfig cfg =
          config_path.empty() ? cli::RunConfig{} : cli::load_run_config(config_path);
      if (!t_preset.empty()) cfg.preset = t_preset;
      if (!t_root.empty()) cfg.data.root = t_root;
      if (!t_layout.empty()) cfg.data.layout = t_layout;
      if (!t_out.empty()) cfg.out_dir = t_out;
      if (!t_run.empty()) cfg.run_name = t_run;
      if (!t_pretrained.empty()) cfg.pretrained = t_pretrained;
      if (t_epochs >= 0) cfg.plan.epochs = t_epochs;
      if (t_warmup >= 0) cfg.plan.warmup_epochs = t_warmup;
      if (decay_opt->count() > 0) cfg.plan.decay_epochs = t_decays;
      if (t_input >= 0) cfg.input_size = t_input;
      if (t_seed >= 0) cfg.seed = std::uint64_t(t_seed);
      if (t_threads >= 0) cfg.threads = t_threads;
      if (t_lr > 0) cfg.plan.base_lr = t_lr;
      if (t_p > 0) cfg.pk.p = t_p;
      if (t_k > 0) cfg.pk.k = t_k;
      return cmd_train(std::move(cfg), resume);
    }
    if (*embed)
      return cmd_embed(e_ckpt, e_manifest, e_root, e_layout, e_split, e_out, e_no_lai, e_batch,
                       e_threads);
    if (*eval_cmd)
      return cmd_eval(v_ckpt, v_query, v_gallery, v_root, v_layout, v_no_filter, v_no_lai, v_out,
                      v_batch, v_threads);
    if (*audit_cmd) return cmd_audit(a_presets, a_json);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
