// Command-line driver: dataset synthesis, translation training, image
// translation/export, learner training, and retrieval evaluation.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "translearn/config.hpp"
#include "translearn/datamodel.hpp"
#include "translearn/evaluation.hpp"
#include "translearn/features.hpp"
#include "translearn/image_io.hpp"
#include "translearn/losses.hpp"
#include "translearn/networks.hpp"
#include "translearn/synthetic.hpp"
#include "translearn/training.hpp"

namespace fs = std::filesystem;
using namespace translearn;

namespace {

// ---- shared helpers ---------------------------------------------------------

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void check_device() {
  const char* dev = std::getenv("TRANSLEARN_DEVICE");
  if (!dev || !*dev) return;  // default: portable CPU execution
  if (lower(dev) == "cpu") return;
  throw std::runtime_error("TRANSLEARN_DEVICE='" + std::string(dev) +
                           "' is not available in this build; supported "
                           "devices: cpu");
}

// Every key any command understands.  Validated up front so a typo fails
// loudly while keys meant for the pipeline's other commands pass through.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "out",
      // datasets
      "data.source_root", "data.target_root", "data.source_layout",
      "data.target_layout",
      // synthetic generation
      "synthetic.num_identities", "synthetic.images_per_identity",
      "synthetic.query_per_identity", "synthetic.gallery_per_identity",
      "synthetic.distractors_per_domain", "synthetic.image_h",
      "synthetic.image_w", "synthetic.num_cameras", "synthetic.hue_delta",
      "synthetic.brightness_delta", "synthetic.background_seed",
      // network architecture
      "arch.image_h", "arch.image_w", "arch.backbone", "arch.ngf",
      "arch.n_down", "arch.n_blocks", "arch.ndf", "arch.d_layers",
      // adversarial training
      "train.mode", "train.batch_size", "train.epochs", "train.gan_lr",
      "train.adam_beta1", "train.adam_beta2", "train.gan_lr_const_epochs",
      "train.learner_lr_backbone", "train.learner_lr_head", "train.momentum",
      "train.weight_decay", "train.learner_lr_drop_epoch",
      "train.learner_lr_drop_factor", "train.image_pool_size",
      "train.checkpoint_every", "train.log_every", "train.augment",
      "train.adv_form", "train.alpha", "train.beta", "train.gamma",
      "train.lambda", "train.margin", "train.resume",
      // learner pretraining
      "pretrain.enabled", "pretrain.checkpoint", "pretrain.epochs",
      "pretrain.batch_size", "pretrain.lr_backbone", "pretrain.lr_head",
      "pretrain.lr_drop_epoch", "pretrain.lr_drop_factor", "pretrain.momentum",
      "pretrain.weight_decay", "pretrain.augment", "pretrain.log_every",
      "pretrain.checkpoint_every",
      // learner fine-tuning with translated images
      "learn.strategy", "learn.translated_root", "learn.epochs",
      "learn.batch_size", "learn.lr_backbone", "learn.lr_head",
      "learn.lr_drop_epoch", "learn.lr_drop_factor", "learn.momentum",
      "learn.weight_decay", "learn.augment", "learn.log_every",
      "learn.checkpoint_every",
      // translation export
      "translate.checkpoint", "translate.direction", "translate.in_root",
      "translate.identity",
      // evaluation
      "eval.checkpoint", "eval.lmp_parts", "eval.lmp_mode", "eval.protocol",
      "eval.batch_size", "eval.l2_normalize", "eval.export_descriptors",
  };
  return keys;
}

void validate_keys(const Config& cfg) {
  std::string bad;
  for (const std::string& k : cfg.keys()) {
    if (!known_keys().count(k)) bad += " '" + k + "'";
  }
  if (!bad.empty())
    throw std::runtime_error("config contains unknown key(s):" + bad);
}

Layout parse_layout(const std::string& s) {
  const std::string v = lower(s);
  if (v == "market") return Layout::Market;
  if (v == "duke") return Layout::Duke;
  if (v == "synthetic") return Layout::Synthetic;
  throw std::invalid_argument("unknown dataset layout '" + s +
                              "' (expected market, duke, or synthetic)");
}

BackboneKind parse_backbone(const std::string& s) {
  const std::string v = lower(s);
  if (v == "reference-small" || v == "small") return BackboneKind::ReferenceSmall;
  if (v == "resnet50-like" || v == "resnet50") return BackboneKind::ResNet50Like;
  throw std::invalid_argument("unknown backbone '" + s +
                              "' (expected reference-small or resnet50-like)");
}

AdvForm parse_adv_form(const std::string& s) {
  const std::string v = lower(s);
  if (v == "least-squares" || v == "ls") return AdvForm::LeastSquares;
  if (v == "log") return AdvForm::Log;
  throw std::invalid_argument("unknown adversarial form '" + s +
                              "' (expected least-squares or log)");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

// Line-delimited loss log: iter<TAB>name<TAB>value, one line per component
// plus the weighted total.
class LossLogger {
 public:
  LossLogger(const std::string& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open log file: " + path);
  }
  LossRecordHook hook() {
    return [this](std::int64_t iter, const LossComponents& rec) {
      for (const auto& kv : rec.values)
        out_ << iter << '\t' << kv.first << '\t' << fmt_double(kv.second)
             << '\n';
      out_ << iter << '\t' << "total" << '\t' << fmt_double(rec.total) << '\n';
      out_.flush();
    };
  }

 private:
  std::ofstream out_;
};

// Copies parameter values and buffers between two identically shaped
// networks (used to adopt a checkpointed learner into a fresh bundle).
void copy_network_state(const Network& dst, const Network& src) {
  const auto dp = dst.params();
  const auto sp = src.params();
  if (dp.size() != sp.size())
    throw std::runtime_error("network '" + dst.name() +
                             "': parameter count mismatch when adopting "
                             "checkpointed weights");
  for (std::size_t i = 0; i < dp.size(); ++i) {
    if (dp[i]->value.shape() != sp[i]->value.shape())
      throw std::runtime_error("network '" + dst.name() + "': parameter '" +
                               dp[i]->name + "' shape mismatch");
    dp[i]->value = sp[i]->value;
  }
  const auto db = dst.buffers();
  const auto sb = src.buffers();
  if (db.size() != sb.size())
    throw std::runtime_error("network '" + dst.name() +
                             "': buffer count mismatch");
  for (std::size_t i = 0; i < db.size(); ++i) *db[i].second = *sb[i].second;
}

std::string require_out(const Config& cfg) {
  const std::string out = cfg.get_string("out", "");
  if (out.empty())
    throw std::runtime_error("an output directory is required (--out or 'out')");
  fs::create_directories(out);
  return out;
}

BundleConfig arch_from_config(const Config& cfg, int num_classes,
                              std::uint64_t seed) {
  BundleConfig bc;
  bc.image_h = static_cast<int>(cfg.get_int("arch.image_h", bc.image_h));
  bc.image_w = static_cast<int>(cfg.get_int("arch.image_w", bc.image_w));
  bc.backbone = parse_backbone(cfg.get_string("arch.backbone", "reference-small"));
  bc.ngf = static_cast<int>(cfg.get_int("arch.ngf", bc.ngf));
  bc.n_down = static_cast<int>(cfg.get_int("arch.n_down", bc.n_down));
  bc.n_blocks = static_cast<int>(cfg.get_int("arch.n_blocks", bc.n_blocks));
  bc.ndf = static_cast<int>(cfg.get_int("arch.ndf", bc.ndf));
  bc.d_layers = static_cast<int>(cfg.get_int("arch.d_layers", bc.d_layers));
  bc.num_classes = num_classes;
  bc.seed = seed;
  return bc;
}

LearnerTrainConfig learner_config_from(const Config& cfg,
                                       const std::string& prefix,
                                       const LearnerTrainConfig& defaults,
                                       std::uint64_t seed) {
  LearnerTrainConfig c = defaults;
  c.batch_size = static_cast<int>(cfg.get_int(prefix + ".batch_size", c.batch_size));
  c.epochs = static_cast<int>(cfg.get_int(prefix + ".epochs", c.epochs));
  c.lr_backbone = cfg.get_double(prefix + ".lr_backbone", c.lr_backbone);
  c.lr_head = cfg.get_double(prefix + ".lr_head", c.lr_head);
  c.lr_drop_epoch = static_cast<int>(cfg.get_int(prefix + ".lr_drop_epoch", c.lr_drop_epoch));
  c.lr_drop_factor = cfg.get_double(prefix + ".lr_drop_factor", c.lr_drop_factor);
  c.momentum = cfg.get_double(prefix + ".momentum", c.momentum);
  c.weight_decay = cfg.get_double(prefix + ".weight_decay", c.weight_decay);
  c.augment = cfg.get_bool(prefix + ".augment", c.augment);
  c.log_every = static_cast<int>(cfg.get_int(prefix + ".log_every", c.log_every));
  c.checkpoint_every = static_cast<int>(cfg.get_int(prefix + ".checkpoint_every", c.checkpoint_every));
  c.seed = seed;
  return c;
}

Dataset load_configured_dataset(const Config& cfg, const std::string& root_key,
                                const std::string& layout_key, Domain domain) {
  const std::string root = cfg.get_string(root_key, "");
  if (root.empty())
    throw std::runtime_error("config key '" + root_key + "' is required");
  const Layout layout =
      parse_layout(cfg.get_string(layout_key, "synthetic"));
  return load_dataset(root, layout, domain);
}

// ---- commands ---------------------------------------------------------------

void cmd_generate_synthetic(const Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const std::string out = require_out(cfg);
  SyntheticConfig sc;
  sc.rng_seed = seed;
  sc.num_identities = static_cast<int>(cfg.get_int("synthetic.num_identities", 10));
  sc.images_per_identity_per_domain =
      static_cast<int>(cfg.get_int("synthetic.images_per_identity", 20));
  sc.query_per_identity =
      static_cast<int>(cfg.get_int("synthetic.query_per_identity", 2));
  sc.gallery_per_identity =
      static_cast<int>(cfg.get_int("synthetic.gallery_per_identity", 4));
  sc.distractors_per_domain =
      static_cast<int>(cfg.get_int("synthetic.distractors_per_domain", 0));
  sc.image_h = static_cast<int>(cfg.get_int("synthetic.image_h", 64));
  sc.image_w = static_cast<int>(cfg.get_int("synthetic.image_w", 32));
  sc.num_cameras = static_cast<int>(cfg.get_int("synthetic.num_cameras", 3));
  sc.style_shift.hue_delta = cfg.get_double("synthetic.hue_delta", 120.0);
  sc.style_shift.brightness_delta =
      cfg.get_double("synthetic.brightness_delta", -0.25);
  sc.style_shift.background_texture_seed =
      cfg.get_u64("synthetic.background_seed", 1);

  const SyntheticManifest manifest = generate_synthetic(sc, out);
  write_text_file(out + "/resolved_generate.cfg", cfg.resolved_text());
  std::cout << "wrote " << manifest.entries.size()
            << " images under " << out << " (manifest: "
            << manifest.manifest_path << ")\n";
}

void cmd_train(const Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const std::string out = require_out(cfg);

  const TrainMode mode = parse_train_mode(cfg.get_string("train.mode", "spgan"));
  const bool end_to_end =
      mode == TrainMode::ESPGAN || mode == TrainMode::NaiveESPGAN;
  TrainConfig tc = end_to_end ? TrainConfig::espgan_defaults()
                              : TrainConfig::spgan_defaults();
  tc.mode = mode;
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", tc.batch_size));
  tc.epochs = static_cast<int>(cfg.get_int("train.epochs", tc.epochs));
  tc.gan_lr = cfg.get_double("train.gan_lr", tc.gan_lr);
  tc.adam_beta1 = cfg.get_double("train.adam_beta1", tc.adam_beta1);
  tc.adam_beta2 = cfg.get_double("train.adam_beta2", tc.adam_beta2);
  tc.gan_lr_const_epochs = static_cast<int>(
      cfg.get_int("train.gan_lr_const_epochs", tc.gan_lr_const_epochs));
  tc.learner_lr_backbone =
      cfg.get_double("train.learner_lr_backbone", tc.learner_lr_backbone);
  tc.learner_lr_head = cfg.get_double("train.learner_lr_head", tc.learner_lr_head);
  tc.momentum = cfg.get_double("train.momentum", tc.momentum);
  tc.weight_decay = cfg.get_double("train.weight_decay", tc.weight_decay);
  tc.learner_lr_drop_epoch = static_cast<int>(
      cfg.get_int("train.learner_lr_drop_epoch", tc.learner_lr_drop_epoch));
  tc.learner_lr_drop_factor =
      cfg.get_double("train.learner_lr_drop_factor", tc.learner_lr_drop_factor);
  tc.image_pool_size =
      static_cast<int>(cfg.get_int("train.image_pool_size", tc.image_pool_size));
  tc.checkpoint_every =
      static_cast<int>(cfg.get_int("train.checkpoint_every", tc.checkpoint_every));
  tc.log_every = static_cast<int>(cfg.get_int("train.log_every", tc.log_every));
  tc.augment = cfg.get_bool("train.augment", tc.augment);
  tc.adv_form = parse_adv_form(cfg.get_string("train.adv_form", "least-squares"));
  tc.weights.alpha = cfg.get_double("train.alpha", tc.weights.alpha);
  tc.weights.beta = cfg.get_double("train.beta", tc.weights.beta);
  tc.weights.gamma = cfg.get_double("train.gamma", tc.weights.gamma);
  tc.weights.lambda = cfg.get_double("train.lambda", tc.weights.lambda);
  tc.weights.margin_m = cfg.get_double("train.margin", tc.weights.margin_m);
  tc.seed = seed;
  tc.validate();

  const Dataset source = load_configured_dataset(cfg, "data.source_root",
                                                 "data.source_layout",
                                                 Domain::Source);
  const Dataset target = load_configured_dataset(cfg, "data.target_root",
                                                 "data.target_layout",
                                                 Domain::Target);

  const BundleConfig bc =
      arch_from_config(cfg, std::max(2, source.num_classes), seed);
  NetworkBundle bundle = build_bundle(bc);

  const std::string resume = cfg.get_string("train.resume", "");
  const std::string pre_ckpt = cfg.get_string("pretrain.checkpoint", "");
  const bool pre_enabled = cfg.get_bool("pretrain.enabled", true);

  if (end_to_end && resume.empty()) {
    if (!pre_ckpt.empty()) {
      const LoadedCheckpoint lc = load_checkpoint_networks(pre_ckpt);
      if (lc.bundle.config.num_classes != bc.num_classes ||
          lc.bundle.config.backbone != bc.backbone)
        throw std::runtime_error(
            "pretrained learner checkpoint does not match the configured "
            "architecture/classes: " + pre_ckpt);
      copy_network_state(bundle.C.backbone, lc.bundle.C.backbone);
      copy_network_state(bundle.C.head, lc.bundle.C.head);
      std::cout << "adopted pretrained learner from " << pre_ckpt << "\n";
    } else if (pre_enabled) {
      LearnerTrainConfig pc = learner_config_from(
          cfg, "pretrain", LearnerTrainConfig{}, seed ^ hash_label("pretrain"));
      fs::create_directories(out + "/pretrain");
      LossLogger plog(out + "/pretrain_log.tsv", /*append=*/false);
      const double top1 = pretrain_learner(bundle.C, bc, source, pc,
                                           plog.hook(), out + "/pretrain");
      std::cout << "pretraining finished: training top-1 = " << top1 << "\n";
    } else {
      throw std::runtime_error(
          "mode '" + std::string(to_string(mode)) +
          "' requires a pretrained learner: set pretrain.checkpoint or "
          "pretrain.enabled = true");
    }
  }

  Trainer trainer(&bundle, tc);
  trainer.pid_map = source.pid_to_class;
  trainer.checkpoint_dir = out;
  if (!resume.empty()) {
    trainer.load_checkpoint(resume);
    std::cout << "resumed from " << resume << " at iteration "
              << trainer.state().iteration << "\n";
  }
  LossLogger tlog(out + "/train_log.tsv", /*append=*/!resume.empty());
  trainer.on_record = tlog.hook();

  AugmentFlags aug;
  aug.flip = tc.augment;
  aug.crop = tc.augment;
  BatchStream src_stream =
      make_batches(source.train, &source, tc.batch_size, bc.image_h, bc.image_w,
                   seed ^ hash_label("data:source"), aug, /*drop_last=*/false);
  BatchStream tgt_stream =
      make_batches(target.train, &target, tc.batch_size, bc.image_h, bc.image_w,
                   seed ^ hash_label("data:target"), aug, /*drop_last=*/false);

  trainer.run(src_stream, tgt_stream);
  write_text_file(out + "/resolved_train.cfg", cfg.resolved_text());
  std::cout << "training finished after " << trainer.state().iteration
            << " iterations; checkpoint: " << out << "/ckpt_"
            << to_string(mode) << "_" << trainer.state().iteration << "\n";
}

void cmd_translate(const Config& cfg) {
  const std::string out = require_out(cfg);
  const std::string direction =
      lower(cfg.get_string("translate.direction", "s2t"));
  if (direction != "s2t" && direction != "t2s")
    throw std::runtime_error("translate.direction must be s2t or t2s, got '" +
                             direction + "'");
  const std::string in_root = cfg.get_string("translate.in_root", "");
  if (in_root.empty())
    throw std::runtime_error("an input root is required (--in or "
                             "'translate.in_root')");
  if (!fs::exists(in_root))
    throw std::runtime_error("input root does not exist: " + in_root);
  const bool identity = cfg.get_bool("translate.identity", false);
  const std::string ckpt = cfg.get_string("translate.checkpoint", "");

  std::optional<LoadedCheckpoint> lc;
  const Network* gen = nullptr;
  int image_h = 0, image_w = 0;
  if (!identity) {
    if (ckpt.empty())
      throw std::runtime_error(
          "a trainer checkpoint is required (--checkpoint or "
          "'translate.checkpoint') unless --identity is given");
    lc = load_checkpoint_networks(ckpt);
    if (lc->kind != "trainer")
      throw std::runtime_error(
          "translation requires a trainer checkpoint with generators; '" +
          ckpt + "' is a learner checkpoint");
    gen = direction == "s2t" ? &lc->bundle.G : &lc->bundle.F;
    image_h = lc->bundle.config.image_h;
    image_w = lc->bundle.config.image_w;
  }

  // Deterministic traversal: sorted relative paths; directories mirrored so
  // empty splits survive.
  std::vector<std::string> dirs, files;
  for (const auto& entry : fs::recursive_directory_iterator(in_root)) {
    const std::string rel = fs::relative(entry.path(), in_root).string();
    if (entry.is_directory()) {
      dirs.push_back(rel);
    } else if (entry.is_regular_file()) {
      const std::string ext = lower(entry.path().extension().string());
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(rel);
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::sort(files.begin(), files.end());
  for (const std::string& d : dirs) fs::create_directories(fs::path(out) / d);

  int count = 0;
  for (const std::string& rel : files) {
    const fs::path src_path = fs::path(in_root) / rel;
    fs::path dst_path = fs::path(out) / rel;
    fs::create_directories(dst_path.parent_path());
    ImageU8 img = load_image(src_path.string());
    if (identity) {
      // Normalization round trip only; no resizing, no network.
      const Tensor px = normalize_image(img);
      save_image_png(dst_path.string(), denormalize_image(px));
    } else {
      dst_path.replace_extension(".png");  // lossless export
      ImageU8 resized = resize_bilinear(img, image_h, image_w);
      Tensor batch = stack_images({normalize_image(resized)});
      Tensor translated = gen->forward(batch, nullptr, {});
      Tensor row = translated.reshaped({3, image_h, image_w});
      save_image_png(dst_path.string(), denormalize_image(row));
    }
    ++count;
  }
  write_text_file(out + "/resolved_translate.cfg", cfg.resolved_text());
  std::cout << "translated " << count << " images (" << direction << ") into "
            << out << "\n";
}

void cmd_learn(const Config& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const std::string out = require_out(cfg);
  const std::string translated_root = cfg.get_string("learn.translated_root", "");
  if (translated_root.empty())
    throw std::runtime_error("a translated dataset root is required "
                             "(--translated or 'learn.translated_root')");
  const FinetuneStrategy strategy =
      parse_finetune_strategy(cfg.get_string("learn.strategy", "3"));

  const Dataset source = load_configured_dataset(cfg, "data.source_root",
                                                 "data.source_layout",
                                                 Domain::Source);
  const Layout layout =
      parse_layout(cfg.get_string("data.source_layout", "synthetic"));
  const Dataset translated =
      load_dataset(translated_root, layout, Domain::Source);

  const BundleConfig bc =
      arch_from_config(cfg, std::max(2, source.num_classes), seed);
  NetworkBundle bundle = build_bundle(bc);
  std::map<int, int> pid_map = source.pid_to_class;

  const std::string pre_ckpt = cfg.get_string("pretrain.checkpoint", "");
  if (!pre_ckpt.empty()) {
    const LoadedCheckpoint lc = load_checkpoint_networks(pre_ckpt);
    if (lc.bundle.config.num_classes != bc.num_classes ||
        lc.bundle.config.backbone != bc.backbone)
      throw std::runtime_error(
          "pretrained learner checkpoint does not match the configured "
          "architecture/classes: " + pre_ckpt);
    copy_network_state(bundle.C.backbone, lc.bundle.C.backbone);
    copy_network_state(bundle.C.head, lc.bundle.C.head);
    if (!lc.pid_map.empty()) pid_map = lc.pid_map;
    std::cout << "adopted pretrained learner from " << pre_ckpt << "\n";
  } else if (strategy == FinetuneStrategy::PretrainedInit) {
    LearnerTrainConfig pc = learner_config_from(
        cfg, "pretrain", LearnerTrainConfig{}, seed ^ hash_label("pretrain"));
    fs::create_directories(out + "/pretrain");
    LossLogger plog(out + "/pretrain_log.tsv", /*append=*/false);
    const double top1 = pretrain_learner(bundle.C, bc, source, pc, plog.hook(),
                                         out + "/pretrain");
    std::cout << "pretraining finished: training top-1 = " << top1 << "\n";
  }

  LearnerTrainConfig defaults;
  LearnerTrainConfig fc = learner_config_from(cfg, "learn", defaults,
                                              seed ^ hash_label("finetune"));
  LossLogger flog(out + "/learn_log.tsv", /*append=*/false);
  const double top1 =
      finetune_with_translated(bundle.C, bc, translated, &source, pid_map,
                               strategy, fc, flog.hook(), out);
  write_text_file(out + "/resolved_learn.cfg", cfg.resolved_text());
  std::cout << "learner training finished: training top-1 = " << top1 << "\n";
}

void cmd_evaluate(const Config& cfg) {
  const std::string out = require_out(cfg);
  const std::string ckpt = cfg.get_string("eval.checkpoint", "");
  if (ckpt.empty())
    throw std::runtime_error("a learner checkpoint is required (--checkpoint "
                             "or 'eval.checkpoint')");
  const int parts = static_cast<int>(cfg.get_int("eval.lmp_parts", 1));
  const PoolMode mode = parse_pool_mode(cfg.get_string("eval.lmp_mode", "avg"));
  const Protocol protocol = parse_protocol(cfg.get_string("eval.protocol", "sq"));
  const int batch = static_cast<int>(cfg.get_int("eval.batch_size", 16));
  const bool l2 = cfg.get_bool("eval.l2_normalize", false);
  const bool export_descs = cfg.get_bool("eval.export_descriptors", false);

  const Dataset target = load_configured_dataset(cfg, "data.target_root",
                                                 "data.target_layout",
                                                 Domain::Target);
  const LoadedCheckpoint lc = load_checkpoint_networks(ckpt);
  const int h = lc.bundle.config.image_h;
  const int w = lc.bundle.config.image_w;

  const DescriptorTable dq = extract_descriptors(lc.bundle.C, target.query,
                                                 parts, mode, batch, h, w, l2);
  const DescriptorTable dg = extract_descriptors(lc.bundle.C, target.gallery,
                                                 parts, mode, batch, h, w, l2);

  std::vector<EvalItem> q_items, g_items;
  q_items.reserve(target.query.size());
  for (const ReIDSample& s : target.query)
    q_items.push_back({s.person_id, s.camera_id});
  g_items.reserve(target.gallery.size());
  for (const ReIDSample& s : target.gallery)
    g_items.push_back({s.person_id, s.camera_id});

  const EvalReport report =
      evaluate(q_items, dq.rows, g_items, dg.rows, protocol);

  const std::string table = format_report(report);
  write_text_file(out + "/report.txt", table);
  write_text_file(out + "/report.kv", format_report_kv(report));
  if (export_descs) {
    export_descriptors(dq, out + "/query_descriptors.bin",
                       out + "/query_descriptors.tsv");
    export_descriptors(dg, out + "/gallery_descriptors.bin",
                       out + "/gallery_descriptors.tsv");
  }
  write_text_file(out + "/resolved_evaluate.cfg", cfg.resolved_text());
  std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "translearn: image-translation training and cross-domain person "
      "retrieval"};
  app.require_subcommand(1);

  std::string config_path, out_dir, mode_flag, lmp_mode, protocol;
  std::string checkpoint, direction, in_root, translated_root;
  std::uint64_t seed = 0;
  int lmp_parts = 0;
  bool identity = false;
  bool seed_given = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file (key = value lines)");
    sub->add_option("--seed", seed, "master random seed (overrides the config)")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
  };

  CLI::App* gen = app.add_subcommand(
      "generate-synthetic", "render the deterministic two-domain toy dataset");
  add_common(gen);

  CLI::App* train = app.add_subcommand(
      "train", "train a translation model (cyclegan/spgan/espgan/naive-espgan)");
  add_common(train);
  train->add_option("--mode", mode_flag,
                    "training mode (overrides 'train.mode')")
      ->check(CLI::IsMember({"cyclegan", "spgan", "espgan", "naive-espgan"}));

  CLI::App* translate = app.add_subcommand(
      "translate", "translate every image under a directory tree");
  add_common(translate);
  translate->add_option("--checkpoint", checkpoint, "trainer checkpoint");
  translate->add_option("--direction", direction, "s2t (G) or t2s (F)")
      ->check(CLI::IsMember({"s2t", "t2s"}));
  translate->add_option("--in", in_root, "input dataset root");
  translate->add_flag("--identity", identity,
                      "bypass the generator: 8-bit round trip of the inputs");

  CLI::App* learn = app.add_subcommand(
      "learn", "train the feature learner from translated images");
  add_common(learn);
  learn->add_option("--translated", translated_root,
                    "root of the translated dataset");
  learn->add_option("--checkpoint", checkpoint,
                    "pretrained learner checkpoint (skips pretraining)");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "retrieval evaluation of a learner on the target dataset");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "learner checkpoint");
  evaluate->add_option("--lmp-parts", lmp_parts,
                       "horizontal parts for descriptor pooling");
  evaluate->add_option("--lmp-mode", lmp_mode, "band pooling mode")
      ->check(CLI::IsMember({"max", "avg"}));
  evaluate->add_option("--protocol", protocol, "query protocol")
      ->check(CLI::IsMember({"sq", "mq"}));

  CLI11_PARSE(app, argc, argv);

  try {
    check_device();
    Config cfg = config_path.empty() ? Config()
                                     : Config::parse_file(config_path);
    validate_keys(cfg);

    // Command-line overrides land in the same key space as the file.
    if (seed_given) cfg.set("seed", std::to_string(seed));
    if (!out_dir.empty()) cfg.set("out", out_dir);
    if (!mode_flag.empty()) cfg.set("train.mode", mode_flag);
    if (!checkpoint.empty()) {
      cfg.set("translate.checkpoint", checkpoint);
      cfg.set("pretrain.checkpoint", checkpoint);
      cfg.set("eval.checkpoint", checkpoint);
    }
    if (!direction.empty()) cfg.set("translate.direction", direction);
    if (!in_root.empty()) cfg.set("translate.in_root", in_root);
    if (identity) cfg.set("translate.identity", "true");
    if (!translated_root.empty()) cfg.set("learn.translated_root", translated_root);
    if (lmp_parts > 0) cfg.set("eval.lmp_parts", std::to_string(lmp_parts));
    if (!lmp_mode.empty()) cfg.set("eval.lmp_mode", lmp_mode);
    if (!protocol.empty()) cfg.set("eval.protocol", protocol);

    if (gen->parsed()) cmd_generate_synthetic(cfg);
    else if (train->parsed()) cmd_train(cfg);
    else if (translate->parsed()) cmd_translate(cfg);
    else if (learn->parsed()) cmd_learn(cfg);
    else if (evaluate->parsed()) cmd_evaluate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
