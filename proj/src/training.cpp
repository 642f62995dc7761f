#include "translearn/training.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "translearn/pairs.hpp"

namespace translearn {

namespace {

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string format_records(
    const std::deque<std::pair<std::int64_t, LossComponents>>& recent) {
  std::ostringstream out;
  for (const auto& [iter, rec] : recent) {
    out << "  iter " << iter << ": total=" << rec.total;
    for (const auto& kv : rec.values) out << " " << kv.first << "=" << kv.second;
    out << "\n";
  }
  return out.str();
}

void check_finite_or_throw(
    std::int64_t iteration, const LossComponents& rec,
    const std::deque<std::pair<std::int64_t, LossComponents>>& recent) {
  bool finite = std::isfinite(rec.total);
  for (const auto& kv : rec.values) finite = finite && std::isfinite(kv.second);
  if (finite) return;
  throw std::runtime_error("non-finite loss at iteration " +
                           std::to_string(iteration) +
                           "; last records:\n" + format_records(recent));
}

// Copies row `src_row` of a [B, C, H, W] tensor into row `dst_row` of `dst`.
void copy_row(const Tensor& src, int src_row, Tensor& dst, int dst_row) {
  const std::int64_t plane = src.size() / src.dim(0);
  std::copy(src.data() + src_row * plane, src.data() + (src_row + 1) * plane,
            dst.data() + dst_row * plane);
}

void save_pool(ArchiveWriter& w, const std::string& name, const ImagePool& p) {
  w.section("pool:" + name);
  w.u32(static_cast<std::uint32_t>(p.capacity()));
  w.u32(static_cast<std::uint32_t>(p.size()));
  for (const Tensor& img : p.images()) w.tensor(img);
}

void load_pool(ArchiveReader& r, const std::string& name, ImagePool& p) {
  r.expect_section("pool:" + name);
  const int capacity = static_cast<int>(r.u32());
  if (capacity != p.capacity())
    throw std::runtime_error("checkpoint image-pool capacity mismatch: saved " +
                             std::to_string(capacity) + ", configured " +
                             std::to_string(p.capacity()));
  const int count = static_cast<int>(r.u32());
  std::vector<Tensor> imgs;
  imgs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) imgs.push_back(r.tensor());
  p.set_images(std::move(imgs));
}

}  // namespace

// ---- mode names ---------------------------------------------------------

TrainMode parse_train_mode(const std::string& s) {
  const std::string v = lowercase(s);
  if (v == "cyclegan") return TrainMode::CycleGAN;
  if (v == "spgan") return TrainMode::SPGAN;
  if (v == "espgan") return TrainMode::ESPGAN;
  if (v == "naive-espgan" || v == "naive_espgan" || v == "naiveespgan")
    return TrainMode::NaiveESPGAN;
  throw std::invalid_argument(
      "unknown training mode '" + s +
      "' (expected cyclegan, spgan, espgan, or naive-espgan)");
}

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::CycleGAN: return "cyclegan";
    case TrainMode::SPGAN: return "spgan";
    case TrainMode::ESPGAN: return "espgan";
    case TrainMode::NaiveESPGAN: return "naive-espgan";
  }
  return "?";
}

FinetuneStrategy parse_finetune_strategy(const std::string& s) {
  const std::string v = lowercase(s);
  if (v == "1" || v == "translated-only") return FinetuneStrategy::TranslatedOnly;
  if (v == "2" || v == "combined") return FinetuneStrategy::CombinedSets;
  if (v == "3" || v == "pretrained") return FinetuneStrategy::PretrainedInit;
  throw std::invalid_argument(
      "unknown finetune strategy '" + s +
      "' (expected 1/translated-only, 2/combined, or 3/pretrained)");
}

// ---- configs ------------------------------------------------------------

TrainConfig TrainConfig::spgan_defaults() {
  TrainConfig c;
  c.mode = TrainMode::SPGAN;
  c.batch_size = 1;
  c.epochs = 6;
  c.gan_lr = 2e-4;
  c.gan_lr_const_epochs = 6;
  return c;
}

TrainConfig TrainConfig::espgan_defaults() {
  TrainConfig c;
  c.mode = TrainMode::ESPGAN;
  c.batch_size = 16;
  c.epochs = 15;
  c.gan_lr = 1e-4;
  c.gan_lr_const_epochs = 10;
  c.learner_lr_backbone = 1e-3;
  c.learner_lr_head = 1e-2;
  c.learner_lr_drop_epoch = 10;
  return c;
}

void TrainConfig::validate() const {
  weights.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (gan_lr <= 0) throw std::invalid_argument("gan_lr must be positive");
  if (gan_lr_const_epochs < 0)
    throw std::invalid_argument("gan_lr_const_epochs must be >= 0");
  if (learner_lr_backbone <= 0 || learner_lr_head <= 0)
    throw std::invalid_argument("learner learning rates must be positive");
  if (learner_lr_drop_factor <= 0 || learner_lr_drop_factor > 1)
    throw std::invalid_argument("learner_lr_drop_factor must lie in (0, 1]");
  if (momentum < 0 || momentum >= 1)
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  if (image_pool_size < 0)
    throw std::invalid_argument("image_pool_size must be >= 0");
  if (checkpoint_every < 0)
    throw std::invalid_argument("checkpoint_every must be >= 0");
  if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
}

void LearnerTrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (lr_backbone <= 0 || lr_head <= 0)
    throw std::invalid_argument("learning rates must be positive");
  if (lr_drop_factor <= 0 || lr_drop_factor > 1)
    throw std::invalid_argument("lr_drop_factor must lie in (0, 1]");
  if (momentum < 0 || momentum >= 1)
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  if (checkpoint_every < 0)
    throw std::invalid_argument("checkpoint_every must be >= 0");
  if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
}

// ---- image pool -----------------------------------------------------------

ImagePool::ImagePool(int capacity) : capacity_(capacity) {
  if (capacity < 0) throw std::invalid_argument("image pool capacity must be >= 0");
}

Tensor ImagePool::query(const Tensor& fakes, Rng& rng) {
  if (fakes.ndim() != 4)
    throw std::invalid_argument("image pool expects a [B, C, H, W] tensor");
  if (capacity_ == 0) return fakes;
  const int B = fakes.dim(0);
  const std::int64_t plane = fakes.size() / B;
  if (!images_.empty() && images_.front().size() != plane)
    throw std::invalid_argument("image pool received a different image shape");
  Tensor out(fakes.shape());
  const std::vector<int> img_shape{fakes.dim(1), fakes.dim(2), fakes.dim(3)};
  for (int n = 0; n < B; ++n) {
    Tensor img(img_shape);
    std::copy(fakes.data() + n * plane, fakes.data() + (n + 1) * plane,
              img.data());
    if (static_cast<int>(images_.size()) < capacity_) {
      std::copy(img.data(), img.data() + plane, out.data() + n * plane);
      images_.push_back(std::move(img));
    } else if (rng.bernoulli(0.5)) {
      const int j = static_cast<int>(
          rng.below(static_cast<std::uint64_t>(images_.size())));
      std::copy(images_[static_cast<std::size_t>(j)].data(),
                images_[static_cast<std::size_t>(j)].data() + plane,
                out.data() + n * plane);
      images_[static_cast<std::size_t>(j)] = std::move(img);
    } else {
      std::copy(img.data(), img.data() + plane, out.data() + n * plane);
    }
  }
  return out;
}

// ---- trainer ----------------------------------------------------------------

Trainer::Trainer(NetworkBundle* bundle, const TrainConfig& cfg)
    : bundle_(bundle),
      cfg_(cfg),
      opt_G_(bundle->G.params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2),
      opt_F_(bundle->F.params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2),
      opt_DT_(bundle->D_T.params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2),
      opt_DS_(bundle->D_S.params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2),
      opt_M_(bundle->M.params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2),
      opt_C_({{bundle->C.backbone.params(), cfg.learner_lr_backbone},
              {bundle->C.head.params(), cfg.learner_lr_head}},
             cfg.momentum, cfg.weight_decay),
      pool_T_(cfg.image_pool_size),
      pool_S_(cfg.image_pool_size),
      pool_rng_(derive_stream(cfg.seed, "pool")),
      dropout_rng_(derive_stream(cfg.seed, "dropout")) {
  cfg_.validate();
  if (cfg_.mode == TrainMode::ESPGAN || cfg_.mode == TrainMode::NaiveESPGAN) {
    // The learner's normalization statistics stay fixed while it guides (or
    // is fine-tuned alongside) the translator.
    bundle_->C.backbone.set_bn_frozen(true);
  }
}

LossWeights Trainer::effective_weights() const {
  LossWeights w = cfg_.weights;
  if (cfg_.mode == TrainMode::CycleGAN) w.gamma = 0.0;
  return w;
}

void Trainer::apply_epoch_schedule(int epoch) {
  double scale = 1.0;
  if (epoch >= cfg_.gan_lr_const_epochs && cfg_.epochs > cfg_.gan_lr_const_epochs) {
    scale = static_cast<double>(cfg_.epochs - epoch) /
            static_cast<double>(cfg_.epochs - cfg_.gan_lr_const_epochs);
    scale = std::max(0.0, scale);
  }
  const double lr = cfg_.gan_lr * scale;
  opt_G_.lr = lr;
  opt_F_.lr = lr;
  opt_DT_.lr = lr;
  opt_DS_.lr = lr;
  opt_M_.lr = lr;
  const double ls =
      (epoch >= cfg_.learner_lr_drop_epoch) ? cfg_.learner_lr_drop_factor : 1.0;
  opt_C_.groups()[0].lr = cfg_.learner_lr_backbone * ls;
  opt_C_.groups()[1].lr = cfg_.learner_lr_head * ls;
}

void Trainer::discriminator_phase(const ImageLabelBatch& bs,
                                  const ImageLabelBatch& bt,
                                  const TranslationOutputs& outs,
                                  LossComponents& rec) {
  NetworkBundle& b = *bundle_;

  // Target-style discriminator: real x_t against pooled G(x_s).
  const Tensor pooled_t = pool_T_.query(outs.fake_t, pool_rng_);
  b.D_T.zero_grad();
  Trace tr_tr, tr_tf;
  Tensor s_real_t = b.D_T.forward(bt.pixels, &tr_tr, {});
  Tensor s_fake_t = b.D_T.forward(pooled_t, &tr_tf, {});
  Tensor g_real_t, g_fake_t;
  const double d_t =
      adv_loss_d(s_real_t, s_fake_t, cfg_.adv_form, &g_real_t, &g_fake_t);
  b.D_T.backward(tr_tr, g_real_t, /*accum=*/true);
  b.D_T.backward(tr_tf, g_fake_t, /*accum=*/true);
  opt_DT_.step();
  b.D_T.zero_grad();

  // Source-style discriminator: real x_s against pooled F(x_t).
  const Tensor pooled_s = pool_S_.query(outs.fake_s, pool_rng_);
  b.D_S.zero_grad();
  Trace tr_sr, tr_sf;
  Tensor s_real_s = b.D_S.forward(bs.pixels, &tr_sr, {});
  Tensor s_fake_s = b.D_S.forward(pooled_s, &tr_sf, {});
  Tensor g_real_s, g_fake_s;
  const double d_s =
      adv_loss_d(s_real_s, s_fake_s, cfg_.adv_form, &g_real_s, &g_fake_s);
  b.D_S.backward(tr_sr, g_real_s, /*accum=*/true);
  b.D_S.backward(tr_sf, g_fake_s, /*accum=*/true);
  opt_DS_.step();
  b.D_S.zero_grad();

  rec.add("d_T", d_t);
  rec.add("d_S", d_s);
}

LossComponents Trainer::generator_phase(const ImageLabelBatch& bs,
                                        const ImageLabelBatch& bt,
                                        TranslationOutputs& outs) {
  NetworkBundle& b = *bundle_;
  const LossWeights w = effective_weights();
  b.G.zero_grad();
  b.F.zero_grad();
  LossComponents rec;
  if (cfg_.mode == TrainMode::CycleGAN || cfg_.mode == TrainMode::SPGAN) {
    rec = spgan_objective(b, bs.pixels, bt.pixels, w, cfg_.adv_form,
                          /*backward=*/true, &outs);
  } else {
    rec = espgan_objective(b, bs.pixels, bs.labels, bt.pixels, w, cfg_.adv_form,
                           /*backward=*/true, &outs);
  }
  opt_G_.step();
  opt_F_.step();
  b.G.zero_grad();
  b.F.zero_grad();
  return rec;
}

void Trainer::similarity_phase(const ImageLabelBatch& bs,
                               const ImageLabelBatch& bt,
                               const TranslationOutputs& outs,
                               LossComponents& rec) {
  // Minimizes the weighted contrastive objective over the four pair kinds,
  // updating the embedder only.  A zero weight removes the phase entirely
  // (exact reduction to the cycle-consistency baseline).
  const LossWeights w = effective_weights();
  if (w.gamma == 0.0) return;
  NetworkBundle& b = *bundle_;
  b.M.zero_grad();
  Trace tr_s, tr_t, tr_ft, tr_fs;
  Tensor E_s = b.M.forward(bs.pixels, &tr_s, {});
  Tensor E_t = b.M.forward(bt.pixels, &tr_t, {});
  Tensor E_ft = b.M.forward(outs.fake_t, &tr_ft, {});
  Tensor E_fs = b.M.forward(outs.fake_s, &tr_fs, {});
  Tensor g_s(E_s.shape()), g_t(E_t.shape()), g_ft(E_ft.shape()),
      g_fs(E_fs.shape());
  const double invB = 1.0 / static_cast<double>(bs.size());
  const double con = pair_contrastive_sum(E_s, E_ft, E_t, E_fs, w.margin_m,
                                          &g_s, &g_ft, &g_t, &g_fs) *
                     invB;
  const double scale = w.gamma * invB;
  g_s.scale_(scale);
  g_t.scale_(scale);
  g_ft.scale_(scale);
  g_fs.scale_(scale);
  b.M.backward(tr_s, g_s, /*accum=*/true);
  b.M.backward(tr_t, g_t, /*accum=*/true);
  b.M.backward(tr_ft, g_ft, /*accum=*/true);
  b.M.backward(tr_fs, g_fs, /*accum=*/true);
  opt_M_.step();
  b.M.zero_grad();
  rec.add("sia", w.gamma * con);
}

LossComponents Trainer::train_step_spgan(const ImageLabelBatch& bs,
                                         const ImageLabelBatch& bt) {
  // Generator phase: only G and F accumulate gradients and step.
  TranslationOutputs outs;
  LossComponents rec = generator_phase(bs, bt, outs);
  // Discriminator phase on the pre-update translations via the history pool.
  discriminator_phase(bs, bt, outs, rec);
  similarity_phase(bs, bt, outs, rec);
  return rec;
}

void Trainer::learner_phase(const ImageLabelBatch& bs, const Tensor& translated,
                            LossComponents& rec) {
  NetworkBundle& b = *bundle_;
  const int B = bs.size();
  // Half translated (with their source labels), half raw source; with odd
  // batch sizes the middle element appears in both halves so each kind is
  // always present.
  const int n_translated = (B + 1) / 2;
  const int raw_from = B / 2;
  const int n_rows = n_translated + (B - raw_from);
  Tensor mixed({n_rows, bs.pixels.dim(1), bs.pixels.dim(2), bs.pixels.dim(3)});
  std::vector<int> labels(static_cast<std::size_t>(n_rows));
  int row = 0;
  for (int i = 0; i < n_translated; ++i, ++row) {
    copy_row(translated, i, mixed, row);
    labels[static_cast<std::size_t>(row)] = bs.labels[static_cast<std::size_t>(i)];
  }
  for (int i = raw_from; i < B; ++i, ++row) {
    copy_row(bs.pixels, i, mixed, row);
    labels[static_cast<std::size_t>(row)] = bs.labels[static_cast<std::size_t>(i)];
  }

  b.C.backbone.zero_grad();
  b.C.head.zero_grad();
  FwdOpts opts;
  opts.train = true;
  opts.rng = &dropout_rng_;
  Trace tr_bb, tr_head;
  Tensor fmap = b.C.backbone.forward(mixed, &tr_bb, opts);
  Tensor logits = b.C.head.forward(fmap, &tr_head, opts);
  Tensor g_logits;
  const double ce = classification_loss(logits, labels, &g_logits);
  Tensor g_fmap = b.C.head.backward(tr_head, g_logits, /*accum=*/true);
  b.C.backbone.backward(tr_bb, g_fmap, /*accum=*/true);
  opt_C_.step();
  b.C.backbone.zero_grad();
  b.C.head.zero_grad();
  rec.add("learner_ce", ce);
}

LossComponents Trainer::train_step_espgan(const ImageLabelBatch& bs,
                                          const ImageLabelBatch& bt) {
  for (int label : bs.labels) {
    if (label < 0)
      throw std::runtime_error(
          "end-to-end training requires labeled source batches");
  }
  // Translator phase: the frozen learner relays classification gradients.
  TranslationOutputs outs;
  LossComponents rec = generator_phase(bs, bt, outs);
  discriminator_phase(bs, bt, outs, rec);
  // Learner phase (the frozen-learner ablation never updates C).
  if (cfg_.mode == TrainMode::ESPGAN) learner_phase(bs, outs.fake_t, rec);
  return rec;
}

LossComponents Trainer::step(const ImageLabelBatch& bs,
                             const ImageLabelBatch& bt) {
  LossComponents rec;
  try {
    if (cfg_.mode == TrainMode::CycleGAN || cfg_.mode == TrainMode::SPGAN) {
      rec = train_step_spgan(bs, bt);
    } else {
      rec = train_step_espgan(bs, bt);
    }
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + "\nlast records:\n" +
                             format_records(recent_));
  }
  ++st_.iteration;
  record(rec);
  return rec;
}

void Trainer::record(const LossComponents& rec) {
  recent_.emplace_back(st_.iteration, rec);
  while (recent_.size() > 10) recent_.pop_front();
  check_finite_or_throw(st_.iteration, rec, recent_);
  if (on_record && st_.iteration % cfg_.log_every == 0)
    on_record(st_.iteration, rec);
}

void Trainer::maybe_checkpoint() {
  if (checkpoint_dir.empty() || cfg_.checkpoint_every <= 0) return;
  if (st_.iteration % cfg_.checkpoint_every != 0) return;
  save_checkpoint(checkpoint_dir + "/ckpt_" + to_string(cfg_.mode) + "_" +
                  std::to_string(st_.iteration));
}

void Trainer::run(BatchStream& source, BatchStream& target) {
  const int resume_epoch = st_.epoch;
  const int resume_batch = st_.batch_in_epoch;
  for (int e = resume_epoch; e < cfg_.epochs; ++e) {
    apply_epoch_schedule(e);
    source.start_epoch(e);
    target.start_epoch(e);
    const int nb =
        std::min(source.batches_per_epoch(), target.batches_per_epoch());
    const int start = (e == resume_epoch) ? std::min(resume_batch, nb) : 0;
    if (start > 0) {
      source.skip_batches(start);
      target.skip_batches(start);
    }
    st_.epoch = e;
    st_.batch_in_epoch = start;
    for (int bi = start; bi < nb; ++bi) {
      auto bs = source.next();
      auto bt = target.next();
      if (!bs || !bt) break;
      step(*bs, *bt);
      st_.batch_in_epoch = bi + 1;
      maybe_checkpoint();
    }
  }
  st_.epoch = cfg_.epochs;
  st_.batch_in_epoch = 0;
  if (!checkpoint_dir.empty()) {
    save_checkpoint(checkpoint_dir + "/ckpt_" + to_string(cfg_.mode) + "_" +
                    std::to_string(st_.iteration));
  }
}

void Trainer::save_checkpoint(const std::string& path) const {
  ArchiveWriter w(path);
  w.section("ckpt:trainer");
  save_bundle_config(w, bundle_->config);
  w.section("train_state");
  w.str(to_string(cfg_.mode));
  w.i64(st_.iteration);
  w.i64(st_.epoch);
  w.i64(st_.batch_in_epoch);
  save_network(w, bundle_->G);
  save_network(w, bundle_->F);
  save_network(w, bundle_->D_T);
  save_network(w, bundle_->D_S);
  save_network(w, bundle_->M);
  save_network(w, bundle_->C.backbone);
  save_network(w, bundle_->C.head);
  save_pid_map(w, pid_map);
  save_adam(w, "G", opt_G_);
  save_adam(w, "F", opt_F_);
  save_adam(w, "D_T", opt_DT_);
  save_adam(w, "D_S", opt_DS_);
  save_adam(w, "M", opt_M_);
  save_sgd(w, "C", opt_C_);
  save_rng(w, "pool", pool_rng_);
  save_rng(w, "dropout", dropout_rng_);
  save_pool(w, "pool_T", pool_T_);
  save_pool(w, "pool_S", pool_S_);
  w.close();
}

void Trainer::load_checkpoint(const std::string& path) {
  ArchiveReader r(path);
  r.expect_section("ckpt:trainer");
  const BundleConfig saved = load_bundle_config(r);
  const BundleConfig& cur = bundle_->config;
  if (saved.image_h != cur.image_h || saved.image_w != cur.image_w ||
      saved.num_classes != cur.num_classes || saved.backbone != cur.backbone ||
      saved.ngf != cur.ngf || saved.n_down != cur.n_down ||
      saved.n_blocks != cur.n_blocks || saved.ndf != cur.ndf ||
      saved.d_layers != cur.d_layers) {
    throw std::runtime_error(
        "checkpoint network configuration does not match the current bundle: " +
        path);
  }
  r.expect_section("train_state");
  const std::string mode = r.str();
  if (mode != to_string(cfg_.mode))
    throw std::runtime_error("checkpoint was written by mode '" + mode +
                             "' but the trainer is configured for '" +
                             to_string(cfg_.mode) + "'");
  st_.iteration = r.i64();
  st_.epoch = static_cast<int>(r.i64());
  st_.batch_in_epoch = static_cast<int>(r.i64());
  load_network(r, bundle_->G);
  load_network(r, bundle_->F);
  load_network(r, bundle_->D_T);
  load_network(r, bundle_->D_S);
  load_network(r, bundle_->M);
  load_network(r, bundle_->C.backbone);
  load_network(r, bundle_->C.head);
  pid_map = load_pid_map(r);
  load_adam(r, "G", opt_G_);
  load_adam(r, "F", opt_F_);
  load_adam(r, "D_T", opt_DT_);
  load_adam(r, "D_S", opt_DS_);
  load_adam(r, "M", opt_M_);
  load_sgd(r, "C", opt_C_);
  load_rng(r, "pool", pool_rng_);
  load_rng(r, "dropout", dropout_rng_);
  load_pool(r, "pool_T", pool_T_);
  load_pool(r, "pool_S", pool_S_);
}

// ---- learner trainer --------------------------------------------------------

LearnerTrainer::LearnerTrainer(Learner* learner, const LearnerTrainConfig& cfg,
                               const BundleConfig& arch)
    : learner_(learner),
      cfg_(cfg),
      arch_(arch),
      opt_({{learner->backbone.params(), cfg.lr_backbone},
            {learner->head.params(), cfg.lr_head}},
           cfg.momentum, cfg.weight_decay),
      dropout_rng_(derive_stream(cfg.seed, "dropout")) {
  cfg_.validate();
  learner_->backbone.set_bn_frozen(cfg_.freeze_bn);
}

void LearnerTrainer::apply_epoch_schedule(int epoch) {
  const double s = (epoch >= cfg_.lr_drop_epoch) ? cfg_.lr_drop_factor : 1.0;
  opt_.groups()[0].lr = cfg_.lr_backbone * s;
  opt_.groups()[1].lr = cfg_.lr_head * s;
}

LossComponents LearnerTrainer::step(const ImageLabelBatch& batch) {
  for (int label : batch.labels) {
    if (label < 0 || label >= arch_.num_classes)
      throw std::runtime_error("label " + std::to_string(label) +
                               " outside the learner's class range [0, " +
                               std::to_string(arch_.num_classes) + ")");
  }
  learner_->backbone.zero_grad();
  learner_->head.zero_grad();
  FwdOpts opts;
  opts.train = true;
  opts.rng = &dropout_rng_;
  Trace tr_bb, tr_head;
  Tensor fmap = learner_->backbone.forward(batch.pixels, &tr_bb, opts);
  Tensor logits = learner_->head.forward(fmap, &tr_head, opts);
  Tensor g_logits;
  const double ce = classification_loss(logits, batch.labels, &g_logits);
  Tensor g_fmap = learner_->head.backward(tr_head, g_logits, /*accum=*/true);
  learner_->backbone.backward(tr_bb, g_fmap, /*accum=*/true);
  opt_.step();
  learner_->backbone.zero_grad();
  learner_->head.zero_grad();

  // Training top-1 bookkeeping (on the pre-update logits).
  const int B = batch.size();
  const int K = logits.dim(1);
  int correct = 0;
  for (int n = 0; n < B; ++n) {
    int best = 0;
    for (int k = 1; k < K; ++k) {
      if (logits.at2(n, k) > logits.at2(n, best)) best = k;
    }
    if (best == batch.labels[static_cast<std::size_t>(n)]) ++correct;
  }
  epoch_correct_ += correct;
  epoch_seen_ += B;

  LossComponents rec;
  rec.add("ce", ce);
  rec.add("top1", static_cast<double>(correct) / static_cast<double>(B));
  rec.total = ce;

  ++st_.iteration;
  record(rec);
  return rec;
}

void LearnerTrainer::record(const LossComponents& rec) {
  recent_.emplace_back(st_.iteration, rec);
  while (recent_.size() > 10) recent_.pop_front();
  check_finite_or_throw(st_.iteration, rec, recent_);
  if (on_record && st_.iteration % cfg_.log_every == 0)
    on_record(st_.iteration, rec);
}

void LearnerTrainer::run(BatchStream& stream) {
  const int resume_epoch = st_.epoch;
  const int resume_batch = st_.batch_in_epoch;
  for (int e = resume_epoch; e < cfg_.epochs; ++e) {
    apply_epoch_schedule(e);
    stream.start_epoch(e);
    const int nb = stream.batches_per_epoch();
    const int start = (e == resume_epoch) ? std::min(resume_batch, nb) : 0;
    if (start > 0) stream.skip_batches(start);
    st_.epoch = e;
    st_.batch_in_epoch = start;
    for (int bi = start; bi < nb; ++bi) {
      auto batch = stream.next();
      if (!batch) break;
      step(*batch);
      st_.batch_in_epoch = bi + 1;
      if (!checkpoint_dir.empty() && cfg_.checkpoint_every > 0 &&
          st_.iteration % cfg_.checkpoint_every == 0) {
        save_checkpoint(checkpoint_dir + "/ckpt_learner_" +
                        std::to_string(st_.iteration));
      }
    }
    if (epoch_seen_ > 0) {
      last_epoch_top1_ = static_cast<double>(epoch_correct_) /
                         static_cast<double>(epoch_seen_);
    }
    epoch_correct_ = 0;
    epoch_seen_ = 0;
  }
  st_.epoch = cfg_.epochs;
  st_.batch_in_epoch = 0;
  if (!checkpoint_dir.empty()) {
    save_checkpoint(checkpoint_dir + "/ckpt_learner_" +
                    std::to_string(st_.iteration));
  }
}

void LearnerTrainer::save_checkpoint(const std::string& path) const {
  ArchiveWriter w(path);
  w.section("ckpt:learner");
  save_bundle_config(w, arch_);
  w.section("learner_state");
  w.i64(st_.iteration);
  w.i64(st_.epoch);
  w.i64(st_.batch_in_epoch);
  w.i64(epoch_correct_);
  w.i64(epoch_seen_);
  w.f64(last_epoch_top1_);
  save_network(w, learner_->backbone);
  save_network(w, learner_->head);
  save_pid_map(w, pid_map);
  save_sgd(w, "C", opt_);
  save_rng(w, "dropout", dropout_rng_);
  w.close();
}

void LearnerTrainer::load_checkpoint(const std::string& path) {
  ArchiveReader r(path);
  r.expect_section("ckpt:learner");
  const BundleConfig saved = load_bundle_config(r);
  if (saved.num_classes != arch_.num_classes ||
      saved.backbone != arch_.backbone || saved.image_h != arch_.image_h ||
      saved.image_w != arch_.image_w) {
    throw std::runtime_error(
        "learner checkpoint configuration does not match: " + path);
  }
  r.expect_section("learner_state");
  st_.iteration = r.i64();
  st_.epoch = static_cast<int>(r.i64());
  st_.batch_in_epoch = static_cast<int>(r.i64());
  epoch_correct_ = r.i64();
  epoch_seen_ = r.i64();
  last_epoch_top1_ = r.f64();
  load_network(r, learner_->backbone);
  load_network(r, learner_->head);
  pid_map = load_pid_map(r);
  load_sgd(r, "C", opt_);
  load_rng(r, "dropout", dropout_rng_);
}

// ---- high-level learner procedures -----------------------------------------

double pretrain_learner(Learner& learner, const BundleConfig& arch,
                        const Dataset& source, const LearnerTrainConfig& cfg,
                        const LossRecordHook& on_record,
                        const std::string& checkpoint_dir) {
  if (source.train.empty())
    throw std::runtime_error("pretraining requires a non-empty train split");
  LearnerTrainer lt(&learner, cfg, arch);
  lt.pid_map = source.pid_to_class;
  lt.on_record = on_record;
  lt.checkpoint_dir = checkpoint_dir;
  AugmentFlags aug;
  aug.flip = cfg.augment;
  aug.crop = cfg.augment;
  BatchStream stream = make_batches(source.train, &source, cfg.batch_size,
                                    arch.image_h, arch.image_w, cfg.seed, aug,
                                    /*drop_last=*/false);
  lt.run(stream);
  return lt.last_epoch_top1();
}

double finetune_with_translated(Learner& learner, const BundleConfig& arch,
                                const Dataset& translated, const Dataset* source,
                                const std::map<int, int>& pid_map,
                                FinetuneStrategy strategy,
                                const LearnerTrainConfig& cfg,
                                const LossRecordHook& on_record,
                                const std::string& checkpoint_dir) {
  if (translated.train.empty())
    return std::numeric_limits<double>::quiet_NaN();  // learner unchanged

  std::vector<ReIDSample> samples;
  if (strategy == FinetuneStrategy::CombinedSets) {
    if (!source)
      throw std::runtime_error(
          "the combined-sets strategy needs the original source dataset");
    samples = source->train;
  }
  samples.insert(samples.end(), translated.train.begin(),
                 translated.train.end());

  // Validate labels against the learner's class count before any training.
  for (const ReIDSample& s : samples) {
    if (s.person_id < 1) continue;
    auto it = pid_map.find(s.person_id);
    if (it == pid_map.end())
      throw std::runtime_error("identity " + std::to_string(s.person_id) +
                               " has no class assignment in the learner's map");
    if (it->second < 0 || it->second >= arch.num_classes)
      throw std::runtime_error("class index " + std::to_string(it->second) +
                               " exceeds the learner's class count " +
                               std::to_string(arch.num_classes));
  }

  Dataset labels;  // label source for the stream: only the map matters
  labels.pid_to_class = pid_map;
  labels.num_classes = arch.num_classes;

  LearnerTrainConfig c = cfg;
  if (strategy == FinetuneStrategy::PretrainedInit) c.freeze_bn = true;
  LearnerTrainer lt(&learner, c, arch);
  lt.pid_map = pid_map;
  lt.on_record = on_record;
  lt.checkpoint_dir = checkpoint_dir;
  AugmentFlags aug;
  aug.flip = c.augment;
  aug.crop = c.augment;
  BatchStream stream = make_batches(samples, &labels, c.batch_size,
                                    arch.image_h, arch.image_w, c.seed, aug,
                                    /*drop_last=*/false);
  lt.run(stream);
  return lt.last_epoch_top1();
}

// ---- checkpoint helpers -----------------------------------------------------

void save_bundle_config(ArchiveWriter& w, const BundleConfig& c) {
  w.section("bundle_config");
  w.i64(c.image_h);
  w.i64(c.image_w);
  w.i64(c.num_classes);
  w.u32(c.backbone == BackboneKind::ResNet50Like ? 1u : 0u);
  w.i64(c.ngf);
  w.i64(c.n_down);
  w.i64(c.n_blocks);
  w.i64(c.ndf);
  w.i64(c.d_layers);
  w.u64(c.seed);
}

BundleConfig load_bundle_config(ArchiveReader& r) {
  r.expect_section("bundle_config");
  BundleConfig c;
  c.image_h = static_cast<int>(r.i64());
  c.image_w = static_cast<int>(r.i64());
  c.num_classes = static_cast<int>(r.i64());
  c.backbone = r.u32() == 1u ? BackboneKind::ResNet50Like
                             : BackboneKind::ReferenceSmall;
  c.ngf = static_cast<int>(r.i64());
  c.n_down = static_cast<int>(r.i64());
  c.n_blocks = static_cast<int>(r.i64());
  c.ndf = static_cast<int>(r.i64());
  c.d_layers = static_cast<int>(r.i64());
  c.seed = r.u64();
  return c;
}

std::string checkpoint_kind(const std::string& path) {
  ArchiveReader r(path);
  const std::string name = r.read_section_name();
  if (name == "ckpt:trainer") return "trainer";
  if (name == "ckpt:learner") return "learner";
  throw std::runtime_error("not a checkpoint archive: " + path);
}

BundleConfig peek_bundle_config(const std::string& path) {
  ArchiveReader r(path);
  r.read_section_name();  // kind tag
  return load_bundle_config(r);
}

LoadedCheckpoint load_checkpoint_networks(const std::string& path) {
  ArchiveReader r(path);
  const std::string tag = r.read_section_name();
  LoadedCheckpoint out;
  if (tag == "ckpt:trainer") {
    out.kind = "trainer";
    const BundleConfig bc = load_bundle_config(r);
    out.bundle = build_bundle(bc);
    r.expect_section("train_state");
    r.str();  // mode
    out.iteration = r.i64();
    r.i64();  // epoch
    r.i64();  // batch_in_epoch
    load_network(r, out.bundle.G);
    load_network(r, out.bundle.F);
    load_network(r, out.bundle.D_T);
    load_network(r, out.bundle.D_S);
    load_network(r, out.bundle.M);
    load_network(r, out.bundle.C.backbone);
    load_network(r, out.bundle.C.head);
    out.pid_map = load_pid_map(r);
  } else if (tag == "ckpt:learner") {
    out.kind = "learner";
    const BundleConfig bc = load_bundle_config(r);
    out.bundle = build_bundle(bc);
    r.expect_section("learner_state");
    out.iteration = r.i64();
    r.i64();  // epoch
    r.i64();  // batch_in_epoch
    r.i64();  // epoch_correct
    r.i64();  // epoch_seen
    r.f64();  // last top-1
    load_network(r, out.bundle.C.backbone);
    load_network(r, out.bundle.C.head);
    out.pid_map = load_pid_map(r);
  } else {
    throw std::runtime_error("not a checkpoint archive: " + path);
  }
  return out;
}

}  // namespace translearn
