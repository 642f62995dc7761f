// Training-loop behaviors: the discriminator history pool's swap policy,
// exact mode-reduction identities, per-phase parameter exclusivity,
// run-to-run determinism, bit-exact checkpoint resume, and the supervised
// learner procedures (pretraining and the fine-tuning strategies).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "translearn/datamodel.hpp"
#include "translearn/losses.hpp"
#include "translearn/networks.hpp"
#include "translearn/rng.hpp"
#include "translearn/synthetic.hpp"
#include "translearn/tensor.hpp"
#include "translearn/training.hpp"
#include "test_util.hpp"

using namespace translearn;
using testutil::make_image_batch;
using testutil::params_hash;
using testutil::random_images;
using testutil::TempDir;
using testutil::tiny_bundle_config;

namespace {

std::vector<double> image_values(const Tensor& t, int row = 0) {
  const std::int64_t per = t.ndim() == 4 ? t.size() / t.dim(0) : t.size();
  std::vector<double> out(static_cast<std::size_t>(per));
  for (std::int64_t i = 0; i < per; ++i) out[static_cast<std::size_t>(i)] = t[row * per + i];
  return out;
}

struct BundleHashes {
  std::uint64_t G, F, D_T, D_S, M, C_backbone, C_head;
  bool operator==(const BundleHashes&) const = default;
};

BundleHashes hash_all(const NetworkBundle& b) {
  return {params_hash(b.G),          params_hash(b.F),
          params_hash(b.D_T),        params_hash(b.D_S),
          params_hash(b.M),          params_hash(b.C.backbone),
          params_hash(b.C.head)};
}

// Identical pixel content for the step-by-step trajectory comparisons;
// sources carry valid class labels so the same batches also feed the
// end-to-end mode.
ImageLabelBatch source_batch(int step, int b = 1) {
  std::vector<int> labels(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) labels[static_cast<std::size_t>(i)] = (step + i) % 3;
  return make_image_batch(random_images(b, 64, 32, 1000 + static_cast<std::uint64_t>(step)), labels);
}

ImageLabelBatch target_batch(int step, int b = 1) {
  return make_image_batch(random_images(b, 64, 32, 2000 + static_cast<std::uint64_t>(step)),
                          std::vector<int>(static_cast<std::size_t>(b), -1));
}

// Tiny on-disk two-domain dataset for stream-driven runs.
SyntheticConfig small_synth(int ids, int per_id) {
  SyntheticConfig sc;
  sc.num_identities = ids;
  sc.images_per_identity_per_domain = per_id;
  sc.style_shift.hue_delta = 40.0;
  sc.style_shift.brightness_delta = -0.1;
  sc.image_h = 64;
  sc.image_w = 32;
  sc.rng_seed = 5;
  return sc;
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("history pool stores until full, then swaps with probability 1/2") {
  ImagePool pool(2);
  Rng rng(42);
  auto img = [](double v) {
    return Tensor::full({1, 3, 2, 2}, v);
  };

  // Below capacity every image is stored and passed through unchanged.
  for (int i = 0; i < 2; ++i) {
    const Tensor in = img(0.1 * (i + 1));
    const Tensor out = pool.query(in, rng);
    CHECK(image_values(out) == image_values(in));
    CHECK(pool.size() == i + 1);
  }

  // At capacity: the output row is either the incoming image (pool untouched)
  // or one previously stored image, which the incoming image then replaces.
  int passthrough = 0, swapped = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::vector<double>> before;
    for (const Tensor& s : pool.images()) before.push_back(image_values(s));
    const Tensor in = img(1.0 + 0.01 * trial);
    const Tensor out = pool.query(in, rng);
    CHECK(pool.size() == 2);
    const auto after0 = image_values(pool.images()[0]);
    const auto after1 = image_values(pool.images()[1]);
    if (image_values(out) == image_values(in)) {
      ++passthrough;
      CHECK(after0 == before[0]);
      CHECK(after1 == before[1]);
    } else {
      ++swapped;
      // Exactly one stored slot now holds the incoming image, and the output
      // is that slot's previous occupant.
      const bool slot0 = after0 == image_values(in) && image_values(out) == before[0] &&
                         after1 == before[1];
      const bool slot1 = after1 == image_values(in) && image_values(out) == before[1] &&
                         after0 == before[0];
      CHECK((slot0 || slot1));
    }
  }
  CHECK(passthrough > 0);
  CHECK(swapped > 0);

  // The policy is per element of the incoming batch.
  ImagePool pool4(4);
  const Tensor two = random_images(2, 2, 2, 9);
  const Tensor out = pool4.query(two, rng);
  CHECK(pool4.size() == 2);
  CHECK(image_values(out, 0) == image_values(two, 0));
  CHECK(image_values(out, 1) == image_values(two, 1));
}

TEST_CASE("zero similarity weight reproduces the baseline trajectory bit for bit") {
  // Similarity-preserving mode with the contrastive weight at zero must march
  // in lockstep with the plain cycle-consistency baseline: same translator and
  // discriminator parameters after every step, embedder never touched.
  NetworkBundle a = build_bundle(tiny_bundle_config());
  NetworkBundle b = build_bundle(tiny_bundle_config());
  REQUIRE(hash_all(a) == hash_all(b));
  const std::uint64_t m_init = params_hash(a.M);

  TrainConfig ca = TrainConfig::spgan_defaults();
  ca.mode = TrainMode::SPGAN;
  ca.weights.gamma = 0.0;
  ca.seed = 11;
  TrainConfig cb = ca;
  cb.mode = TrainMode::CycleGAN;
  cb.weights.gamma = 2.0;  // the baseline must force this to zero itself

  Trainer ta(&a, ca), tb(&b, cb);
  CHECK(tb.effective_weights().gamma == 0.0);
  CHECK(tb.config().weights.gamma == 2.0);
  CHECK(ta.effective_weights().gamma == 0.0);

  for (int step = 0; step < 6; ++step) {
    const ImageLabelBatch bs = source_batch(step);
    const ImageLabelBatch bt = target_batch(step);
    const LossComponents ra = ta.step(bs, bt);
    const LossComponents rb = tb.step(bs, bt);
    CHECK(hash_all(a) == hash_all(b));
    CHECK(params_hash(a.M) == m_init);
    REQUIRE(ra.values.size() == rb.values.size());
    for (std::size_t i = 0; i < ra.values.size(); ++i) {
      CHECK(ra.values[i].first == rb.values[i].first);
      CHECK(ra.values[i].second == rb.values[i].second);
    }
  }
  CHECK(ta.state().iteration == 6);
}

TEST_CASE("zero guidance weight reduces the end-to-end translators to the baseline") {
  // With the classification-guidance weight at zero the end-to-end mode's
  // translator/discriminator updates must match the baseline bit for bit;
  // its learner keeps training on the side without influencing them.
  NetworkBundle a = build_bundle(tiny_bundle_config());
  NetworkBundle b = build_bundle(tiny_bundle_config());

  TrainConfig ca = TrainConfig::espgan_defaults();
  ca.mode = TrainMode::ESPGAN;
  ca.weights.lambda = 0.0;
  ca.batch_size = 2;
  ca.seed = 11;
  TrainConfig cb = ca;
  cb.mode = TrainMode::CycleGAN;

  Trainer ta(&a, ca), tb(&b, cb);
  const std::uint64_t c_init =
      params_hash(a.C.backbone) ^ params_hash(a.C.head);

  for (int step = 0; step < 6; ++step) {
    const ImageLabelBatch bs = source_batch(step, 2);
    const ImageLabelBatch bt = target_batch(step, 2);
    ta.step(bs, bt);
    tb.step(bs, bt);
    CHECK(params_hash(a.G) == params_hash(b.G));
    CHECK(params_hash(a.F) == params_hash(b.F));
    CHECK(params_hash(a.D_T) == params_hash(b.D_T));
    CHECK(params_hash(a.D_S) == params_hash(b.D_S));
  }
  // The learner phase ran: the end-to-end learner moved off its initialization.
  CHECK((params_hash(a.C.backbone) ^ params_hash(a.C.head)) != c_init);
}

TEST_CASE("frozen-learner ablation never updates the learner") {
  NetworkBundle b = build_bundle(tiny_bundle_config());
  TrainConfig cfg = TrainConfig::espgan_defaults();
  cfg.mode = TrainMode::NaiveESPGAN;
  cfg.batch_size = 2;
  cfg.seed = 3;
  Trainer t(&b, cfg);
  const std::uint64_t bb = params_hash(b.C.backbone);
  const std::uint64_t hd = params_hash(b.C.head);
  const BundleHashes init = hash_all(b);
  for (int step = 0; step < 12; ++step) {
    t.step(source_batch(step, 2), target_batch(step, 2));
    CHECK(params_hash(b.C.backbone) == bb);
    CHECK(params_hash(b.C.head) == hd);
  }
  // The translation networks did train.
  const BundleHashes fin = hash_all(b);
  CHECK(fin.G != init.G);
  CHECK(fin.F != init.F);
  CHECK(fin.D_T != init.D_T);
  CHECK(fin.D_S != init.D_S);
}

TEST_CASE("each alternation phase updates exactly its own network group") {
  const ImageLabelBatch bs = source_batch(0, 2);
  const ImageLabelBatch bt = target_batch(0, 2);

  SUBCASE("separated pipeline: generator, discriminator, similarity") {
    NetworkBundle b = build_bundle(tiny_bundle_config());
    TrainConfig cfg = TrainConfig::spgan_defaults();
    cfg.mode = TrainMode::SPGAN;
    cfg.batch_size = 2;
    Trainer t(&b, cfg);

    BundleHashes h0 = hash_all(b);
    TranslationOutputs outs;
    LossComponents rec = t.generator_phase(bs, bt, outs);
    BundleHashes h1 = hash_all(b);
    CHECK(h1.G != h0.G);
    CHECK(h1.F != h0.F);
    CHECK(h1.D_T == h0.D_T);
    CHECK(h1.D_S == h0.D_S);
    CHECK(h1.M == h0.M);
    CHECK(h1.C_backbone == h0.C_backbone);
    CHECK(h1.C_head == h0.C_head);
    CHECK(rec.get("con") > 0.0);  // the similarity term was active, yet M held still

    t.discriminator_phase(bs, bt, outs, rec);
    BundleHashes h2 = hash_all(b);
    CHECK(h2.D_T != h1.D_T);
    CHECK(h2.D_S != h1.D_S);
    CHECK(h2.G == h1.G);
    CHECK(h2.F == h1.F);
    CHECK(h2.M == h1.M);
    CHECK(h2.C_backbone == h1.C_backbone);
    CHECK(h2.C_head == h1.C_head);

    t.similarity_phase(bs, bt, outs, rec);
    BundleHashes h3 = hash_all(b);
    CHECK(h3.M != h2.M);
    CHECK(h3.G == h2.G);
    CHECK(h3.F == h2.F);
    CHECK(h3.D_T == h2.D_T);
    CHECK(h3.D_S == h2.D_S);
    CHECK(h3.C_backbone == h2.C_backbone);
    CHECK(h3.C_head == h2.C_head);
    CHECK(rec.get("sia") > 0.0);
  }

  SUBCASE("end-to-end pipeline: guided generator, learner") {
    NetworkBundle b = build_bundle(tiny_bundle_config());
    TrainConfig cfg = TrainConfig::espgan_defaults();
    cfg.mode = TrainMode::ESPGAN;
    cfg.batch_size = 2;
    Trainer t(&b, cfg);

    BundleHashes h0 = hash_all(b);
    TranslationOutputs outs;
    LossComponents rec = t.generator_phase(bs, bt, outs);
    BundleHashes h1 = hash_all(b);
    CHECK(h1.G != h0.G);
    CHECK(h1.F != h0.F);
    CHECK(h1.D_T == h0.D_T);
    CHECK(h1.D_S == h0.D_S);
    CHECK(h1.C_backbone == h0.C_backbone);  // the learner only relays gradients
    CHECK(h1.C_head == h0.C_head);
    CHECK(rec.get("cls") > 0.0);

    t.learner_phase(bs, outs.fake_t, rec);
    BundleHashes h2 = hash_all(b);
    CHECK(h2.C_backbone != h1.C_backbone);
    CHECK(h2.C_head != h1.C_head);
    CHECK(h2.G == h1.G);
    CHECK(h2.F == h1.F);
    CHECK(h2.D_T == h1.D_T);
    CHECK(h2.D_S == h1.D_S);
    CHECK(rec.get("learner_ce") > 0.0);
  }
}

TEST_CASE("end-to-end training rejects unlabeled source batches") {
  NetworkBundle b = build_bundle(tiny_bundle_config());
  TrainConfig cfg = TrainConfig::espgan_defaults();
  cfg.mode = TrainMode::ESPGAN;
  cfg.batch_size = 2;
  Trainer t(&b, cfg);
  ImageLabelBatch bs = source_batch(0, 2);
  bs.labels[1] = -1;
  try {
    t.step(bs, target_batch(0, 2));
    FAIL("expected a labeled-batch error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("labeled source batches") != std::string::npos);
  }
}

TEST_CASE("identical configuration and seed give identical runs and checkpoints") {
  TempDir tmp("train_det");
  generate_synthetic(small_synth(3, 4), tmp.sub("data"));
  const Dataset src = load_dataset(tmp.sub("data/source"), Layout::Synthetic, Domain::Source);
  const Dataset tgt = load_dataset(tmp.sub("data/target"), Layout::Synthetic, Domain::Target);
  REQUIRE(src.train.size() == 12);
  REQUIRE(tgt.train.size() == 12);

  TrainConfig cfg = TrainConfig::spgan_defaults();
  cfg.mode = TrainMode::SPGAN;
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.seed = 5;

  auto run_once = [&](const std::string& ckpt) {
    NetworkBundle b = build_bundle(tiny_bundle_config());
    Trainer t(&b, cfg);
    std::vector<std::pair<std::int64_t, LossComponents>> log;
    t.on_record = [&](std::int64_t it, const LossComponents& rec) {
      log.emplace_back(it, rec);
    };
    AugmentFlags aug{true, true};
    BatchStream s = make_batches(src.train, &src, cfg.batch_size, 64, 32,
                                 cfg.seed, aug, /*drop_last=*/true);
    BatchStream g = make_batches(tgt.train, &tgt, cfg.batch_size, 64, 32,
                                 cfg.seed + 1, aug, /*drop_last=*/true);
    t.run(s, g);
    t.save_checkpoint(ckpt);
    return std::make_pair(hash_all(b), log);
  };

  auto [h1, log1] = run_once(tmp.sub("a.ckpt"));
  auto [h2, log2] = run_once(tmp.sub("b.ckpt"));
  CHECK(h1 == h2);
  REQUIRE(log1.size() == log2.size());
  CHECK(log1.size() == 6);  // 12 samples / batch 2, one epoch
  for (std::size_t i = 0; i < log1.size(); ++i) {
    CHECK(log1[i].first == log2[i].first);
    REQUIRE(log1[i].second.values.size() == log2[i].second.values.size());
    for (std::size_t j = 0; j < log1[i].second.values.size(); ++j)
      CHECK(log1[i].second.values[j].second == log2[i].second.values[j].second);
  }
  CHECK(file_bytes(tmp.sub("a.ckpt")) == file_bytes(tmp.sub("b.ckpt")));
}

TEST_CASE("resuming from a checkpoint matches uninterrupted training bit for bit") {
  TempDir tmp("train_resume");
  generate_synthetic(small_synth(3, 4), tmp.sub("data"));
  const Dataset src = load_dataset(tmp.sub("data/source"), Layout::Synthetic, Domain::Source);
  const Dataset tgt = load_dataset(tmp.sub("data/target"), Layout::Synthetic, Domain::Target);

  // The end-to-end mode exercises every serialized piece of state: both
  // optimizers, both history pools, and both auxiliary random streams
  // (pool swaps and learner dropout).
  TrainConfig cfg = TrainConfig::espgan_defaults();
  cfg.mode = TrainMode::ESPGAN;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.checkpoint_every = 5;

  const AugmentFlags aug{true, true};
  std::vector<std::pair<std::int64_t, LossComponents>> full_log;
  NetworkBundle a = build_bundle(tiny_bundle_config());
  Trainer ta(&a, cfg);
  ta.checkpoint_dir = tmp.str();
  ta.pid_map = src.pid_to_class;
  ta.on_record = [&](std::int64_t it, const LossComponents& rec) {
    full_log.emplace_back(it, rec);
  };
  {
    BatchStream s = make_batches(src.train, &src, cfg.batch_size, 64, 32, cfg.seed, aug, true);
    BatchStream g = make_batches(tgt.train, &tgt, cfg.batch_size, 64, 32, cfg.seed + 1, aug, true);
    ta.run(s, g);
  }
  CHECK(ta.state().iteration == 12);
  const std::string mid = tmp.sub("ckpt_espgan_5");
  REQUIRE(std::filesystem::exists(mid));

  NetworkBundle b = build_bundle(tiny_bundle_config());
  Trainer tb(&b, cfg);
  tb.load_checkpoint(mid);
  CHECK(tb.state().iteration == 5);
  CHECK(tb.state().epoch == 0);
  CHECK(tb.state().batch_in_epoch == 5);
  CHECK(tb.pid_map == src.pid_to_class);
  std::vector<std::pair<std::int64_t, LossComponents>> tail_log;
  tb.on_record = [&](std::int64_t it, const LossComponents& rec) {
    tail_log.emplace_back(it, rec);
  };
  {
    BatchStream s = make_batches({}, nullptr, 1, 64, 32, 0, {}, false), g = s;
    make_streams(s, g);
    tb.run(s, g);
  }
  CHECK(tb.state().iteration == 12);
  CHECK(hash_all(a) == hash_all(b));

  REQUIRE(tail_log.size() == 7);  // iterations 6..12
  for (const auto& [it, rec] : tail_log) {
    const auto ref = full_log[static_cast<std::size_t>(it - 1)];
    CHECK(ref.first == it);
    REQUIRE(ref.second.values.size() == rec.values.size());
    for (std::size_t j = 0; j < rec.values.size(); ++j) {
      CHECK(rec.values[j].first == ref.second.values[j].first);
      CHECK(rec.values[j].second == ref.second.values[j].second);
    }
  }

  SUBCASE("checkpoints refuse mismatched modes and architectures") {
    TrainConfig other = cfg;
    other.mode = TrainMode::NaiveESPGAN;
    NetworkBundle c = build_bundle(tiny_bundle_config());
    Trainer tc(&c, other);
    CHECK_THROWS_AS(tc.load_checkpoint(mid), std::runtime_error);

    BundleConfig wide = tiny_bundle_config();
    wide.ngf = 4;
    NetworkBundle d = build_bundle(wide);
    Trainer td(&d, cfg);
    CHECK_THROWS_AS(td.load_checkpoint(mid), std::runtime_error);
  }

  SUBCASE("checkpoint helpers rebuild the networks from the archive alone") {
    CHECK(checkpoint_kind(mid) == "trainer");
    const BundleConfig peeked = peek_bundle_config(mid);
    CHECK(peeked.image_h == 64);
    CHECK(peeked.image_w == 32);
    CHECK(peeked.ngf == 2);

    const std::string fin = tmp.sub("final.ckpt");
    ta.save_checkpoint(fin);
    LoadedCheckpoint lc = load_checkpoint_networks(fin);
    CHECK(lc.kind == "trainer");
    CHECK(lc.iteration == 12);
    CHECK(lc.pid_map == src.pid_to_class);
    CHECK(hash_all(lc.bundle) == hash_all(a));
  }
}

TEST_CASE("supervised pretraining learns the labeled source split") {
  TempDir tmp("pretrain");
  SyntheticConfig sc = small_synth(3, 6);
  generate_synthetic(sc, tmp.sub("data"));
  const Dataset src = load_dataset(tmp.sub("data/source"), Layout::Synthetic, Domain::Source);
  REQUIRE(src.num_classes == 3);

  NetworkBundle b = build_bundle(tiny_bundle_config(21));
  LearnerTrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 10;
  cfg.lr_drop_epoch = 100;
  cfg.augment = false;
  cfg.seed = 4;

  std::vector<double> ce;
  const double top1 = pretrain_learner(
      b.C, b.config, src, cfg,
      [&](std::int64_t, const LossComponents& rec) { ce.push_back(rec.get("cls")); },
      tmp.sub("ckpts"));

  REQUIRE(ce.size() == 30);  // 18 samples / batch 6 * 10 epochs
  const double first = (ce[0] + ce[1] + ce[2]) / 3.0;
  const double last = (ce[27] + ce[28] + ce[29]) / 3.0;
  CHECK(last < first);
  CHECK(top1 >= 2.0 / 3.0);

  SUBCASE("learner checkpoints are self-describing") {
    namespace fs = std::filesystem;
    std::string latest;
    std::int64_t best = -1;
    for (const auto& e : fs::directory_iterator(tmp.sub("ckpts"))) {
      const std::string name = e.path().filename().string();
      const auto pos = name.rfind('_');
      const std::int64_t it = std::stoll(name.substr(pos + 1));
      if (it > best) { best = it; latest = e.path().string(); }
    }
    REQUIRE(best == 30);  // final-only checkpointing by default
    CHECK(checkpoint_kind(latest) == "learner");
    LoadedCheckpoint lc = load_checkpoint_networks(latest);
    CHECK(lc.kind == "learner");
    CHECK(params_hash(lc.bundle.C.backbone) == params_hash(b.C.backbone));
    CHECK(params_hash(lc.bundle.C.head) == params_hash(b.C.head));
    CHECK(lc.pid_map == src.pid_to_class);
  }
}

TEST_CASE("fine-tuning strategies: frozen normalization, empty input, label checks") {
  TempDir tmp("finetune");
  generate_synthetic(small_synth(3, 4), tmp.sub("data"));
  const Dataset src = load_dataset(tmp.sub("data/source"), Layout::Synthetic, Domain::Source);

  NetworkBundle b = build_bundle(tiny_bundle_config(33));
  LearnerTrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.augment = false;
  cfg.seed = 8;

  SUBCASE("an empty translated set leaves the learner untouched") {
    const std::uint64_t bb = params_hash(b.C.backbone);
    const std::uint64_t hd = params_hash(b.C.head);
    Dataset empty;
    const double r = finetune_with_translated(b.C, b.config, empty, &src,
                                              src.pid_to_class,
                                              FinetuneStrategy::PretrainedInit, cfg);
    CHECK(std::isnan(r));
    CHECK(params_hash(b.C.backbone) == bb);
    CHECK(params_hash(b.C.head) == hd);
  }

  SUBCASE("the pretrained-init strategy trains without moving normalization statistics") {
    std::vector<std::pair<std::string, std::vector<double>>> before;
    for (const auto& [name, buf] : b.C.backbone.buffers())
      before.emplace_back(name, std::vector<double>(&(*buf)[0], &(*buf)[0] + buf->size()));
    REQUIRE(!before.empty());
    const std::uint64_t hd = params_hash(b.C.head);

    const double r = finetune_with_translated(b.C, b.config, src, nullptr,
                                              src.pid_to_class,
                                              FinetuneStrategy::PretrainedInit, cfg);
    CHECK(std::isfinite(r));
    CHECK(params_hash(b.C.head) != hd);  // it did train
    const auto after = b.C.backbone.buffers();
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
      const Tensor& buf = *after[i].second;
      for (std::int64_t k = 0; k < buf.size(); ++k)
        CHECK(buf[k] == before[i].second[static_cast<std::size_t>(k)]);
    }
  }

  SUBCASE("training on translations alone updates normalization statistics") {
    std::vector<double> first_buf(&(*b.C.backbone.buffers()[0].second)[0],
                                  &(*b.C.backbone.buffers()[0].second)[0] +
                                      b.C.backbone.buffers()[0].second->size());
    finetune_with_translated(b.C, b.config, src, nullptr, src.pid_to_class,
                             FinetuneStrategy::TranslatedOnly, cfg);
    const Tensor& buf = *b.C.backbone.buffers()[0].second;
    bool moved = false;
    for (std::int64_t k = 0; k < buf.size() && !moved; ++k)
      moved = buf[k] != first_buf[static_cast<std::size_t>(k)];
    CHECK(moved);
  }

  SUBCASE("the combined strategy needs the source dataset") {
    try {
      finetune_with_translated(b.C, b.config, src, nullptr, src.pid_to_class,
                               FinetuneStrategy::CombinedSets, cfg);
      FAIL("expected a missing-source error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("source dataset") != std::string::npos);
    }
  }

  SUBCASE("identities outside the learner's map are rejected before training") {
    std::map<int, int> partial = src.pid_to_class;
    partial.erase(partial.begin()->first);
    const std::uint64_t bb = params_hash(b.C.backbone);
    try {
      finetune_with_translated(b.C, b.config, src, nullptr, partial,
                               FinetuneStrategy::TranslatedOnly, cfg);
      FAIL("expected a missing-identity error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("no class assignment") != std::string::npos);
    }
    CHECK(params_hash(b.C.backbone) == bb);

    std::map<int, int> overflow = src.pid_to_class;
    overflow.begin()->second = 99;
    try {
      finetune_with_translated(b.C, b.config, src, nullptr, overflow,
                               FinetuneStrategy::TranslatedOnly, cfg);
      FAIL("expected a class-range error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("class count") != std::string::npos);
    }
  }
}
