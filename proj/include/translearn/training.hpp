#pragma once
// Training procedures: the cycle-consistent translation baseline, the
// similarity-preserving variant (three-way alternation with the Siamese
// embedder), the end-to-end variant (translator and feature learner trained
// alternately, with pretraining and real-data regularization), and the
// frozen-learner ablation of the latter.

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "translearn/checkpoint.hpp"
#include "translearn/datamodel.hpp"
#include "translearn/losses.hpp"
#include "translearn/networks.hpp"
#include "translearn/optim.hpp"
#include "translearn/rng.hpp"

namespace translearn {

enum class TrainMode { CycleGAN, SPGAN, ESPGAN, NaiveESPGAN };

TrainMode parse_train_mode(const std::string& s);
const char* to_string(TrainMode m);

struct TrainConfig {
  TrainMode mode = TrainMode::SPGAN;
  LossWeights weights;
  AdvForm adv_form = AdvForm::LeastSquares;

  int batch_size = 1;
  int epochs = 6;

  // Adaptive-moment optimizer shared by translators, discriminators, and the
  // similarity embedder.
  double gan_lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  // The translator learning rate stays constant for this many epochs, then
  // decays linearly to zero across the remaining epochs.  A value >= epochs
  // keeps it constant throughout.
  int gan_lr_const_epochs = 6;

  // Feature-learner optimizer (SGD with momentum), stepped once per learner
  // phase; the learning rate is multiplied by `learner_lr_drop_factor` from
  // `learner_lr_drop_epoch` onwards.
  double learner_lr_backbone = 1e-3;
  double learner_lr_head = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int learner_lr_drop_epoch = 10;
  double learner_lr_drop_factor = 0.1;

  int image_pool_size = 50;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // iterations between periodic checkpoints; 0 = final only
  int log_every = 1;         // iterations between emitted loss records
  bool augment = true;       // random flip + crop on training batches

  // Defaults for the separated pipeline: batch 1, lr 2e-4, constant, 6 epochs.
  static TrainConfig spgan_defaults();
  // Defaults for the end-to-end pipeline: batch 16, translator lr 1e-4 held
  // for 10 epochs then linearly decayed to 0 over 5 more; learner lr 1e-3
  // (backbone) / 1e-2 (head), divided by 10 after epoch 10.
  static TrainConfig espgan_defaults();

  void validate() const;
};

// Settings for supervised learner training (pretraining on the labeled source
// domain, and fine-tuning on translated images).
struct LearnerTrainConfig {
  int batch_size = 16;
  int epochs = 60;
  double lr_backbone = 1e-3;
  double lr_head = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int lr_drop_epoch = 40;
  double lr_drop_factor = 0.1;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  int log_every = 1;
  bool augment = true;
  bool freeze_bn = false;  // true when fine-tuning a pretrained learner

  void validate() const;
};

// How a learner is trained once translated images exist:
//   TranslatedOnly    — train on translated images alone;
//   CombinedSets      — train on the union of source originals and translations;
//   PretrainedInit    — fine-tune the already-pretrained learner on the
//                       translations (default; normalization layers frozen).
enum class FinetuneStrategy { TranslatedOnly = 1, CombinedSets = 2, PretrainedInit = 3 };
FinetuneStrategy parse_finetune_strategy(const std::string& s);

// History pool of previously generated images that feeds the discriminator
// updates.  Per incoming image: while below capacity the image is stored and
// used directly; afterwards, with probability 1/2 a random stored image is
// returned and replaced by the incoming one, otherwise the incoming image is
// used directly.
class ImagePool {
 public:
  explicit ImagePool(int capacity);

  // fakes: [B, 3, H, W]; returns a same-shape tensor, element-wise policy.
  Tensor query(const Tensor& fakes, Rng& rng);

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(images_.size()); }
  const std::vector<Tensor>& images() const { return images_; }
  void set_images(std::vector<Tensor> imgs) { images_ = std::move(imgs); }

 private:
  int capacity_;
  std::vector<Tensor> images_;  // each [3, H, W]
};

// Position counters of a training run; together with the serialized
// optimizer/pool/rng state this is everything needed for exact resume.
struct TrainState {
  std::int64_t iteration = 0;  // completed optimization iterations
  int epoch = 0;               // epoch currently in progress
  int batch_in_epoch = 0;      // batches completed within that epoch
};

using LossRecordHook =
    std::function<void(std::int64_t iteration, const LossComponents&)>;

// Adversarial trainer covering all four modes.  The bundle is owned by the
// caller; the trainer owns optimizer, pool, and auxiliary stream state.
class Trainer {
 public:
  Trainer(NetworkBundle* bundle, const TrainConfig& cfg);

  // Runs (or resumes) training over the two domains' train splits.  Streams
  // must have been built with cfg.batch_size.  Epoch length is the smaller of
  // the two streams' batch counts so every iteration sees both domains.
  void run(BatchStream& source, BatchStream& target);

  // One iteration of the separated pipeline: generator phase, discriminator
  // phase (history pool), similarity phase (skipped entirely when the
  // effective similarity weight is zero).
  LossComponents train_step_spgan(const ImageLabelBatch& bs,
                                  const ImageLabelBatch& bt);
  // One iteration of the end-to-end pipeline: translator phase (guided by the
  // frozen learner), discriminator phase, learner phase on half translated /
  // half raw source images (skipped in the frozen-learner ablation).
  LossComponents train_step_espgan(const ImageLabelBatch& bs,
                                   const ImageLabelBatch& bt);

  // The individual alternation phases.  Each updates exactly one network
  // group and leaves every other group's parameters untouched; the step
  // functions above are compositions of these.
  LossComponents generator_phase(const ImageLabelBatch& bs,
                                 const ImageLabelBatch& bt,
                                 TranslationOutputs& outs);
  void discriminator_phase(const ImageLabelBatch& bs, const ImageLabelBatch& bt,
                           const TranslationOutputs& outs, LossComponents& rec);
  // Updates the similarity embedder on the four pair kinds (no-op when the
  // effective similarity weight is zero).
  void similarity_phase(const ImageLabelBatch& bs, const ImageLabelBatch& bt,
                        const TranslationOutputs& outs, LossComponents& rec);
  // Updates the feature learner on a mixed translated/raw source batch.
  void learner_phase(const ImageLabelBatch& bs, const Tensor& translated,
                     LossComponents& rec);

  // Dispatches on cfg.mode and maintains iteration/record bookkeeping.
  LossComponents step(const ImageLabelBatch& bs, const ImageLabelBatch& bt);

  // Learning-rate schedules are a pure function of the epoch index.
  void apply_epoch_schedule(int epoch);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const TrainConfig& config() const { return cfg_; }
  NetworkBundle& bundle() { return *bundle_; }
  TrainState& state() { return st_; }
  const TrainState& state() const { return st_; }
  // Weights actually applied (the cycle-consistency baseline forces the
  // similarity weight to zero).
  LossWeights effective_weights() const;
  const std::deque<std::pair<std::int64_t, LossComponents>>& recent_records()
      const {
    return recent_;
  }

  LossRecordHook on_record;
  std::string checkpoint_dir;            // empty = no checkpoint files
  std::map<int, int> pid_map;            // embedded into checkpoints

 private:
  void record(const LossComponents& rec);
  void maybe_checkpoint();

  NetworkBundle* bundle_;
  TrainConfig cfg_;
  TrainState st_;

  Adam opt_G_, opt_F_, opt_DT_, opt_DS_, opt_M_;
  SGD opt_C_;
  ImagePool pool_T_, pool_S_;
  Rng pool_rng_, dropout_rng_;

  std::deque<std::pair<std::int64_t, LossComponents>> recent_;
};

// Supervised learner training loop (pretraining / fine-tuning).  Tracks
// training top-1 accuracy per epoch.  `arch` describes how the learner was
// built; it is embedded into checkpoints so they are self-describing.
class LearnerTrainer {
 public:
  LearnerTrainer(Learner* learner, const LearnerTrainConfig& cfg,
                 const BundleConfig& arch);

  void run(BatchStream& stream);
  LossComponents step(const ImageLabelBatch& batch);
  void apply_epoch_schedule(int epoch);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  // Fraction of correctly classified training samples in the last completed
  // epoch (NaN before any epoch finishes).
  double last_epoch_top1() const { return last_epoch_top1_; }
  TrainState& state() { return st_; }
  const LearnerTrainConfig& config() const { return cfg_; }

  LossRecordHook on_record;
  std::string checkpoint_dir;
  std::map<int, int> pid_map;

 private:
  Learner* learner_;
  LearnerTrainConfig cfg_;
  BundleConfig arch_;
  TrainState st_;
  SGD opt_;
  Rng dropout_rng_;
  std::int64_t epoch_correct_ = 0, epoch_seen_ = 0;
  double last_epoch_top1_ = std::numeric_limits<double>::quiet_NaN();
  std::deque<std::pair<std::int64_t, LossComponents>> recent_;

  void record(const LossComponents& rec);
};

// Trains the learner on the labeled source train split (cross-entropy).
// Returns the final epoch's training top-1 accuracy.
double pretrain_learner(Learner& learner, const BundleConfig& arch,
                        const Dataset& source, const LearnerTrainConfig& cfg,
                        const LossRecordHook& on_record = nullptr,
                        const std::string& checkpoint_dir = "");

// Trains/fine-tunes the learner with translated source images according to
// the chosen strategy.  `pid_map` assigns class indices (normally the map the
// learner was pretrained with); `source` is consulted only by CombinedSets.
// An empty translated train split leaves the learner unchanged.  Throws when
// labels do not fit the learner's class count.
double finetune_with_translated(Learner& learner, const BundleConfig& arch,
                                const Dataset& translated, const Dataset* source,
                                const std::map<int, int>& pid_map,
                                FinetuneStrategy strategy,
                                const LearnerTrainConfig& cfg,
                                const LossRecordHook& on_record = nullptr,
                                const std::string& checkpoint_dir = "");

// Checkpoint helpers shared with the CLI. Every checkpoint archive leads with
// a kind tag ("trainer" or "learner") and the bundle configuration, so the
// networks can be rebuilt before their weights are loaded.
void save_bundle_config(ArchiveWriter& w, const BundleConfig& c);
BundleConfig load_bundle_config(ArchiveReader& r);
// Peeks the archive kind tag: "trainer" or "learner".
std::string checkpoint_kind(const std::string& path);
// Reads just the bundle configuration from either archive kind.
BundleConfig peek_bundle_config(const std::string& path);
// Loads the network weights (+ pid map) from either archive kind, rebuilding
// from the embedded bundle configuration.  For learner archives only C is
// meaningful; the remaining networks keep their fresh initialization.
struct LoadedCheckpoint {
  std::string kind;  // "trainer" or "learner"
  NetworkBundle bundle;
  std::map<int, int> pid_map;
  std::int64_t iteration = 0;
};
LoadedCheckpoint load_checkpoint_networks(const std::string& path);

}  // namespace translearn
