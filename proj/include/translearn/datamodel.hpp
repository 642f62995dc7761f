#pragma once
// Core data types, dataset ingestion (real two-directory layouts plus the
// synthetic generator's output), and deterministic batch sampling.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "translearn/image_io.hpp"
#include "translearn/rng.hpp"
#include "translearn/tensor.hpp"

namespace translearn {

enum class Domain { Source, Target };
enum class Split { Train, Query, Gallery };
enum class Layout { Market, Duke, Synthetic };

const char* to_string(Domain d);
const char* to_string(Split s);

struct ReIDSample {
  std::string image_path;  // absolute or root-relative path on disk
  int person_id = 0;       // >= 1 real identity; 0 distractor; -1 junk
  int camera_id = 1;
  Domain domain = Domain::Source;
  Split split = Split::Train;
};

// (person_id, camera_id) parsed from a filename.
struct ParsedName {
  int person_id;
  int camera_id;
};

// Market-style: PPPP_cCsS_FFFFFF_BB.ext (PPPP may be -1 or 0000).
ParsedName parse_market_filename(const std::string& name);
// Duke-style: PPPP_cC_fFFFFFFF.ext (the leading 'f' of the frame field is
// optional).
ParsedName parse_duke_filename(const std::string& name);

struct Dataset {
  std::vector<ReIDSample> train, query, gallery;
  // Raw person_id -> contiguous class index, built from the train split only.
  std::map<int, int> pid_to_class;
  int num_classes = 0;
  Domain domain = Domain::Source;

  int class_of(int person_id) const;
};

// Loads `<root>/{bounding_box_train,query,bounding_box_test}`.
// The synthetic layout shares the Market filename convention.
Dataset load_dataset(const std::string& root, Layout layout, Domain domain);

struct AugmentFlags {
  bool flip = false;
  bool crop = false;
};

struct ImageLabelBatch {
  Tensor pixels;               // [B, 3, H, W] in [-1, 1]
  std::vector<int> labels;     // class indices (or -1 when unlabeled)
  std::vector<const ReIDSample*> samples;
  int size() const { return static_cast<int>(labels.size()); }
};

// Deterministic batch stream over a sample list.  Each epoch's order is a
// permutation drawn from a stream keyed by (seed, epoch); augmentation draws
// come from a second stream keyed the same way, consumed strictly in emission
// order, so the stream is reproducible and resumable.
class BatchStream {
 public:
  BatchStream(std::vector<ReIDSample> samples, const Dataset* label_source,
              int batch_size, int image_h, int image_w, std::uint64_t seed,
              AugmentFlags augment, bool drop_last);

  void start_epoch(int epoch);
  // Skips the next n batches of the current epoch while consuming exactly the
  // augmentation randomness they would have used (cheap mid-epoch resume).
  void skip_batches(int n);
  std::optional<ImageLabelBatch> next();

  int batches_per_epoch() const;
  int num_samples() const { return static_cast<int>(samples_.size()); }
  int epoch() const { return epoch_; }
  int batch_index() const { return emitted_; }

 private:
  const ImageU8& cached(const ReIDSample& s);
  Tensor assemble(const ReIDSample& s);

  std::vector<ReIDSample> samples_;
  const Dataset* label_source_;
  int batch_size_, image_h_, image_w_;
  std::uint64_t seed_;
  AugmentFlags augment_;
  bool drop_last_;

  int epoch_ = 0;
  int emitted_ = 0;  // batches emitted so far this epoch
  std::vector<int> order_;
  Rng aug_rng_;
  std::map<std::string, ImageU8> cache_;
};

BatchStream make_batches(const std::vector<ReIDSample>& samples,
                         const Dataset* label_source, int batch_size,
                         int image_h, int image_w, std::uint64_t seed,
                         AugmentFlags augment, bool drop_last);

}  // namespace translearn
