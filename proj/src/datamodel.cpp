#include "translearn/datamodel.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;

namespace translearn {

const char* to_string(Domain d) {
  return d == Domain::Source ? "source" : "target";
}
const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    default: return "gallery";
  }
}

namespace {

const std::regex kMarketRe(R"(^(-?\d+)_c(\d+)s(\d+)_(\d+)_(\d+)\.(jpg|jpeg|png)$)",
                           std::regex::icase);
const std::regex kDukeRe(R"(^(-?\d+)_c(\d+)_f?(\d+)\.(jpg|jpeg|png)$)",
                         std::regex::icase);

[[noreturn]] void parse_fail(const std::string& name, const std::string& token) {
  throw std::runtime_error("cannot parse image filename '" + name +
                           "': bad or missing " + token);
}

}  // namespace

ParsedName parse_market_filename(const std::string& name) {
  std::smatch m;
  if (!std::regex_match(name, m, kMarketRe)) {
    // Identify the offending token for the error message.
    if (name.find('_') == std::string::npos) parse_fail(name, "person-id field");
    const std::string first = name.substr(0, name.find('_'));
    if (!std::regex_match(first, std::regex(R"(-?\d+)")))
      parse_fail(name, "person-id field '" + first + "'");
    auto rest = name.substr(name.find('_') + 1);
    if (rest.empty() || rest[0] != 'c')
      parse_fail(name, "camera field '" + rest.substr(0, rest.find('_')) + "'");
    parse_fail(name, "camera/sequence/frame fields");
  }
  ParsedName out;
  out.person_id = std::stoi(m[1]);
  out.camera_id = std::stoi(m[2]);
  if (out.camera_id < 1) parse_fail(name, "camera id (must be >= 1)");
  return out;
}

ParsedName parse_duke_filename(const std::string& name) {
  std::smatch m;
  if (!std::regex_match(name, m, kDukeRe)) {
    if (name.find('_') == std::string::npos) parse_fail(name, "person-id field");
    parse_fail(name, "camera/frame fields");
  }
  ParsedName out;
  out.person_id = std::stoi(m[1]);
  out.camera_id = std::stoi(m[2]);
  if (out.camera_id < 1) parse_fail(name, "camera id (must be >= 1)");
  return out;
}

int Dataset::class_of(int person_id) const {
  auto it = pid_to_class.find(person_id);
  if (it == pid_to_class.end())
    throw std::runtime_error("person id " + std::to_string(person_id) +
                             " has no train-split class index");
  return it->second;
}

namespace {

std::vector<ReIDSample> scan_split(const std::string& dir, Layout layout,
                                   Domain domain, Split split) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("missing split directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string n = e.path().filename().string();
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext != ".jpg" && ext != ".jpeg" && ext != ".png") continue;
    names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  std::vector<ReIDSample> out;
  out.reserve(names.size());
  for (const std::string& n : names) {
    ParsedName p = layout == Layout::Duke ? parse_duke_filename(n)
                                          : parse_market_filename(n);
    ReIDSample s;
    s.image_path = (fs::path(dir) / n).string();
    s.person_id = p.person_id;
    s.camera_id = p.camera_id;
    s.domain = domain;
    s.split = split;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& root, Layout layout, Domain domain) {
  Dataset ds;
  ds.domain = domain;
  ds.train = scan_split((fs::path(root) / "bounding_box_train").string(), layout,
                        domain, Split::Train);
  ds.query = scan_split((fs::path(root) / "query").string(), layout, domain,
                        Split::Query);
  ds.gallery = scan_split((fs::path(root) / "bounding_box_test").string(),
                          layout, domain, Split::Gallery);

  for (const ReIDSample& s : ds.train)
    if (s.person_id < 1)
      throw std::runtime_error("train split contains non-identity person id " +
                               std::to_string(s.person_id) + ": " + s.image_path);
  for (const ReIDSample& s : ds.query)
    if (s.person_id == 0 || s.person_id == -1)
      throw std::runtime_error("query split contains junk/distractor image: " +
                               s.image_path);

  std::set<int> pids;
  for (const ReIDSample& s : ds.train) pids.insert(s.person_id);
  if (pids.empty())
    throw std::runtime_error("dataset at " + root + " has zero train identities");
  int next = 0;
  for (int pid : pids) ds.pid_to_class[pid] = next++;
  ds.num_classes = next;
  return ds;
}

// ---- BatchStream -------------------------------------------------------------

BatchStream::BatchStream(std::vector<ReIDSample> samples,
                         const Dataset* label_source, int batch_size,
                         int image_h, int image_w, std::uint64_t seed,
                         AugmentFlags augment, bool drop_last)
    : samples_(std::move(samples)), label_source_(label_source),
      batch_size_(batch_size), image_h_(image_h), image_w_(image_w),
      seed_(seed), augment_(augment), drop_last_(drop_last) {
  if (batch_size_ < 1)
    throw std::invalid_argument("make_batches: batch_size must be >= 1");
  start_epoch(0);
}

void BatchStream::start_epoch(int epoch) {
  epoch_ = epoch;
  emitted_ = 0;
  Rng perm_rng = derive_stream(seed_, "perm", static_cast<std::uint64_t>(epoch));
  order_ = perm_rng.permutation(static_cast<int>(samples_.size()));
  aug_rng_ = derive_stream(seed_, "aug", static_cast<std::uint64_t>(epoch));
}

int BatchStream::batches_per_epoch() const {
  const int n = static_cast<int>(samples_.size());
  if (drop_last_) return n / batch_size_;
  return (n + batch_size_ - 1) / batch_size_;
}

const ImageU8& BatchStream::cached(const ReIDSample& s) {
  auto it = cache_.find(s.image_path);
  if (it != cache_.end()) return it->second;
  ImageU8 img = resize_bilinear(load_image(s.image_path), image_h_, image_w_);
  return cache_.emplace(s.image_path, std::move(img)).first->second;
}

namespace {

ImageU8 flip_horizontal(const ImageU8& img) {
  ImageU8 out = img;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
  return out;
}

inline int reflect_idx(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Reflect-pad by `pad` then crop back to the original size at offset (dy,dx),
// dy/dx in [0, 2*pad].
ImageU8 shift_crop(const ImageU8& img, int pad, int dy, int dx) {
  ImageU8 out = img;
  for (int y = 0; y < img.h; ++y) {
    const int sy = reflect_idx(y - pad + dy, img.h);
    for (int x = 0; x < img.w; ++x) {
      const int sx = reflect_idx(x - pad + dx, img.w);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace

Tensor BatchStream::assemble(const ReIDSample& s) {
  const ImageU8& base = cached(s);
  // Draw augmentation randomness unconditionally per enabled flag so the
  // stream's consumption pattern is independent of image content.
  bool do_flip = false;
  int dy = 0, dx = 0, pad = 0;
  if (augment_.flip) do_flip = aug_rng_.bernoulli(0.5);
  if (augment_.crop) {
    pad = std::max(2, image_h_ / 32);
    dy = static_cast<int>(aug_rng_.below(static_cast<std::uint64_t>(2 * pad + 1)));
    dx = static_cast<int>(aug_rng_.below(static_cast<std::uint64_t>(2 * pad + 1)));
  }
  if (!do_flip && dy == pad && dx == pad) return normalize_image(base);
  ImageU8 img = base;
  if (do_flip) img = flip_horizontal(img);
  if (augment_.crop) img = shift_crop(img, pad, dy, dx);
  return normalize_image(img);
}

void BatchStream::skip_batches(int n) {
  for (int b = 0; b < n; ++b) {
    const int start = emitted_ * batch_size_;
    if (start >= static_cast<int>(order_.size())) return;
    int count = std::min<int>(batch_size_, static_cast<int>(order_.size()) - start);
    if (drop_last_ && count < batch_size_) return;
    for (int i = 0; i < count; ++i) {
      if (augment_.flip) aug_rng_.bernoulli(0.5);
      if (augment_.crop) {
        const int pad = std::max(2, image_h_ / 32);
        aug_rng_.below(static_cast<std::uint64_t>(2 * pad + 1));
        aug_rng_.below(static_cast<std::uint64_t>(2 * pad + 1));
      }
    }
    ++emitted_;
  }
}

std::optional<ImageLabelBatch> BatchStream::next() {
  const int start = emitted_ * batch_size_;
  const int n = static_cast<int>(order_.size());
  if (start >= n) return std::nullopt;
  int count = std::min(batch_size_, n - start);
  if (drop_last_ && count < batch_size_) return std::nullopt;

  ImageLabelBatch batch;
  std::vector<Tensor> imgs;
  imgs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const ReIDSample& s = samples_[static_cast<std::size_t>(order_[start + i])];
    imgs.push_back(assemble(s));
    int label = -1;
    if (label_source_ && s.person_id >= 1) label = label_source_->class_of(s.person_id);
    batch.labels.push_back(label);
    batch.samples.push_back(&s);
  }
  batch.pixels = stack_images(imgs);
  ++emitted_;
  return batch;
}

BatchStream make_batches(const std::vector<ReIDSample>& samples,
                         const Dataset* label_source, int batch_size,
                         int image_h, int image_w, std::uint64_t seed,
                         AugmentFlags augment, bool drop_last) {
  return BatchStream(samples, label_source, batch_size, image_h, image_w, seed,
                     augment, drop_last);
}

}  // namespace translearn
