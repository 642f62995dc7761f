#pragma once
// Shared helpers for the C++ test binaries: scratch directories, tiny network
// constructions, and random batch builders.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "translearn/datamodel.hpp"
#include "translearn/networks.hpp"
#include "translearn/rng.hpp"
#include "translearn/tensor.hpp"

namespace testutil {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / (tag + "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directories(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: could not create a scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string sub(const std::string& rel) const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

// Random image batch in [-1, 1] drawn from a seeded stream.
inline translearn::Tensor random_images(int b, int h, int w, std::uint64_t seed) {
  translearn::Rng rng(seed);
  translearn::Tensor t({b, 3, h, w});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.9, 0.9);
  return t;
}

inline translearn::ImageLabelBatch make_image_batch(const translearn::Tensor& pixels,
                                                    std::vector<int> labels) {
  translearn::ImageLabelBatch b;
  b.pixels = pixels;
  b.labels = std::move(labels);
  b.samples.assign(b.labels.size(), nullptr);
  return b;
}

// Smallest bundle the full network set supports: the similarity embedder's
// fixed conv stack needs at least 64x32 inputs.
inline translearn::BundleConfig tiny_bundle_config(std::uint64_t seed = 7,
                                                   int num_classes = 3) {
  translearn::BundleConfig c;
  c.image_h = 64;
  c.image_w = 32;
  c.num_classes = num_classes;
  c.backbone = translearn::BackboneKind::ReferenceSmall;
  c.ngf = 2;
  c.n_down = 1;
  c.n_blocks = 1;
  c.ndf = 2;
  c.d_layers = 1;
  c.seed = seed;
  return c;
}

// Sum of parameter-state hashes per network, used to detect any change.
inline std::uint64_t params_hash(const translearn::Network& n) {
  return n.state_hash();
}

}  // namespace testutil
