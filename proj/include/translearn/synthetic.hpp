#pragma once
// Deterministic synthetic two-domain person-image generator.
//
// Identities are rendered sprites whose clothing colors are determined by the
// identity index alone, so "who it is" survives any global style transform.
// The two domains share base renders (geometry, colors, background phase) and
// differ only by a style transform: a hue rotation about the gray axis, a
// brightness shift, and a domain background texture seed.  With a zero shift
// and equal background seeds the two domains are pixel-identical.

#include <cstdint>
#include <string>
#include <vector>

#include "translearn/datamodel.hpp"
#include "translearn/image_io.hpp"

namespace translearn {

struct StyleShift {
  double hue_delta = 0.0;        // degrees of rotation about the gray axis
  double brightness_delta = 0.0; // additive shift in [-1, 1] units of full range
  std::uint64_t background_texture_seed = 0;  // target-domain texture stream
};

struct SyntheticConfig {
  int num_identities = 10;
  int images_per_identity_per_domain = 20;  // train-split images
  StyleShift style_shift;                   // applied to the target domain
  std::uint64_t rng_seed = 0;

  // Evaluation-split sizes (not counted in images_per_identity_per_domain).
  int query_per_identity = 0;
  int gallery_per_identity = 0;
  int distractors_per_domain = 0;

  int image_h = 64;
  int image_w = 32;
  int num_cameras = 3;
};

struct ManifestEntry {
  std::string relative_path;
  int person_id;
  int camera_id;
  Domain domain;
  Split split;
};

struct SyntheticManifest {
  std::vector<ManifestEntry> entries;
  std::string manifest_path;
};

// Writes <out_root>/{source,target}/{bounding_box_train,query,bounding_box_test}
// plus <out_root>/manifest.tsv.  Regeneration with the same config is
// byte-identical.
SyntheticManifest generate_synthetic(const SyntheticConfig& config,
                                     const std::string& out_root);

// Renders one image as a pure function of (config, person_id, split, index,
// style).  person_id 0 renders a distractor blob.  The source domain uses a
// default-constructed StyleShift; the target domain uses config.style_shift.
ImageU8 render_synthetic_image(const SyntheticConfig& config, int person_id,
                               Split split, int index, const StyleShift& style);

}  // namespace translearn
