#pragma once
// Construction of the learnable networks: the two generators, the two
// discriminators, the Siamese similarity embedder, and the feature learner
// (pluggable backbone + classification head).

#include <memory>
#include <string>

#include "translearn/nn.hpp"

namespace translearn {

enum class BackboneKind { ReferenceSmall, ResNet50Like };

struct BundleConfig {
  int image_h = 256;
  int image_w = 128;
  int num_classes = 2;
  BackboneKind backbone = BackboneKind::ReferenceSmall;

  // Generator: c7s1-ngf stem, n_down stride-2 halvings, n_blocks residual
  // blocks, mirrored upsampling, c7s1-3 + tanh output.
  int ngf = 64;
  int n_down = 2;
  int n_blocks = 9;

  // Discriminator: patch classifier, n_layers stride-2 stages, no
  // normalization layers.
  int ndf = 64;
  int d_layers = 3;

  std::uint64_t seed = 0;
};

struct Learner {
  Network backbone;  // image -> [B, C_feat, h, w]
  Network head;      // feature map -> [B, num_classes] logits
  int c_feat = 0;
  int fmap_h = 0, fmap_w = 0;  // at the configured image size
};

struct NetworkBundle {
  Network G;    // source -> target style
  Network F;    // target -> source style
  Network D_T;  // discriminates target-style images
  Network D_S;  // discriminates source-style images
  Network M;    // similarity embedder, unit-norm 128-d output
  Learner C;    // feature learner
  BundleConfig config;
};

// Builds all networks, runs a dry forward pass on a dummy batch to verify
// shape compatibility, and initializes parameters from per-network streams
// derived from config.seed.  Throws on incompatible image shapes.
NetworkBundle build_bundle(const BundleConfig& config);

// Individual constructors (uninitialized weights), used by build_bundle and
// directly by small-scale tests.
Network make_generator(const std::string& name, int image_h, int image_w,
                       int ngf, int n_down, int n_blocks);
Network make_discriminator(const std::string& name, int ndf, int d_layers);
Network make_sianet(const std::string& name, int image_h, int image_w);
Network make_backbone(const std::string& name, BackboneKind kind);
Network make_head(const std::string& name, int c_feat, int num_classes,
                  double dropout = 0.5);

// Unit-norm embeddings [B, 128] from the similarity network (eval mode).
Tensor embed(const Network& M, const Tensor& batch);

// Pooled pre-classifier feature [B, C_feat] of the learner (eval mode).
Tensor learner_embedding(const Learner& C, const Tensor& batch);

}  // namespace translearn
