#include "translearn/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace translearn {

namespace {

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace

Network make_generator(const std::string& name, int image_h, int image_w,
                       int ngf, int n_down, int n_blocks) {
  check(image_h >= 8 && image_w >= 8, "generator: image too small");
  Network net(name);
  // c7s1-ngf
  net.add(std::make_unique<ReflectionPad2d>(3));
  net.add(std::make_unique<Conv2d>(3, ngf, 7, 1, 0));
  net.add(std::make_unique<InstanceNorm2d>(ngf));
  net.add(std::make_unique<ReLU>());
  // downsampling
  int ch = ngf;
  for (int i = 0; i < n_down; ++i) {
    net.add(std::make_unique<Conv2d>(ch, ch * 2, 3, 2, 1));
    net.add(std::make_unique<InstanceNorm2d>(ch * 2));
    net.add(std::make_unique<ReLU>());
    ch *= 2;
  }
  // residual blocks
  for (int i = 0; i < n_blocks; ++i)
    net.add(std::make_unique<ResidualBlock>(ch));
  // upsampling
  for (int i = 0; i < n_down; ++i) {
    net.add(std::make_unique<ConvTranspose2d>(ch, ch / 2, 3, 2, 1, 1));
    net.add(std::make_unique<InstanceNorm2d>(ch / 2));
    net.add(std::make_unique<ReLU>());
    ch /= 2;
  }
  // c7s1-3
  net.add(std::make_unique<ReflectionPad2d>(3));
  net.add(std::make_unique<Conv2d>(ch, 3, 7, 1, 0));
  net.add(std::make_unique<Tanh>());
  return net;
}

Network make_discriminator(const std::string& name, int ndf, int d_layers) {
  // Patch classifier: stride-2 stages, then a stride-1 stage, then a 1-channel
  // score map.  No normalization layers anywhere — the adversarial stage is
  // trained on single-image batches where batch statistics are meaningless.
  Network net(name);
  net.add(std::make_unique<Conv2d>(3, ndf, 4, 2, 1));
  net.add(std::make_unique<LeakyReLU>(0.2));
  int ch = ndf;
  for (int i = 1; i < d_layers; ++i) {
    int next = ch * 2;
    net.add(std::make_unique<Conv2d>(ch, next, 4, 2, 1));
    net.add(std::make_unique<LeakyReLU>(0.2));
    ch = next;
  }
  net.add(std::make_unique<Conv2d>(ch, ch * 2, 4, 1, 1));
  net.add(std::make_unique<LeakyReLU>(0.2));
  net.add(std::make_unique<Conv2d>(ch * 2, 1, 4, 1, 1));
  return net;
}

Network make_sianet(const std::string& name, int image_h, int image_w) {
  // Fixed published layout: three 4x4 stride-2 convolutions interleaved with
  // 2x2 stride-2 max pools, a duplicated final pool (implemented verbatim),
  // then FC 256 -> FC 128 and L2 normalization.
  Network net(name);
  net.add(std::make_unique<Conv2d>(3, 64, 4, 2, 1));
  net.add(std::make_unique<LeakyReLU>(0.2));
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(std::make_unique<Conv2d>(64, 128, 4, 2, 1));
  net.add(std::make_unique<LeakyReLU>(0.2));
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(std::make_unique<Conv2d>(128, 256, 4, 2, 1));
  net.add(std::make_unique<LeakyReLU>(0.2));
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(std::make_unique<Flatten>());

  // Determine the flattened width with a dry run of the conv stack.
  Tensor probe({1, 3, image_h, image_w});
  Tensor flat;
  try {
    flat = net.forward(probe, nullptr, {});
  } catch (const std::exception& e) {
    throw std::runtime_error("similarity network incompatible with image size " +
                             std::to_string(image_h) + "x" +
                             std::to_string(image_w) + ": " + e.what());
  }
  const int flat_dim = flat.dim(1);
  check(flat_dim >= 1, "similarity network: empty feature");
  net.add(std::make_unique<Linear>(flat_dim, 256));
  net.add(std::make_unique<LeakyReLU>(0.2));
  net.add(std::make_unique<Linear>(256, 128));
  net.add(std::make_unique<L2Normalize>());
  return net;
}

Network make_backbone(const std::string& name, BackboneKind kind) {
  Network net(name);
  if (kind == BackboneKind::ReferenceSmall) {
    // Four stride-2 conv stages ending at 256 channels.
    int chans[4] = {32, 64, 128, 256};
    int in = 3;
    for (int i = 0; i < 4; ++i) {
      net.add(std::make_unique<Conv2d>(in, chans[i], 3, 2, 1, false));
      net.add(std::make_unique<BatchNorm2d>(chans[i]));
      net.add(std::make_unique<ReLU>());
      in = chans[i];
    }
  } else {
    // Bottleneck-residual plan with the reference channel progression
    // (256/512/1024/2048) at reduced depth, ending at 2048 channels.
    net.add(std::make_unique<Conv2d>(3, 64, 7, 2, 3, false));
    net.add(std::make_unique<BatchNorm2d>(64));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<MaxPool2d>(2, 2));
    net.add(std::make_unique<Bottleneck>(64, 64, 256, 1));
    net.add(std::make_unique<Bottleneck>(256, 128, 512, 2));
    net.add(std::make_unique<Bottleneck>(512, 256, 1024, 2));
    net.add(std::make_unique<Bottleneck>(1024, 512, 2048, 2));
  }
  return net;
}

Network make_head(const std::string& name, int c_feat, int num_classes,
                  double dropout) {
  Network net(name);
  net.add(std::make_unique<GlobalAvgPool2d>());
  net.add(std::make_unique<Dropout>(dropout));
  net.add(std::make_unique<Linear>(c_feat, num_classes));
  return net;
}

NetworkBundle build_bundle(const BundleConfig& cfg) {
  check(cfg.num_classes >= 2, "build_bundle: num_classes must be >= 2");
  NetworkBundle b;
  b.config = cfg;
  b.G = make_generator("G", cfg.image_h, cfg.image_w, cfg.ngf, cfg.n_down,
                       cfg.n_blocks);
  b.F = make_generator("F", cfg.image_h, cfg.image_w, cfg.ngf, cfg.n_down,
                       cfg.n_blocks);
  b.D_T = make_discriminator("D_T", cfg.ndf, cfg.d_layers);
  b.D_S = make_discriminator("D_S", cfg.ndf, cfg.d_layers);
  b.M = make_sianet("M", cfg.image_h, cfg.image_w);
  b.C.backbone = make_backbone("C_backbone", cfg.backbone);

  // Dry-run shape verification on a dummy batch.
  Tensor probe({1, 3, cfg.image_h, cfg.image_w});
  Tensor g_out = b.G.forward(probe, nullptr, {});
  check(g_out.shape() == probe.shape(),
        "generator must preserve image shape, got " + g_out.shape_str());
  Tensor d_out = b.D_T.forward(probe, nullptr, {});
  check(d_out.ndim() == 4 && d_out.dim(1) == 1 && d_out.dim(2) >= 1 &&
            d_out.dim(3) >= 1,
        "discriminator must emit a score map, got " + d_out.shape_str());
  Tensor m_out = b.M.forward(probe, nullptr, {});
  check(m_out.ndim() == 2 && m_out.dim(1) == 128,
        "similarity embedding must be 128-d, got " + m_out.shape_str());
  Tensor fmap;
  try {
    fmap = b.C.backbone.forward(probe, nullptr, {});
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("backbone incompatible with image shape: ") +
                             e.what());
  }
  check(fmap.ndim() == 4 && fmap.dim(2) >= 1 && fmap.dim(3) >= 1,
        "backbone must emit a spatial feature map, got " + fmap.shape_str());
  b.C.c_feat = fmap.dim(1);
  b.C.fmap_h = fmap.dim(2);
  b.C.fmap_w = fmap.dim(3);
  b.C.head = make_head("C_head", b.C.c_feat, cfg.num_classes);
  Tensor logits = b.C.head.forward(fmap, nullptr, {});
  check(logits.ndim() == 2 && logits.dim(1) == cfg.num_classes,
        "head must emit num_classes logits");

  // Per-network initialization streams derived from the master seed, so a
  // network's starting point does not depend on which other networks exist.
  auto init = [&](const Network& n, double std_dev) {
    Rng r = derive_stream(cfg.seed, "init:" + n.name());
    n.init_weights(r, std_dev);
  };
  init(b.G, 0.02);
  init(b.F, 0.02);
  init(b.D_T, 0.02);
  init(b.D_S, 0.02);
  init(b.M, 0.02);
  init(b.C.backbone, 0.02);
  init(b.C.head, 0.001);
  return b;
}

Tensor embed(const Network& M, const Tensor& batch) {
  return M.forward(batch, nullptr, {});
}

Tensor learner_embedding(const Learner& C, const Tensor& batch) {
  Tensor fmap = C.backbone.forward(batch, nullptr, {});
  const int N = fmap.dim(0), ch = fmap.dim(1);
  const std::int64_t M = static_cast<std::int64_t>(fmap.dim(2)) * fmap.dim(3);
  Tensor out({N, ch});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < ch; ++c) {
      const double* p = fmap.data() + ((static_cast<std::size_t>(n) * ch + c) * M);
      double s = 0.0;
      for (std::int64_t i = 0; i < M; ++i) s += p[i];
      out.at2(n, c) = s / static_cast<double>(M);
    }
  return out;
}

}  // namespace translearn
