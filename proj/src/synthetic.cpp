#include "translearn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace translearn {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct RGB {
  double r, g, b;
};

RGB hsv_to_rgb(double h_deg, double s, double v) {
  double h = std::fmod(std::fmod(h_deg, 360.0) + 360.0, 360.0) / 60.0;
  int i = static_cast<int>(h) % 6;
  double f = h - std::floor(h);
  double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Rotation of an RGB vector about the gray axis (1,1,1)/sqrt(3).
struct HueMatrix {
  double m[3][3];
  explicit HueMatrix(double deg) {
    const double th = deg * kPi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double a = 1.0 / 3.0;
    const double k = 1.0 / std::sqrt(3.0);
    // c*I + s*[a]_x + (1-c)*aa^T with a = (1,1,1)/sqrt(3)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = (1 - c) * a + (i == j ? c : 0.0);
    m[0][1] += -s * k; m[0][2] += s * k;
    m[1][0] += s * k;  m[1][2] += -s * k;
    m[2][0] += -s * k; m[2][1] += s * k;
  }
};

inline unsigned char clamp8(double v) {
  return static_cast<unsigned char>(std::min(255.0, std::max(0.0, std::round(v))));
}

// Smooth value noise in [0,1] from integer lattice hashing.
double value_noise(std::uint64_t seed, double x, double y) {
  auto lattice = [seed](std::int64_t ix, std::int64_t iy) {
    std::uint64_t h = seed;
    h = fnv1a(&ix, sizeof(ix), h);
    h = fnv1a(&iy, sizeof(iy), h);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
  const std::int64_t ix = static_cast<std::int64_t>(std::floor(x));
  const std::int64_t iy = static_cast<std::int64_t>(std::floor(y));
  const double fx = x - std::floor(x), fy = y - std::floor(y);
  const double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
  const double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
  const double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
  return (v00 * (1 - sx) + v10 * sx) * (1 - sy) +
         (v01 * (1 - sx) + v11 * sx) * sy;
}

int split_code(Split s) {
  switch (s) {
    case Split::Train: return 1;
    case Split::Query: return 2;
    default: return 3;
  }
}

std::uint64_t mix3(std::uint64_t seed, const char* label, std::uint64_t a,
                   std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = seed ^ hash_label(label);
  h = fnv1a(&a, sizeof(a), h);
  h = fnv1a(&b, sizeof(b), h);
  h = fnv1a(&c, sizeof(c), h);
  return h;
}

}  // namespace

ImageU8 render_synthetic_image(const SyntheticConfig& cfg, int pid, Split split,
                               int index, const StyleShift& style) {
  const int H = cfg.image_h, W = cfg.image_w;
  if (H < 16 || W < 8)
    throw std::invalid_argument("synthetic image size too small");
  ImageU8 img;
  img.h = H;
  img.w = W;
  img.rgb.resize(static_cast<std::size_t>(H) * W * 3);

  // Per-image randomness shared across domains (domain is NOT an input).
  const std::uint64_t sc = static_cast<std::uint64_t>(split_code(split));
  Rng geom(mix3(cfg.rng_seed, "geom", static_cast<std::uint64_t>(pid), sc,
                static_cast<std::uint64_t>(index)));
  const std::uint64_t bg_phase = mix3(cfg.rng_seed, "bgphase",
                                      static_cast<std::uint64_t>(pid), sc,
                                      static_cast<std::uint64_t>(index));

  // Background: smooth two-octave value noise in the style's texture stream.
  const std::uint64_t bg_seed =
      style.background_texture_seed ^ (bg_phase * 0x9E3779B97F4A7C15ull);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double n = 0.65 * value_noise(bg_seed, x * 0.22, y * 0.22) +
                       0.35 * value_noise(bg_seed ^ 0xABCDull, x * 0.8, y * 0.8);
      const double v = 90 + 110 * n;
      img.at(y, x, 0) = clamp8(v);
      img.at(y, x, 1) = clamp8(v * 0.96);
      img.at(y, x, 2) = clamp8(v * 0.92);
    }

  // Geometry jitter (pixels) and per-image illumination jitter, identical in
  // both domains for the same (pid, split, index).
  const int jx = geom.int_range(-2, 2);
  const int jy = geom.int_range(-1, 1);
  const double widen = 1.0 + 0.12 * (geom.uniform() - 0.5);
  const double illum[3] = {geom.uniform(-10, 10), geom.uniform(-10, 10),
                           geom.uniform(-10, 10)};

  auto paint = [&](int y0, int y1, int x0, int x1, RGB c) {
    y0 = std::max(0, y0); y1 = std::min(H, y1);
    x0 = std::max(0, x0); x1 = std::min(W, x1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        img.at(y, x, 0) = clamp8(c.r * 255 + illum[0]);
        img.at(y, x, 1) = clamp8(c.g * 255 + illum[1]);
        img.at(y, x, 2) = clamp8(c.b * 255 + illum[2]);
      }
  };

  if (pid >= 1) {
    // Identity-determined clothing colors, evenly spaced inside a 150-degree
    // band.  Band-limiting keeps the hue distribution strongly non-uniform,
    // so a global hue rotation between the domains is identifiable from
    // image statistics; the pants index is decorrelated from the shirt index
    // so neighbors in shirt hue differ strongly in pants hue.
    const int n = std::max(1, cfg.num_identities);
    const int si = (pid - 1) % n;
    const int pi_ = ((pid - 1) * 3 + 1) % n;
    const double band = 150.0;
    const double shirt_hue = band * si / n;
    const double pants_hue = std::fmod(band * pi_ / n + band * 0.5 / n, 360.0);
    const RGB shirt = hsv_to_rgb(shirt_hue, 0.90, 0.88);
    const RGB pants = hsv_to_rgb(pants_hue, 0.85, 0.66);
    const RGB skin{0.85, 0.68, 0.55};
    const RGB shoe{0.12, 0.10, 0.10};

    const int cx = W / 2 + jx;
    const int half_shirt = std::max(2, static_cast<int>(0.22 * W * widen));
    const int half_head = std::max(1, static_cast<int>(0.10 * W));
    const int head_top = static_cast<int>(0.08 * H) + jy;
    const int shirt_top = static_cast<int>(0.25 * H) + jy;
    const int shirt_bot = static_cast<int>(0.55 * H) + jy;
    const int pants_bot = static_cast<int>(0.85 * H) + jy;
    const int shoe_bot = static_cast<int>(0.92 * H) + jy;
    const int leg_gap = std::max(1, W / 16);

    paint(head_top, shirt_top, cx - half_head, cx + half_head, skin);
    paint(shirt_top, shirt_bot, cx - half_shirt, cx + half_shirt, shirt);
    // arms: single-pixel columns outside the torso
    paint(shirt_top + 1, shirt_bot - 2, cx - half_shirt - 1, cx - half_shirt, skin);
    paint(shirt_top + 1, shirt_bot - 2, cx + half_shirt, cx + half_shirt + 1, skin);
    paint(shirt_bot, pants_bot, cx - half_shirt, cx - leg_gap, pants);
    paint(shirt_bot, pants_bot, cx + leg_gap, cx + half_shirt, pants);
    paint(pants_bot, shoe_bot, cx - half_shirt, cx - leg_gap, shoe);
    paint(pants_bot, shoe_bot, cx + leg_gap, cx + half_shirt, shoe);
  } else {
    // Distractor: a featureless crate-like block with index-determined color.
    Rng dr(mix3(cfg.rng_seed, "distractor", sc, 0,
                static_cast<std::uint64_t>(index)));
    const RGB c = hsv_to_rgb(dr.uniform(0, 360), 0.25, 0.5);
    const int x0 = W / 6 + jx, x1 = W - W / 6 + jx;
    const int y0 = H / 4 + jy, y1 = H - H / 5 + jy;
    paint(y0, y1, x0, x1, c);
  }

  // Per-camera color cast: channel gains plus a hue offset drawn from the
  // camera index alone, identical in both domains.  Retrieval is evaluated
  // strictly cross-camera, so these casts are the nuisance a useful
  // descriptor must learn to ignore.
  {
    const int cam = 1 + (index + std::max(pid, 0)) % cfg.num_cameras;
    Rng camr(mix3(cfg.rng_seed, "camera", static_cast<std::uint64_t>(cam), 0, 0));
    const double gain[3] = {camr.uniform(0.7, 1.3), camr.uniform(0.7, 1.3),
                            camr.uniform(0.7, 1.3)};
    const HueMatrix ch(camr.uniform(-40.0, 40.0));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
        const double nr = ch.m[0][0] * r + ch.m[0][1] * g + ch.m[0][2] * b;
        const double ng = ch.m[1][0] * r + ch.m[1][1] * g + ch.m[1][2] * b;
        const double nb = ch.m[2][0] * r + ch.m[2][1] * g + ch.m[2][2] * b;
        img.at(y, x, 0) = clamp8(nr * gain[0]);
        img.at(y, x, 1) = clamp8(ng * gain[1]);
        img.at(y, x, 2) = clamp8(nb * gain[2]);
      }
  }

  // Style transform: hue rotation about the gray axis, then brightness shift.
  if (style.hue_delta != 0.0 || style.brightness_delta != 0.0) {
    const HueMatrix hm(style.hue_delta);
    const double bshift = style.brightness_delta * 255.0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
        const double nr = hm.m[0][0] * r + hm.m[0][1] * g + hm.m[0][2] * b;
        const double ng = hm.m[1][0] * r + hm.m[1][1] * g + hm.m[1][2] * b;
        const double nb = hm.m[2][0] * r + hm.m[2][1] * g + hm.m[2][2] * b;
        img.at(y, x, 0) = clamp8(nr + bshift);
        img.at(y, x, 1) = clamp8(ng + bshift);
        img.at(y, x, 2) = clamp8(nb + bshift);
      }
  }
  return img;
}

SyntheticManifest generate_synthetic(const SyntheticConfig& cfg,
                                     const std::string& out_root) {
  if (cfg.num_identities < 1)
    throw std::invalid_argument("generate_synthetic: need at least 1 identity");
  if (cfg.images_per_identity_per_domain < 0 || cfg.query_per_identity < 0 ||
      cfg.gallery_per_identity < 0 || cfg.distractors_per_domain < 0)
    throw std::invalid_argument("generate_synthetic: negative image count");
  if (cfg.num_cameras < 2)
    throw std::invalid_argument(
        "generate_synthetic: need >= 2 cameras for cross-camera retrieval");

  SyntheticManifest manifest;
  const StyleShift source_style{};  // canonical style
  const StyleShift& target_style = cfg.style_shift;

  for (Domain domain : {Domain::Source, Domain::Target}) {
    const StyleShift& style =
        domain == Domain::Source ? source_style : target_style;
    const std::string dom = to_string(domain);
    const fs::path droot = fs::path(out_root) / dom;
    const char* split_dir[3] = {"bounding_box_train", "query",
                                "bounding_box_test"};
    for (const char* d : split_dir) {
      std::error_code ec;
      fs::create_directories(droot / d, ec);
      if (ec)
        throw std::runtime_error("cannot create output directory " +
                                 (droot / d).string() + ": " + ec.message());
    }

    int frame_counter = 0;
    auto emit = [&](int pid, Split split, int index) {
      const int cam = 1 + (index + std::max(pid, 0)) % cfg.num_cameras;
      ImageU8 img = render_synthetic_image(cfg, pid, split, index, style);
      char name[64];
      std::snprintf(name, sizeof(name), "%04d_c%ds1_%06d_%02d.png", pid, cam,
                    ++frame_counter, index % 100);
      const char* sd = split == Split::Train ? "bounding_box_train"
                       : split == Split::Query ? "query"
                                               : "bounding_box_test";
      const fs::path rel = fs::path(dom) / sd / name;
      save_image_png((fs::path(out_root) / rel).string(), img);
      manifest.entries.push_back(
          {rel.generic_string(), pid, cam, domain, split});
    };

    for (int pid = 1; pid <= cfg.num_identities; ++pid)
      for (int k = 0; k < cfg.images_per_identity_per_domain; ++k)
        emit(pid, Split::Train, k);
    for (int pid = 1; pid <= cfg.num_identities; ++pid)
      for (int k = 0; k < cfg.query_per_identity; ++k)
        emit(pid, Split::Query, k);
    for (int pid = 1; pid <= cfg.num_identities; ++pid)
      for (int k = 0; k < cfg.gallery_per_identity; ++k)
        emit(pid, Split::Gallery, k);
    for (int k = 0; k < cfg.distractors_per_domain; ++k)
      emit(0, Split::Gallery, k);
  }

  const fs::path mpath = fs::path(out_root) / "manifest.tsv";
  std::ofstream mf(mpath);
  if (!mf) throw std::runtime_error("cannot write manifest: " + mpath.string());
  for (const ManifestEntry& e : manifest.entries)
    mf << e.relative_path << '\t' << e.person_id << '\t' << e.camera_id << '\t'
       << to_string(e.domain) << '\t' << to_string(e.split) << '\n';
  mf.close();
  manifest.manifest_path = mpath.string();
  return manifest;
}

}  // namespace translearn
