// Filename parsing, dataset ingestion, image normalization, the synthetic
// generator's on-disk layout, and deterministic/resumable batch streaming.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "test_util.hpp"
#include "translearn/datamodel.hpp"
#include "translearn/image_io.hpp"
#include "translearn/synthetic.hpp"

using namespace translearn;

namespace {

SyntheticConfig tiny_synth() {
  SyntheticConfig c;
  c.num_identities = 3;
  c.images_per_identity_per_domain = 2;
  c.query_per_identity = 1;
  c.gallery_per_identity = 2;
  c.distractors_per_domain = 1;
  c.image_h = 32;
  c.image_w = 16;
  c.num_cameras = 2;
  c.rng_seed = 5;
  c.style_shift.hue_delta = 30.0;
  c.style_shift.brightness_delta = -0.1;
  c.style_shift.background_texture_seed = 1;
  return c;
}

}  // namespace

TEST_CASE("market filename parsing") {
  ParsedName p = parse_market_filename("0001_c1s1_000151_01.jpg");
  CHECK(p.person_id == 1);
  CHECK(p.camera_id == 1);

  p = parse_market_filename("1501_c6s4_001902_03.png");
  CHECK(p.person_id == 1501);
  CHECK(p.camera_id == 6);

  // Junk and distractor conventions.
  CHECK(parse_market_filename("-1_c3s2_000001_00.jpg").person_id == -1);
  CHECK(parse_market_filename("0000_c2s1_000001_02.jpeg").person_id == 0);

  CHECK_THROWS_WITH_AS(parse_market_filename("portrait.jpg"),
                       doctest::Contains("cannot parse"), std::runtime_error);
  CHECK_THROWS(parse_market_filename("0001_x1s1_000151_01.jpg"));
  CHECK_THROWS(parse_market_filename("0001_c1s1_000151.jpg"));  // missing field
  CHECK_THROWS(parse_market_filename("0001_c0s1_000151_01.jpg"));  // camera < 1
}

TEST_CASE("duke filename parsing") {
  ParsedName p = parse_duke_filename("0005_c2_f0046985.jpg");
  CHECK(p.person_id == 5);
  CHECK(p.camera_id == 2);
  // The frame prefix letter is optional.
  CHECK(parse_duke_filename("0005_c2_0046985.jpg").camera_id == 2);
  CHECK(parse_duke_filename("-1_c8_f0000001.png").person_id == -1);
  CHECK_THROWS(parse_duke_filename("0005_c2.jpg"));
  CHECK_THROWS(parse_duke_filename("noise"));
}

TEST_CASE("image normalization round trip") {
  ImageU8 img;
  img.h = 7;
  img.w = 5;
  img.rgb.resize(7 * 5 * 3);
  Rng r(13);
  for (auto& b : img.rgb) b = static_cast<unsigned char>(r.below(256));

  Tensor t = normalize_image(img);
  CHECK(t.shape() == std::vector<int>{3, 7, 5});
  for (std::int64_t i = 0; i < t.size(); ++i) {
    CHECK(t[i] >= -1.0);
    CHECK(t[i] <= 1.0);
  }
  // Channel-plane layout: tensor[c][y][x] corresponds to interleaved rgb.
  CHECK(t.at4(0, 0, 0, 0) ==
        doctest::Approx((img.at(0, 0, 0) / 255.0 - 0.5) / 0.5));

  ImageU8 back = denormalize_image(t);
  REQUIRE(back.rgb.size() == img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i) CHECK(back.rgb[i] == img.rgb[i]);
}

TEST_CASE("png save/load round trip and resize") {
  testutil::TempDir tmp("translearn_img");
  ImageU8 img;
  img.h = 9;
  img.w = 6;
  img.rgb.resize(9 * 6 * 3);
  Rng r(3);
  for (auto& b : img.rgb) b = static_cast<unsigned char>(r.below(256));
  save_image_png(tmp.sub("a.png"), img);
  ImageU8 rt = load_image(tmp.sub("a.png"));
  REQUIRE(rt.h == 9);
  REQUIRE(rt.w == 6);
  CHECK(rt.rgb == img.rgb);  // PNG is lossless

  ImageU8 flat;
  flat.h = 4;
  flat.w = 4;
  flat.rgb.assign(4 * 4 * 3, 77);
  ImageU8 up = resize_bilinear(flat, 8, 6);
  CHECK(up.h == 8);
  CHECK(up.w == 6);
  for (auto b : up.rgb) CHECK(static_cast<int>(b) == 77);
}

TEST_CASE("synthetic generation layout, determinism, and ingestion") {
  testutil::TempDir tmp("translearn_synth");
  SyntheticConfig cfg = tiny_synth();
  SyntheticManifest man = generate_synthetic(cfg, tmp.sub("ds"));

  // Two domains, three splits each; manifest written.
  CHECK(std::filesystem::is_directory(tmp.sub("ds/source/bounding_box_train")));
  CHECK(std::filesystem::is_directory(tmp.sub("ds/target/query")));
  CHECK(std::filesystem::is_regular_file(man.manifest_path));

  // Entry count: per domain, 3*2 train + 3*1 query + (3*2 + 1) gallery.
  const int per_domain = 6 + 3 + 7;
  CHECK(static_cast<int>(man.entries.size()) == 2 * per_domain);

  Dataset src = load_dataset(tmp.sub("ds/source"), Layout::Synthetic,
                             Domain::Source);
  Dataset tgt = load_dataset(tmp.sub("ds/target"), Layout::Synthetic,
                             Domain::Target);
  CHECK(src.train.size() == 6);
  CHECK(src.query.size() == 3);
  CHECK(src.gallery.size() == 7);
  CHECK(src.num_classes == 3);
  CHECK(tgt.train.size() == 6);

  // Contiguous class indices over train identities only.
  std::set<int> classes;
  for (const auto& [pid, cls] : src.pid_to_class) classes.insert(cls);
  CHECK(classes == std::set<int>{0, 1, 2});
  CHECK_THROWS(src.class_of(999));

  // Distractors (person 0) live in the gallery only.
  int distractors = 0;
  for (const ReIDSample& s : src.gallery)
    if (s.person_id == 0) ++distractors;
  CHECK(distractors == 1);

  // Regeneration is byte-identical.
  generate_synthetic(cfg, tmp.sub("ds2"));
  for (const ManifestEntry& e : man.entries) {
    std::ifstream a(tmp.sub("ds/" + e.relative_path), std::ios::binary);
    std::ifstream b(tmp.sub("ds2/" + e.relative_path), std::ios::binary);
    REQUIRE(a.good());
    REQUIRE(b.good());
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }

  // The style shift separates the domains: the same identity's base render
  // differs across domains, while a zero shift with equal background seeds
  // is pixel-identical.
  ImageU8 s_img = render_synthetic_image(cfg, 1, Split::Train, 0, StyleShift{});
  ImageU8 t_img = render_synthetic_image(cfg, 1, Split::Train, 0, cfg.style_shift);
  CHECK(s_img.rgb != t_img.rgb);
  ImageU8 t0 = render_synthetic_image(cfg, 1, Split::Train, 0, StyleShift{});
  CHECK(s_img.rgb == t0.rgb);

  CHECK_THROWS_WITH_AS(
      load_dataset(tmp.sub("nowhere"), Layout::Synthetic, Domain::Source),
      doctest::Contains("missing split directory"), std::runtime_error);
}

TEST_CASE("train split rejects junk and query rejects distractors") {
  testutil::TempDir tmp("translearn_badsplits");
  SyntheticConfig cfg = tiny_synth();
  generate_synthetic(cfg, tmp.sub("ds"));

  // Plant a junk image in the train split.
  const std::string bad =
      tmp.sub("ds/source/bounding_box_train/-1_c1s1_000001_00.png");
  {
    ImageU8 img;
    img.h = 4;
    img.w = 4;
    img.rgb.assign(48, 0);
    save_image_png(bad, img);
  }
  CHECK_THROWS_WITH_AS(
      load_dataset(tmp.sub("ds/source"), Layout::Synthetic, Domain::Source),
      doctest::Contains("non-identity"), std::runtime_error);
  std::filesystem::remove(bad);

  const std::string badq = tmp.sub("ds/source/query/0000_c1s1_000001_00.png");
  {
    ImageU8 img;
    img.h = 4;
    img.w = 4;
    img.rgb.assign(48, 0);
    save_image_png(badq, img);
  }
  CHECK_THROWS_WITH_AS(
      load_dataset(tmp.sub("ds/source"), Layout::Synthetic, Domain::Source),
      doctest::Contains("junk/distractor"), std::runtime_error);
}

TEST_CASE("batch stream determinism, labels, and resume") {
  testutil::TempDir tmp("translearn_stream");
  SyntheticConfig cfg = tiny_synth();
  generate_synthetic(cfg, tmp.sub("ds"));
  Dataset src = load_dataset(tmp.sub("ds/source"), Layout::Synthetic,
                             Domain::Source);

  AugmentFlags aug;
  aug.flip = true;
  aug.crop = true;

  // Identical construction -> identical batches, pixels and labels.
  BatchStream a = make_batches(src.train, &src, 4, 32, 16, 7, aug, false);
  BatchStream b = make_batches(src.train, &src, 4, 32, 16, 7, aug, false);
  CHECK(a.batches_per_epoch() == 2);  // 6 samples, batch 4, keep the remainder
  for (int i = 0; i < 2; ++i) {
    auto ba = a.next();
    auto bb = b.next();
    REQUIRE(ba.has_value());
    REQUIRE(bb.has_value());
    CHECK(ba->pixels.content_hash() == bb->pixels.content_hash());
    CHECK(ba->labels == bb->labels);
    for (int l : ba->labels) {
      CHECK(l >= 0);
      CHECK(l < src.num_classes);
    }
  }
  CHECK_FALSE(a.next().has_value());

  // Different seed -> different epoch order (pixel content differs).
  BatchStream c = make_batches(src.train, &src, 4, 32, 16, 8, aug, false);
  BatchStream d = make_batches(src.train, &src, 4, 32, 16, 7, aug, false);
  auto bc = c.next();
  auto bd = d.next();
  CHECK(bc->pixels.content_hash() != bd->pixels.content_hash());

  // skip_batches must reproduce the stream mid-epoch, augmentation included.
  BatchStream full = make_batches(src.train, &src, 2, 32, 16, 9, aug, false);
  full.start_epoch(4);
  (void)full.next();
  (void)full.next();
  auto third = full.next();
  BatchStream skipped = make_batches(src.train, &src, 2, 32, 16, 9, aug, false);
  skipped.start_epoch(4);
  skipped.skip_batches(2);
  auto third2 = skipped.next();
  REQUIRE(third.has_value());
  REQUIRE(third2.has_value());
  CHECK(third->pixels.content_hash() == third2->pixels.content_hash());
  CHECK(third->labels == third2->labels);

  // Epochs reshuffle: run two epochs and confirm the emission order differs.
  BatchStream e = make_batches(src.train, &src, 6, 32, 16, 1,
                               AugmentFlags{}, false);
  e.start_epoch(0);
  auto e0 = e.next();
  e.start_epoch(1);
  auto e1 = e.next();
  std::vector<std::string> paths0, paths1;
  for (auto* s : e0->samples) paths0.push_back(s->image_path);
  for (auto* s : e1->samples) paths1.push_back(s->image_path);
  CHECK(paths0 != paths1);

  // drop_last discards the trailing partial batch.
  BatchStream f = make_batches(src.train, &src, 4, 32, 16, 7, AugmentFlags{}, true);
  CHECK(f.batches_per_epoch() == 1);
  CHECK(f.next().has_value());
  CHECK_FALSE(f.next().has_value());

  // Without a label source every sample is unlabeled.
  BatchStream g = make_batches(src.train, nullptr, 3, 32, 16, 7, AugmentFlags{},
                               false);
  auto bg = g.next();
  for (int l : bg->labels) CHECK(l == -1);
}
