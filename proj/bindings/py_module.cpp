// Python bindings for the core operations: filename parsing, synthetic
// dataset generation, dataset loading, pooled descriptors, loss values, and
// retrieval evaluation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "translearn/datamodel.hpp"
#include "translearn/evaluation.hpp"
#include "translearn/features.hpp"
#include "translearn/losses.hpp"
#include "translearn/synthetic.hpp"
#include "translearn/tensor.hpp"

namespace py = pybind11;
using namespace translearn;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& a) {
  std::vector<int> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape[static_cast<std::size_t>(i)] = static_cast<int>(a.shape(i));
  Tensor t(shape);
  const double* src = a.data();
  std::copy(src, src + t.size(), t.data());
  return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

std::vector<EvalItem> make_items(const std::vector<int>& pids,
                                 const std::vector<int>& cams) {
  if (pids.size() != cams.size())
    throw std::invalid_argument("person and camera lists differ in length");
  std::vector<EvalItem> items(pids.size());
  for (std::size_t i = 0; i < pids.size(); ++i) items[i] = {pids[i], cams[i]};
  return items;
}

Layout layout_from_string(const std::string& s) {
  if (s == "market") return Layout::Market;
  if (s == "duke") return Layout::Duke;
  if (s == "synthetic") return Layout::Synthetic;
  throw std::invalid_argument("unknown layout '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "core operations: parsing, synthesis, descriptors, losses, "
            "retrieval evaluation";

  m.def(
      "parse_market_filename",
      [](const std::string& name) {
        const ParsedName p = parse_market_filename(name);
        return py::make_tuple(p.person_id, p.camera_id);
      },
      py::arg("name"),
      "Parse a market-style image filename into (person_id, camera_id).");

  m.def(
      "parse_duke_filename",
      [](const std::string& name) {
        const ParsedName p = parse_duke_filename(name);
        return py::make_tuple(p.person_id, p.camera_id);
      },
      py::arg("name"),
      "Parse a duke-style image filename into (person_id, camera_id).");

  m.def(
      "generate_synthetic",
      [](const std::string& out_root, int num_identities,
         int images_per_identity, int query_per_identity,
         int gallery_per_identity, int distractors_per_domain, int image_h,
         int image_w, int num_cameras, double hue_delta,
         double brightness_delta, std::uint64_t background_seed,
         std::uint64_t seed) {
        SyntheticConfig sc;
        sc.num_identities = num_identities;
        sc.images_per_identity_per_domain = images_per_identity;
        sc.query_per_identity = query_per_identity;
        sc.gallery_per_identity = gallery_per_identity;
        sc.distractors_per_domain = distractors_per_domain;
        sc.image_h = image_h;
        sc.image_w = image_w;
        sc.num_cameras = num_cameras;
        sc.style_shift.hue_delta = hue_delta;
        sc.style_shift.brightness_delta = brightness_delta;
        sc.style_shift.background_texture_seed = background_seed;
        sc.rng_seed = seed;
        const SyntheticManifest manifest = generate_synthetic(sc, out_root);
        py::dict d;
        d["count"] = manifest.entries.size();
        d["manifest_path"] = manifest.manifest_path;
        return d;
      },
      py::arg("out_root"), py::arg("num_identities") = 10,
      py::arg("images_per_identity") = 20, py::arg("query_per_identity") = 2,
      py::arg("gallery_per_identity") = 4,
      py::arg("distractors_per_domain") = 0, py::arg("image_h") = 64,
      py::arg("image_w") = 32, py::arg("num_cameras") = 3,
      py::arg("hue_delta") = 120.0, py::arg("brightness_delta") = -0.25,
      py::arg("background_seed") = 1, py::arg("seed") = 0,
      "Render the deterministic two-domain toy dataset under out_root.");

  m.def(
      "load_dataset",
      [](const std::string& root, const std::string& layout,
         const std::string& domain) {
        const Domain dom = domain == "target" ? Domain::Target : Domain::Source;
        const Dataset ds = load_dataset(root, layout_from_string(layout), dom);
        py::dict d;
        d["train"] = ds.train.size();
        d["query"] = ds.query.size();
        d["gallery"] = ds.gallery.size();
        d["num_classes"] = ds.num_classes;
        return d;
      },
      py::arg("root"), py::arg("layout") = "synthetic",
      py::arg("domain") = "source",
      "Load a dataset root and return its split sizes and class count.");

  m.def(
      "lmp",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
             fmap,
         int parts, const std::string& mode) {
        return array_from_tensor(
            lmp(tensor_from_array(fmap), parts, parse_pool_mode(mode)));
      },
      py::arg("fmap"), py::arg("parts") = 1, py::arg("mode") = "avg",
      "Part-pooled descriptor of a [B, C, h, w] feature map -> [B, parts*C].");

  m.def(
      "contrastive_loss",
      [](int label, const py::array_t<double, py::array::c_style |
                                                  py::array::forcecast>& e1,
         const py::array_t<double, py::array::c_style | py::array::forcecast>&
             e2,
         double margin) {
        return contrastive_loss(label, tensor_from_array(e1),
                                tensor_from_array(e2), margin);
      },
      py::arg("label"), py::arg("e1"), py::arg("e2"), py::arg("margin") = 2.0,
      "Contrastive loss of two embedding vectors (label 1 = similar pair).");

  m.def(
      "classification_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
             logits,
         const std::vector<int>& labels) {
        return classification_loss(tensor_from_array(logits), labels);
      },
      py::arg("logits"), py::arg("labels"),
      "Mean cross-entropy of [B, K] logits against class indices.");

  m.def(
      "evaluate",
      [](const std::vector<int>& query_pids, const std::vector<int>& query_cams,
         const py::array_t<double, py::array::c_style | py::array::forcecast>&
             query_rows,
         const std::vector<int>& gallery_pids,
         const std::vector<int>& gallery_cams,
         const py::array_t<double, py::array::c_style | py::array::forcecast>&
             gallery_rows,
         const std::string& protocol) {
        const EvalReport r = evaluate(
            make_items(query_pids, query_cams), tensor_from_array(query_rows),
            make_items(gallery_pids, gallery_cams),
            tensor_from_array(gallery_rows), parse_protocol(protocol));
        py::dict d;
        d["mAP"] = r.map_score;
        d["rank1"] = r.rank_k(1);
        d["rank5"] = r.rank_k(5);
        d["rank10"] = r.rank_k(10);
        d["rank20"] = r.rank_k(20);
        d["skipped"] = r.skipped;
        d["evaluated"] = r.per_query_ap.size();
        return d;
      },
      py::arg("query_pids"), py::arg("query_cams"), py::arg("query_rows"),
      py::arg("gallery_pids"), py::arg("gallery_cams"),
      py::arg("gallery_rows"), py::arg("protocol") = "sq",
      "Cross-camera retrieval evaluation: returns mAP, CMC ranks, and the "
      "skipped-query count.");
}
