#pragma once
// Unsupervised construction of contrastive training pairs.  No identity
// labels are consulted: positives couple an image with its own translation,
// negatives couple a translated image with a batch-aligned image of the
// other domain.

#include <vector>

#include "translearn/losses.hpp"
#include "translearn/networks.hpp"
#include "translearn/tensor.hpp"

namespace translearn {

enum class PairKind {
  PosSrc,  // (x_s, G(x_s)), label 1
  PosTgt,  // (x_t, F(x_t)), label 1
  NegSrc,  // (G(x_s), x_t), label 0
  NegTgt   // (F(x_t), x_s), label 0
};

struct ContrastivePair {
  int index;      // batch element this pair belongs to
  PairKind kind;
  int label_i;    // 1 = positive, 0 = negative
};

// Enumerates the four pair kinds for every batch element.  Throws when the
// two batches differ in size.
std::vector<ContrastivePair> build_pairs(int batch_size_s, int batch_size_t);

// Materialized image-level pairs (left/right pixel tensors), for inspection
// and tests.  Ordering matches build_pairs.
struct MaterializedPair {
  Tensor left, right;
  int label_i;
  PairKind kind;
};
std::vector<MaterializedPair> materialize_pairs(const Tensor& x_s,
                                                const Tensor& x_t,
                                                const Network& G,
                                                const Network& F);

// Total contrastive loss over all four pair kinds, summed over batch
// elements:  sum_k [ L(x_s,G(x_s)) + L(x_t,F(x_t)) + L(G(x_s),x_t) +
// L(F(x_t),x_s) ].  Gradients accumulate into the optional per-matrix
// outputs.  E_s/E_t are embeddings of the raw batches, E_ft/E_fs of the
// translated batches G(x_s)/F(x_t).
double pair_contrastive_sum(const Tensor& E_s, const Tensor& E_ft,
                            const Tensor& E_t, const Tensor& E_fs, double m,
                            Tensor* g_E_s = nullptr, Tensor* g_E_ft = nullptr,
                            Tensor* g_E_t = nullptr, Tensor* g_E_fs = nullptr);

}  // namespace translearn
