#pragma once
// Every scalar objective, as pure differentiable functions of network
// outputs.  Each function returns the loss value and (optionally) writes the
// analytic gradient with respect to its tensor inputs, which the training
// loop then routes through the stored forward traces.

#include <map>
#include <string>
#include <vector>

#include "translearn/networks.hpp"
#include "translearn/tensor.hpp"

namespace translearn {

enum class AdvForm { Log, LeastSquares };

struct LossWeights {
  double alpha = 10.0;   // cycle-reconstruction weight
  double beta = 5.0;     // identity-mapping weight
  double gamma = 2.0;    // contrastive (similarity) weight
  double lambda = 5.0;   // classification-guidance weight
  double margin_m = 2.0; // contrastive margin, in [0, 2]

  void validate() const;
};

// Mean absolute error over all elements; gradient w.r.t. `a`.
double l1_mean(const Tensor& a, const Tensor& b, Tensor* grad_a = nullptr);

// Discriminator / generator adversarial losses on raw score maps.  The Log
// form applies a sigmoid internally and clamps probabilities to
// [eps, 1-eps] with eps = 1e-7; the LeastSquares form regresses scores to
// 1 (real) / 0 (fake).  The generator term uses the non-saturating flip.
double adv_loss_d(const Tensor& real_scores, const Tensor& fake_scores,
                  AdvForm form, Tensor* g_real = nullptr,
                  Tensor* g_fake = nullptr);
double adv_loss_g(const Tensor& fake_scores, AdvForm form,
                  Tensor* g_fake = nullptr);

// Convenience wrapper matching the documented operation signature: runs D on
// both batches and evaluates both losses.
struct AdvLossPair {
  double loss_d;
  double loss_g;
};
AdvLossPair adversarial_loss(const Network& D, const Tensor& real,
                             const Tensor& fake, AdvForm form);

// ||F(G(x_s)) - x_s||_1 + ||G(F(x_t)) - x_t||_1, each term element-averaged.
double cycle_loss(const Network& G, const Network& F, const Tensor& x_s,
                  const Tensor& x_t);

// ||F(x_s) - x_s||_1 + ||G(x_t) - x_t||_1, element-averaged per term.
double identity_loss(const Network& G, const Network& F, const Tensor& x_s,
                     const Tensor& x_t);

// (1-i) * max(0, m - d)^2 + i * d^2 with d the Euclidean distance between
// two embeddings given as [D] tensors.  m must lie in [0, 2].
double contrastive_loss(int label_i, const Tensor& e1, const Tensor& e2,
                        double m, Tensor* g_e1 = nullptr,
                        Tensor* g_e2 = nullptr);

// Row-wise contrastive loss over [B, D] embedding matrices with one label
// per row; returns the SUM over rows (callers scale).  Gradients accumulate
// into the optional outputs (they are not zeroed here).
double contrastive_loss_rows(const Tensor& e1, const Tensor& e2,
                             const std::vector<int>& labels, double m,
                             Tensor* g_e1 = nullptr, Tensor* g_e2 = nullptr);

// Mean cross-entropy of logits [B, K] against class indices.
double classification_loss(const Tensor& logits, const std::vector<int>& labels,
                           Tensor* g_logits = nullptr);

// Per-iteration component record: named loss terms plus the weighted total.
struct LossComponents {
  std::vector<std::pair<std::string, double>> values;
  double total = 0.0;

  void add(const std::string& name, double v) { values.emplace_back(name, v); }
  double get(const std::string& name) const;
};

// Translated images produced inside an objective evaluation, exposed so the
// later phases of one training iteration (discriminator update, similarity
// update) reuse the same pre-update translations.
struct TranslationOutputs {
  Tensor fake_t;  // G(x_s)
  Tensor fake_s;  // F(x_t)
};

// Generator-phase objective of the similarity-preserving mode:
//   adv_G + adv_F + alpha*rec + beta*ide + gamma*con.
// With backward=true, gradients are accumulated into G and F only; the
// discriminators and the similarity network merely relay gradients.
// gamma == 0 skips the similarity branch entirely (exact baseline reduction).
LossComponents spgan_objective(NetworkBundle& b, const Tensor& x_s,
                               const Tensor& x_t, const LossWeights& w,
                               AdvForm form, bool backward,
                               TranslationOutputs* outputs = nullptr);

// Generator-phase objective of the end-to-end mode:
//   adv_G + adv_F + alpha*rec + beta*ide + lambda*cls,
// where cls is the frozen learner's cross-entropy on G(x_s) with the source
// labels (evaluation mode; gradients reach G only).  lambda == 0 skips the
// classification branch entirely.
LossComponents espgan_objective(NetworkBundle& b, const Tensor& x_s,
                                const std::vector<int>& labels_s,
                                const Tensor& x_t, const LossWeights& w,
                                AdvForm form, bool backward,
                                TranslationOutputs* outputs = nullptr);

}  // namespace translearn
