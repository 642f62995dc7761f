#include "translearn/losses.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "translearn/pairs.hpp"

namespace translearn {

namespace {
constexpr double kProbEps = 1e-7;
constexpr double kDistEps = 1e-12;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0 || lambda < 0)
    throw std::invalid_argument("loss weights must be non-negative");
  if (margin_m < 0.0 || margin_m > 2.0)
    throw std::invalid_argument("contrastive margin must lie in [0, 2]");
}

double l1_mean(const Tensor& a, const Tensor& b, Tensor* grad_a) {
  if (a.size() != b.size())
    throw std::invalid_argument("l1_mean: size mismatch");
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  if (grad_a && grad_a->size() != a.size()) *grad_a = Tensor(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += std::abs(d);
    if (grad_a) (*grad_a)[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv;
  }
  return s * inv;
}

double adv_loss_d(const Tensor& real_scores, const Tensor& fake_scores,
                  AdvForm form, Tensor* g_real, Tensor* g_fake) {
  const double inv_r = 1.0 / static_cast<double>(real_scores.size());
  const double inv_f = 1.0 / static_cast<double>(fake_scores.size());
  if (g_real) *g_real = Tensor(real_scores.shape());
  if (g_fake) *g_fake = Tensor(fake_scores.shape());
  double loss = 0.0;
  if (form == AdvForm::LeastSquares) {
    for (std::int64_t i = 0; i < real_scores.size(); ++i) {
      const double d = real_scores[i] - 1.0;
      loss += d * d * inv_r;
      if (g_real) (*g_real)[i] = 2.0 * d * inv_r;
    }
    for (std::int64_t i = 0; i < fake_scores.size(); ++i) {
      const double s = fake_scores[i];
      loss += s * s * inv_f;
      if (g_fake) (*g_fake)[i] = 2.0 * s * inv_f;
    }
  } else {
    for (std::int64_t i = 0; i < real_scores.size(); ++i) {
      const double p = sigmoid(real_scores[i]);
      const double pc = std::min(1.0 - kProbEps, std::max(kProbEps, p));
      loss += -std::log(pc) * inv_r;
      // d(-log pc)/dscore = -(1 - p) when unclamped; zero inside the clamp.
      if (g_real)
        (*g_real)[i] = (p > kProbEps && p < 1.0 - kProbEps)
                           ? -(1.0 - p) * inv_r
                           : 0.0;
    }
    for (std::int64_t i = 0; i < fake_scores.size(); ++i) {
      const double p = sigmoid(fake_scores[i]);
      const double pc = std::min(1.0 - kProbEps, std::max(kProbEps, p));
      loss += -std::log(1.0 - pc) * inv_f;
      if (g_fake)
        (*g_fake)[i] = (p > kProbEps && p < 1.0 - kProbEps)
                           ? p * inv_f
                           : 0.0;
    }
  }
  if (!std::isfinite(loss))
    throw std::runtime_error("adversarial discriminator loss is non-finite");
  return loss;
}

double adv_loss_g(const Tensor& fake_scores, AdvForm form, Tensor* g_fake) {
  const double inv = 1.0 / static_cast<double>(fake_scores.size());
  if (g_fake) *g_fake = Tensor(fake_scores.shape());
  double loss = 0.0;
  if (form == AdvForm::LeastSquares) {
    for (std::int64_t i = 0; i < fake_scores.size(); ++i) {
      const double d = fake_scores[i] - 1.0;
      loss += d * d * inv;
      if (g_fake) (*g_fake)[i] = 2.0 * d * inv;
    }
  } else {
    // Non-saturating form: maximize log D(fake) i.e. minimize -log D(fake).
    for (std::int64_t i = 0; i < fake_scores.size(); ++i) {
      const double p = sigmoid(fake_scores[i]);
      const double pc = std::min(1.0 - kProbEps, std::max(kProbEps, p));
      loss += -std::log(pc) * inv;
      if (g_fake)
        (*g_fake)[i] = (p > kProbEps && p < 1.0 - kProbEps)
                           ? -(1.0 - p) * inv
                           : 0.0;
    }
  }
  if (!std::isfinite(loss))
    throw std::runtime_error("adversarial generator loss is non-finite");
  return loss;
}

AdvLossPair adversarial_loss(const Network& D, const Tensor& real,
                             const Tensor& fake, AdvForm form) {
  Tensor sr = D.forward(real, nullptr, {});
  Tensor sf = D.forward(fake, nullptr, {});
  return {adv_loss_d(sr, sf, form), adv_loss_g(sf, form)};
}

double cycle_loss(const Network& G, const Network& F, const Tensor& x_s,
                  const Tensor& x_t) {
  Tensor rec_s = F.forward(G.forward(x_s, nullptr, {}), nullptr, {});
  Tensor rec_t = G.forward(F.forward(x_t, nullptr, {}), nullptr, {});
  return l1_mean(rec_s, x_s) + l1_mean(rec_t, x_t);
}

double identity_loss(const Network& G, const Network& F, const Tensor& x_s,
                     const Tensor& x_t) {
  Tensor idt_s = F.forward(x_s, nullptr, {});
  Tensor idt_t = G.forward(x_t, nullptr, {});
  return l1_mean(idt_s, x_s) + l1_mean(idt_t, x_t);
}

namespace {

// Shared scalar core: loss and d(loss)/dd for one pair at distance d.
inline double contrastive_core(int label_i, double d, double m,
                               double* dl_dd) {
  if (label_i == 1) {
    if (dl_dd) *dl_dd = 2.0 * d;
    return d * d;
  }
  const double gap = m - d;
  if (gap <= 0.0) {
    if (dl_dd) *dl_dd = 0.0;
    return 0.0;
  }
  if (dl_dd) *dl_dd = -2.0 * gap;
  return gap * gap;
}

}  // namespace

double contrastive_loss(int label_i, const Tensor& e1, const Tensor& e2,
                        double m, Tensor* g_e1, Tensor* g_e2) {
  if (m < 0.0 || m > 2.0)
    throw std::invalid_argument("contrastive margin must lie in [0, 2]");
  if (e1.size() != e2.size())
    throw std::invalid_argument("contrastive_loss: embedding size mismatch");
  double sq = 0.0;
  for (std::int64_t i = 0; i < e1.size(); ++i) {
    const double d = e1[i] - e2[i];
    sq += d * d;
  }
  const double dist = std::sqrt(sq);
  double dl_dd = 0.0;
  const double loss = contrastive_core(label_i, dist, m, &dl_dd);
  if (g_e1 || g_e2) {
    if (g_e1 && g_e1->size() != e1.size()) *g_e1 = Tensor(e1.shape());
    if (g_e2 && g_e2->size() != e2.size()) *g_e2 = Tensor(e2.shape());
    const double scale = dist > kDistEps ? dl_dd / dist : 0.0;
    for (std::int64_t i = 0; i < e1.size(); ++i) {
      const double g = scale * (e1[i] - e2[i]);
      if (g_e1) (*g_e1)[i] = g;
      if (g_e2) (*g_e2)[i] = -g;
    }
  }
  return loss;
}

double contrastive_loss_rows(const Tensor& e1, const Tensor& e2,
                             const std::vector<int>& labels, double m,
                             Tensor* g_e1, Tensor* g_e2) {
  if (m < 0.0 || m > 2.0)
    throw std::invalid_argument("contrastive margin must lie in [0, 2]");
  if (e1.ndim() != 2 || e2.ndim() != 2 || e1.dim(0) != e2.dim(0) ||
      e1.dim(1) != e2.dim(1))
    throw std::invalid_argument("contrastive_loss_rows: shape mismatch");
  if (static_cast<int>(labels.size()) != e1.dim(0))
    throw std::invalid_argument("contrastive_loss_rows: label count mismatch");
  const int B = e1.dim(0), D = e1.dim(1);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* r1 = e1.data() + static_cast<std::size_t>(b) * D;
    const double* r2 = e2.data() + static_cast<std::size_t>(b) * D;
    double sq = 0.0;
    for (int i = 0; i < D; ++i) {
      const double d = r1[i] - r2[i];
      sq += d * d;
    }
    const double dist = std::sqrt(sq);
    double dl_dd = 0.0;
    total += contrastive_core(labels[static_cast<std::size_t>(b)], dist, m,
                              &dl_dd);
    if (g_e1 || g_e2) {
      const double scale = dist > kDistEps ? dl_dd / dist : 0.0;
      for (int i = 0; i < D; ++i) {
        const double g = scale * (r1[i] - r2[i]);
        if (g_e1) g_e1->at2(b, i) += g;
        if (g_e2) g_e2->at2(b, i) -= g;
      }
    }
  }
  return total;
}

double classification_loss(const Tensor& logits, const std::vector<int>& labels,
                           Tensor* g_logits) {
  if (logits.ndim() != 2)
    throw std::invalid_argument("classification_loss: expected [B, K] logits");
  const int B = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument("classification_loss: label count mismatch");
  if (g_logits && g_logits->size() != logits.size())
    *g_logits = Tensor(logits.shape());
  const double invB = 1.0 / static_cast<double>(B);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= K)
      throw std::runtime_error("classification_loss: label " +
                               std::to_string(y) + " outside [0, " +
                               std::to_string(K) + ")");
    const double* row = logits.data() + static_cast<std::size_t>(b) * K;
    double mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const double logz = std::log(z) + mx;
    loss += (logz - row[y]) * invB;
    if (g_logits) {
      double* grow = g_logits->data() + static_cast<std::size_t>(b) * K;
      for (int k = 0; k < K; ++k) {
        const double p = std::exp(row[k] - logz);
        grow[k] = (p - (k == y ? 1.0 : 0.0)) * invB;
      }
    }
  }
  if (!std::isfinite(loss))
    throw std::runtime_error("classification loss is non-finite");
  return loss;
}

double LossComponents::get(const std::string& name) const {
  for (const auto& [n, v] : values)
    if (n == name) return v;
  throw std::out_of_range("loss component not recorded: " + name);
}

// ---- composite generator-phase objectives ------------------------------------
//
// Both objectives share one implementation core so that the baseline
// reduction (gamma == 0 here, lambda == 0 there) follows the *identical*
// floating-point path: the optional branches are skipped entirely, never
// multiplied by zero.

namespace {

struct GeneratorPhase {
  // Traces for every forward pass that may need a backward.
  Trace tr_fake_t, tr_fake_s;      // G(x_s), F(x_t)
  Trace tr_rec_s, tr_rec_t;        // F(G(x_s)), G(F(x_t))
  Trace tr_idt_s, tr_idt_t;        // F(x_s), G(x_t)
  Tensor fake_t, fake_s, rec_s, rec_t, idt_s, idt_t;

  // Accumulated image-level gradients.
  Tensor g_fake_t, g_fake_s;
};

// Runs the shared CycleGAN-with-identity part of the generator phase and, if
// backward, accumulates parameter gradients into G and F.  The extra_* hooks
// add branch-specific gradients w.r.t. the translated images before the final
// backward through G and F.
LossComponents generator_phase_core(
    NetworkBundle& b, const Tensor& x_s, const Tensor& x_t,
    const LossWeights& w, AdvForm form, bool backward,
    const std::function<void(GeneratorPhase&, LossComponents&)>& extra_branch,
    TranslationOutputs* outputs) {
  w.validate();
  LossComponents rec;
  GeneratorPhase ph;

  // Forward passes.
  ph.fake_t = b.G.forward(x_s, backward ? &ph.tr_fake_t : nullptr, {});
  ph.fake_s = b.F.forward(x_t, backward ? &ph.tr_fake_s : nullptr, {});
  ph.rec_s = b.F.forward(ph.fake_t, backward ? &ph.tr_rec_s : nullptr, {});
  ph.rec_t = b.G.forward(ph.fake_s, backward ? &ph.tr_rec_t : nullptr, {});
  ph.idt_s = b.F.forward(x_s, backward ? &ph.tr_idt_s : nullptr, {});
  ph.idt_t = b.G.forward(x_t, backward ? &ph.tr_idt_t : nullptr, {});

  Trace tr_dt, tr_ds;
  Tensor score_fake_t = b.D_T.forward(ph.fake_t, backward ? &tr_dt : nullptr, {});
  Tensor score_fake_s = b.D_S.forward(ph.fake_s, backward ? &tr_ds : nullptr, {});

  // Loss values (and gradients w.r.t. the tensors involved).
  Tensor g_score_t, g_score_s;
  const double adv_G =
      adv_loss_g(score_fake_t, form, backward ? &g_score_t : nullptr);
  const double adv_F =
      adv_loss_g(score_fake_s, form, backward ? &g_score_s : nullptr);

  Tensor g_rec_s, g_rec_t, g_idt_s, g_idt_t;
  const double rec_loss_s = l1_mean(ph.rec_s, x_s, backward ? &g_rec_s : nullptr);
  const double rec_loss_t = l1_mean(ph.rec_t, x_t, backward ? &g_rec_t : nullptr);
  const double ide_loss_s = l1_mean(ph.idt_s, x_s, backward ? &g_idt_s : nullptr);
  const double ide_loss_t = l1_mean(ph.idt_t, x_t, backward ? &g_idt_t : nullptr);
  const double rec_total = rec_loss_s + rec_loss_t;
  const double ide_total = ide_loss_s + ide_loss_t;

  rec.add("adv_G", adv_G);
  rec.add("adv_F", adv_F);
  rec.add("rec", rec_total);
  rec.add("ide", ide_total);
  rec.total = adv_G + adv_F + w.alpha * rec_total + w.beta * ide_total;

  if (backward) {
    // Image-level gradients on the translated images: the adversarial terms
    // relay through the (frozen) discriminators.
    ph.g_fake_t = b.D_T.backward(tr_dt, g_score_t, /*accum=*/false);
    ph.g_fake_s = b.D_S.backward(tr_ds, g_score_s, /*accum=*/false);

    // Cycle terms: backprop through the second generator into the fakes, and
    // directly into G/F parameters for the second hop.
    g_rec_s.scale_(w.alpha);
    Tensor g_from_rec_s = b.F.backward(ph.tr_rec_s, g_rec_s, /*accum=*/true);
    ph.g_fake_t.add_(g_from_rec_s);
    g_rec_t.scale_(w.alpha);
    Tensor g_from_rec_t = b.G.backward(ph.tr_rec_t, g_rec_t, /*accum=*/true);
    ph.g_fake_s.add_(g_from_rec_t);

    // Identity terms.
    g_idt_s.scale_(w.beta);
    b.F.backward(ph.tr_idt_s, g_idt_s, /*accum=*/true);
    g_idt_t.scale_(w.beta);
    b.G.backward(ph.tr_idt_t, g_idt_t, /*accum=*/true);
  }

  // Branch-specific extension (similarity pairs / classification guidance).
  if (extra_branch) extra_branch(ph, rec);

  if (backward) {
    // Final backward through the first-hop translations.
    b.G.backward(ph.tr_fake_t, ph.g_fake_t, /*accum=*/true);
    b.F.backward(ph.tr_fake_s, ph.g_fake_s, /*accum=*/true);
  }
  if (!std::isfinite(rec.total))
    throw std::runtime_error("generator objective is non-finite");
  if (outputs) {
    outputs->fake_t = std::move(ph.fake_t);
    outputs->fake_s = std::move(ph.fake_s);
  }
  return rec;
}

}  // namespace

LossComponents spgan_objective(NetworkBundle& b, const Tensor& x_s,
                               const Tensor& x_t, const LossWeights& w,
                               AdvForm form, bool backward,
                               TranslationOutputs* outputs) {
  auto similarity_branch = [&](GeneratorPhase& ph, LossComponents& rec) {
    if (w.gamma == 0.0) return;  // exact baseline reduction: branch absent
    const int B = x_s.dim(0);
    Trace tr_es, tr_et, tr_eft, tr_efs;
    Tensor E_s = b.M.forward(x_s, backward ? &tr_es : nullptr, {});
    Tensor E_t = b.M.forward(x_t, backward ? &tr_et : nullptr, {});
    Tensor E_ft = b.M.forward(ph.fake_t, backward ? &tr_eft : nullptr, {});
    Tensor E_fs = b.M.forward(ph.fake_s, backward ? &tr_efs : nullptr, {});
    Tensor g_E_ft(E_ft.shape()), g_E_fs(E_fs.shape());
    const double invB = 1.0 / static_cast<double>(B);
    const double con =
        pair_contrastive_sum(E_s, E_ft, E_t, E_fs, w.margin_m, nullptr,
                             backward ? &g_E_ft : nullptr, nullptr,
                             backward ? &g_E_fs : nullptr) *
        invB;
    rec.add("con", con);
    rec.total += w.gamma * con;
    if (backward) {
      // Route gamma * dcon/dfake through the frozen similarity network.
      g_E_ft.scale_(w.gamma * invB);
      g_E_fs.scale_(w.gamma * invB);
      ph.g_fake_t.add_(b.M.backward(tr_eft, g_E_ft, /*accum=*/false));
      ph.g_fake_s.add_(b.M.backward(tr_efs, g_E_fs, /*accum=*/false));
    }
  };
  return generator_phase_core(b, x_s, x_t, w, form, backward, similarity_branch,
                              outputs);
}

LossComponents espgan_objective(NetworkBundle& b, const Tensor& x_s,
                                const std::vector<int>& labels_s,
                                const Tensor& x_t, const LossWeights& w,
                                AdvForm form, bool backward,
                                TranslationOutputs* outputs) {
  auto guidance_branch = [&](GeneratorPhase& ph, LossComponents& rec) {
    if (w.lambda == 0.0) return;  // exact baseline reduction: branch absent
    // Frozen learner in evaluation mode: deterministic, no dropout, running
    // statistics; gradients relay into G only.
    Trace tr_bb, tr_head;
    Tensor fmap = b.C.backbone.forward(ph.fake_t, backward ? &tr_bb : nullptr, {});
    Tensor logits = b.C.head.forward(fmap, backward ? &tr_head : nullptr, {});
    Tensor g_logits;
    const double cls =
        classification_loss(logits, labels_s, backward ? &g_logits : nullptr);
    rec.add("cls", cls);
    rec.total += w.lambda * cls;
    if (backward) {
      g_logits.scale_(w.lambda);
      Tensor g_fmap = b.C.head.backward(tr_head, g_logits, /*accum=*/false);
      ph.g_fake_t.add_(b.C.backbone.backward(tr_bb, g_fmap, /*accum=*/false));
    }
  };
  return generator_phase_core(b, x_s, x_t, w, form, backward, guidance_branch,
                              outputs);
}

}  // namespace translearn
