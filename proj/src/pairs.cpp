#include "translearn/pairs.hpp"

#include <stdexcept>

namespace translearn {

std::vector<ContrastivePair> build_pairs(int batch_size_s, int batch_size_t) {
  if (batch_size_s != batch_size_t)
    throw std::invalid_argument("build_pairs: batch sizes differ (" +
                                std::to_string(batch_size_s) + " vs " +
                                std::to_string(batch_size_t) + ")");
  std::vector<ContrastivePair> out;
  out.reserve(static_cast<std::size_t>(batch_size_s) * 4);
  for (int k = 0; k < batch_size_s; ++k) {
    out.push_back({k, PairKind::PosSrc, 1});
    out.push_back({k, PairKind::PosTgt, 1});
    out.push_back({k, PairKind::NegSrc, 0});
    out.push_back({k, PairKind::NegTgt, 0});
  }
  return out;
}

namespace {

Tensor slice_image(const Tensor& batch, int k) {
  const int C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  const std::int64_t per = static_cast<std::int64_t>(C) * H * W;
  Tensor out({C, H, W});
  std::copy(batch.data() + k * per, batch.data() + (k + 1) * per, out.data());
  return out;
}

}  // namespace

std::vector<MaterializedPair> materialize_pairs(const Tensor& x_s,
                                                const Tensor& x_t,
                                                const Network& G,
                                                const Network& F) {
  const auto pairs = build_pairs(x_s.dim(0), x_t.dim(0));
  Tensor fake_t = G.forward(x_s, nullptr, {});
  Tensor fake_s = F.forward(x_t, nullptr, {});
  std::vector<MaterializedPair> out;
  out.reserve(pairs.size());
  for (const ContrastivePair& p : pairs) {
    MaterializedPair mp;
    mp.kind = p.kind;
    mp.label_i = p.label_i;
    switch (p.kind) {
      case PairKind::PosSrc:
        mp.left = slice_image(x_s, p.index);
        mp.right = slice_image(fake_t, p.index);
        break;
      case PairKind::PosTgt:
        mp.left = slice_image(x_t, p.index);
        mp.right = slice_image(fake_s, p.index);
        break;
      case PairKind::NegSrc:
        mp.left = slice_image(fake_t, p.index);
        mp.right = slice_image(x_t, p.index);
        break;
      case PairKind::NegTgt:
        mp.left = slice_image(fake_s, p.index);
        mp.right = slice_image(x_s, p.index);
        break;
    }
    out.push_back(std::move(mp));
  }
  return out;
}

double pair_contrastive_sum(const Tensor& E_s, const Tensor& E_ft,
                            const Tensor& E_t, const Tensor& E_fs, double m,
                            Tensor* g_E_s, Tensor* g_E_ft, Tensor* g_E_t,
                            Tensor* g_E_fs) {
  const int B = E_s.dim(0);
  if (E_ft.dim(0) != B || E_t.dim(0) != B || E_fs.dim(0) != B)
    throw std::invalid_argument("pair_contrastive_sum: batch size mismatch");
  const std::vector<int> ones(static_cast<std::size_t>(B), 1);
  const std::vector<int> zeros(static_cast<std::size_t>(B), 0);
  double total = 0.0;
  total += contrastive_loss_rows(E_s, E_ft, ones, m, g_E_s, g_E_ft);
  total += contrastive_loss_rows(E_t, E_fs, ones, m, g_E_t, g_E_fs);
  total += contrastive_loss_rows(E_ft, E_t, zeros, m, g_E_ft, g_E_t);
  total += contrastive_loss_rows(E_fs, E_s, zeros, m, g_E_fs, g_E_s);
  return total;
}

}  // namespace translearn
