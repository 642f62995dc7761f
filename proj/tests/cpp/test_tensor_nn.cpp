// Tensor semantics and per-layer forward/backward correctness.  Every layer's
// analytic input and parameter gradients are validated against central finite
// differences of a scalar probe loss.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>

#include "gradcheck.hpp"
#include "test_util.hpp"
#include "translearn/checkpoint.hpp"
#include "translearn/networks.hpp"
#include "translearn/nn.hpp"
#include "translearn/rng.hpp"
#include "translearn/tensor.hpp"

using namespace translearn;
using testutil::check_param_grads;
using testutil::check_tensor_grad;
using testutil::FDResult;

namespace {

// Probe loss: fixed random weighting of all outputs, so every output element
// influences the scalar.
struct Probe {
  Network net;
  Tensor x;
  Tensor w;  // same shape as the output
  bool train = false;
  std::uint64_t dropout_seed = 0;  // used only when train mode needs RNG

  double operator()() const {
    Rng r(dropout_seed);
    FwdOpts o;
    o.train = train;
    o.rng = &r;
    Tensor y = net.forward(x, nullptr, o);
    double s = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  }
};

// Runs the base forward/backward, then FD-checks the input gradient and all
// parameter gradients.
void gradcheck_layer(std::unique_ptr<Layer> layer, std::vector<int> in_shape,
                     bool train = false, double tol = 1e-4) {
  Probe p;
  p.net.add(std::move(layer));
  p.train = train;
  p.dropout_seed = 99;
  Rng rx(42);
  p.x = Tensor(in_shape);
  for (std::int64_t i = 0; i < p.x.size(); ++i) p.x[i] = rx.uniform(-0.9, 0.9);
  // Give any parameters a non-degenerate starting point.
  Rng rw(43);
  for (Param* prm : p.net.params())
    for (std::int64_t i = 0; i < prm->value.size(); ++i)
      prm->value[i] = rw.uniform(-0.5, 0.5);

  Rng rg(44);
  {
    Rng rr(p.dropout_seed);
    FwdOpts o;
    o.train = p.train;
    o.rng = &rr;
    Trace tr;
    Tensor y = p.net.forward(p.x, &tr, o);
    p.w = Tensor(y.shape());
    for (std::int64_t i = 0; i < p.w.size(); ++i) p.w[i] = rg.uniform(-1.0, 1.0);
    p.net.zero_grad();
    Tensor gx = p.net.backward(tr, p.w, /*accum_param_grads=*/true);

    auto loss = [&]() { return p(); };
    FDResult rin = check_tensor_grad(loss, p.x, gx, tol);
    CAPTURE(rin.max_rel);
    CHECK(rin.max_rel < tol);
    FDResult rpar = check_param_grads(loss, p.net.params(), tol);
    CAPTURE(rpar.max_rel);
    CHECK(rpar.max_rel < tol);
  }
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  t.at2(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS(t.reshaped({4, 2}));
  Tensor r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r[5] == 5.0);

  Tensor a = Tensor::full({2, 2}, 1.5);
  Tensor b = Tensor::full({2, 2}, 0.25);
  a.add_(b);
  CHECK(a[0] == doctest::Approx(1.75));
  a.scale_(2.0);
  CHECK(a.sum() == doctest::Approx(14.0));

  const std::uint64_t h0 = a.content_hash();
  a[3] += 1e-12;
  CHECK(a.content_hash() != h0);

  Tensor img({1, 3, 2, 2});
  img.at4(0, 2, 1, 1) = 9.0;
  CHECK(img[11] == 9.0);
}

TEST_CASE("rng streams are independent and serializable") {
  Rng a = derive_stream(5, "alpha");
  Rng b = derive_stream(5, "beta");
  CHECK(a.next_u64() != b.next_u64());

  Rng c(77);
  (void)c.normal();  // leave a Box-Muller spare in the state
  Rng::State st = c.state();
  const double expect1 = c.normal();
  const double expect2 = c.uniform();
  Rng d(1);
  d.set_state(st);
  CHECK(d.normal() == expect1);
  CHECK(d.uniform() == expect2);
}

TEST_CASE("conv2d gradients") {
  gradcheck_layer(std::make_unique<Conv2d>(2, 3, 3, 1, 1), {2, 2, 5, 4});
  gradcheck_layer(std::make_unique<Conv2d>(2, 3, 3, 2, 1), {2, 2, 6, 5});
  gradcheck_layer(std::make_unique<Conv2d>(2, 2, 4, 2, 1, false), {1, 2, 8, 6});
}

TEST_CASE("convtranspose2d gradients") {
  gradcheck_layer(std::make_unique<ConvTranspose2d>(3, 2, 3, 2, 1, 1), {2, 3, 4, 3});
  gradcheck_layer(std::make_unique<ConvTranspose2d>(2, 2, 3, 2, 1, 1, false),
                  {1, 2, 5, 4});
}

TEST_CASE("linear gradients") {
  gradcheck_layer(std::make_unique<Linear>(7, 4), {3, 7});
  gradcheck_layer(std::make_unique<Linear>(5, 3, false), {2, 5});
}

TEST_CASE("activation gradients") {
  gradcheck_layer(std::make_unique<ReLU>(), {2, 3, 4, 3});
  gradcheck_layer(std::make_unique<LeakyReLU>(0.2), {2, 3, 4, 3});
  gradcheck_layer(std::make_unique<Tanh>(), {2, 2, 3, 3});
  gradcheck_layer(std::make_unique<Sigmoid>(), {2, 2, 3, 3});
}

TEST_CASE("pooling gradients and trailing-window shape") {
  gradcheck_layer(std::make_unique<MaxPool2d>(2, 2), {2, 2, 6, 4});
  // Odd input: the clipped trailing window must still backpropagate.
  gradcheck_layer(std::make_unique<MaxPool2d>(2, 2), {1, 2, 5, 3});
  gradcheck_layer(std::make_unique<GlobalAvgPool2d>(), {2, 3, 3, 4});

  Network n;
  n.add(std::make_unique<MaxPool2d>(2, 2));
  Tensor odd({1, 1, 5, 3});
  Tensor out = n.forward(odd, nullptr, {});
  CHECK(out.dim(2) == 3);  // ceil(5/2)
  CHECK(out.dim(3) == 2);  // ceil(3/2)
}

TEST_CASE("normalization gradients") {
  gradcheck_layer(std::make_unique<InstanceNorm2d>(3), {2, 3, 4, 3});
  gradcheck_layer(std::make_unique<BatchNorm2d>(3), {3, 3, 4, 2}, /*train=*/true);
  gradcheck_layer(std::make_unique<BatchNorm2d>(3), {3, 3, 4, 2}, /*train=*/false);
  gradcheck_layer(std::make_unique<L2Normalize>(), {3, 6});
}

TEST_CASE("batchnorm statistics semantics") {
  BatchNorm2d bn(2);
  Tensor x({4, 2, 3, 3});
  Rng r(11);
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = r.normal(1.0, 2.0);

  // Train mode: output is normalized by batch statistics, running stats move.
  LayerCtx ctx;
  FwdOpts train_opts;
  train_opts.train = true;
  Tensor y = bn.forward(x, ctx, train_opts);
  const std::int64_t per_ch = y.size() / 2;
  double mean0 = 0.0;
  for (int n = 0; n < 4; ++n)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) mean0 += y.at4(n, 0, h, w);
  mean0 /= static_cast<double>(per_ch);
  CHECK(std::abs(mean0) < 1e-10);
  CHECK(bn.running_mean_[0] != 0.0);  // moved off the initial value

  // Eval mode must use the running statistics, not batch statistics.
  const double rm = bn.running_mean_[0];
  LayerCtx ctx2;
  Tensor y2 = bn.forward(x, ctx2, {});
  CHECK(bn.running_mean_[0] == rm);  // unchanged in eval mode
  double mean2 = 0.0;
  for (int n = 0; n < 4; ++n)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) mean2 += y2.at4(n, 0, h, w);
  mean2 /= static_cast<double>(per_ch);
  CHECK(std::abs(mean2) > 1e-6);  // running stats differ from batch stats

  // Frozen: train-mode forward behaves like eval and never updates anything,
  // and the affine parameters accumulate no gradient.
  bn.frozen = true;
  const double rm_before = bn.running_mean_[0];
  LayerCtx ctx3;
  Tensor y3 = bn.forward(x, ctx3, train_opts);
  CHECK(bn.running_mean_[0] == rm_before);
  for (std::int64_t i = 0; i < y3.size(); ++i)
    CHECK(y3[i] == doctest::Approx(y2[i]).epsilon(1e-12));
  Tensor gy = Tensor::full(y3.shape(), 1.0);
  bn.weight_.grad.fill(0.0);
  bn.bias_.grad.fill(0.0);
  (void)bn.backward(ctx3, gy, /*accum=*/true);
  CHECK(bn.weight_.grad.content_hash() == Tensor::zeros({2}).content_hash());
  CHECK(bn.bias_.grad.content_hash() == Tensor::zeros({2}).content_hash());
}

TEST_CASE("dropout gradients and semantics") {
  gradcheck_layer(std::make_unique<Dropout>(0.4), {3, 8}, /*train=*/true);

  // Eval mode is the identity.
  Network n;
  n.add(std::make_unique<Dropout>(0.7));
  Tensor x = testutil::random_images(1, 2, 2, 5);
  Tensor y = n.forward(x, nullptr, {});
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  // Train mode: kept elements are scaled by 1/(1-p), dropped are zero.
  Rng r(3);
  FwdOpts o;
  o.train = true;
  o.rng = &r;
  Tensor yt = n.forward(x, nullptr, o);
  int dropped = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    if (yt[i] == 0.0) {
      ++dropped;
    } else {
      CHECK(yt[i] == doctest::Approx(x[i] / 0.3));
    }
  }
  CHECK(dropped > 0);
}

TEST_CASE("padding and composite block gradients") {
  gradcheck_layer(std::make_unique<ReflectionPad2d>(2), {1, 2, 4, 3});
  gradcheck_layer(std::make_unique<Flatten>(), {2, 3, 2, 2});
  gradcheck_layer(std::make_unique<ResidualBlock>(2), {1, 2, 5, 4});
  gradcheck_layer(std::make_unique<Bottleneck>(2, 2, 4, 1), {1, 2, 4, 4},
                  /*train=*/true);
  gradcheck_layer(std::make_unique<Bottleneck>(2, 2, 4, 2), {1, 2, 4, 4},
                  /*train=*/true);
}

TEST_CASE("network state hash and serialization round trip") {
  testutil::TempDir tmp("translearn_nn");
  Network net("probe");
  net.add(std::make_unique<Conv2d>(3, 4, 3, 2, 1));
  net.add(std::make_unique<BatchNorm2d>(4));
  net.add(std::make_unique<ReLU>());
  Rng init(9);
  net.init_weights(init);

  // Push the running statistics off their defaults so buffers are exercised.
  Tensor x = testutil::random_images(2, 6, 6, 21);
  FwdOpts o;
  o.train = true;
  (void)net.forward(x, nullptr, o);

  const std::uint64_t h0 = net.state_hash();
  Tensor y0 = net.forward(x, nullptr, {});
  {
    ArchiveWriter w(tmp.sub("net.bin"));
    save_network(w, net);
    w.close();
  }

  // Perturb, confirm the hash moves, then restore from disk.
  net.params()[0]->value[0] += 0.125;
  CHECK(net.state_hash() != h0);
  *net.buffers()[0].second = Tensor::zeros(net.buffers()[0].second->shape());
  {
    ArchiveReader r(tmp.sub("net.bin"));
    load_network(r, net);
  }
  CHECK(net.state_hash() == h0);
  Tensor y1 = net.forward(x, nullptr, {});
  CHECK(y0.content_hash() == y1.content_hash());
}

TEST_CASE("optimizers descend a quadratic") {
  // min_w ||w - c||^2 via both optimizers; both must converge toward c.
  auto run = [](bool adam) {
    Param w("w", ParamKind::linear_weight, Tensor::zeros({4}));
    Tensor c({4}, {1.0, -2.0, 0.5, 3.0});
    Adam a({&w}, 0.05);
    SGD s({{{&w}, 0.05}}, 0.9, 0.0);
    for (int it = 0; it < 400; ++it) {
      for (int i = 0; i < 4; ++i) w.grad[i] = 2.0 * (w.value[i] - c[i]);
      if (adam) {
        a.step();
        a.zero_grad();
      } else {
        s.step();
        s.zero_grad();
      }
    }
    double err = 0.0;
    for (int i = 0; i < 4; ++i) err = std::max(err, std::abs(w.value[i] - c[i]));
    return err;
  };
  CHECK(run(true) < 1e-3);
  CHECK(run(false) < 1e-3);
}

TEST_CASE("optimizer state serialization honors bias correction") {
  testutil::TempDir tmp("translearn_opt");
  Param w1("w", ParamKind::linear_weight, Tensor::full({3}, 1.0));
  Param w2("w", ParamKind::linear_weight, Tensor::full({3}, 1.0));
  Adam a1({&w1}, 0.01);
  Adam a2({&w2}, 0.01);

  auto grad_at = [](Param& p, int it) {
    for (int i = 0; i < 3; ++i) p.grad[i] = 0.3 * (it + 1) * (i + 1);
  };
  for (int it = 0; it < 5; ++it) {
    grad_at(w1, it);
    a1.step();
    a1.zero_grad();
  }
  {
    ArchiveWriter w(tmp.sub("adam.bin"));
    save_adam(w, "A", a1);
    w.close();
  }
  // Fresh optimizer: replaying from the saved state must continue identically.
  {
    ArchiveReader r(tmp.sub("adam.bin"));
    load_adam(r, "A", a2);
  }
  w2.value = w1.value;
  for (int it = 5; it < 8; ++it) {
    grad_at(w1, it);
    a1.step();
    a1.zero_grad();
    grad_at(w2, it);
    a2.step();
    a2.zero_grad();
  }
  CHECK(w1.value.content_hash() == w2.value.content_hash());
}
