#include <cmath>

#include "doctest.h"
#include "grad_cases.hpp"
#include "helpers.hpp"
#include "monomt/tensor.hpp"

using namespace monomt;
using testing::random_tensor;


TEST_CASE("matmul values") {
  Tape t;
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  auto c = t.matmul(a, b);
  CHECK(c.at(0, 0) == 58);
  CHECK(c.at(0, 1) == 64);
  CHECK(c.at(1, 0) == 139);
  CHECK(c.at(1, 1) == 154);
  CHECK_THROWS_AS(t.matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows sum to one and cross entropy matches log-sum-exp") {
  Tape t;
  auto x = Tensor::from({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.0, 1000.0});
  auto s = t.softmax_rows(x);
  for (std::size_t r = 0; r < 2; ++r) CHECK(s.at(r, 0) + s.at(r, 1) + s.at(r, 2) == doctest::Approx(1.0));
  CHECK(std::isfinite(s.at(1, 2)));
  std::vector<std::int32_t> tgt{0, 2};
  auto ce = t.cross_entropy(Tensor::from({1, 3}, {1.0, 2.0, 3.0}), std::span(tgt).first(1));
  const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 1.0;
  CHECK(ce.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("masked cross entropy ignores zero-weight rows") {
  Tape t;
  auto logits = Tensor::from({2, 2}, {0.0, 0.0, 5.0, -5.0});
  std::vector<std::int32_t> tgt{0, 1};
  std::vector<double> w{1.0, 0.0};
  CHECK(t.cross_entropy(logits, tgt, w).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("gradient checks of primitives") {
  for (const auto& c : testing::primitive_cases()) {
    CAPTURE(c.name);
    const auto r = gradient_check(c.params, c.loss, 1e-5, 1000);
    CHECK(r.checked > 0);
    CHECK_MESSAGE(r.max_rel_error < 1e-6, r.worst << " rel " << r.max_rel_error);
  }
}

TEST_CASE("gradient checks of model losses") {
  for (const auto& c : testing::model_cases()) {
    CAPTURE(c.name);
    const auto r = gradient_check(c.params, c.loss, 1e-5, 12);
    CHECK(r.checked > 20);
    CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst << " rel " << r.max_rel_error);
  }
}

TEST_CASE("clamp has zero gradient where active") {
  auto v = Tensor::from({1, 2}, {-3.0, 0.5}, true);
  Tape t;
  auto y = t.sum(t.clamp(v, 0.0, 1.0));
  t.backward(y);
  CHECK(v.grad()[0] == 0.0);
  CHECK(v.grad()[1] == 1.0);
}

TEST_CASE("inference tape records nothing") {
  auto a = random_tensor({2, 2}, 1);
  Tape t(Tape::Mode::Inference);
  auto y = t.tanh(t.matmul(a, a));
  CHECK(t.size() == 0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradients accumulate across backward calls") {
  auto a = Tensor::from({1, 1}, {2.0}, true);
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(t.mul(a, a));
  }
  CHECK(a.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("adam first step matches the bias-corrected update") {
  auto p = Tensor::from({1, 2}, {1.0, -2.0}, true);
  AdamConfig cfg{.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .clip_norm = 0.0};
  Adam adam({p}, cfg);
  p.mutable_grad()[0] = 0.5;
  p.mutable_grad()[1] = -4.0;
  adam.step();
  // m̂ = g, v̂ = g², so the step is lr · g / (|g| + eps).
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam clipping scales gradients to the clip norm") {
  auto p = Tensor::from({1, 2}, {0.0, 0.0}, true);
  Adam adam({p}, AdamConfig{.lr = 1.0, .beta1 = 0.0, .beta2 = 0.0, .eps = 0.0, .clip_norm = 1.0});
  p.mutable_grad()[0] = 3.0;
  p.mutable_grad()[1] = 4.0;
  CHECK(grad_norm({p}) == doctest::Approx(5.0));
  adam.step();
  // With β = 0 the update is sign(g)·lr regardless of scaling; moments show the clipping.
  CHECK(adam.first_moment(0)[0] == doctest::Approx(0.6));
  CHECK(adam.first_moment(0)[1] == doctest::Approx(0.8));
}

TEST_CASE("adam restrict_rows leaves earlier rows bit-identical") {
  auto p = random_tensor({4, 3}, 3);
  const std::vector<double> before(p.values().begin(), p.values().end());
  Adam adam({p}, AdamConfig{.lr = 0.1});
  adam.restrict_rows(p, 2);
  for (auto& g : p.mutable_grad()) g = 1.0;
  adam.step();
  for (std::size_t i = 0; i < 6; ++i) CHECK(p[i] == before[i]);
  for (std::size_t i = 6; i < 12; ++i) CHECK(p[i] != before[i]);
}

TEST_CASE("parameter set serialization round trip and checksums") {
  ParameterSet ps;
  Rng rng(4);
  ps.add("a", "g1", {2, 3}, rng);
  ps.add("b", "g2", {1, 5}, rng);
  const auto bytes = ps.serialize();
  const auto back = ParameterSet::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.checksum() == ps.checksum());
  CHECK(back.checksum("g1") == ps.checksum("g1"));
  CHECK(ps.checksum("g1") != ps.checksum("g2"));
  CHECK(back.get("b").values()[3] == ps.get("b").values()[3]);
  CHECK_THROWS(ps.add("a", "g1", {1, 1}, rng));
  CHECK_THROWS(ParameterSet::deserialize(bytes.substr(0, bytes.size() - 3)));
  CHECK(ps.tensors({"g2"}).size() == 1);
  CHECK(ps.tensors_except({"g2"}).size() == 1);
}

TEST_CASE("deep copy is independent") {
  ParameterSet ps;
  Rng rng(1);
  ps.add("a", "g", {2, 2}, rng);
  auto copy = ps.deep_copy();
  copy.get("a").mutable_values()[0] += 1.0;
  CHECK(copy.checksum() != ps.checksum());
  copy.assign_values(ps);
  CHECK(copy.checksum() == ps.checksum());
}
