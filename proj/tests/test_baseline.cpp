#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedmpt/baseline.hpp"
#include "fedmpt/error.hpp"
#include "support.hpp"

using namespace fedmpt;

namespace {

Tensor unit_rows(std::mt19937_64& gen, std::size_t m, std::size_t d) {
  return l2_normalize_rows(testing::random_tensor(gen, {m, d}));
}

std::shared_ptr<const Encoders> small_encoders() {
  return std::make_shared<const Encoders>(
      Encoders{VisualEncoder(1, 10, 4, 6), TextEncoder(2, 5, 6)});
}

}  // namespace

TEST_CASE("one patch and one class returns the similarity") {
  std::mt19937_64 gen(1);
  const Tensor p = unit_rows(gen, 1, 5);
  const Tensor t = unit_rows(gen, 1, 5);
  double dot = 0.0;
  for (std::size_t j = 0; j < 5; ++j) dot += p[j] * t[j];
  CHECK(baseline_predict(p, t, 4.0)[0] == doctest::Approx(dot).epsilon(1e-15));
  CHECK(baseline_predict(p, t, 4.0, 3.0)[0] == doctest::Approx(3.0 * dot).epsilon(1e-15));
}

TEST_CASE("equal similarities give M s0 / C") {
  // Every patch splits its weight evenly over C classes, so each of the M
  // patches adds s0 / C to every class.
  const std::size_t m = 5, c = 4;
  Tensor patches({m, 3}, 0.0), text({c, 3}, 0.0);
  for (std::size_t i = 0; i < m; ++i) patches.at(i, 0) = 1.0;
  for (std::size_t k = 0; k < c; ++k) {
    text.at(k, 0) = 0.6;
    text.at(k, 1) = 0.8;
  }
  const Tensor out = baseline_predict(patches, text, 4.0);
  for (double v : out.data()) CHECK(v == doctest::Approx(m * 0.6 / c).epsilon(1e-15));
}

TEST_CASE("matches the direct double sum") {
  std::mt19937_64 gen(2);
  const Tensor p = unit_rows(gen, 6, 5);
  const Tensor t = unit_rows(gen, 3, 5);
  const double tau = 0.7, scale = 2.0;
  const Tensor out = baseline_predict(p, t, tau, scale);
  for (std::size_t c = 0; c < 3; ++c) {
    double expected = 0.0;
    for (std::size_t m = 0; m < 6; ++m) {
      double s[3], z = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        s[k] = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s[k] += scale * p.at(m, j) * t.at(k, j);
        z += std::exp(s[k] / tau);
      }
      expected += std::exp(s[c] / tau) / z * s[c];
    }
    CHECK(out[c] == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("patch permutation invariance and class equivariance") {
  std::mt19937_64 gen(3);
  const Tensor p = unit_rows(gen, 4, 5);
  const Tensor t = unit_rows(gen, 3, 5);
  const Tensor base = baseline_predict(p, t, 4.0);

  Tensor pp({4, 5});
  const std::size_t order[4] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) pp.at(i, j) = p.at(order[i], j);
  }
  const Tensor permuted = baseline_predict(pp, t, 4.0);
  for (std::size_t c = 0; c < 3; ++c) CHECK(permuted[c] == doctest::Approx(base[c]).epsilon(1e-14));

  Tensor tt({3, 5});
  const std::size_t corder[3] = {1, 2, 0};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) tt.at(i, j) = t.at(corder[i], j);
  }
  const Tensor swapped = baseline_predict(p, tt, 4.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(swapped[i] == doctest::Approx(base[corder[i]]).epsilon(1e-14));
  }
}

TEST_CASE("temperature must be positive") {
  CHECK_THROWS_AS(baseline_predict(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}}), 0.0),
                  ParameterError);
}

TEST_CASE("context gradient matches finite differences") {
  auto enc = small_encoders();
  BaselineSettings settings;
  settings.classes = {"cat", "dog", "car"};
  settings.beta = 3;
  settings.logit_scale = 2.0;
  settings.seed = 4;
  BaselineModel model(enc, settings);
  std::mt19937_64 gen(4);
  const Tensor x1 = enc->visual.encode(testing::random_tensor(gen, {10}));
  const Tensor x2 = enc->visual.encode(testing::random_tensor(gen, {10}));
  const Tensor* batch[] = {&x1, &x2};
  const LabelVector y1{Label::kPositive, Label::kNegative, Label::kNegative};
  const LabelVector y2{Label::kNegative, Label::kPositive, Label::kUnknown};
  const LabelVector* labels[] = {&y1, &y2};
  model.alpha().value[0] = 0.5;
  const double err = testing::max_grad_error(model.parameters(), [&](Tape& tape) {
    return model.batch_loss(tape, batch, labels, AslConfig{});
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("prompt is the shared context followed by the class name") {
  auto enc = small_encoders();
  BaselinePromptBank bank(enc->text, {"cat", "dog"}, 3, 9);
  Tape tape;
  const Tensor e = bank.embed_all(tape, enc->text).value();
  REQUIRE(e.shape() == Shape{2, 6});
  for (std::size_t c = 0; c < 2; ++c) {
    Tensor seq({4, 5});
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t j = 0; j < 5; ++j) seq.at(r, j) = bank.context().value.at(r, j);
    }
    const Tensor name = enc->text.name_token(c == 0 ? "cat" : "dog");
    for (std::size_t j = 0; j < 5; ++j) seq.at(3, j) = name[j];
    const Tensor one = enc->text.encode(tape.constant(seq)).value();
    for (std::size_t d = 0; d < 6; ++d) CHECK(e.at(c, d) == doctest::Approx(one[d]).epsilon(1e-14));
  }
}

TEST_CASE("clones are independent") {
  auto enc = small_encoders();
  BaselineSettings settings;
  settings.classes = {"cat", "dog"};
  BaselineModel model(enc, settings);
  auto copy = model.clone();
  model.bank().context().value[0] += 1.0;
  CHECK(copy->parameters()[0]->value[0] != model.bank().context().value[0]);
}
