#include <cmath>

#include "doctest.h"
#include "heatcast/tensor.hpp"
#include "test_support.hpp"

using namespace heatcast;
using namespace heatcast::autograd;
using heatcast::test::check_gradients;
using heatcast::test::probe_weights;
using heatcast::test::random_tensor;
using heatcast::test::weighted_sum;

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor({2, 0}, 0.0), DimensionError);
  CHECK_THROWS_AS(Tensor({}, 0.0), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.vals()[5] == 1.5);
}

TEST_CASE("matmul identity and forced example") {
  Tape tape;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(tape, eye, a);
  CHECK(out.vals() == std::vector<double>{1, 2, 3, 4});

  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  CHECK(matmul(tape, row, col).vals() == std::vector<double>{11});
}

TEST_CASE("matmul shape errors name both shapes") {
  Tape tape;
  Tensor a({2, 3}, 1.0);
  Tensor b({2, 2}, 1.0);
  CHECK_THROWS_WITH_AS(matmul(tape, a, b),
                       doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  const auto weights = probe_weights(6, rng);
  auto build = [&](Tape& tape) {
    return weighted_sum(tape, matmul(tape, a, b), weights);
  };
  const auto res = check_gradients(build, {a, b});
  CHECK(res.max_rel_err <= 1e-4);
  CHECK(res.checked == 20);
}

TEST_CASE("conv2d identity, zero kernels and ones example") {
  Tape tape;
  Rng rng(5);
  Tensor input = random_tensor({1, 3, 3}, rng, -2.0, 2.0, false);

  Tensor k1({1, 1, 1, 1}, {1.0});
  Tensor b0({1}, {0.0});
  Tensor same = conv2d(tape, input, k1, b0, 1, 0);
  CHECK(same.vals() == input.vals());

  Tensor kz({2, 1, 2, 2}, 0.0);
  Tensor bz({2}, 0.0);
  Tensor zero_out = conv2d(tape, input, kz, bz, 1, 0);
  for (double v : zero_out.vals()) CHECK(v == 0.0);

  Tensor ones({1, 3, 3}, 1.0);
  Tensor kone({1, 1, 2, 2}, 1.0);
  Tensor four = conv2d(tape, ones, kone, b0, 1, 0);
  CHECK(four.shape() == Shape{1, 2, 2});
  for (double v : four.vals()) CHECK(v == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  Tape tape;
  Tensor input({1, 3, 3}, 1.0);
  Tensor k({1, 1, 5, 5}, 1.0);
  Tensor b({1}, 0.0);
  CHECK_THROWS_AS(conv2d(tape, input, k, b, 1, 0), DimensionError);
  CHECK_NOTHROW(conv2d(tape, input, k, b, 1, 1));
}

TEST_CASE("conv2d gradient vs finite differences, with stride and padding") {
  Rng rng(17);
  Tensor input = random_tensor({2, 5, 5}, rng);
  Tensor kernels = random_tensor({3, 2, 3, 3}, rng);
  Tensor bias = random_tensor({3}, rng);
  const auto weights = probe_weights(3 * 3 * 3, rng);
  auto build = [&](Tape& tape) {
    return weighted_sum(tape, conv2d(tape, input, kernels, bias, 2, 1), weights);
  };
  const auto res = check_gradients(build, {input, kernels, bias});
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("attention single token returns the value row") {
  Tape tape;
  Tensor q({1, 3}, {0.3, -0.7, 1.1});
  Tensor v({1, 2}, {4.0, -2.5});
  Tensor out = scaled_dot_product_attention(tape, q, q, v);
  CHECK(out.vals()[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(out.vals()[1] == doctest::Approx(-2.5).epsilon(1e-12));
}

TEST_CASE("attention with identical keys gives uniform weights") {
  Tape tape;
  Rng rng(3);
  Tensor q = random_tensor({2, 3}, rng, -1, 1, false);
  Tensor k({3, 3}, 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    k.vals()[r * 3 + 0] = 0.4;
    k.vals()[r * 3 + 1] = -0.2;
    k.vals()[r * 3 + 2] = 0.9;
  }
  Tensor v = random_tensor({3, 2}, rng, -1, 1, false);
  std::vector<double> weights;
  scaled_dot_product_attention(tape, q, k, v, &weights);
  REQUIRE(weights.size() == 6);
  for (double w : weights) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("attention weight rows sum to one") {
  Tape tape;
  Rng rng(23);
  Tensor q = random_tensor({4, 5}, rng, -2, 2, false);
  Tensor k = random_tensor({6, 5}, rng, -2, 2, false);
  Tensor v = random_tensor({6, 3}, rng, -2, 2, false);
  std::vector<double> weights;
  scaled_dot_product_attention(tape, q, k, v, &weights);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += weights[r * 6 + c];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("attention gradient vs finite differences") {
  Rng rng(29);
  Tensor q = random_tensor({2, 3}, rng);
  Tensor k = random_tensor({2, 3}, rng);
  Tensor v = random_tensor({2, 2}, rng);
  const auto weights = probe_weights(4, rng);
  auto build = [&](Tape& tape) {
    return weighted_sum(tape, scaled_dot_product_attention(tape, q, k, v), weights);
  };
  const auto res = check_gradients(build, {q, k, v});
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("attention dimension errors") {
  Tape tape;
  Tensor q({2, 3}, 0.0);
  Tensor k({2, 4}, 0.0);
  Tensor v({2, 2}, 0.0);
  CHECK_THROWS_AS(scaled_dot_product_attention(tape, q, k, v), DimensionError);
  Tensor k2({3, 3}, 0.0);
  CHECK_THROWS_AS(scaled_dot_product_attention(tape, q, k2, v), DimensionError);
}

TEST_CASE("softmax examples") {
  Tape tape;
  Tensor a({3}, {1, 1, 1});
  Tensor sa = softmax(tape, a, 0);
  for (double v : sa.vals()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor big({2}, {1000.0, 0.0});
  Tensor sb = softmax(tape, big, 0);
  CHECK(std::isfinite(sb.vals()[0]));
  CHECK(sb.vals()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sb.vals()[1] <= 1e-300);

  Tensor c({2}, {0.0, std::log(3.0)});
  Tensor sc = softmax(tape, c, 0);
  CHECK(sc.vals()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sc.vals()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax slices along the chosen axis sum to one") {
  Tape tape;
  Rng rng(31);
  Tensor x = random_tensor({3, 4, 2}, rng, -5, 5, false);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor y = softmax(tape, x, axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= x.dim(i);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        double s = 0.0;
        for (std::size_t a = 0; a < x.dim(axis); ++a) {
          s += y.vals()[o * x.dim(axis) * inner + a * inner + in];
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(softmax(tape, x, 3), DimensionError);
}

TEST_CASE("relu examples and gradient") {
  Tape tape;
  Tensor a({3}, {-1, 0, 2});
  CHECK(relu(tape, a).vals() == std::vector<double>{0, 0, 2});

  Tensor neg({4}, {-3, -1, -0.5, -100});
  for (double v : relu(tape, neg).vals()) CHECK(v == 0.0);

  Rng rng(37);
  Tensor x({8}, 0.0, true);
  for (double& v : x.vals()) {
    do {
      v = rng.uniform(-1.0, 1.0);
    } while (std::abs(v) < 1e-3);
  }
  const auto weights = probe_weights(8, rng);
  auto build = [&](Tape& t) { return weighted_sum(t, relu(t, x), weights); };
  CHECK(check_gradients(build, {x}).max_rel_err <= 1e-4);
}

TEST_CASE("mse_loss examples and gradient") {
  Tape tape;
  Tensor p({3}, {1, 2, 3});
  CHECK(mse_loss(tape, p, p).value() == 0.0);

  Tensor a({2}, {1, 2});
  Tensor b({2}, {0, 0});
  CHECK(mse_loss(tape, a, b).value() == doctest::Approx(2.5).epsilon(1e-15));

  Tensor bad({3}, 0.0);
  CHECK_THROWS_AS(mse_loss(tape, a, bad), DimensionError);

  Rng rng(41);
  Tensor pred = random_tensor({6}, rng);
  Tensor target = random_tensor({6}, rng, -1, 1, false);
  auto build = [&](Tape& t) { return mse_loss(t, pred, target); };
  CHECK(check_gradients(build, {pred}).max_rel_err <= 1e-4);

  // Analytic form 2(pred - target)/N.
  pred.zero_grad();
  Tape t2;
  backward(t2, mse_loss(t2, pred, target));
  for (std::size_t i = 0; i < 6; ++i) {
    const double expect = 2.0 * (pred.vals()[i] - target.vals()[i]) / 6.0;
    CHECK(pred.grad()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("backward: sum gives ones, reuse accumulates") {
  {
    Tape tape;
    Tensor x({4}, {1, 2, 3, 4}, true);
    Tensor loss = sum(tape, x);
    backward(tape, loss);
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  {
    Tape tape;
    Tensor x({3}, {1, 2, 3}, true);
    Tensor loss = sum(tape, add(tape, x, x));
    backward(tape, loss);
    for (double g : x.grad()) CHECK(g == 2.0);
  }
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  Tensor x({2}, {1, 2}, true);
  Tensor y = relu(tape, x);
  CHECK_THROWS_AS(backward(tape, y), ContractError);
}

TEST_CASE("composite conv-relu-dense-mse gradient vs finite differences") {
  Rng rng(43);
  Tensor input = random_tensor({2, 4, 4}, rng);
  Tensor kernels = random_tensor({2, 2, 3, 3}, rng, -0.6, 0.6);
  Tensor kbias = random_tensor({2}, rng);
  Tensor w = random_tensor({2 * 2 * 2, 5}, rng, -0.6, 0.6);
  Tensor b = random_tensor({5}, rng);
  Tensor target = random_tensor({5}, rng, -1, 1, false);
  auto build = [&](Tape& tape) {
    Tensor c = relu(tape, conv2d(tape, input, kernels, kbias, 1, 0));
    Tensor flat = reshape(tape, c, {1, c.size()});
    Tensor dense = linear(tape, flat, w, b);
    return mse_loss(tape, reshape(tape, dense, {5}), target);
  };
  const auto res = check_gradients(build, {input, kernels, kbias, w, b});
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("backward is deterministic bitwise") {
  Rng rng(47);
  Tensor a = random_tensor({4, 4}, rng);
  Tensor b = random_tensor({4, 4}, rng);
  auto run = [&]() {
    a.zero_grad();
    b.zero_grad();
    Tape tape;
    Tensor loss = sum(tape, relu(tape, matmul(tape, a, b)));
    backward(tape, loss);
    return std::make_pair(a.grad(), b.grad());
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("tokenize maps spatial columns to tokens") {
  Tape tape;
  // 2 channels, 2 rows, 3 columns.
  Tensor x({2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, true);
  Tensor tok = tokenize(tape, x);
  CHECK(tok.shape() == Shape{3, 4});
  // Token 0 is column 0 of both channels: (1,4) then (7,10).
  CHECK(tok.vals()[0] == 1);
  CHECK(tok.vals()[1] == 4);
  CHECK(tok.vals()[2] == 7);
  CHECK(tok.vals()[3] == 10);

  Rng rng(53);
  const auto weights = probe_weights(12, rng);
  auto build = [&](Tape& t) { return weighted_sum(t, tokenize(t, x), weights); };
  CHECK(check_gradients(build, {x}).max_rel_err <= 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters and moments untouched") {
  std::vector<Tensor> params = {Tensor({3}, {1.0, -2.0, 0.5}, true)};
  AdamState state(params, AdamConfig{});
  const auto before = params[0].vals();
  for (int i = 0; i < 5; ++i) adam_step(params, state);
  CHECK(params[0].vals() == before);
  for (double m : state.first_moments()[0]) CHECK(m == 0.0);
  for (double v : state.second_moments()[0]) CHECK(v == 0.0);
  CHECK(state.step_count() == 5);
}

TEST_CASE("adam first step moves a scalar by about the learning rate") {
  std::vector<Tensor> params = {Tensor({1}, {1.0}, true)};
  params[0].grad()[0] = 1.0;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState state(params, cfg);
  adam_step(params, state);
  CHECK(params[0].vals()[0] == doctest::Approx(0.99).epsilon(1e-7));
}

TEST_CASE("adam matches an independent scalar recurrence over two steps") {
  const double g = 0.37;
  std::vector<Tensor> params = {Tensor({1}, {2.0}, true)};
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState state(params, cfg);

  // Scalar re-implementation of the recurrence.
  double w = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    params[0].zero_grad();
    params[0].grad()[0] = g;
    adam_step(params, state);

    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    w -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
  CHECK(std::abs(params[0].vals()[0] - w) <= 1e-12);
}

TEST_CASE("adam with zero learning rate never changes parameters") {
  Rng rng(59);
  std::vector<Tensor> params = {random_tensor({4}, rng), random_tensor({2, 2}, rng)};
  const auto v0 = params[0].vals();
  const auto v1 = params[1].vals();
  AdamConfig cfg;
  cfg.learning_rate = 0.0;
  AdamState state(params, cfg);
  for (int i = 0; i < 3; ++i) {
    for (auto& p : params) {
      p.zero_grad();
      for (double& gv : p.grad()) gv = rng.uniform(-1, 1);
    }
    adam_step(params, state);
  }
  CHECK(params[0].vals() == v0);
  CHECK(params[1].vals() == v1);
}

TEST_CASE("adam rejects mismatched parameter lists") {
  std::vector<Tensor> params = {Tensor({2}, 0.0, true)};
  AdamState state(params, AdamConfig{});
  std::vector<Tensor> other = {Tensor({3}, 0.0, true)};
  CHECK_THROWS_AS(adam_step(other, state), ContractError);
}

TEST_CASE("parameter_count sums element counts") {
  std::vector<Tensor> params = {Tensor({4, 3}, 0.0, true), Tensor({3}, 0.0, true)};
  CHECK(parameter_count(params) == 15);
  CHECK(parameter_count({}) == 0);
}

TEST_CASE("sigmoid and tanh gradients") {
  Rng rng(61);
  Tensor x = random_tensor({6}, rng, -2, 2);
  const auto weights = probe_weights(6, rng);
  auto build_sig = [&](Tape& t) { return weighted_sum(t, sigmoid(t, x), weights); };
  CHECK(check_gradients(build_sig, {x}).max_rel_err <= 1e-4);
  auto build_tanh = [&](Tape& t) { return weighted_sum(t, tanh_op(t, x), weights); };
  CHECK(check_gradients(build_tanh, {x}).max_rel_err <= 1e-4);
}

TEST_CASE("slice_rows and concat_cols gradients") {
  Rng rng(67);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor y = random_tensor({2, 2}, rng);
  const auto weights = probe_weights(2 * 5, rng);
  auto build = [&](Tape& t) {
    Tensor top = slice_rows(t, x, 1, 2);
    Tensor cat = concat_cols(t, {top, y});
    return weighted_sum(t, cat, weights);
  };
  CHECK(check_gradients(build, {x, y}).max_rel_err <= 1e-4);
}
