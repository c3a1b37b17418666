#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gfn/adam.hpp"
#include "gfn/gradcheck.hpp"
#include "gfn/mlp.hpp"
#include "gfn/rng.hpp"
#include "gfn/tape.hpp"

using namespace gfn::diff;

TEST_CASE("seeded rng is reproducible and forkable") {
  SeededRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  SeededRng c(42);
  SeededRng f1 = c.fork(1);
  SeededRng f2 = c.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());

  // State round-trips through (seed, counter).
  SeededRng d(7);
  d.next_u64();
  d.next_u64();
  SeededRng e(d.seed());
  e.set_counter(d.counter());
  CHECK(d.next_u64() == e.next_u64());
}

TEST_CASE("bernoulli mask degenerate and large-sample behavior") {
  SeededRng rng(1);
  const auto ones = bernoulli_mask(rng, 5, 1.0);
  CHECK(ones == std::vector<std::int32_t>{1, 1, 1, 1, 1});
  const auto zeros = bernoulli_mask(rng, 3, 0.0);
  CHECK(zeros == std::vector<std::int32_t>{0, 0, 0});

  // Law of large numbers at the 3-sigma binomial bound.
  SeededRng big(2024);
  const auto mask = bernoulli_mask(big, 1000000, 0.8);
  double mean = 0.0;
  for (auto z : mask) mean += z;
  mean /= mask.size();
  CHECK(mean > 0.798);
  CHECK(mean < 0.802);

  CHECK_THROWS_AS(bernoulli_mask(rng, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(bernoulli_mask(rng, 3, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(bernoulli_mask(rng, 3, -0.1), std::invalid_argument);
}

TEST_CASE("forward_mlp identity and hand-computed cases") {
  SeededRng rng(0);

  SUBCASE("identity-initialized single linear layer") {
    Mlp net = Mlp::make({2, 2}, Activation::kIdentity, rng);
    net.weights[0].data = {1.0, 0.0, 0.0, 1.0};
    net.biases[0].data = {0.0, 0.0};
    Tape tape;
    const auto out = tape.value(forward_mlp(tape, net, Tensor::vec({1.0, 2.0})));
    CHECK(out.data[0] == doctest::Approx(1.0));
    CHECK(out.data[1] == doctest::Approx(2.0));
  }

  SUBCASE("1->1 layer, weight 2 bias 0.5") {
    Mlp net = Mlp::make({1, 1}, Activation::kIdentity, rng);
    net.weights[0].data = {2.0};
    net.biases[0].data = {0.5};
    Tape tape;
    const auto out = tape.value(forward_mlp(tape, net, Tensor::vec({3.0})));
    CHECK(out.data[0] == doctest::Approx(6.5));  // 2*3 + 0.5
  }

  SUBCASE("zero input, zero biases, odd activation gives zero output") {
    Mlp net = Mlp::make({3, 4, 2}, Activation::kTanh, rng);
    for (auto& b : net.biases) b.data.assign(b.data.size(), 0.0);
    Tape tape;
    const auto out = tape.value(forward_mlp(tape, net, Tensor::vec({0.0, 0.0, 0.0})));
    for (double v : out.data) CHECK(v == doctest::Approx(0.0));
  }

  SUBCASE("dimension mismatch names both dimensions") {
    Mlp net = Mlp::make({3, 2}, Activation::kIdentity, rng);
    Tape tape;
    try {
      forward_mlp(tape, net, Tensor::vec({1.0, 2.0}));
      FAIL("expected a dimension error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find('2') != std::string::npos);
      CHECK(msg.find('3') != std::string::npos);
    }
  }
}

TEST_CASE("backward computes analytic gradients") {
  SUBCASE("loss = w^2 at w = 3") {
    Tensor w = Tensor::scalar(3.0);
    Tape tape;
    const auto loss = tape.square(tape.param(&w));
    tape.backward(loss);
    CHECK(tape.grad_for(&w).data[0] == doctest::Approx(6.0));
  }

  SUBCASE("loss = log softmax(x)[0] at x = [0, 0]") {
    Tensor x = Tensor::vec({0.0, 0.0});
    Tape tape;
    const auto logp = tape.masked_log_softmax(tape.param(&x), {0, 1});
    tape.backward(tape.pick(logp, 0));
    const auto g = tape.grad_for(&x);
    CHECK(g.data[0] == doctest::Approx(0.5));
    CHECK(g.data[1] == doctest::Approx(-0.5));
  }

  SUBCASE("parameter detached from the loss gets a zero gradient") {
    Tensor w = Tensor::scalar(3.0);
    Tensor unused = Tensor::vec({1.0, 2.0});
    Tape tape;
    const auto loss = tape.square(tape.param(&w));
    tape.param(&unused);
    tape.backward(loss);
    const auto g = tape.grad_for(&unused);
    CHECK(g.data[0] == 0.0);
    CHECK(g.data[1] == 0.0);
  }

  SUBCASE("non-scalar loss is a contract error") {
    Tensor x = Tensor::vec({1.0, 2.0});
    Tape tape;
    const auto node = tape.param(&x);
    CHECK_THROWS_AS(tape.backward(node), std::invalid_argument);
  }
}

TEST_CASE("adam updates") {
  SUBCASE("first step moves by about -lr * sign(g)") {
    Tensor p = Tensor::scalar(1.0);
    Tensor g = Tensor::scalar(0.37);
    AdamState opt(0.001);
    std::vector<Tensor*> params = {&p};
    adam_step(params, std::vector<Tensor>{g}, opt);
    // First-step closed form: mhat = g, vhat = g^2, so the update is
    // -lr * g / (|g| + eps), i.e. -lr up to eps-induced error.
    CHECK(std::fabs(p.data[0] - (1.0 - 0.001)) < 1e-6);
    CHECK(opt.step == 1);
  }

  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::vec({1.0, -2.0});
    AdamState opt(0.01);
    std::vector<Tensor*> params = {&p};
    adam_step(params, std::vector<Tensor>{Tensor::zeros({2})}, opt);
    CHECK(p.data[0] == 1.0);
    CHECK(p.data[1] == -2.0);
  }

  SUBCASE("beta1 = beta2 = 0 reduces to sign steps") {
    Tensor p = Tensor::scalar(0.0);
    Tensor g = Tensor::scalar(-2.0);
    AdamState opt(0.1);
    opt.beta1 = 0.0;
    opt.beta2 = 0.0;
    std::vector<Tensor*> params = {&p};
    const double expected_step = 0.1 * 2.0 / (2.0 + opt.epsilon);
    adam_step(params, std::vector<Tensor>{g}, opt);
    CHECK(p.data[0] == doctest::Approx(expected_step));
    adam_step(params, std::vector<Tensor>{g}, opt);
    CHECK(p.data[0] == doctest::Approx(2.0 * expected_step));
  }

  SUBCASE("shape mismatch is a contract error") {
    Tensor p = Tensor::vec({1.0, 2.0});
    AdamState opt(0.01);
    std::vector<Tensor*> params = {&p};
    CHECK_THROWS_AS(adam_step(params, std::vector<Tensor>{Tensor::zeros({3})}, opt),
                    std::invalid_argument);
  }
}

TEST_CASE("gradient_check validates itself") {
  SUBCASE("quadratic loss is exact up to roundoff") {
    Tensor w = Tensor::vec({1.5, -0.5, 2.0});
    std::vector<Tensor*> params = {&w};
    const auto build = [&](Tape& tape) {
      const auto node = tape.param(&w);
      return tape.sum_scalars({tape.square(tape.pick(node, 0)), tape.square(tape.pick(node, 1)),
                               tape.square(tape.pick(node, 2))});
    };
    CHECK(gradient_check(params, build, 1e-5) < 1e-8);
  }

  SUBCASE("random two-layer tanh net") {
    SeededRng rng(3);
    Mlp net = Mlp::make({4, 8, 1}, Activation::kTanh, rng);
    Tensor input = Tensor::vec({0.3, -0.7, 0.1, 0.9});
    const auto params = net.params();
    const auto build = [&](Tape& tape) {
      return tape.square(tape.pick(forward_mlp(tape, net, input), 0));
    };
    CHECK(gradient_check(params, build, 1e-5) < 1e-4);
  }

  SUBCASE("constant loss yields zero error") {
    Tensor w = Tensor::scalar(2.0);
    std::vector<Tensor*> params = {&w};
    const auto build = [&](Tape& tape) {
      tape.param(&w);
      return tape.constant(5.0);
    };
    CHECK(gradient_check(params, build, 1e-5) == 0.0);
  }
}

TEST_CASE("tapes rebuilt from the same seed give bit-identical gradients") {
  auto run_once = [](std::uint64_t seed) {
    SeededRng rng(seed);
    Mlp net = Mlp::make({3, 6, 2}, Activation::kLeakyRelu, rng);
    Tensor input = Tensor::vec({rng.uniform(), rng.uniform(), rng.uniform()});
    Tape tape;
    const auto out = forward_mlp(tape, net, input);
    tape.backward(tape.square(tape.pick(out, 1)));
    return collect_grads(tape, net.params());
  };
  const auto g1 = run_once(11);
  const auto g2 = run_once(11);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(std::memcmp(g1[i].data.data(), g2[i].data.data(),
                      g1[i].data.size() * sizeof(double)) == 0);
}

TEST_CASE("forward value does not depend on tape reuse") {
  SeededRng rng(5);
  Mlp net = Mlp::make({2, 4, 3}, Activation::kLeakyRelu, rng);
  Tensor input = Tensor::vec({0.2, -0.4});

  Tape fresh;
  const auto v1 = fresh.value(forward_mlp(fresh, net, input));

  Tape reused;
  forward_mlp(reused, net, input);
  forward_mlp(reused, net, Tensor::vec({1.0, 1.0}));
  const auto v2 = reused.value(forward_mlp(reused, net, input));

  const auto v3 = net.eval(input);
  for (std::size_t i = 0; i < v1.data.size(); ++i) {
    CHECK(v1.data[i] == v2.data[i]);
    CHECK(v1.data[i] == v3.data[i]);
  }
}

TEST_CASE("masked log softmax rows are normalized") {
  SeededRng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int cols = 2 + static_cast<int>(rng.uniform_int(8));
    Tensor logits = Tensor::zeros({cols});
    for (auto& v : logits.data) v = rng.uniform(-5.0, 5.0);
    std::vector<std::int32_t> valid;
    for (int c = 0; c < cols; ++c)
      if (rng.bernoulli(0.6)) valid.push_back(c);
    if (valid.empty()) valid.push_back(0);

    Tape tape;
    const auto out = tape.value(tape.masked_log_softmax(tape.input(logits), valid));
    double total = 0.0;
    for (auto c : valid) total += std::exp(out.data[c]);
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}
