#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "knowdial/ops.hpp"
#include "knowdial/optim.hpp"
#include "knowdial/tensor.hpp"
#include "oracles.hpp"

using namespace knowdial;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false,
                     double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng, requires_grad);
}

}  // namespace

TEST_CASE("matmul identity leaves the operand unchanged") {
  Tape tape;
  Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor c = ops::matmul(tape, eye, a);
  for (int i = 0; i < a.numel(); ++i) {
    CHECK(c.values()[i] == doctest::Approx(a.values()[i]).epsilon(1e-15));
  }
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(11);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 5}, rng);
  Tape tape;
  Tensor c = ops::matmul(tape, a, b);
  std::vector<double> ref = oracle::matmul(a.values(), b.values(), 4, 3, 5);
  REQUIRE(c.shape() == Shape{4, 5});
  for (size_t i = 0; i < ref.size(); ++i) {
    CHECK(std::abs(c.values()[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("matmul vector forms") {
  Rng rng(3);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor x = random_tensor({3}, rng);
  Tape tape;
  Tensor y = ops::matmul(tape, w, x);
  REQUIRE(y.shape() == Shape{4});
  std::vector<double> ref = oracle::matvec(w.values(), x.values(), 4, 3);
  for (int i = 0; i < 4; ++i) CHECK(y.values()[i] == doctest::Approx(ref[i]));

  Tensor u = random_tensor({4}, rng);
  Tensor dot = ops::matmul(tape, u, y);
  CHECK(dot.value() == doctest::Approx(oracle::dot(u.values(), y.values())));
}

TEST_CASE("matmul shape mismatch names the primitive and both shapes") {
  Tape tape;
  Tensor a({2, 3}, 0.0);
  Tensor b({4, 2}, 0.0);
  try {
    ops::matmul(tape, a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 2]") != std::string::npos);
  }
}

TEST_CASE("softmax of a symmetric pair is uniform") {
  Tape tape;
  Tensor x = Tensor::from_values({2}, {0.0, 0.0});
  Tensor y = ops::softmax(tape, x, 0);
  CHECK(y.values()[0] == doctest::Approx(0.5));
  CHECK(y.values()[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax matches the naive oracle and normalizes") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + rng.uniform_int(8);
    Tensor x = random_tensor({n}, rng, false, -3.0, 3.0);
    Tape tape;
    Tensor y = ops::softmax(tape, x, 0);
    std::vector<double> ref = oracle::softmax(x.values());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(y.values()[i] - ref[i]) < 1e-12);
      CHECK(y.values()[i] >= 0.0);
      total += y.values()[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax over rows of a matrix") {
  Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 0, 0, 0});
  Tape tape;
  Tensor y = ops::softmax(tape, x, 1);
  for (int r = 0; r < 2; ++r) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += y.at(r, c);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(y.at(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax axis out of range") {
  Tape tape;
  Tensor x({3}, 0.0);
  CHECK_THROWS_AS(ops::softmax(tape, x, 2), ShapeError);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Tape tape;
  Tensor x = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
  Tensor loss = ops::sum(tape, x);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("backward of sum(tanh(x)) at zero gives all-ones gradient") {
  Tape tape;
  Tensor x({4}, 0.0, true);
  Tensor loss = ops::sum(tape, ops::tanh(tape, x));
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("backward rejects non-scalar loss and empty tape") {
  Tape tape;
  Tensor x({3}, 1.0, true);
  CHECK_THROWS_AS(tape.backward(x), NumericsError);  // empty tape

  Tensor y = ops::tanh(tape, x);
  CHECK_THROWS_AS(tape.backward(y), NumericsError);  // non-scalar
}

TEST_CASE("backward requires the loss to come from the tape") {
  Tape tape;
  Tensor x({3}, 1.0, true);
  Tensor loss = ops::sum(tape, x);
  Tensor stranger = Tensor::scalar(1.0, true);
  CHECK_THROWS_AS(tape.backward(stranger), NumericsError);
  CHECK_NOTHROW(tape.backward(loss));
}

TEST_CASE("unreachable leaves keep zero gradients") {
  Tape tape;
  Tensor x({2}, 1.0, true);
  Tensor unused({2}, 1.0, true);
  Tensor loss = ops::sum(tape, ops::tanh(tape, x));
  tape.backward(loss);
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("two-layer tanh network gradient matches finite differences") {
  Rng rng(101);
  Tensor w1 = random_tensor({5, 4}, rng, false, -0.5, 0.5);
  Tensor w2 = random_tensor({1, 5}, rng, false, -0.5, 0.5);
  auto f = [&](Tape& tape, const Tensor& x) {
    Tensor h = ops::tanh(tape, ops::matmul(tape, w1, x));
    Tensor out = ops::tanh(tape, ops::matmul(tape, w2, h));
    return ops::sum(tape, out);
  };
  Tensor x = random_tensor({4}, rng);
  CHECK(grad_check(f, x, 1e-5) < 1e-4);
}

TEST_CASE("grad_check on the identity is exact") {
  auto f = [](Tape&, const Tensor& x) { return x; };
  // Power-of-two point and step keep the central difference exact.
  Tensor x = Tensor::scalar(0.5);
  CHECK(grad_check(f, x, 0.25) == 0.0);
  CHECK(grad_check(f, Tensor::scalar(0.37), 1e-5) < 1e-10);
}

TEST_CASE("grad_check covers every primitive") {
  Rng rng(55);

  SUBCASE("softmax") {
    auto f = [](Tape& tape, const Tensor& x) {
      Tensor y = ops::softmax(tape, x, 0);
      Tensor w = Tensor::from_values({4}, {0.3, -0.7, 1.1, 0.2});
      return ops::matmul(tape, w, y);
    };
    CHECK(grad_check(f, random_tensor({4}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("matmul") {
    Tensor b = random_tensor({3, 2}, rng);
    auto f = [&](Tape& tape, const Tensor& x) {
      return ops::sum(tape, ops::matmul(tape, x, b));
    };
    CHECK(grad_check(f, random_tensor({2, 3}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("concat + hadamard + add + scale") {
    Tensor other = random_tensor({3}, rng);
    auto f = [&](Tape& tape, const Tensor& x) {
      Tensor cat = ops::concat(tape, {x, other});
      Tensor prod = ops::hadamard(tape, cat,
                                  ops::add(tape, cat, ops::scale(tape, cat, 0.5)));
      return ops::sum(tape, prod);
    };
    CHECK(grad_check(f, random_tensor({3}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("mean + sigmoid") {
    auto f = [](Tape& tape, const Tensor& x) {
      return ops::mean(tape, ops::sigmoid(tape, x), 0);
    };
    CHECK(grad_check(f, random_tensor({6}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("embedding lookup") {
    std::vector<int> ids = {2, 0, 2};
    auto f = [&](Tape& tape, const Tensor& table) {
      Tensor rows = ops::embedding_lookup(tape, table, ids);
      return ops::sum(tape, ops::tanh(tape, rows));
    };
    CHECK(grad_check(f, random_tensor({4, 3}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("layer norm") {
    Tensor g = random_tensor({5}, rng, false, 0.5, 1.5);
    Tensor b = random_tensor({5}, rng);
    auto f = [&](Tape& tape, const Tensor& x) {
      return ops::sum(tape, ops::layer_norm(tape, x, g, b));
    };
    CHECK(grad_check(f, random_tensor({5}, rng), 1e-5) < 1e-4);
    auto fg = [&](Tape& tape, const Tensor& gain) {
      Tensor x = Tensor::from_values({5}, {0.4, -1.2, 0.8, 0.1, -0.3});
      return ops::sum(tape, ops::layer_norm(tape, x, gain, b));
    };
    CHECK(grad_check(fg, random_tensor({5}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("cross entropy") {
    auto f = [](Tape& tape, const Tensor& logits) {
      return ops::cross_entropy(tape, logits, 1);
    };
    CHECK(grad_check(f, random_tensor({5}, rng), 1e-5) < 1e-4);
  }
  SUBCASE("slice, row, element, stack, scale_by") {
    Tensor m = random_tensor({3, 4}, rng);
    auto f = [&](Tape& tape, const Tensor& x) {
      Tensor r0 = ops::row(tape, x, 0);
      Tensor r2 = ops::row(tape, x, 2);
      std::vector<Tensor> rows = {r2, r0};
      Tensor stacked = ops::stack_rows(tape, rows);
      Tensor sliced = ops::slice_cols(tape, stacked, 1, 2);
      Tensor flat = ops::sum(tape, sliced);
      Tensor e = ops::element(tape, ops::row(tape, x, 1), 3);
      return ops::sum(tape, ops::scale_by(tape, flat, e));
    };
    CHECK(grad_check(f, m, 1e-5) < 1e-4);
  }
}

TEST_CASE("gradient fault hook is detected by grad_check") {
  set_gradient_fault("tanh", 1.05);
  auto f = [](Tape& tape, const Tensor& x) {
    return ops::sum(tape, ops::tanh(tape, x));
  };
  Rng rng(5);
  Tensor x = Tensor::uniform({4}, -1.0, 1.0, rng);
  const double err = grad_check(f, x, 1e-5);
  set_gradient_fault("tanh", 1.0);
  CHECK(err > 1e-3);
  CHECK(grad_check(f, x, 1e-5) < 1e-4);
}

TEST_CASE("apply_primitive dispatches the named kinds") {
  Tape tape;
  Rng rng(17);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  std::vector<Tensor> mm = {a, b};
  Tensor c = apply_primitive(tape, primitive_kind_from_string("matmul"), mm);
  CHECK(c.shape() == Shape{2, 2});

  std::vector<Tensor> sm = {Tensor::from_values({2}, {0.0, 0.0})};
  Tensor s =
      apply_primitive(tape, primitive_kind_from_string("softmax-over-axis"), sm, 0);
  CHECK(s.values()[0] == doctest::Approx(0.5));

  std::vector<Tensor> sc = {a, Tensor::scalar(2.0)};
  Tensor doubled = apply_primitive(tape, primitive_kind_from_string("scale"), sc);
  CHECK(doubled.at(0, 0) == doctest::Approx(2.0 * a.at(0, 0)));

  std::vector<Tensor> emb = {random_tensor({5, 2}, rng),
                             Tensor::from_values({2}, {1.0, 4.0})};
  Tensor rows =
      apply_primitive(tape, primitive_kind_from_string("embedding-lookup"), emb);
  CHECK(rows.shape() == Shape{2, 2});

  CHECK_THROWS_AS(primitive_kind_from_string("convolution"), NumericsError);
}

TEST_CASE("taped and untracked forwards agree bit for bit") {
  Rng rng(29);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor x_vals = random_tensor({4}, rng);

  Tape tape;
  Tensor tracked = Tensor::from_values({4}, x_vals.values(), true);
  Tensor y1 = ops::tanh(tape, ops::matmul(tape, w, tracked));

  NoGradGuard guard;
  Tape scratch;
  Tensor y2 = ops::tanh(scratch, ops::matmul(scratch, w, x_vals));
  CHECK(scratch.empty());
  for (int i = 0; i < 4; ++i) CHECK(y1.values()[i] == y2.values()[i]);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  Rng rng(31);
  std::vector<Tensor> params = {random_tensor({3}, rng, true)};
  const std::vector<double> before = params[0].values();
  AdamState state(params);
  adam_step(params, state, 1e-3);
  for (int i = 0; i < 3; ++i) CHECK(params[0].values()[i] == before[i]);
  CHECK(state.step == 1);
}

TEST_CASE("adam first step with unit gradient moves by about -lr") {
  // With m_hat = 1 and v_hat = 1, the update is lr / (1 + eps).
  std::vector<Tensor> params = {Tensor::scalar(0.0, true)};
  params[0].grad()[0] = 1.0;
  AdamState state(params);
  const double lr = 4e-3;
  adam_step(params, state, lr);
  CHECK(params[0].values()[0] == doctest::Approx(-lr).epsilon(1e-7));
}

TEST_CASE("adam runs are reproducible") {
  auto run = [] {
    Rng rng(77);
    std::vector<Tensor> params = {Tensor::uniform({4}, -1, 1, rng, true)};
    AdamState state(params);
    for (int step = 0; step < 2; ++step) {
      for (int i = 0; i < 4; ++i) {
        params[0].grad()[i] = 0.1 * (i + 1) * (step + 1);
      }
      adam_step(params, state, 1e-2);
      params[0].zero_grad();
    }
    return params[0].values();
  };
  CHECK(run() == run());
}

TEST_CASE("adam rejects bad inputs") {
  std::vector<Tensor> params = {Tensor::scalar(0.0, true)};
  AdamState state(params);
  CHECK_THROWS_AS(adam_step(params, state, 0.0), NumericsError);
  CHECK_THROWS_AS(adam_step(params, state, -1.0), NumericsError);
  std::vector<Tensor> wrong = {Tensor::scalar(0.0, true),
                               Tensor::scalar(0.0, true)};
  CHECK_THROWS_AS(adam_step(wrong, state, 1e-3), ShapeError);
}

TEST_CASE("cosine annealing hits the published endpoints") {
  const double lr0 = 4e-3, lr1 = 5e-5;
  CHECK(cosine_anneal_lr(0, 16, lr0, lr1) == doctest::Approx(lr0));
  CHECK(cosine_anneal_lr(16, 16, lr0, lr1) == doctest::Approx(lr1));
  CHECK(cosine_anneal_lr(8, 16, lr0, lr1) ==
        doctest::Approx((lr0 + lr1) / 2.0));
  // Monotone non-increasing across the whole range.
  double prev = cosine_anneal_lr(0, 16, lr0, lr1);
  for (int e = 1; e <= 16; ++e) {
    const double cur = cosine_anneal_lr(e, 16, lr0, lr1);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
  CHECK_THROWS_AS(cosine_anneal_lr(17, 16, lr0, lr1), NumericsError);
  CHECK_THROWS_AS(cosine_anneal_lr(-1, 16, lr0, lr1), NumericsError);
}

TEST_CASE("dropout identity cases") {
  Rng rng(41);
  Tensor x = Tensor::uniform({8}, -1, 1, rng);
  Tape tape;
  Tensor y0 = ops::dropout(tape, x, 0.0, true, rng);
  CHECK(y0.same_buffer(x));
  Tensor y1 = ops::dropout(tape, x, 0.5, false, rng);
  CHECK(y1.same_buffer(x));
  CHECK_THROWS_AS(ops::dropout(tape, x, 1.0, true, rng), NumericsError);
  CHECK_THROWS_AS(ops::dropout(tape, x, -0.1, true, rng), NumericsError);
}

TEST_CASE("dropout zeroes about half the elements at p = 0.5") {
  Rng rng(2024);
  const int n = 10000;
  Tensor x({n}, 1.0);
  Tape tape;
  Tensor y = ops::dropout(tape, x, 0.5, true, rng);
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    if (y.values()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(y.values()[i] == doctest::Approx(2.0));
    }
  }
  const double frac = static_cast<double>(zeros) / n;
  CHECK(frac > 0.48);
  CHECK(frac < 0.52);
}

TEST_CASE("dropout backward respects the mask") {
  Rng rng(43);
  Tensor x = Tensor::uniform({64}, -1, 1, rng, true);
  Tape tape;
  Tensor y = ops::dropout(tape, x, 0.25, true, rng);
  Tensor loss = ops::sum(tape, y);
  tape.backward(loss);
  for (int i = 0; i < 64; ++i) {
    if (y.values()[i] == 0.0) {
      CHECK(x.grad()[i] == 0.0);
    } else {
      CHECK(x.grad()[i] == doctest::Approx(1.0 / 0.75));
    }
  }
}

TEST_CASE("forward and backward are deterministic given a seed") {
  auto run = [] {
    Rng rng(99);
    Tensor w = Tensor::uniform({4, 4}, -0.5, 0.5, rng, true);
    Tensor x = Tensor::uniform({4}, -1, 1, rng);
    Tape tape;
    Tensor loss = ops::sum(tape, ops::tanh(tape, ops::matmul(tape, w, x)));
    tape.backward(loss);
    std::vector<double> out = w.grad();
    out.push_back(loss.value());
    return out;
  };
  CHECK(run() == run());
}
