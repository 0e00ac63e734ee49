#include <doctest.h>

#include <cmath>
#include <sstream>

#include "perspectra/error.hpp"
#include "perspectra/nn.hpp"

using namespace perspectra;
using namespace perspectra::nn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Loss = sum(out .* weights), so d(loss)/d(out) = weights.
double probe_loss(const BlockMlp& mlp, const Eigen::MatrixXd& x, const Eigen::MatrixXd& d, const Eigen::MatrixXd& w) {
  return (mlp.forward(x, d).array() * w.array()).sum();
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("softmax columns sum to one and survive large logits") {
  Eigen::MatrixXd z(3, 2);
  z << 1000, -5, 999, 0, 0, 5;
  Eigen::MatrixXd p = softmax_columns(z);
  CHECK(p.allFinite());
  CHECK(p.col(0).sum() == doctest::Approx(1.0));
  CHECK(p.col(1).sum() == doctest::Approx(1.0));
  CHECK(p(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-9));
}

TEST_CASE("block MLP gradients match finite differences") {
  Rng rng(3);
  BlockMlp mlp(5, 3, 4, 2, 17);
  const Eigen::MatrixXd x = random_matrix(5, 6, rng), d = random_matrix(3, 6, rng), w = random_matrix(2, 6, rng);
  BlockMlp::Cache cache;
  mlp.forward(x, d, &cache);
  for (Parameter* p : mlp.parameters()) p->zero_grad();
  const Eigen::MatrixXd d_demo = mlp.backward(cache, w);
  const double h = 1e-6;
  for (Parameter* p : mlp.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = probe_loss(mlp, x, d, w);
      p->value.data()[i] = keep - h;
      const double down = probe_loss(mlp, x, d, w);
      p->value.data()[i] = keep;
      CHECK(p->grad.data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
  }
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    Eigen::MatrixXd dp = d, dm = d;
    dp.data()[i] += h;
    dm.data()[i] -= h;
    CHECK(d_demo.data()[i] == doctest::Approx((probe_loss(mlp, x, dp, w) - probe_loss(mlp, x, dm, w)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("zero demo block leaves the text path unchanged") {
  Rng rng(8);
  BlockMlp mlp(4, 3, 6, 2, 5);
  const Eigen::MatrixXd x = random_matrix(4, 5, rng);
  const Eigen::MatrixXd with_zero = mlp.forward(x, Eigen::MatrixXd::Zero(3, 5));
  mlp.w_demo.value = random_matrix(mlp.w_demo.value.rows(), mlp.w_demo.value.cols(), rng);
  CHECK(mlp.forward(x, Eigen::MatrixXd::Zero(3, 5)) == with_zero);
}

TEST_CASE("set_zero makes the output zero") {
  BlockMlp mlp(4, 2, 3, 2, 1);
  mlp.set_zero();
  Rng rng(1);
  CHECK(mlp.forward(random_matrix(4, 3, rng), random_matrix(2, 3, rng)).isZero(0.0));
}

TEST_CASE("embedding lookup rows and unknown categories") {
  DemographicEmbedding e({{"a", "b"}, {"x", "y", "z"}}, {}, 1);
  const auto rows = e.lookup({"b", "z"});
  REQUIRE(rows.size() == 2);
  CHECK(e.categories(0)[static_cast<std::size_t>(rows[0])] == "b");
  CHECK(e.categories(1)[static_cast<std::size_t>(rows[1])] == "z");
  CHECK_NOTHROW(e.lookup({"unknown", "x"}));
  try {
    e.lookup({"c", "x"});
    FAIL("expected UnknownCategory");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownCategory);
  }
}

TEST_CASE("embedding widths follow the binary and categorical defaults") {
  DemographicEmbedding e({{"a", "b"}, {"x", "y", "z"}}, {}, 1);
  CHECK(e.width(0) == 16);
  CHECK(e.width(1) == 64);
  CHECK(e.pooled_dim() == 64);
}

TEST_CASE("embedding backward matches finite differences") {
  DemographicEmbedding e({{"a", "b"}, {"x", "y", "z"}}, {}, 4);
  Rng rng(2);
  const std::vector<int> r1 = e.lookup({"a", "y"}), r2 = e.lookup({"b", "z"});
  const std::vector<const std::vector<int>*> batch{&r1, &r2, &r1};
  const Eigen::MatrixXd w = random_matrix(static_cast<Eigen::Index>(e.pooled_dim()), 3, rng);
  auto loss = [&] { return (e.forward(batch).array() * w.array()).sum(); };
  for (Parameter* p : e.parameters()) p->zero_grad();
  e.backward(batch, w);
  const double h = 1e-6;
  for (Parameter* p : e.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); i += 7) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = loss();
      p->value.data()[i] = keep - h;
      const double down = loss();
      p->value.data()[i] = keep;
      CHECK(p->grad.data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("frozen embeddings stay at zero") {
  DemographicEmbedding e({{"a", "b"}}, {}, 4);
  e.freeze_at_zero();
  CHECK(e.frozen());
  const std::vector<int> r = e.lookup({"a"});
  const std::vector<const std::vector<int>*> batch{&r};
  CHECK(e.forward(batch).isZero(0.0));
}

TEST_CASE("adam minimises a quadratic") {
  Parameter p(3, 1);
  p.value << 4, -2, 1;
  Adam opt(0.05);
  for (int i = 0; i < 2000; ++i) {
    p.grad = 2 * (p.value.array() - 1.0).matrix();
    opt.step({&p});
  }
  CHECK((p.value.array() - 1.0).abs().maxCoeff() < 1e-3);
}

TEST_CASE("snapshot and restore") {
  BlockMlp mlp(2, 0, 3, 2, 9);
  auto params = mlp.parameters();
  const auto saved = snapshot(params);
  mlp.set_zero();
  restore(params, saved);
  CHECK(mlp.w_text.value == saved[0]);
}

TEST_CASE("serialisation round trip") {
  BlockMlp mlp(3, 2, 4, 2, 12);
  std::stringstream ss;
  mlp.write(ss);
  BlockMlp back = BlockMlp::read(ss);
  Rng rng(5);
  const Eigen::MatrixXd x = random_matrix(3, 2, rng), d = random_matrix(2, 2, rng);
  CHECK(back.forward(x, d) == mlp.forward(x, d));

  DemographicEmbedding e({{"a", "b"}, {"x", "y", "z"}}, {}, 4);
  std::stringstream es;
  e.write(es);
  DemographicEmbedding eb = DemographicEmbedding::read(es);
  const std::vector<int> r = e.lookup({"b", "x"});
  const std::vector<const std::vector<int>*> batch{&r};
  CHECK(eb.forward(batch) == e.forward(batch));
}

}  // TEST_SUITE
