#include <doctest.h>

#include <cmath>
#include <set>

#include "pyconv/config.hpp"
#include "pyconv/executor.hpp"
#include "pyconv/train.hpp"

using namespace pyconv;

TEST_CASE("step schedule") {
  const TrainConfig c;
  CHECK(lr_at(0, c) == doctest::Approx(0.1));
  CHECK(lr_at(29, c) == doctest::Approx(0.1));
  CHECK(lr_at(30, c) == doctest::Approx(0.01));
  CHECK(lr_at(60, c) == doctest::Approx(0.001));
  CHECK(lr_at(85, c) == doctest::Approx(1e-4));
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig c;
  c.base_lr = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.momentum = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.milestones = {30, 30};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("sgd with momentum and weight decay") {
  TrainConfig c;
  ParamStore<double> p;
  p.add("w", Tensor<double>({1}, {1.0}));
  ParamStore<double> g;
  g.add("w", Tensor<double>({1}, {0.5}));
  ParamStore<double> v;

  sgd_step(p, g, v, 0.1, c);
  CHECK(v.get("w")[0] == doctest::Approx(0.5001).epsilon(1e-14));
  CHECK(p.get("w")[0] == doctest::Approx(0.94999).epsilon(1e-14));
  sgd_step(p, g, v, 0.1, c);
  CHECK(v.get("w")[0] == doctest::Approx(0.950184999).epsilon(1e-14));
  CHECK(p.get("w")[0] == doctest::Approx(0.8549715001).epsilon(1e-14));

  ParamStore<double> z;
  z.add("w", Tensor<double>({2}, {0.0, 0.0}));
  ParamStore<double> zv;
  sgd_step(z, z.zeros_like(), zv, 0.1, c);
  CHECK(z.get("w")[0] == 0.0);

  ParamStore<double> other;
  other.add("u", Tensor<double>({1}));
  CHECK_THROWS(sgd_step(p, other, v, 0.1, c));
}

TEST_CASE("cross entropy on pixels equals rows") {
  const auto logits = random_normal<double>({2, 3, 2, 2}, 4);
  std::vector<int> labels{0, 1, 2, 0, 1, 1, 2, 2};
  Tensor<double> rows({8, 3});
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t k = 0; k < 3; ++k) {
      for (std::int64_t p = 0; p < 4; ++p) rows[(n * 4 + p) * 3 + k] = logits[(n * 3 + k) * 4 + p];
    }
  }
  const auto a = cross_entropy(logits, labels);
  const auto b = softmax_cross_entropy(rows, labels);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  CHECK(a.grad.dims() == logits.dims());
  CHECK(a.grad[(1 * 3 + 2) * 4 + 3] == doctest::Approx(b.grad[7 * 3 + 2]).epsilon(1e-14));
}

TEST_CASE("combined loss weights the auxiliary branch") {
  const auto main = random_normal<double>({4, 5}, 1);
  const auto aux = random_normal<double>({4, 5}, 2);
  const std::vector<int> labels{0, 1, 2, 3};
  const auto m = softmax_cross_entropy(main, labels);
  const auto a = softmax_cross_entropy(aux, labels);

  const auto only = combined_loss(main, aux, labels, 0.0);
  CHECK(only.loss == doctest::Approx(m.loss));
  const auto same = combined_loss(main, main, labels, 0.4);
  CHECK(same.loss == doctest::Approx(1.4 * m.loss));
  const auto c = combined_loss(main, aux, labels, 0.4);
  CHECK(c.main_loss == doctest::Approx(m.loss));
  CHECK(c.aux_loss == doctest::Approx(a.loss));
  CHECK(c.loss == doctest::Approx(m.loss + 0.4 * a.loss));
  for (std::int64_t i = 0; i < aux.size(); ++i) {
    CHECK(c.grad_aux[i] == doctest::Approx(0.4 * a.grad[i]));
    CHECK(c.grad_main[i] == doctest::Approx(m.grad[i]));
  }
}

TEST_CASE("toy dataset") {
  const auto a = make_toy_dataset(3);
  const auto b = make_toy_dataset(3);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK(a.images.dims() == Dims{320, 3, 32, 32});
  CHECK_FALSE(make_toy_dataset(4).images == a.images);
  std::vector<int> count(10, 0);
  for (int l : a.labels) ++count[static_cast<std::size_t>(l)];
  for (int c : count) CHECK(c == 32);

  // Per-pixel class means separate.
  const std::int64_t hw = 32 * 32;
  std::vector<std::vector<double>> mean(10, std::vector<double>(static_cast<std::size_t>(hw), 0.0));
  for (std::int64_t i = 0; i < 320; ++i) {
    auto& m = mean[static_cast<std::size_t>(a.labels[static_cast<std::size_t>(i)])];
    for (std::int64_t p = 0; p < hw; ++p) m[static_cast<std::size_t>(p)] += a.images[i * 3 * hw + p];
  }
  std::set<long> distinct;
  for (const auto& m : mean) distinct.insert(std::lround(m[5] * 1e3));
  CHECK(distinct.size() > 5);
}

TEST_CASE("initial loss is near ln 10") {
  const auto cfg = toy_model_config();
  const auto net = build_network(cfg);
  const auto data = make_toy_dataset(0);
  auto state = init_train_state(net, 0);
  Executor<float> ex(net, state.params, state.buffers);
  Tensor<float> batch({32, 3, 32, 32});
  std::copy(data.images.data().begin(), data.images.data().begin() + batch.size(), batch.data().begin());
  const std::vector<int> labels(data.labels.begin(), data.labels.begin() + 32);
  const auto out = ex.forward(batch, {true, 1, false});
  CHECK(cross_entropy(out.at("logits"), labels).loss == doctest::Approx(std::log(10.0)).epsilon(0.05));
}

TEST_CASE("resumed training equals an uninterrupted run") {
  const auto net = build_network(toy_model_config(3, 32));
  const auto data = make_toy_dataset(5, 3, 3, 32);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.milestones = {2};
  c.seed = 8;

  auto full = init_train_state(net, 2);
  const auto h_full = train_toy(net, data, c, full);
  REQUIRE(h_full.size() == 3);
  CHECK(h_full[2].lr == doctest::Approx(0.01));

  auto part = init_train_state(net, 2);
  TrainConfig first = c;
  first.epochs = 1;
  const auto h1 = train_toy(net, data, first, part);
  CHECK(part.epoch == 1);
  const auto h2 = train_toy(net, data, c, part);
  REQUIRE(h2.size() == 2);
  CHECK(h1[0].loss == h_full[0].loss);
  CHECK(h2[1].loss == h_full[2].loss);
  CHECK(h2[1].accuracy == h_full[2].accuracy);
  CHECK(part.params == full.params);
  CHECK(part.buffers == full.buffers);
  CHECK(part.velocity == full.velocity);

  const auto csv = history_csv(h_full);
  CHECK(csv.rfind("epoch,lr,loss,accuracy\n", 0) == 0);
  CHECK(predict(net, full.params, full.buffers, data.images).size() == 9);
}
