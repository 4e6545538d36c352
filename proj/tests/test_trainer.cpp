#include <doctest.h>

#include <cmath>

#include "fairinv/error.hpp"
#include "fairinv/trainer.hpp"
#include "test_util.hpp"

using namespace fairinv;

namespace {

Param scalar_param(double v, double g) {
  Param p;
  p.name = "theta";
  p.value = DenseMat(1, 1, v);
  p.grad = DenseMat(1, 1, g);
  return p;
}

// Two well separated clusters, labels by cluster, intra-cluster edges.
Graph separable_graph(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  EdgeList edges;
  DenseMat x(n, 2);
  std::vector<int> y(n), s(n);
  for (std::size_t v = 0; v < n; ++v) {
    y[v] = static_cast<int>(v % 2);
    s[v] = static_cast<int>((v / 2) % 2);
    x(v, 0) = (y[v] ? 2.0 : -2.0) + 0.3 * rng.normal();
    x(v, 1) = rng.normal();
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (y[u] == y[v] && rng.bernoulli(0.1)) edges.emplace_back(u, v);
    }
  }
  return Graph(n, edges, x, y, {{"S", s}});
}

}  // namespace

TEST_CASE("adam step formulas") {
  SUBCASE("zero gradient, no decay") {
    Param p = scalar_param(1.25, 0.0);
    AdamState st;
    Param* ps[] = {&p};
    adam_step(ps, st);
    CHECK(p.value(0, 0) == 1.25);
  }
  SUBCASE("first step is lr / (1 + eps)") {
    Param p = scalar_param(0.0, 1.0);
    AdamState st;
    st.lr = 0.1;
    Param* ps[] = {&p};
    adam_step(ps, st);
    CHECK(p.value(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("constant gradient gives non-increasing step sizes") {
    Param p = scalar_param(0.0, 1.0);
    AdamState st;
    st.lr = 0.1;
    Param* ps[] = {&p};
    double prev = p.value(0, 0), last_step = 1e9;
    for (int i = 0; i < 5; ++i) {
      p.grad(0, 0) = 1.0;
      adam_step(ps, st);
      const double step = std::fabs(p.value(0, 0) - prev);
      CHECK(step <= last_step + 1e-15);
      last_step = step;
      prev = p.value(0, 0);
    }
  }
  SUBCASE("weight decay enters the gradient") {
    Param p = scalar_param(2.0, 0.0);
    AdamState st;
    st.weight_decay = 0.5;
    Param* ps[] = {&p};
    adam_step(ps, st);
    CHECK(p.value(0, 0) < 2.0);
  }
  SUBCASE("non-finite gradient") {
    Param p = scalar_param(0.0, NAN);
    AdamState st;
    Param* ps[] = {&p};
    CHECK_THROWS_AS(adam_step(ps, st), NumericError);
  }
}

TEST_CASE("mean_bce gradient") {
  Rng rng(1);
  const DenseMat z = testutil::random_mat(rng, 6, 1, 2.0);
  const std::vector<int> y{1, 0, 1, 1, 0, 0};
  const std::vector<std::size_t> nodes{0, 2, 3, 5};
  DenseMat g(6, 1);
  mean_bce(z, y, nodes, &g);
  auto f = [&](const DenseMat& m) { return mean_bce(m, y, nodes); };
  CHECK(fd_check(f, z, g) < 1e-6);
  CHECK(g(1, 0) == 0.0);
  CHECK(g(4, 0) == 0.0);
}

TEST_CASE("erm fits a separable graph and is deterministic") {
  const Graph g = separable_graph(60, 3);
  const Split split = split_nodes(g, {}, 0);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.seed = 7;
  for (auto kind : {BackboneKind::Gcn, BackboneKind::Gin, BackboneKind::Sage}) {
    CAPTURE(to_string(kind));
    cfg.backbone = kind;
    const Propagator prop = make_propagator(g, kind);
    const TrainResult a = train_erm(g, prop, split, cfg);
    const auto logits = predict_logits(prop, g.features(), a.last_params);
    CHECK(mean_bce(DenseMat::column(logits), g.labels(), split.train) < 0.1);
    CHECK(a.history.size() == 500);
    CHECK(a.best_val_auc == doctest::Approx(1.0));

    const TrainResult b = train_erm(g, prop, split, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history.back().train_loss == b.history.back().train_loss);
  }
}

TEST_CASE("evaluate composes the metrics") {
  const Graph g = separable_graph(40, 5);
  const Propagator prop = make_propagator(g, BackboneKind::Gcn);
  Rng rng(0);
  ModelParams p = ModelParams::init(BackboneKind::Gcn, 2, 4, 1, rng);
  for (auto& t : p.tensors) t.value.fill(0.0);  // logit 0 everywhere: ŷ = 0
  std::vector<std::size_t> all(40);
  for (std::size_t i = 0; i < 40; ++i) all[i] = i;
  const MetricsReport r = evaluate(p, g, prop, all, "S");
  CHECK(r.delta_dp == 0.0);
  CHECK(r.delta_eo == 0.0);
  CHECK(r.auc == 0.5);
  CHECK(r.n_eval == 40);
  CHECK_THROWS_AS(evaluate(p, g, prop, all, "race"), DataError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.lr = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(history_csv({{1, 0.5, 0.75}}).rfind("epoch,", 0) == 0);
}
