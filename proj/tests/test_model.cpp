#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "decokan/model.hpp"
#include "reference_mlp.hpp"
#include "testutil.hpp"

using namespace decokan;
namespace tu = decokan::testutil;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.lookback = 16;
  c.horizon = 4;
  c.channels = 2;
  c.wavelet = "db4";
  c.level = 1;
  c.patch = 4;
  c.stride = 2;
  c.embed_dim = 4;
  c.tfactor = 2;
  c.dfactor = 2;
  c.dropout = 0.0;
  return c;
}

void zero_all_params(DecoKanModel& model) {
  for (auto& np : model_parameters(model))
    for (auto& v : np.tensor.mutable_values()) v = 0.0;
}

}  // namespace

TEST_CASE("forward output shape is exactly T x C across config grid") {
  std::mt19937_64 rng(1);
  struct Combo {
    Dim L, T, m, P, S;
    const char* wavelet;
  };
  for (const Combo& combo : std::vector<Combo>{{96, 24, 1, 16, 8, "db4"},
                                               {96, 48, 2, 8, 4, "db4"},
                                               {512, 96, 3, 16, 8, "db2"}}) {
    ModelConfig c;
    c.lookback = combo.L;
    c.horizon = combo.T;
    c.channels = 3;
    c.level = combo.m;
    c.patch = combo.P;
    c.stride = combo.S;
    c.wavelet = combo.wavelet;
    c.embed_dim = 8;
    c.dropout = 0.0;
    auto model = build_model(c, 7);
    CHECK(static_cast<Dim>(model.branches.size()) == combo.m + 1);
    auto x = tu::random_tensor({combo.L, 3}, rng, -1, 1, false);
    EvalContext ctx;
    auto y = forward(model, x, ctx);
    CHECK(y.shape() == Shape{combo.T, 3});
  }
}

TEST_CASE("zero-parameter model: constant input returns the boundary mean") {
  auto cfg = tiny_config();
  cfg.channels = 3;
  auto model = build_model(cfg, 3);
  zero_all_params(model);
  auto x = Tensor::zeros({16, 3});
  for (Dim t = 0; t < 16; ++t) {
    x.mutable_values()[static_cast<std::size_t>(t * 3 + 0)] = 4.0;
    x.mutable_values()[static_cast<std::size_t>(t * 3 + 1)] = -2.5;
    x.mutable_values()[static_cast<std::size_t>(t * 3 + 2)] = 0.0;
  }
  EvalContext ctx;
  auto y = forward(model, x, ctx);
  for (Dim t = 0; t < 4; ++t) {
    CHECK(y.at({t, 0}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(y.at({t, 1}) == doctest::Approx(-2.5).epsilon(1e-12));
    CHECK(std::fabs(y.at({t, 2})) <= 1e-12);
  }
}

TEST_CASE("zero-parameter model matches the affine trace oracle") {
  auto cfg = tiny_config();
  cfg.channels = 3;
  auto model = build_model(cfg, 3);
  zero_all_params(model);
  std::mt19937_64 rng(5);
  auto x = tu::random_tensor({16, 3}, rng, -2, 2, false);
  EvalContext ctx;
  auto y = forward(model, x, ctx);

  // Trace: boundary revin, dwt, per-branch means, constant coefficient
  // predictions, idwt, boundary denorm.
  auto [xn, boundary] = revin_norm(x, 1);
  auto xt = permute(xn, {1, 0});
  auto set = dwt_multilevel(xt, model.bank, cfg.level);
  // each branch predicts its revin mean, broadcast over the branch horizon
  auto const_like = [](const Tensor& src, Dim horizon) {
    const Dim C = src.dim(0), L = src.dim(1);
    auto out = Tensor::zeros({C, horizon});
    for (Dim c = 0; c < C; ++c) {
      double mu = 0;
      for (Dim t = 0; t < L; ++t) mu += src.at({c, t});
      mu /= static_cast<double>(L);
      for (Dim t = 0; t < horizon; ++t)
        out.mutable_values()[static_cast<std::size_t>(c * horizon + t)] = mu;
    }
    return out;
  };
  CoefficientSet pred;
  pred.level = set.level;
  pred.approx = const_like(set.approx, model.branch_horizon[0]);
  for (std::size_t i = 0; i < set.details.size(); ++i)
    pred.details.push_back(
        const_like(set.details[i], model.branch_horizon[i + 1]));
  auto rec = idwt_multilevel(pred, model.bank, cfg.horizon);
  auto expect = revin_denorm(permute(rec, {1, 0}), boundary, 1);
  CHECK(tu::max_abs_diff(y.values(), expect.values()) <= 1e-10);
}

TEST_CASE("m=1 gives exactly two branches") {
  auto model = build_model(tiny_config(), 1);
  CHECK(model.branches.size() == 2);
  CHECK(model.branch_series_len[0] == coefficient_length(16, model.bank));
  CHECK(model.branch_horizon[0] == coefficient_length(4, model.bank));
}

TEST_CASE("full-model gradient check on a toy configuration") {
  auto cfg = tiny_config();
  auto model = build_model(cfg, 11);
  // the entropy term has a log kink at c = 0; keep |c| well above the FD step
  for (auto* layer : kan_layers(model))
    for (auto& v : layer->spline_coeffs.mutable_values())
      if (std::fabs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
  std::mt19937_64 rng(13);
  auto x = tu::random_tensor({16, 2}, rng, -1, 1, false);
  auto truth = tu::random_tensor({4, 2}, rng, -1, 1, false);
  auto named = model_parameters(model);
  std::vector<Tensor> params;
  for (auto& np : named) params.push_back(np.tensor);
  EvalContext ctx;
  auto r = tu::grad_check(params, [&] {
    return total_loss(forward(model, x, ctx), truth, model, 1e-5);
  });
  INFO("worst rel ", r.worst_rel, " analytic ", r.worst_analytic, " numeric ",
       r.worst_numeric);
  CHECK(r.worst_rel <= 1e-4);
}

TEST_CASE("every parameter receives a finite gradient at init") {
  auto cfg = tiny_config();
  auto model = build_model(cfg, 21);
  std::mt19937_64 rng(22);
  auto x = tu::random_tensor({16, 2}, rng, -1, 1, false);
  auto truth = tu::random_tensor({4, 2}, rng, -1, 1, false);
  EvalContext ctx;
  auto loss = total_loss(forward(model, x, ctx), truth, model, 1e-5);
  backward(loss);
  for (auto& np : model_parameters(model)) {
    double max_abs = 0;
    for (double g : np.tensor.grad()) {
      CHECK(std::isfinite(g));
      max_abs = std::max(max_abs, std::fabs(g));
    }
    INFO("param ", np.name);
    CHECK(max_abs > 0.0);
  }
}

TEST_CASE("total_loss arithmetic") {
  auto cfg = tiny_config();
  auto model = build_model(cfg, 2);
  zero_all_params(model);

  SUBCASE("pred == truth with zero parameters gives zero") {
    auto p = Tensor::zeros({4, 2});
    CHECK(total_loss(p, p, model, 1e-5).item() == 0.0);
  }
  SUBCASE("forecast 0.5 plus reg 100 at gamma 1e-5 gives 0.501") {
    // one spline coefficient of 800 in a G+k=8 edge: |phi|_avg = 100, S = 0
    auto layers = kan_layers(model);
    REQUIRE_FALSE(layers.empty());
    layers[0]->spline_coeffs.mutable_values()[0] = 800.0;
    auto pred = Tensor::full({4, 2}, std::sqrt(0.5));
    auto truth = Tensor::zeros({4, 2});
    const double loss = total_loss(pred, truth, model, 1e-5).item();
    CHECK(loss == doctest::Approx(0.501).epsilon(1e-12));
  }
  SUBCASE("gamma 0 reduces to the plain MSE exactly") {
    auto layers = kan_layers(model);
    layers[0]->spline_coeffs.mutable_values()[0] = 800.0;
    auto pred = Tensor::full({4, 2}, 1.5);
    auto truth = Tensor::zeros({4, 2});
    CHECK(total_loss(pred, truth, model, 0.0).item() == 2.25);
  }
  SUBCASE("gamma > 0 strictly exceeds MSE when any coefficient is nonzero") {
    auto layers = kan_layers(model);
    layers[2]->spline_coeffs.mutable_values()[5] = 0.01;
    auto pred = Tensor::full({4, 2}, 1.0);
    auto truth = Tensor::zeros({4, 2});
    CHECK(total_loss(pred, truth, model, 1e-5).item() >
          total_loss(pred, truth, model, 0.0).item());
  }
}

TEST_CASE("ablation variants") {
  auto cfg = tiny_config();
  std::mt19937_64 rng(31);
  auto x = tu::random_tensor({16, 2}, rng, -1, 1, false);

  SUBCASE("all four variants produce valid T x C outputs") {
    for (auto mode : {AblationMode::full_kan, AblationMode::temporal_kan_only,
                      AblationMode::feature_kan_only, AblationMode::mlp_only}) {
      auto c = cfg;
      c.ablation = mode;
      auto model = build_model(c, 17);
      EvalContext ctx;
      auto y = forward(model, x, ctx);
      CHECK(y.shape() == Shape{4, 2});
      for (double v : y.values()) CHECK(std::isfinite(v));
    }
  }
  SUBCASE("full_kan has strictly more parameters than mlp_only") {
    auto full = cfg;
    full.ablation = AblationMode::full_kan;
    auto mlp = cfg;
    mlp.ablation = AblationMode::mlp_only;
    CHECK(parameter_count(build_model(full, 1)) >
          parameter_count(build_model(mlp, 1)));
  }
  SUBCASE("kan layer census per variant") {
    auto count = [&](AblationMode mode) {
      auto c = cfg;
      c.ablation = mode;
      auto model = build_model(c, 1);
      return kan_layers(model).size();
    };
    CHECK(count(AblationMode::full_kan) == 16);          // 2 branches * 2 mixers * 2 stacks * 2 layers
    CHECK(count(AblationMode::temporal_kan_only) == 8);
    CHECK(count(AblationMode::feature_kan_only) == 8);
    CHECK(count(AblationMode::mlp_only) == 0);
  }
}

TEST_CASE("mlp_only forward matches a hand-built reference") {
  auto cfg = tiny_config();
  cfg.ablation = AblationMode::mlp_only;
  auto model = build_model(cfg, 41);
  std::mt19937_64 rng(43);
  auto x = tu::random_tensor({16, 2}, rng, -2, 2, false);
  EvalContext ctx;
  auto y = forward(model, x, ctx);

  auto [xn, boundary] = revin_norm(x, 1);
  auto xt = permute(xn, {1, 0});
  auto set = dwt_multilevel(xt, model.bank, cfg.level);
  auto as_rows = [](const Tensor& t) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(t.dim(0)));
    for (Dim c = 0; c < t.dim(0); ++c)
      for (Dim l = 0; l < t.dim(1); ++l)
        rows[static_cast<std::size_t>(c)].push_back(t.at({c, l}));
    return rows;
  };
  CoefficientSet pred;
  pred.level = set.level;
  auto pack = [](const std::vector<std::vector<double>>& rows) {
    const Dim C = static_cast<Dim>(rows.size());
    const Dim L = static_cast<Dim>(rows[0].size());
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from_vector({C, L}, std::move(flat));
  };
  pred.approx = pack(tu::ref_mlp_branch(as_rows(set.approx), model.branches[0],
                                    cfg.patch, cfg.stride, cfg.embed_dim,
                                    model.branch_horizon[0]));
  for (std::size_t i = 0; i < set.details.size(); ++i)
    pred.details.push_back(pack(
        tu::ref_mlp_branch(as_rows(set.details[i]), model.branches[i + 1],
                       cfg.patch, cfg.stride, cfg.embed_dim,
                       model.branch_horizon[i + 1])));
  auto rec = idwt_multilevel(pred, model.bank, cfg.horizon);
  auto expect = revin_denorm(permute(rec, {1, 0}), boundary, 1);
  CHECK(tu::max_abs_diff(y.values(), expect.values()) <= 1e-10);
}

TEST_CASE("eval-mode forward is deterministic even with dropout configured") {
  auto cfg = tiny_config();
  cfg.dropout = 0.25;
  auto model = build_model(cfg, 51);
  std::mt19937_64 rng(52);
  auto x = tu::random_tensor({16, 2}, rng, -1, 1, false);
  EvalContext ctx;
  auto y1 = forward(model, x, ctx);
  auto y2 = forward(model, x, ctx);
  CHECK(std::equal(y1.values().begin(), y1.values().end(), y2.values().begin()));
}

TEST_CASE("checkpoint roundtrip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "decokan_model_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.dkpt").string();

  auto cfg = tiny_config();
  auto model = build_model(cfg, 61);
  std::mt19937_64 rng(62);
  auto x = tu::random_tensor({16, 2}, rng, -1, 1, false);
  EvalContext ctx;
  auto before = forward(model, x, ctx);

  save_checkpoint(model, path, {{"note", "roundtrip"}});
  auto loaded = load_checkpoint(path);
  CHECK(loaded.metadata.at("note") == "roundtrip");
  auto after = forward(loaded.model, x, ctx);
  CHECK(std::equal(before.values().begin(), before.values().end(),
                   after.values().begin()));  // bitwise

  SUBCASE("truncated file is rejected") {
    const std::string trunc = (dir / "trunc.dkpt").string();
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(trunc, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(trunc), io_error);
  }
  SUBCASE("garbage file is rejected") {
    const std::string bad = (dir / "bad.dkpt").string();
    std::ofstream out(bad, std::ios::binary);
    out << "definitely not a checkpoint";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(bad), io_error);
  }
  SUBCASE("channel mismatch is a config error") {
    auto other = tiny_config();
    other.channels = 5;
    CHECK_THROWS_AS(ensure_compatible(other, loaded.model.config), config_error);
  }
  fs::remove_all(dir);
}
