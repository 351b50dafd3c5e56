#include "xmdg/models.hpp"

// Undo the glog-style CHECK macros the tensor library's logging header
// defines, so the test framework's assertions are the ones in effect.
#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT
#undef FAIL

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

namespace fs = std::filesystem;
using namespace xmdg::models;

namespace {

fs::path temp_ckpt(const char* name) {
  auto p = fs::temp_directory_path() / "xmdg_model_tests";
  fs::create_directories(p);
  return p / name;
}

GeneratorConfig small_gen() {
  GeneratorConfig cfg;
  cfg.input_size = 32;
  cfg.n_levels = 5;
  cfg.base_channels = 8;
  cfg.max_channels = 32;
  cfg.rf_blocks = 2;
  cfg.label_feature_channels = 16;
  return cfg;
}

}  // namespace

TEST_CASE("generator maps BxHxW to BxHxW in [-1,1]") {
  auto cfg = small_gen();
  Generator g(cfg);
  init_weights(*g, 1);
  g->eval();
  torch::NoGradGuard ng;

  const auto x = torch::rand({2, 1, 32, 32}) * 2 - 1;
  const auto psi = torch::rand({2, 16, 4, 4});
  const auto y = g->forward(x, psi);
  REQUIRE(y.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
  CHECK(y.max().item<double>() <= 1.0);
  CHECK(y.min().item<double>() >= -1.0);
  CHECK(torch::isfinite(y).all().item<bool>());
}

TEST_CASE("residue fusion changes the output; disabling it bypasses the label feature") {
  auto cfg = small_gen();
  Generator g(cfg);
  init_weights(*g, 2);
  g->eval();
  torch::NoGradGuard ng;

  const auto x = torch::rand({1, 1, 32, 32}) * 2 - 1;
  const auto psi_a = torch::rand({1, 16, 4, 4});
  const auto psi_b = torch::rand({1, 16, 4, 4}) + 3.0;
  const auto ya = g->forward(x, psi_a);
  const auto yb = g->forward(x, psi_b);
  CHECK((ya - yb).abs().max().item<double>() > 1e-6);

  cfg.use_rf = false;
  Generator plain(cfg);
  init_weights(*plain, 2);
  plain->eval();
  const auto pa = plain->forward(x, psi_a);
  const auto pb = plain->forward(x, psi_b);
  CHECK((pa - pb).abs().max().item<double>() == 0.0);
  const auto p_none = plain->forward(x);
  CHECK((pa - p_none).abs().max().item<double>() == 0.0);
}

TEST_CASE("weight initialization is deterministic per seed") {
  auto cfg = small_gen();
  Generator a(cfg), b(cfg), c(cfg);
  init_weights(*a, 7);
  init_weights(*b, 7);
  init_weights(*c, 8);
  CHECK(parameter_digest(*a) == parameter_digest(*b));
  CHECK(parameter_digest(*a) != parameter_digest(*c));

  // Biases start at zero.
  for (const auto& p : a->named_parameters())
    if (p.key().find("bias") != std::string::npos)
      CHECK(p.value().abs().max().item<double>() == 0.0);
}

TEST_CASE("critic returns a patch score map and per-layer features") {
  CriticConfig cfg;
  cfg.input_size = 32;
  cfg.base_channels = 8;
  cfg.max_channels = 32;
  cfg.n_layers = 3;
  Critic d(cfg);
  init_weights(*d, 3);
  d->eval();
  torch::NoGradGuard ng;

  const auto cond = torch::rand({2, 1, 32, 32});
  const auto cand = torch::rand({2, 1, 32, 32});
  const auto out = d->forward(cond, cand);
  REQUIRE(out.score_map.dim() == 4);
  CHECK(out.score_map.size(0) == 2);
  CHECK(out.score_map.size(1) == 1);
  CHECK(out.score_map.size(2) > 1);  // patch map, not a scalar
  CHECK(out.features.size() == 3);
  for (const auto& f : out.features) CHECK(f.size(0) == 2);

  // No sigmoid: scores should not be confined to (0,1) for arbitrary scaling.
  const auto big = d->forward(cond * 100, cand * 100);
  const double lo = big.score_map.min().item<double>();
  const double hi = big.score_map.max().item<double>();
  CHECK((lo < 0.0 || hi > 1.0));
}

TEST_CASE("classifier outputs logits and a pre-pool feature map") {
  ClassifierConfig cfg;
  cfg.input_size = 32;
  cfg.n_classes = 5;
  cfg.base_channels = 8;
  cfg.n_blocks = 3;
  Classifier m(cfg);
  init_weights(*m, 4);
  m->eval();
  torch::NoGradGuard ng;

  const auto x = torch::rand({3, 1, 32, 32});
  const auto logits = m->forward(x);
  REQUIRE(logits.sizes() == torch::IntArrayRef({3, 5}));

  const auto [lg2, feats] = m->forward_with_features(x);
  CHECK((logits - lg2).abs().max().item<double>() < 1e-6);
  REQUIRE(feats.dim() == 4);
  CHECK(feats.size(0) == 3);
  CHECK(feats.size(1) == cfg.feature_channels());
  CHECK(feats.size(2) == 4);  // 32 / 2^3
}

TEST_CASE("generator config validation") {
  auto cfg = small_gen();
  cfg.input_size = 48;  // not 2^n_levels
  CHECK_THROWS(cfg.validate());
  cfg = small_gen();
  cfg.n_levels = 0;
  CHECK_THROWS(cfg.validate());
  CHECK_NOTHROW(small_gen().validate());
}

TEST_CASE("checkpoint round trip restores parameters exactly") {
  auto cfg = small_gen();
  Generator a(cfg);
  init_weights(*a, 11);
  CheckpointMeta meta;
  meta.step = 42;
  meta.config_digest = cfg.digest();
  meta.extra = {{"direction", "t2v"}, {"variant", "E"}};
  const auto path = temp_ckpt("gen.ckpt");
  save_checkpoint(path.string(), *a, meta);

  Generator b(cfg);
  init_weights(*b, 99);
  REQUIRE(parameter_digest(*a) != parameter_digest(*b));
  const auto loaded = load_checkpoint(path.string(), *b, cfg.digest());
  CHECK(parameter_digest(*a) == parameter_digest(*b));
  CHECK(loaded.step == 42);
  REQUIRE(loaded.extra.size() == 2);
  CHECK(loaded.extra[0].first == "direction");
  CHECK(loaded.extra[0].second == "t2v");

  const auto peeked = peek_checkpoint_meta(path.string());
  CHECK(peeked.step == 42);
  CHECK(peeked.config_digest == cfg.digest());
}

TEST_CASE("checkpoint digest mismatch throws unless forced") {
  auto cfg = small_gen();
  Generator a(cfg);
  init_weights(*a, 5);
  CheckpointMeta meta;
  meta.config_digest = cfg.digest();
  const auto path = temp_ckpt("mismatch.ckpt");
  save_checkpoint(path.string(), *a, meta);

  Generator b(cfg);
  CHECK_THROWS(load_checkpoint(path.string(), *b, "not-the-digest"));
  CHECK_NOTHROW(load_checkpoint(path.string(), *b, "not-the-digest", /*force=*/true));
}

TEST_CASE("checkpoint round trip restores optimizer state") {
  auto cfg = small_gen();
  Generator g(cfg);
  init_weights(*g, 6);
  torch::optim::Adam opt(g->parameters(), torch::optim::AdamOptions(1e-3));

  // One step so moments are non-trivial.
  const auto x = torch::rand({1, 1, 32, 32});
  const auto psi = torch::rand({1, 16, 4, 4});
  opt.zero_grad();
  g->forward(x, psi).square().mean().backward();
  opt.step();

  CheckpointMeta meta;
  meta.config_digest = cfg.digest();
  const auto path = temp_ckpt("opt.ckpt");
  save_checkpoint(path.string(), *g, meta, &opt);

  Generator g2(cfg);
  torch::optim::Adam opt2(g2->parameters(), torch::optim::AdamOptions(1e-3));
  load_checkpoint(path.string(), *g2, cfg.digest(), false, &opt2);
  CHECK(parameter_digest(*g) == parameter_digest(*g2));

  // A further identical update from the restored state matches the original.
  torch::manual_seed(0);
  opt.zero_grad();
  g->forward(x, psi).square().mean().backward();
  opt.step();
  torch::manual_seed(0);
  opt2.zero_grad();
  g2->forward(x, psi).square().mean().backward();
  opt2.step();
  CHECK(parameter_digest(*g) == parameter_digest(*g2));
}

TEST_CASE("freeze stops gradient flow") {
  ClassifierConfig cfg;
  cfg.input_size = 32;
  cfg.base_channels = 8;
  cfg.n_blocks = 3;
  Classifier m(cfg);
  init_weights(*m, 9);
  freeze(*m);
  for (const auto& p : m->parameters()) CHECK_FALSE(p.requires_grad());
}
