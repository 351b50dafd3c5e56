#include "xmdg/training.hpp"

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
#include <fstream>
#include <sstream>

#include "xmdg/digest.hpp"

namespace fs = std::filesystem;
using namespace xmdg;
using namespace xmdg::train;

namespace {

fs::path fresh_dir(const char* name) {
  auto p = fs::temp_directory_path() / "xmdg_training_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Tiny corpus + manifest shared by the run-directory tests (built once).
struct Corpus {
  fs::path dir;
  data::DatasetManifest manifest;
  Corpus() {
    dir = fresh_dir("corpus");
    auto [vis, tac] = data::synth_corpus(2, 2, 32, 3, dir.string());
    data::PrepareConfig cfg;
    cfg.reps = 6;
    cfg.seed = 3;
    cfg.image_size = 32;
    cfg.stft = signal::StftConfig{62, 32};  // 32 bins
    manifest = data::prepare_dataset(vis, tac, cfg, dir.string());
  }
};

Corpus& corpus() {
  static Corpus c;
  return c;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.direction = Direction::t2v;
  cfg.variant = Variant::E;
  cfg.batch_size = 2;
  cfg.steps = 2;
  cfg.seed = 5;
  cfg.base_channels = 4;
  cfg.critic_base_channels = 4;
  cfg.rf_blocks = 1;
  cfg.checkpoint_interval = 1;
  cfg.sample_interval = 1;
  cfg.apply_direction_defaults();
  return cfg;
}

ClassifierArtifacts tiny_classifier(data::Modality modality) {
  return pretrain_classifier(modality, corpus().manifest, 1, 1);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("variant switch table") {
  TrainConfig cfg;
  const struct {
    Variant v;
    bool rf, fm, p, wgan;
  } expect[] = {
      {Variant::A, false, false, false, false},
      {Variant::B, false, true, true, true},
      {Variant::C, true, false, true, true},
      {Variant::D, true, true, false, true},
      {Variant::E, true, true, true, true},
  };
  for (const auto& e : expect) {
    cfg.variant = e.v;
    CHECK(cfg.use_rf() == e.rf);
    CHECK(cfg.use_fm() == e.fm);
    CHECK(cfg.use_perceptual() == e.p);
    CHECK(cfg.wgan() == e.wgan);
  }

  cfg.variant = Variant::C;
  cfg.loss.alpha = 10.0;
  cfg.loss.beta = 1.0;
  const auto eff = cfg.effective_loss();
  CHECK(eff.alpha == 0.0);  // FM masked off
  CHECK(eff.beta == 1.0);
  cfg.variant = Variant::D;
  CHECK(cfg.effective_loss().alpha == 10.0);
  CHECK(cfg.effective_loss().beta == 0.0);
}

TEST_CASE("direction defaults set the loss weights") {
  TrainConfig cfg;
  cfg.direction = Direction::t2v;
  cfg.apply_direction_defaults();
  CHECK(cfg.loss.alpha == 10.0);
  CHECK(cfg.loss.beta == 1.0);
  cfg.direction = Direction::v2t;
  cfg.apply_direction_defaults();
  CHECK(cfg.loss.alpha == 100.0);
  CHECK(cfg.loss.beta == 10.0);
}

TEST_CASE("direction and variant names round trip") {
  CHECK(to_string(Direction::t2v) == "t2v");
  CHECK(direction_from_string("v2t") == Direction::v2t);
  CHECK(to_string(Variant::C) == "C");
  CHECK(variant_from_string("A") == Variant::A);
  CHECK_THROWS(direction_from_string("sideways"));
  CHECK_THROWS(variant_from_string("F"));
}

TEST_CASE("config digest covers identity but not the step horizon") {
  TrainConfig a = tiny_config();
  TrainConfig b = a;
  b.steps = 999;              // runtime knob: resumable with a longer horizon
  b.checkpoint_interval = 7;  // runtime knob
  CHECK(a.digest() == b.digest());

  TrainConfig c = a;
  c.base_channels = 8;
  CHECK(a.digest() != c.digest());
  TrainConfig d = a;
  d.variant = Variant::B;
  CHECK(a.digest() != d.digest());
  TrainConfig e = a;
  e.seed = 6;
  CHECK(a.digest() != e.digest());
}

TEST_CASE("load_batch normalizes payloads into the requested range") {
  const auto& m = corpus().manifest;
  const auto idx = m.split_indices(data::Split::train);
  REQUIRE(idx.size() >= 2);
  const std::vector<std::size_t> take(idx.begin(), idx.begin() + 2);

  const auto vis_signed = load_batch(m, take, data::Modality::visual, true);
  REQUIRE(vis_signed.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
  CHECK(vis_signed.min().item<double>() >= -1.0);
  CHECK(vis_signed.max().item<double>() <= 1.0);

  const auto vis_unit = load_batch(m, take, data::Modality::visual, false);
  CHECK(vis_unit.min().item<double>() >= 0.0);
  CHECK(vis_unit.max().item<double>() <= 1.0);
  // The two ranges are affine images of each other.
  CHECK(((vis_signed + 1) / 2 - vis_unit).abs().max().item<double>() < 1e-6);

  const auto tac = load_batch(m, take, data::Modality::tactile, true);
  CHECK(tac.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
}

TEST_CASE("classifier pretraining produces a working checkpoint") {
  auto art = tiny_classifier(data::Modality::visual);
  CHECK(art.modality == data::Modality::visual);
  CHECK(art.val_accuracy >= 0.0);
  CHECK(art.ood_threshold >= 0.0);

  const auto path = (fresh_dir("clf") / "clf.ckpt").string();
  save_classifier(art, path);
  auto back = load_classifier(path);
  CHECK(back.modality == data::Modality::visual);
  CHECK(back.val_accuracy == art.val_accuracy);
  CHECK(models::parameter_digest(*back.classifier) == models::parameter_digest(*art.classifier));
}

TEST_CASE("a short run writes the full run directory layout") {
  const auto run = fresh_dir("layout");
  auto clf = tiny_classifier(data::Modality::tactile);
  const auto cfg = tiny_config();
  const auto art = train_gan(cfg, corpus().manifest, clf, run.string(), true);

  CHECK(art.steps_done == 2);
  CHECK(art.generator_step_count == 2);
  CHECK(art.critic_step_count == 2 * cfg.loss.n_critic);
  CHECK(fs::exists(run / "config.txt"));
  CHECK(fs::exists(run / "manifest_digest.txt"));
  CHECK(fs::exists(run / "classifier.ckpt"));
  CHECK(fs::exists(run / "loss.csv"));
  CHECK(fs::exists(run / "checkpoints" / "latest_g.ckpt"));
  CHECK(fs::exists(run / "checkpoints" / "latest_d.ckpt"));
  CHECK(fs::exists(run / "samples"));
  CHECK_FALSE(fs::exists(run / ".lock"));  // released on completion

  // Digest file matches the manifest; config snapshot holds the digest.
  std::istringstream dig(slurp(run / "manifest_digest.txt"));
  std::string stored;
  dig >> stored;
  CHECK(stored == data::manifest_digest(corpus().manifest));

  // Loss CSV: header plus one row per generator step with seven columns.
  std::istringstream csv(slurp(run / "loss.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "step,critic_loss,gp,l_adv,l_fm,l_p,l_total");
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
  }
  CHECK(rows == 2);

  SUBCASE("existing run directory is refused without overwrite") {
    auto clf2 = tiny_classifier(data::Modality::tactile);
    CHECK_THROWS(train_gan(cfg, corpus().manifest, clf2, run.string(), false));
  }
}

TEST_CASE("training is deterministic per seed") {
  auto clf = tiny_classifier(data::Modality::tactile);
  const auto cfg = tiny_config();
  const auto r1 = fresh_dir("det1");
  const auto r2 = fresh_dir("det2");
  train_gan(cfg, corpus().manifest, clf, r1.string(), true);
  train_gan(cfg, corpus().manifest, clf, r2.string(), true);
  CHECK(slurp(r1 / "loss.csv") == slurp(r2 / "loss.csv"));
}

TEST_CASE("resume continues from the latest checkpoint with more steps") {
  auto clf = tiny_classifier(data::Modality::tactile);
  auto cfg = tiny_config();
  const auto run = fresh_dir("resume");
  train_gan(cfg, corpus().manifest, clf, run.string(), true);

  cfg.steps = 4;
  const auto art = train_gan(cfg, corpus().manifest, clf, run.string(), false, /*resume=*/true);
  CHECK(art.steps_done == 4);
  CHECK(art.generator_step_count == 4);
  CHECK(art.critic_step_count == 4 * cfg.loss.n_critic);

  std::istringstream csv(slurp(run / "loss.csv"));
  std::string line;
  std::getline(csv, line);  // header
  std::vector<int> steps;
  while (std::getline(csv, line))
    if (!line.empty()) steps.push_back(std::stoi(line.substr(0, line.find(','))));
  CHECK(steps == std::vector<int>{1, 2, 3, 4});

  SUBCASE("resume with a different identity config is refused") {
    auto bad = cfg;
    bad.base_channels = 8;
    bad.steps = 6;
    CHECK_THROWS(train_gan(bad, corpus().manifest, clf, run.string(), false, true));
  }
}

TEST_CASE("zero steps is rejected") {
  auto clf = tiny_classifier(data::Modality::tactile);
  auto cfg = tiny_config();
  cfg.steps = 0;
  CHECK_THROWS(train_gan(cfg, corpus().manifest, clf, fresh_dir("zero").string(), true));
}

TEST_CASE("a stale lock file blocks a new run on the same directory") {
  const auto run = fresh_dir("locked");
  std::ofstream(run / ".lock") << "pid 0\n";
  auto clf = tiny_classifier(data::Modality::tactile);
  CHECK_THROWS_AS(train_gan(tiny_config(), corpus().manifest, clf, run.string(), true),
                  training_fault);
}

TEST_CASE("variant A trains with the pix2pix objective") {
  auto clf = tiny_classifier(data::Modality::tactile);
  auto cfg = tiny_config();
  cfg.variant = Variant::A;
  const auto run = fresh_dir("variant_a");
  const auto art = train_gan(cfg, corpus().manifest, clf, run.string(), true);
  CHECK(art.steps_done == 2);
  // Vanilla cGAN alternates 1:1, so critic steps equal generator steps.
  CHECK(art.critic_step_count == art.generator_step_count);
}

TEST_CASE("generation flows end to end from a run directory") {
  auto clf = tiny_classifier(data::Modality::tactile);
  const auto run = fresh_dir("generate");
  train_gan(tiny_config(), corpus().manifest, clf, run.string(), true);

  const auto& m = corpus().manifest;
  const auto idx = m.split_indices(data::Split::test);
  REQUIRE_FALSE(idx.empty());
  const auto input = load_array(
      (fs::path(m.root_dir) / m.pairs[idx[0]].tactile.payload_path).string());
  const auto out = generate_from_run(run.string(), input);
  REQUIRE(out.payload.rank() == 2);
  CHECK(out.payload.dims[0] == 32);
  CHECK(out.payload.dims[1] == 32);
  CHECK(out.max_softmax >= 0.0);
  CHECK(out.max_softmax <= 1.0);

  SUBCASE("wrong input shape is rejected") {
    Array bad({7, 5});
    CHECK_THROWS(generate_from_run(run.string(), bad));
  }

  SUBCASE("evaluation insists on a target-modality classifier") {
    auto source_clf = load_classifier((run / "classifier.ckpt").string());
    CHECK_THROWS(evaluate_run(run.string(), m, source_clf));  // tactile clf, visual target
    auto target_clf = tiny_classifier(data::Modality::visual);
    const auto ev = evaluate_run(run.string(), m, target_clf);
    CHECK(ev.report.n_samples == int(idx.size()));
    CHECK(ev.report.accuracy >= 0.0);
    CHECK(ev.noise_baseline_fid > 0.0);
  }
}

TEST_CASE("frozen classifier digest is stable across the run") {
  auto clf = tiny_classifier(data::Modality::tactile);
  const auto before = models::parameter_digest(*clf.classifier);
  const auto run = fresh_dir("frozen");
  train_gan(tiny_config(), corpus().manifest, clf, run.string(), true);
  CHECK(models::parameter_digest(*clf.classifier) == before);

  auto embedded = load_classifier((run / "classifier.ckpt").string());
  CHECK(models::parameter_digest(*embedded.classifier) == before);
}

TEST_CASE("pgm writers emit valid binary grey-scale files") {
  const auto dir = fresh_dir("pgm");
  const auto path = (dir / "img.pgm").string();
  write_pgm(path, {{0.0, 0.5}, {1.0, 0.25}});
  const auto bytes = slurp(path);
  CHECK(bytes.substr(0, 2) == "P5");
  CHECK(bytes.find("2 2") != std::string::npos);

  const auto curve = (dir / "curve.pgm").string();
  write_loss_curve_pgm(curve, {3.0, 2.0, 1.0, 1.5, 0.5});
  CHECK(slurp(curve).substr(0, 2) == "P5");
}
