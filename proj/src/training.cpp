#include "xmdg/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "xmdg/digest.hpp"
#include "xmdg/rng.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace xmdg::train {

std::string to_string(Direction d) { return d == Direction::t2v ? "t2v" : "v2t"; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
    case Variant::D: return "D";
    default: return "E";
  }
}

Direction direction_from_string(const std::string& s) {
  if (s == "t2v") return Direction::t2v;
  if (s == "v2t") return Direction::v2t;
  throw std::invalid_argument("unknown direction: " + s);
}

Variant variant_from_string(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'E')
    return static_cast<Variant>(s[0] - 'A');
  throw std::invalid_argument("unknown model variant: " + s);
}

losses::LossConfig TrainConfig::effective_loss() const {
  losses::LossConfig l = loss;
  if (!use_fm()) l.alpha = 0.0;
  if (!use_perceptual()) l.beta = 0.0;
  if (!wgan()) {
    l.lambda_gp = 0.0;
    l.n_critic = 1;
  }
  return l;
}

void TrainConfig::apply_direction_defaults() {
  if (direction == Direction::t2v) {
    loss.alpha = 10.0;
    loss.beta = 1.0;
  } else {
    loss.alpha = 100.0;
    loss.beta = 10.0;
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream s;
  s << "direction " << to_string(direction) << "\n"
    << "variant " << to_string(variant) << "\n"
    << "batch_size " << batch_size << "\n"
    << "lr_g " << lr_g << "\n"
    << "lr_d " << lr_d << "\n"
    << "adam_beta1 " << adam_beta1 << "\n"
    << "adam_beta2 " << adam_beta2 << "\n"
    << "steps " << steps << "\n"
    << "seed " << seed << "\n"
    << "alpha " << loss.alpha << "\n"
    << "beta " << loss.beta << "\n"
    << "lambda_gp " << loss.lambda_gp << "\n"
    << "n_critic " << loss.n_critic << "\n"
    << "l1_weight " << l1_weight << "\n"
    << "base_channels " << base_channels << "\n"
    << "critic_base_channels " << critic_base_channels << "\n"
    << "rf_blocks " << rf_blocks << "\n";
  return s.str();
}

// Run identity excludes runtime knobs (target step count, save cadence) so a
// resumed run with a longer horizon still matches its checkpoints.
std::string TrainConfig::digest() const {
  std::ostringstream s;
  s << to_string(direction) << "|" << to_string(variant) << "|" << batch_size << "|" << lr_g
    << "|" << lr_d << "|" << adam_beta1 << "|" << adam_beta2 << "|" << seed << "|" << loss.alpha
    << "|" << loss.beta << "|" << loss.lambda_gp << "|" << loss.n_critic << "|" << l1_weight
    << "|" << base_channels << "|" << critic_base_channels << "|" << rf_blocks;
  return sha256_hex(s.str());
}

namespace {

data::Modality source_modality(Direction d) {
  return d == Direction::t2v ? data::Modality::tactile : data::Modality::visual;
}
data::Modality target_modality(Direction d) {
  return d == Direction::t2v ? data::Modality::visual : data::Modality::tactile;
}

data::NormStats stats_for(const data::DatasetManifest& m, data::Modality mod) {
  return mod == data::Modality::visual ? m.visual_stats : m.tactile_stats;
}

const data::SampleRecord& record_for(const data::WeaklyPairedSample& p, data::Modality mod) {
  return mod == data::Modality::visual ? p.visual : p.tactile;
}

torch::Tensor arrays_to_batch(const std::vector<Array>& arrays, const data::NormStats& stats,
                              bool signed_range) {
  const auto b = static_cast<std::int64_t>(arrays.size());
  const auto h = static_cast<std::int64_t>(arrays.front().dims[0]);
  const auto w = static_cast<std::int64_t>(arrays.front().dims[1]);
  torch::Tensor out = torch::empty({b, 1, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  const double lo = stats.lo, hi = stats.hi, span = hi - lo;
  for (const auto& a : arrays) {
    if (a.rank() != 2 || static_cast<std::int64_t>(a.dims[0]) != h ||
        static_cast<std::int64_t>(a.dims[1]) != w)
      throw std::invalid_argument("payload shape mismatch in batch");
    for (float v : a.data) {
      double u = std::clamp((static_cast<double>(v) - lo) / span, 0.0, 1.0);
      *dst++ = static_cast<float>(signed_range ? 2.0 * u - 1.0 : u);
    }
  }
  return out;
}

Array load_payload(const data::DatasetManifest& m, const data::SampleRecord& rec) {
  return load_array((fs::path(m.root_dir) / rec.payload_path).string());
}

// Label feature from the frozen classifier; GAN tensors live in [-1,1], the
// classifier expects [0,1].
torch::Tensor label_features(models::Classifier& classifier, const torch::Tensor& x_signed) {
  torch::NoGradGuard no_grad;
  return classifier->forward_with_features((x_signed + 1.0) * 0.5).second.detach();
}

std::vector<std::size_t> sample_indices(const std::vector<std::size_t>& pool, int count,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = pool[dist(rng)];
  return out;
}

struct RunLock {
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    if (fs::exists(path_))
      throw training_fault("run directory is locked by another writer: " + dir.string());
    std::ofstream out(path_);
    out << "locked\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  fs::path path_;
};

}  // namespace

torch::Tensor load_batch(const data::DatasetManifest& manifest,
                         const std::vector<std::size_t>& pair_indices, data::Modality modality,
                         bool signed_range) {
  std::vector<Array> arrays;
  arrays.reserve(pair_indices.size());
  for (std::size_t i : pair_indices)
    arrays.push_back(load_payload(manifest, record_for(manifest.pairs[i], modality)));
  return arrays_to_batch(arrays, stats_for(manifest, modality), signed_range);
}

// -------------------------------------------------------- classifier training

namespace {

// Loads one modality sample with the classifier-stage augmentation applied to
// the raw payload (SpecAugment masking for tactile, Gaussian noise for visual),
// then maps to [0,1] with the manifest stats.
Array load_augmented(const data::DatasetManifest& m, std::size_t pair_idx, data::Modality mod,
                     std::uint64_t seed) {
  Array a = load_payload(m, record_for(m.pairs[pair_idx], mod));
  if (mod == data::Modality::tactile) {
    auto spec = signal::spectrogram_from_array(a, signal::SpecScale::log);
    const int max_width = std::max(2, spec.n_frames / 8);
    spec = signal::spec_augment(spec, 2, 2, max_width, seed);
    return signal::spectrogram_to_array(spec);
  }
  auto img = signal::image_from_array(a, signal::ImageScale::unit);
  img = signal::add_gaussian_noise(img, 0.05, seed);
  return signal::image_to_array(img);
}

double dataset_accuracy(models::Classifier& classifier, const data::DatasetManifest& m,
                        const std::vector<std::size_t>& idx, data::Modality mod) {
  torch::NoGradGuard no_grad;
  classifier->eval();
  int correct = 0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t off = 0; off < idx.size(); off += kChunk) {
    std::vector<std::size_t> chunk(idx.begin() + off,
                                   idx.begin() + std::min(off + kChunk, idx.size()));
    torch::Tensor x = load_batch(m, chunk, mod, /*signed_range=*/false);
    torch::Tensor pred = classifier->forward(x).argmax(1);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      if (pred[i].item<std::int64_t>() == m.pairs[chunk[i]].class_id) ++correct;
  }
  return idx.empty() ? 0.0 : static_cast<double>(correct) / idx.size();
}

}  // namespace

ClassifierArtifacts pretrain_classifier(data::Modality modality,
                                        const data::DatasetManifest& manifest, int epochs,
                                        std::uint64_t seed) {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  const auto train_idx = manifest.split_indices(data::Split::train);
  const auto val_idx = manifest.split_indices(data::Split::val);
  const auto test_idx = manifest.split_indices(data::Split::test);
  if (train_idx.empty()) throw std::invalid_argument("empty training split");

  models::ClassifierConfig cfg;
  cfg.input_size = manifest.image_size;
  cfg.n_classes = static_cast<int>(manifest.classes.size());
  models::Classifier classifier(cfg);
  models::init_weights(*classifier, mix_seed(seed, 0xC1));

  torch::optim::Adam opt(classifier->parameters(),
                         torch::optim::AdamOptions(1e-4).betas({0.9, 0.999}));

  constexpr int kBatch = 16;
  std::vector<torch::Tensor> best_params;
  double best_val = -1.0;
  auto snapshot = [&] {
    best_params.clear();
    for (const auto& p : classifier->parameters()) best_params.push_back(p.detach().clone());
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    classifier->train();
    std::vector<std::size_t> order = train_idx;
    std::mt19937_64 rng(mix_seed(seed, 0xC2, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t off = 0; off < order.size(); off += kBatch) {
      const std::size_t end = std::min(off + kBatch, order.size());
      std::vector<Array> arrays;
      std::vector<std::int64_t> labels;
      for (std::size_t i = off; i < end; ++i) {
        arrays.push_back(load_augmented(manifest, order[i], modality,
                                        mix_seed(seed, 0xC3, epoch, order[i])));
        labels.push_back(manifest.pairs[order[i]].class_id);
      }
      torch::Tensor x = arrays_to_batch(arrays, stats_for(manifest, modality), false);
      torch::Tensor y = torch::tensor(labels, torch::kInt64);
      opt.zero_grad();
      torch::Tensor loss = F::cross_entropy(classifier->forward(x), y);
      loss.backward();
      opt.step();
    }

    const double val_acc = val_idx.empty()
                               ? dataset_accuracy(classifier, manifest, train_idx, modality)
                               : dataset_accuracy(classifier, manifest, val_idx, modality);
    if (val_acc > best_val) {
      best_val = val_acc;
      snapshot();
    }
    if (manifest.classes.size() < 2 && val_acc >= 1.0) break;  // degenerate single class
  }

  {
    torch::NoGradGuard no_grad;
    auto params = classifier->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(best_params[i]);
  }

  ClassifierArtifacts art;
  art.classifier = classifier;
  art.modality = modality;
  art.val_accuracy = best_val;
  art.test_accuracy = test_idx.empty() ? best_val
                                       : dataset_accuracy(classifier, manifest, test_idx, modality);

  // Out-of-distribution threshold: 5th percentile of val max-softmax.
  {
    torch::NoGradGuard no_grad;
    classifier->eval();
    const auto& idx = val_idx.empty() ? train_idx : val_idx;
    std::vector<double> confidences;
    constexpr std::size_t kChunk = 64;
    for (std::size_t off = 0; off < idx.size(); off += kChunk) {
      std::vector<std::size_t> chunk(idx.begin() + off,
                                     idx.begin() + std::min(off + kChunk, idx.size()));
      torch::Tensor x = load_batch(manifest, chunk, modality, false);
      torch::Tensor conf = std::get<0>(torch::softmax(classifier->forward(x), 1).max(1));
      for (std::int64_t i = 0; i < conf.size(0); ++i) confidences.push_back(conf[i].item<double>());
    }
    std::sort(confidences.begin(), confidences.end());
    art.ood_threshold =
        confidences.empty() ? 0.0 : confidences[confidences.size() / 20];
  }

  models::freeze(*classifier);
  return art;
}

void save_classifier(ClassifierArtifacts& art, const std::string& path) {
  const auto& cfg = art.classifier->config();
  models::CheckpointMeta meta;
  meta.config_digest = cfg.digest();
  meta.extra = {
      {"kind", "classifier"},
      {"modality", art.modality == data::Modality::visual ? "visual" : "tactile"},
      {"input_size", std::to_string(cfg.input_size)},
      {"n_classes", std::to_string(cfg.n_classes)},
      {"base_channels", std::to_string(cfg.base_channels)},
      {"n_blocks", std::to_string(cfg.n_blocks)},
      {"val_accuracy", std::to_string(art.val_accuracy)},
      {"test_accuracy", std::to_string(art.test_accuracy)},
      {"ood_threshold", std::to_string(art.ood_threshold)},
  };
  models::save_checkpoint(path, *art.classifier, meta);
}

ClassifierArtifacts load_classifier(const std::string& path) {
  const auto meta = models::peek_checkpoint_meta(path);
  auto find = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : meta.extra)
      if (k == key) return v;
    throw std::runtime_error("classifier checkpoint missing field: " + key);
  };
  models::ClassifierConfig cfg;
  cfg.input_size = std::stoi(find("input_size"));
  cfg.n_classes = std::stoi(find("n_classes"));
  cfg.base_channels = std::stoi(find("base_channels"));
  cfg.n_blocks = std::stoi(find("n_blocks"));

  ClassifierArtifacts art;
  art.classifier = models::Classifier(cfg);
  models::load_checkpoint(path, *art.classifier, cfg.digest());
  art.modality = find("modality") == "visual" ? data::Modality::visual : data::Modality::tactile;
  art.val_accuracy = std::stod(find("val_accuracy"));
  art.test_accuracy = std::stod(find("test_accuracy"));
  art.ood_threshold = std::stod(find("ood_threshold"));
  models::freeze(*art.classifier);
  return art;
}

// --------------------------------------------------------------- GAN training

namespace {

int levels_for(int size) {
  int n = 0;
  while ((1 << n) < size) ++n;
  if ((1 << n) != size) throw std::invalid_argument("image size must be a power of two");
  return n;
}

models::GeneratorConfig generator_config(const TrainConfig& cfg,
                                         const data::DatasetManifest& manifest,
                                         int label_channels) {
  models::GeneratorConfig g;
  g.input_size = manifest.image_size;
  g.n_levels = levels_for(manifest.image_size);
  g.base_channels = cfg.base_channels;
  g.rf_blocks = cfg.rf_blocks;
  g.use_rf = cfg.use_rf();
  g.label_feature_channels = label_channels;
  return g;
}

models::CriticConfig critic_config(const TrainConfig& cfg, const data::DatasetManifest& manifest) {
  models::CriticConfig d;
  d.input_size = manifest.image_size;
  d.base_channels = cfg.critic_base_channels;
  return d;
}

void write_sample_grid(const std::string& path, const torch::Tensor& cond,
                       const torch::Tensor& fake, const torch::Tensor& real) {
  const auto n = std::min<std::int64_t>(cond.size(0), 4);
  const auto s = cond.size(2);
  const int gap = 2;
  std::vector<std::vector<double>> rows(n * s + (n - 1) * gap,
                                        std::vector<double>(3 * s + 2 * gap, 1.0));
  auto blit = [&](const torch::Tensor& t, std::int64_t sample, int block) {
    torch::Tensor img = ((t[sample][0] + 1.0) * 0.5).clamp(0.0, 1.0).to(torch::kFloat64);
    const double* p = img.contiguous().const_data_ptr<double>();
    const std::size_t r0 = sample * (s + gap), c0 = block * (s + gap);
    for (std::int64_t r = 0; r < s; ++r)
      for (std::int64_t c = 0; c < s; ++c) rows[r0 + r][c0 + c] = p[r * s + c];
  };
  for (std::int64_t i = 0; i < n; ++i) {
    blit(cond, i, 0);
    blit(fake, i, 1);
    blit(real, i, 2);
  }
  write_pgm(path, rows);
}

void append_csv_row(std::ofstream& csv, int step, const losses::LossReport& r) {
  csv << step << "," << r.critic_loss << "," << r.gp << "," << r.l_adv << "," << r.l_fm << ","
      << r.l_p << "," << r.l_total << "\n";
  csv.flush();
}

}  // namespace

RunArtifacts train_gan(const TrainConfig& cfg, const data::DatasetManifest& manifest,
                       ClassifierArtifacts& classifier, const std::string& run_dir,
                       bool overwrite, bool resume) {
  const losses::LossConfig loss_cfg = cfg.effective_loss();
  loss_cfg.validate();
  if (cfg.batch_size < 1 || cfg.steps < 1 || cfg.lr_g <= 0 || cfg.lr_d <= 0)
    throw std::invalid_argument("invalid training hyperparameters");
  if (classifier.modality != source_modality(cfg.direction))
    throw std::invalid_argument(
        "classifier modality must match the generation source (tactile for t2v, visual for v2t)");
  if (classifier.classifier->config().input_size != manifest.image_size)
    throw std::invalid_argument("classifier input size does not match the dataset");

  const fs::path dir(run_dir);
  // A lock always blocks: another process may be mid-run, and overwrite must
  // not silently clobber it.
  if (fs::exists(dir / ".lock"))
    throw training_fault("run directory is locked by another run: " + run_dir);
  if (fs::exists(dir) && !resume) {
    if (!overwrite)
      throw training_fault("run directory exists (use overwrite): " + run_dir);
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "samples");
  fs::create_directories(dir / "eval");
  RunLock lock(dir);

  {
    std::ofstream cfg_out(dir / "config.txt");
    cfg_out << cfg.to_text();
    std::ofstream dig_out(dir / "manifest_digest.txt");
    dig_out << data::manifest_digest(manifest) << "\n";
  }
  save_classifier(classifier, (dir / "classifier.ckpt").string());

  torch::manual_seed(static_cast<std::int64_t>(cfg.seed));
  models::freeze(*classifier.classifier);

  const auto gcfg = generator_config(cfg, manifest, classifier.classifier->config().feature_channels());
  const auto dcfg = critic_config(cfg, manifest);
  models::Generator generator(gcfg);
  models::Critic critic(dcfg);
  models::init_weights(*generator, mix_seed(cfg.seed, 0x61));
  models::init_weights(*critic, mix_seed(cfg.seed, 0x62));

  torch::optim::Adam opt_g(generator->parameters(),
                           torch::optim::AdamOptions(cfg.lr_g).betas({cfg.adam_beta1, cfg.adam_beta2}));
  torch::optim::Adam opt_d(critic->parameters(),
                           torch::optim::AdamOptions(cfg.lr_d).betas({cfg.adam_beta1, cfg.adam_beta2}));

  losses::PerceptualExtractor perceptual(3, 16, mix_seed(cfg.seed, 0x63));
  const auto critic_eval = losses::critic_fn(critic);

  const data::Modality src = source_modality(cfg.direction);
  const data::Modality dst = target_modality(cfg.direction);
  const auto train_idx = manifest.split_indices(data::Split::train);
  const auto val_idx = manifest.split_indices(data::Split::val);
  if (train_idx.empty()) throw std::invalid_argument("empty training split");

  const std::string run_digest = cfg.digest();
  int start_step = 0;
  if (resume) {
    const auto g_path = (dir / "checkpoints" / "latest_g.ckpt").string();
    const auto d_path = (dir / "checkpoints" / "latest_d.ckpt").string();
    const auto meta = models::load_checkpoint(g_path, *generator, run_digest, false, &opt_g);
    models::load_checkpoint(d_path, *critic, run_digest, false, &opt_d);
    start_step = static_cast<int>(meta.step);
  }
  std::string latest_g = (dir / "checkpoints" / "latest_g.ckpt").string();
  std::string latest_d = (dir / "checkpoints" / "latest_d.ckpt").string();

  RunArtifacts artifacts;
  artifacts.run_dir = run_dir;
  artifacts.critic_step_count = static_cast<std::int64_t>(start_step) * loss_cfg.n_critic;
  artifacts.generator_step_count = start_step;
  if (resume) {
    artifacts.final_generator_checkpoint = latest_g;
    artifacts.final_critic_checkpoint = latest_d;
  }

  std::ofstream csv(dir / "loss.csv", resume ? std::ios::app : std::ios::trunc);
  if (!resume) csv << "step,critic_loss,gp,l_adv,l_fm,l_p,l_total\n";

  auto save_all = [&](int step) {
    models::CheckpointMeta meta;
    meta.step = step;
    meta.config_digest = run_digest;
    meta.extra = {
        {"kind", "generator"},
        {"direction", to_string(cfg.direction)},
        {"variant", to_string(cfg.variant)},
        {"image_size", std::to_string(manifest.image_size)},
        {"base_channels", std::to_string(cfg.base_channels)},
        {"rf_blocks", std::to_string(cfg.rf_blocks)},
        {"use_rf", cfg.use_rf() ? "1" : "0"},
        {"label_feature_channels", std::to_string(gcfg.label_feature_channels)},
        {"visual_lo", std::to_string(manifest.visual_stats.lo)},
        {"visual_hi", std::to_string(manifest.visual_stats.hi)},
        {"tactile_lo", std::to_string(manifest.tactile_stats.lo)},
        {"tactile_hi", std::to_string(manifest.tactile_stats.hi)},
    };
    const auto step_tag = "step_" + std::to_string(step);
    models::save_checkpoint((dir / "checkpoints" / (step_tag + "_g.ckpt")).string(), *generator,
                            meta, &opt_g);
    models::save_checkpoint((dir / "checkpoints" / "latest_g.ckpt").string(), *generator, meta,
                            &opt_g);
    models::CheckpointMeta dmeta = meta;
    dmeta.extra[0].second = "critic";
    models::save_checkpoint((dir / "checkpoints" / (step_tag + "_d.ckpt")).string(), *critic,
                            dmeta, &opt_d);
    models::save_checkpoint((dir / "checkpoints" / "latest_d.ckpt").string(), *critic, dmeta,
                            &opt_d);
    artifacts.final_generator_checkpoint = latest_g;
    artifacts.final_critic_checkpoint = latest_d;
  };
  if (start_step == 0) save_all(0);

  auto fetch = [&](std::uint64_t seed) {
    const auto idx = sample_indices(train_idx, cfg.batch_size, seed);
    torch::Tensor x = load_batch(manifest, idx, src, true);
    torch::Tensor y = load_batch(manifest, idx, dst, true);
    torch::Tensor psi;
    if (cfg.use_rf()) psi = label_features(classifier.classifier, x);
    return std::tuple{x, y, psi};
  };

  for (int step = start_step + 1; step <= cfg.steps; ++step) {
    double last_critic_loss = 0.0, last_gp = 0.0;
    try {
      for (int k = 0; k < loss_cfg.n_critic; ++k) {
        auto [x, y, psi] = fetch(mix_seed(cfg.seed, 0xD0, step, k));
        torch::Tensor fake;
        {
          torch::NoGradGuard no_grad;
          fake = generator->forward(x, psi);
        }
        opt_d.zero_grad();
        torch::Tensor d_loss;
        if (cfg.wgan()) {
          auto [loss, gp] = losses::critic_loss(critic_eval, x, y, fake, loss_cfg.lambda_gp,
                                                mix_seed(cfg.seed, 0xD1, step, k));
          d_loss = loss;
          last_gp = gp.item<double>();
        } else {
          torch::Tensor real_score = critic_eval(x, y);
          torch::Tensor fake_score = critic_eval(x, fake);
          d_loss = F::binary_cross_entropy_with_logits(real_score, torch::ones_like(real_score)) +
                   F::binary_cross_entropy_with_logits(fake_score, torch::zeros_like(fake_score));
          last_gp = 0.0;
        }
        last_critic_loss = d_loss.item<double>();
        if (!std::isfinite(last_critic_loss))
          throw training_fault("non-finite critic loss at step " + std::to_string(step),
                               artifacts.final_generator_checkpoint);
        d_loss.backward();
        opt_d.step();
        ++artifacts.critic_step_count;
      }

      auto [x, y, psi] = fetch(mix_seed(cfg.seed, 0xE0, step));
      opt_g.zero_grad();
      torch::Tensor fake = generator->forward(x, psi);
      models::CriticOutput fake_out = critic->forward(x, fake);

      torch::Tensor adv;
      if (cfg.wgan()) {
        adv = -fake_out.score_map.flatten(1).mean();
      } else {
        adv = F::binary_cross_entropy_with_logits(fake_out.score_map,
                                                  torch::ones_like(fake_out.score_map));
      }

      torch::Tensor fm = torch::zeros({}, torch::kFloat32);
      if (cfg.use_fm()) {
        std::vector<torch::Tensor> real_feats;
        {
          torch::NoGradGuard no_grad;
          real_feats = critic->forward(x, y).features;
        }
        fm = losses::fm_loss(real_feats, fake_out.features);
      }
      torch::Tensor perc = torch::zeros({}, torch::kFloat32);
      if (cfg.use_perceptual()) perc = losses::perceptual_loss(y, fake, perceptual);

      torch::Tensor g_loss = adv + loss_cfg.alpha * fm + loss_cfg.beta * perc;
      if (cfg.variant == Variant::A) g_loss = g_loss + cfg.l1_weight * (fake - y).abs().mean();

      if (!std::isfinite(g_loss.item<double>()))
        throw training_fault("non-finite generator loss at step " + std::to_string(step),
                             artifacts.final_generator_checkpoint);
      g_loss.backward();
      opt_g.step();
      ++artifacts.generator_step_count;

      losses::LossReport report = losses::total_generator_loss(
          adv.item<double>(), fm.item<double>(), perc.item<double>(), loss_cfg);
      report.critic_loss = last_critic_loss;
      report.gp = last_gp;
      artifacts.log.push_back(report);
      append_csv_row(csv, step, report);
    } catch (const c10::Error& e) {
      throw training_fault(std::string("training fault at step ") + std::to_string(step) + ": " +
                               e.what_without_backtrace(),
                           artifacts.final_generator_checkpoint);
    }

    if (cfg.sample_interval > 0 && step % cfg.sample_interval == 0 && !val_idx.empty()) {
      torch::NoGradGuard no_grad;
      std::vector<std::size_t> idx(val_idx.begin(),
                                   val_idx.begin() + std::min<std::size_t>(4, val_idx.size()));
      torch::Tensor x = load_batch(manifest, idx, src, true);
      torch::Tensor y = load_batch(manifest, idx, dst, true);
      torch::Tensor psi;
      if (cfg.use_rf()) psi = label_features(classifier.classifier, x);
      torch::Tensor fake = generator->forward(x, psi);
      write_sample_grid((dir / "samples" / ("step_" + std::to_string(step) + ".pgm")).string(),
                        x, fake, y);
    }
    if ((cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) || step == cfg.steps)
      save_all(step);
  }
  if (cfg.steps == start_step) save_all(start_step);

  artifacts.steps_done = cfg.steps;
  return artifacts;
}

// ------------------------------------------------------------------ inference

namespace {

struct RunContext {
  models::Generator generator{nullptr};
  ClassifierArtifacts classifier;
  Direction direction = Direction::t2v;
  bool use_rf = true;
  data::NormStats visual_stats, tactile_stats;
  int image_size = 64;
};

RunContext load_run(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const auto g_path = (dir / "checkpoints" / "latest_g.ckpt").string();
  const auto meta = models::peek_checkpoint_meta(g_path);
  auto find = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : meta.extra)
      if (k == key) return v;
    throw std::runtime_error("generator checkpoint missing field: " + key);
  };

  RunContext ctx;
  ctx.direction = direction_from_string(find("direction"));
  ctx.use_rf = find("use_rf") == "1";
  ctx.image_size = std::stoi(find("image_size"));
  ctx.visual_stats = {std::stod(find("visual_lo")), std::stod(find("visual_hi"))};
  ctx.tactile_stats = {std::stod(find("tactile_lo")), std::stod(find("tactile_hi"))};

  models::GeneratorConfig gcfg;
  gcfg.input_size = ctx.image_size;
  gcfg.n_levels = levels_for(ctx.image_size);
  gcfg.base_channels = std::stoi(find("base_channels"));
  gcfg.rf_blocks = std::stoi(find("rf_blocks"));
  gcfg.use_rf = ctx.use_rf;
  gcfg.label_feature_channels = std::stoi(find("label_feature_channels"));
  ctx.generator = models::Generator(gcfg);
  models::load_checkpoint(g_path, *ctx.generator, meta.config_digest);
  ctx.generator->eval();

  ctx.classifier = load_classifier((dir / "classifier.ckpt").string());
  return ctx;
}

torch::Tensor generate_batch(RunContext& ctx, const torch::Tensor& x_signed) {
  torch::NoGradGuard no_grad;
  torch::Tensor psi;
  if (ctx.use_rf) psi = label_features(ctx.classifier.classifier, x_signed);
  return ctx.generator->forward(x_signed, psi);
}

}  // namespace

GenerateOutput generate_from_run(const std::string& run_dir, const Array& input) {
  RunContext ctx = load_run(run_dir);
  if (input.rank() != 2 || static_cast<int>(input.dims[0]) != ctx.image_size ||
      static_cast<int>(input.dims[1]) != ctx.image_size)
    throw std::invalid_argument("input payload must be " + std::to_string(ctx.image_size) + "x" +
                                std::to_string(ctx.image_size));

  const data::NormStats src_stats =
      ctx.direction == Direction::t2v ? ctx.tactile_stats : ctx.visual_stats;
  const data::NormStats dst_stats =
      ctx.direction == Direction::t2v ? ctx.visual_stats : ctx.tactile_stats;

  torch::Tensor x = arrays_to_batch({input}, src_stats, true);
  torch::Tensor fake = generate_batch(ctx, x);

  GenerateOutput out;
  {
    torch::NoGradGuard no_grad;
    torch::Tensor probs =
        torch::softmax(ctx.classifier.classifier->forward((x + 1.0) * 0.5), 1);
    out.max_softmax = std::get<0>(probs.max(1)).item<double>();
    out.out_of_distribution = out.max_softmax < ctx.classifier.ood_threshold;
  }

  torch::Tensor denorm = (fake[0][0].to(torch::kFloat64) + 1.0) * 0.5 *
                             (dst_stats.hi - dst_stats.lo) +
                         dst_stats.lo;
  Array payload({static_cast<std::uint32_t>(ctx.image_size),
                 static_cast<std::uint32_t>(ctx.image_size)});
  const double* p = denorm.contiguous().const_data_ptr<double>();
  for (std::size_t i = 0; i < payload.data.size(); ++i)
    payload.data[i] = static_cast<float>(p[i]);
  out.payload = std::move(payload);
  return out;
}

RunEvaluation evaluate_run(const std::string& run_dir, const data::DatasetManifest& manifest,
                           ClassifierArtifacts& classifier) {
  RunContext ctx = load_run(run_dir);
  const data::Modality src = source_modality(ctx.direction);
  const data::Modality dst = target_modality(ctx.direction);
  if (classifier.modality != dst)
    throw std::invalid_argument(
        "evaluation classifier must match the generated modality (visual for t2v, tactile for "
        "v2t)");
  const auto test_idx = manifest.split_indices(data::Split::test);
  if (test_idx.empty()) throw std::invalid_argument("empty test split");

  std::vector<int> labels;
  std::vector<torch::Tensor> fake_chunks, real_chunks;
  constexpr std::size_t kChunk = 32;
  for (std::size_t off = 0; off < test_idx.size(); off += kChunk) {
    std::vector<std::size_t> chunk(test_idx.begin() + off,
                                   test_idx.begin() + std::min(off + kChunk, test_idx.size()));
    torch::Tensor x = load_batch(manifest, chunk, src, true);
    torch::Tensor y = load_batch(manifest, chunk, dst, true);
    torch::Tensor fake = generate_batch(ctx, x);
    fake_chunks.push_back((fake + 1.0) * 0.5);  // classifier input range
    real_chunks.push_back((y + 1.0) * 0.5);
    for (std::size_t i : chunk) labels.push_back(manifest.pairs[i].class_id);
  }
  torch::Tensor fakes = torch::cat(fake_chunks, 0);
  torch::Tensor reals = torch::cat(real_chunks, 0);

  RunEvaluation out;
  out.report = eval::classify_generated(classifier.classifier, fakes, labels);
  const auto real_feats = eval::classifier_features(classifier.classifier, reals);
  const auto fake_feats = eval::classifier_features(classifier.classifier, fakes);
  out.report.fid = eval::fid(real_feats, fake_feats);

  torch::Generator gen = torch::make_generator<torch::CPUGeneratorImpl>(12345);
  torch::Tensor noise = torch::rand(reals.sizes(), gen, reals.options());
  out.noise_baseline_fid = eval::fid(real_feats, eval::classifier_features(classifier.classifier, noise));

  std::vector<std::string> names;
  for (const auto& c : manifest.classes) names.push_back(c.name);
  out.report.notes = "fid_features=frozen-task-classifier noise_baseline_fid=" +
                     std::to_string(out.noise_baseline_fid);
  std::ofstream report_out(fs::path(run_dir) / "eval" / "report.txt");
  report_out << eval::report_to_text(out.report, names);
  return out;
}

// -------------------------------------------------------------------- imaging

void write_pgm(const std::string& path, const std::vector<std::vector<double>>& rows01) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write image: " + path);
  const std::size_t h = rows01.size();
  const std::size_t w = h ? rows01.front().size() : 0;
  out << "P5\n" << w << " " << h << "\n255\n";
  for (const auto& row : rows01)
    for (double v : row) {
      const auto byte = static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      out.put(static_cast<char>(byte));
    }
}

void write_loss_curve_pgm(const std::string& path, const std::vector<double>& values) {
  const int h = 200, w = 600;
  std::vector<std::vector<double>> rows(h, std::vector<double>(w, 1.0));
  if (!values.empty()) {
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (hi <= lo) hi = lo + 1.0;
    for (int c = 0; c < w; ++c) {
      const std::size_t i = values.size() > 1
                                ? static_cast<std::size_t>(
                                      static_cast<double>(c) * (values.size() - 1) / (w - 1))
                                : 0;
      const double t = (values[i] - lo) / (hi - lo);
      const int r = std::clamp(static_cast<int>((1.0 - t) * (h - 1)), 0, h - 1);
      rows[r][c] = 0.0;
    }
  }
  write_pgm(path, rows);
}

}  // namespace xmdg::train
