#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmdg/dataset.hpp"
#include "xmdg/evaluation.hpp"
#include "xmdg/losses.hpp"
#include "xmdg/models.hpp"

namespace xmdg::train {

struct training_fault : std::runtime_error {
  explicit training_fault(const std::string& msg, std::string last_checkpoint = {})
      : std::runtime_error(msg), last_good_checkpoint(std::move(last_checkpoint)) {}
  std::string last_good_checkpoint;
};

enum class Direction { t2v, v2t };
enum class Variant { A, B, C, D, E };

std::string to_string(Direction d);
std::string to_string(Variant v);
Direction direction_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);

struct TrainConfig {
  Direction direction = Direction::t2v;
  Variant variant = Variant::E;
  int batch_size = 8;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  // WGAN-GP is markedly more stable with a low first moment decay.
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int steps = 2000;  // generator steps
  std::uint64_t seed = 0;
  losses::LossConfig loss;      // alpha/beta filled per direction unless overridden
  double l1_weight = 100.0;     // pixel loss, Model A only
  int base_channels = 32;
  int critic_base_channels = 64;
  int rf_blocks = 9;
  int checkpoint_interval = 500;
  int sample_interval = 200;

  // Variant switches: A = pix2pix baseline (vanilla cGAN + L1, no RF/FM/P),
  // B = no RF, C = no FM, D = no perceptual, E = full model.
  bool use_rf() const { return variant != Variant::A && variant != Variant::B; }
  bool use_fm() const {
    return variant == Variant::B || variant == Variant::D || variant == Variant::E;
  }
  bool use_perceptual() const {
    return variant == Variant::B || variant == Variant::C || variant == Variant::E;
  }
  bool wgan() const { return variant != Variant::A; }

  // Effective loss weights after the variant mask.
  losses::LossConfig effective_loss() const;
  void apply_direction_defaults();  // alpha/beta = (10,1) for T2V, (100,10) for V2T
  std::string digest() const;
  std::string to_text() const;
};

struct ClassifierArtifacts {
  models::Classifier classifier{nullptr};
  data::Modality modality = data::Modality::visual;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double ood_threshold = 0.0;  // max-softmax below this flags out-of-distribution
};

ClassifierArtifacts pretrain_classifier(data::Modality modality,
                                        const data::DatasetManifest& manifest, int epochs,
                                        std::uint64_t seed);

void save_classifier(ClassifierArtifacts& art, const std::string& path);
ClassifierArtifacts load_classifier(const std::string& path);

struct RunArtifacts {
  std::string run_dir;
  int steps_done = 0;
  std::int64_t critic_step_count = 0;
  std::int64_t generator_step_count = 0;
  std::vector<losses::LossReport> log;
  std::string final_generator_checkpoint;
  std::string final_critic_checkpoint;
};

// Alternating WGAN-GP (or vanilla cGAN for Model A) optimization; writes the
// run directory layout: config snapshot, manifest digest, loss.csv,
// checkpoints/, samples/, eval/. Deterministic per (config, seed, manifest).
RunArtifacts train_gan(const TrainConfig& cfg, const data::DatasetManifest& manifest,
                       ClassifierArtifacts& classifier, const std::string& run_dir,
                       bool overwrite = false, bool resume = false);

struct GenerateOutput {
  Array payload;           // target-modality payload (denormalized)
  bool out_of_distribution = false;
  double max_softmax = 1.0;
};

GenerateOutput generate_from_run(const std::string& run_dir, const Array& input);

struct RunEvaluation {
  eval::EvalReport report;       // accuracy + FID of generated vs real test data
  double noise_baseline_fid = 0.0;
};

RunEvaluation evaluate_run(const std::string& run_dir, const data::DatasetManifest& manifest,
                           ClassifierArtifacts& classifier);

// Batch loading: payloads normalized with manifest stats, [-1,1] for GAN use
// or [0,1] for classifier use. Shape [B,1,S,S], float32.
torch::Tensor load_batch(const data::DatasetManifest& manifest,
                         const std::vector<std::size_t>& pair_indices, data::Modality modality,
                         bool signed_range);

// Grey-scale PGM rendering used for sample grids and loss curves.
void write_pgm(const std::string& path, const std::vector<std::vector<double>>& rows01);
void write_loss_curve_pgm(const std::string& path, const std::vector<double>& values);

}  // namespace xmdg::train
