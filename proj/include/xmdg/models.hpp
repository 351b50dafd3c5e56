#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace xmdg::models {

struct GeneratorConfig {
  int input_size = 64;
  int base_channels = 64;
  int max_channels = 512;
  int n_levels = 6;  // input_size == 2^n_levels, bottleneck is 1x1
  int rf_blocks = 9;
  int label_feature_channels = 128;  // channels of the classifier feature map
  bool use_rf = true;

  void validate() const;
  int level_channels(int level) const;  // channels after down-conv `level` (0-based)
  std::string digest() const;
};

struct CriticConfig {
  int input_size = 64;
  int base_channels = 64;
  int max_channels = 512;
  int n_layers = 4;  // stride-2 downsampling layers

  std::string digest() const;
};

struct ClassifierConfig {
  int input_size = 64;
  int n_classes = 3;
  int base_channels = 32;
  int n_blocks = 4;  // stride-2 conv blocks

  int feature_channels() const;
  std::string digest() const;
};

struct EncoderFeature {
  torch::Tensor bottleneck;
  std::vector<torch::Tensor> skips;  // per level, outermost first
};

struct CriticOutput {
  torch::Tensor score_map;               // [B,1,h,w], no sigmoid
  std::vector<torch::Tensor> features;   // per-layer activations
};

// Compact conv classifier: stride-2 blocks, global average pool, linear head.
// forward_with_features returns the pre-pool feature map used as the label
// feature for residue fusion.
class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(ClassifierConfig cfg);
  torch::Tensor forward(const torch::Tensor& x);  // logits; x in [0,1]
  std::pair<torch::Tensor, torch::Tensor> forward_with_features(const torch::Tensor& x);

  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  torch::nn::ModuleList blocks_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Classifier);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const GeneratorConfig& cfg);
  EncoderFeature forward(const torch::Tensor& x);

 private:
  GeneratorConfig cfg_;
  torch::nn::ModuleList downs_;
};
TORCH_MODULE(Encoder);

// Residue fusion: resize psi to phi's spatial size, 1x1-project the channel
// concatenation back to the bottleneck width, then refine through residual blocks.
class RfFuseImpl : public torch::nn::Module {
 public:
  explicit RfFuseImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& phi, const torch::Tensor& psi);

 private:
  GeneratorConfig cfg_;
  torch::nn::Conv2d proj_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(RfFuse);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& latent, const std::vector<torch::Tensor>& skips);

 private:
  GeneratorConfig cfg_;
  torch::nn::ModuleList ups_;
};
TORCH_MODULE(Decoder);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig cfg);
  // psi may be undefined when the config disables residue fusion.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& psi = {});

  EncoderFeature encode(const torch::Tensor& x) { return encoder_->forward(x); }
  torch::Tensor fuse(const torch::Tensor& phi, const torch::Tensor& psi);
  torch::Tensor decode(const torch::Tensor& latent, const std::vector<torch::Tensor>& skips) {
    return decoder_->forward(latent, skips);
  }
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  Encoder encoder_{nullptr};
  RfFuse rf_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(Generator);

// PatchGAN Wasserstein critic over the channel concatenation of condition and
// candidate. Layer normalization (gradient-penalty safe), LeakyReLU.
class CriticImpl : public torch::nn::Module {
 public:
  explicit CriticImpl(CriticConfig cfg);
  CriticOutput forward(const torch::Tensor& condition, const torch::Tensor& candidate);

  const CriticConfig& config() const { return cfg_; }

 private:
  CriticConfig cfg_;
  torch::nn::ModuleList layers_;
  torch::nn::Conv2d score_{nullptr};
};
TORCH_MODULE(Critic);

// Xavier-normal conv/linear weights, zero biases, deterministic per seed.
void init_weights(torch::nn::Module& module, std::uint64_t seed);

void freeze(torch::nn::Module& module);
std::string parameter_digest(const torch::nn::Module& module);

struct CheckpointMeta {
  std::int64_t version = 1;
  std::int64_t step = 0;
  std::string config_digest;
  std::vector<std::pair<std::string, std::string>> extra;  // free-form key/value
};

void save_checkpoint(const std::string& path, torch::nn::Module& module,
                     const CheckpointMeta& meta, torch::optim::Optimizer* optimizer = nullptr);

// Throws unless the stored config digest matches `expected_digest` (pass empty
// or set force=true to skip the check).
CheckpointMeta load_checkpoint(const std::string& path, torch::nn::Module& module,
                               const std::string& expected_digest, bool force = false,
                               torch::optim::Optimizer* optimizer = nullptr);

CheckpointMeta peek_checkpoint_meta(const std::string& path);

}  // namespace xmdg::models
