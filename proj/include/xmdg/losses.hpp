#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "xmdg/models.hpp"

namespace xmdg::losses {

struct LossConfig {
  double alpha = 10.0;    // feature-matching weight (10 T2V, 100 V2T)
  double beta = 1.0;      // perceptual weight (1 T2V, 10 V2T)
  double lambda_gp = 10.0;
  int n_critic = 5;

  void validate() const;
};

struct LossReport {
  double l_adv = 0.0;
  double l_fm = 0.0;
  double l_p = 0.0;
  double l_total = 0.0;
  double critic_loss = 0.0;
  double gp = 0.0;
};

// Per-sample critic score map reduced to a scalar per sample; any output shape
// with a leading batch dimension is accepted.
using CriticFn = std::function<torch::Tensor(const torch::Tensor& condition,
                                             const torch::Tensor& candidate)>;

CriticFn critic_fn(models::Critic critic);

// Sum over layers of the per-layer mean absolute difference.
torch::Tensor fm_loss(const std::vector<torch::Tensor>& real_feats,
                      const std::vector<torch::Tensor>& fake_feats);

// Small frozen conv network used as the perceptual feature extractor at desk
// scale; tap outputs are collected after every stage.
class PerceptualExtractorImpl : public torch::nn::Module {
 public:
  PerceptualExtractorImpl(int taps = 3, int channels = 16, std::uint64_t seed = 17);
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList stages_;
};
TORCH_MODULE(PerceptualExtractor);

// Mean over tap layers of the per-layer L2 distance normalized by element count.
torch::Tensor perceptual_loss(const torch::Tensor& y, const torch::Tensor& y_tilde,
                              PerceptualExtractor& extractor);

// E[(||grad_x D(cond, x_hat)||_2 - 1)^2] on per-sample random interpolates.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& condition,
                               const torch::Tensor& real, const torch::Tensor& fake,
                               std::uint64_t seed);

// Wasserstein critic loss E[D(fake)] - E[D(real)] + lambda_gp * gp.
std::pair<torch::Tensor, torch::Tensor> critic_loss(const CriticFn& critic,
                                                    const torch::Tensor& condition,
                                                    const torch::Tensor& real,
                                                    const torch::Tensor& fake, double lambda_gp,
                                                    std::uint64_t seed);

torch::Tensor generator_adv_loss(const CriticFn& critic, const torch::Tensor& condition,
                                 const torch::Tensor& fake);

LossReport total_generator_loss(double l_adv, double l_fm, double l_p, const LossConfig& cfg);

}  // namespace xmdg::losses
