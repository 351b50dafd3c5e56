#include "xmdg/losses.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <stdexcept>

namespace xmdg::losses {

void LossConfig::validate() const {
  if (alpha < 0 || beta < 0 || lambda_gp < 0)
    throw std::invalid_argument("loss weights must be non-negative");
  if (n_critic < 1) throw std::invalid_argument("n_critic must be >= 1");
}

CriticFn critic_fn(models::Critic critic) {
  return [critic](const torch::Tensor& condition, const torch::Tensor& candidate) mutable {
    return critic->forward(condition, candidate).score_map;
  };
}

namespace {

torch::Tensor per_sample_score(const torch::Tensor& raw) {
  return raw.dim() > 1 ? raw.flatten(1).mean(1) : raw;
}

}  // namespace

torch::Tensor fm_loss(const std::vector<torch::Tensor>& real_feats,
                      const std::vector<torch::Tensor>& fake_feats) {
  if (real_feats.size() != fake_feats.size() || real_feats.empty())
    throw std::invalid_argument("feature lists must be non-empty and of equal length");
  torch::Tensor total;
  for (std::size_t i = 0; i < real_feats.size(); ++i) {
    if (real_feats[i].sizes() != fake_feats[i].sizes())
      throw std::invalid_argument("feature shape mismatch at layer " + std::to_string(i));
    torch::Tensor term = (real_feats[i] - fake_feats[i]).abs().mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

PerceptualExtractorImpl::PerceptualExtractorImpl(int taps, int channels, std::uint64_t seed) {
  if (taps < 1) throw std::invalid_argument("extractor needs at least one tap");
  stages_ = torch::nn::ModuleList();
  int in = 1;
  for (int t = 0; t < taps; ++t) {
    torch::nn::Sequential stage(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, channels, 3).stride(2).padding(1)),
        torch::nn::Tanh());
    stages_->push_back(stage);
    in = channels;
  }
  register_module("stages", stages_);
  models::init_weights(*this, seed);
  models::freeze(*this);
}

std::vector<torch::Tensor> PerceptualExtractorImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> taps;
  torch::Tensor h = x;
  for (const auto& stage : *stages_) {
    h = stage->as<torch::nn::Sequential>()->forward(h);
    taps.push_back(h);
  }
  return taps;
}

torch::Tensor perceptual_loss(const torch::Tensor& y, const torch::Tensor& y_tilde,
                              PerceptualExtractor& extractor) {
  if (y.sizes() != y_tilde.sizes()) throw std::invalid_argument("input shape mismatch");
  const auto real_taps = extractor->forward(y);
  const auto fake_taps = extractor->forward(y_tilde);
  torch::Tensor total;
  for (std::size_t i = 0; i < real_taps.size(); ++i) {
    torch::Tensor diff = (real_taps[i] - fake_taps[i]).flatten(1);
    const double m = static_cast<double>(diff.size(1));
    torch::Tensor term = (diff.norm(2, 1) / m).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(real_taps.size());
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& condition,
                               const torch::Tensor& real, const torch::Tensor& fake,
                               std::uint64_t seed) {
  if (real.sizes() != fake.sizes()) throw std::invalid_argument("real/fake shape mismatch");
  const auto batch = real.size(0);

  std::vector<std::int64_t> u_shape(real.dim(), 1);
  u_shape[0] = batch;
  torch::Generator gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  torch::Tensor u = torch::rand(u_shape, gen, real.options());

  torch::Tensor x_hat =
      (u * real.detach() + (1.0 - u) * fake.detach()).requires_grad_(true);
  torch::Tensor scores = per_sample_score(critic(condition, x_hat));
  torch::Tensor grad = torch::autograd::grad({scores.sum()}, {x_hat},
                                             /*grad_outputs=*/{},
                                             /*retain_graph=*/true,
                                             /*create_graph=*/true)[0];
  torch::Tensor norms = grad.flatten(1).norm(2, 1);
  return (norms - 1.0).pow(2).mean();
}

std::pair<torch::Tensor, torch::Tensor> critic_loss(const CriticFn& critic,
                                                    const torch::Tensor& condition,
                                                    const torch::Tensor& real,
                                                    const torch::Tensor& fake, double lambda_gp,
                                                    std::uint64_t seed) {
  torch::Tensor real_score = per_sample_score(critic(condition, real.detach())).mean();
  torch::Tensor fake_score = per_sample_score(critic(condition, fake.detach())).mean();
  torch::Tensor gp = gradient_penalty(critic, condition, real, fake, seed);
  torch::Tensor loss = fake_score - real_score + lambda_gp * gp;
  if (!std::isfinite(loss.item<double>()))
    throw std::runtime_error("non-finite critic loss");
  return {loss, gp};
}

torch::Tensor generator_adv_loss(const CriticFn& critic, const torch::Tensor& condition,
                                 const torch::Tensor& fake) {
  return -per_sample_score(critic(condition, fake)).mean();
}

LossReport total_generator_loss(double l_adv, double l_fm, double l_p, const LossConfig& cfg) {
  if (!std::isfinite(l_adv) || !std::isfinite(l_fm) || !std::isfinite(l_p))
    throw std::invalid_argument("non-finite loss term");
  LossReport r;
  r.l_adv = l_adv;
  r.l_fm = l_fm;
  r.l_p = l_p;
  r.l_total = l_adv + cfg.alpha * l_fm + cfg.beta * l_p;
  return r;
}

}  // namespace xmdg::losses
