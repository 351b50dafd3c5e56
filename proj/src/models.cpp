#include "xmdg/models.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "xmdg/digest.hpp"

namespace F = torch::nn::functional;

namespace xmdg::models {

namespace {

int capped(int base, int level, int cap) { return std::min(base << level, cap); }

torch::nn::Conv2d down_conv(int in, int out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

torch::nn::InstanceNorm2d instance_norm(int ch) {
  return torch::nn::InstanceNorm2d(
      torch::nn::InstanceNorm2dOptions(ch).affine(false).track_running_stats(false));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (input_size != (1 << n_levels))
    throw std::invalid_argument("input_size must equal 2^n_levels");
  if (base_channels < 1 || max_channels < base_channels)
    throw std::invalid_argument("bad channel schedule");
  if (rf_blocks < 0) throw std::invalid_argument("rf_blocks must be >= 0");
  if (use_rf && label_feature_channels < 1)
    throw std::invalid_argument("label_feature_channels must be >= 1");
}

int GeneratorConfig::level_channels(int level) const {
  return capped(base_channels, level, max_channels);
}

std::string GeneratorConfig::digest() const {
  std::ostringstream s;
  s << "generator " << input_size << " " << base_channels << " " << max_channels << " "
    << n_levels << " " << rf_blocks << " " << label_feature_channels << " " << use_rf;
  return sha256_hex(s.str());
}

std::string CriticConfig::digest() const {
  std::ostringstream s;
  s << "critic " << input_size << " " << base_channels << " " << max_channels << " " << n_layers;
  return sha256_hex(s.str());
}

int ClassifierConfig::feature_channels() const {
  return capped(base_channels, n_blocks - 1, 256);
}

std::string ClassifierConfig::digest() const {
  std::ostringstream s;
  s << "classifier " << input_size << " " << n_classes << " " << base_channels << " " << n_blocks;
  return sha256_hex(s.str());
}

// ---------------------------------------------------------------- Classifier

ClassifierImpl::ClassifierImpl(ClassifierConfig cfg) : cfg_(cfg) {
  if (cfg_.n_classes < 1) throw std::invalid_argument("classifier needs at least one class");
  blocks_ = torch::nn::ModuleList();
  int in = 1;
  for (int b = 0; b < cfg_.n_blocks; ++b) {
    const int out = capped(cfg_.base_channels, b, 256);
    torch::nn::Sequential block(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1)),
        torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(8, out), out)),
        torch::nn::ReLU());
    blocks_->push_back(block);
    in = out;
  }
  head_ = torch::nn::Linear(in, cfg_.n_classes);
  register_module("blocks", blocks_);
  register_module("head", head_);
}

std::pair<torch::Tensor, torch::Tensor> ClassifierImpl::forward_with_features(
    const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != cfg_.input_size ||
      x.size(3) != cfg_.input_size)
    throw std::invalid_argument("classifier input shape mismatch");
  torch::Tensor h = x;
  for (const auto& block : *blocks_) h = block->as<torch::nn::Sequential>()->forward(h);
  torch::Tensor pooled = F::adaptive_avg_pool2d(h, F::AdaptiveAvgPool2dFuncOptions(1))
                             .flatten(1);
  return {head_->forward(pooled), h};
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& x) {
  return forward_with_features(x).first;
}

// ------------------------------------------------------------------- Encoder

EncoderImpl::EncoderImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  downs_ = torch::nn::ModuleList();
  int in = 1;
  for (int l = 0; l < cfg_.n_levels; ++l) {
    const int out = cfg_.level_channels(l);
    torch::nn::Sequential level;
    level->push_back(down_conv(in, out));
    // No normalization on the outermost layer, nor at 1x1 spatial extent.
    if (l > 0 && l < cfg_.n_levels - 1) level->push_back(instance_norm(out));
    level->push_back(torch::nn::ReLU());
    downs_->push_back(level);
    in = out;
  }
  register_module("downs", downs_);
}

EncoderFeature EncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != cfg_.input_size ||
      x.size(3) != cfg_.input_size)
    throw std::invalid_argument("encoder input shape mismatch");
  EncoderFeature out;
  torch::Tensor h = x;
  for (const auto& level : *downs_) {
    h = level->as<torch::nn::Sequential>()->forward(h);
    out.skips.push_back(h);
  }
  out.bottleneck = h;
  return out;
}

// ------------------------------------------------------------------- RfFuse

RfFuseImpl::RfFuseImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  const int ce = cfg_.level_channels(cfg_.n_levels - 1);
  proj_ = torch::nn::Conv2d(
      torch::nn::Conv2dOptions(ce + cfg_.label_feature_channels, ce, 1));
  blocks_ = torch::nn::ModuleList();
  for (int b = 0; b < cfg_.rf_blocks; ++b) {
    torch::nn::Sequential block(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(ce, ce, 3).padding(1)),
        torch::nn::ReLU(),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(ce, ce, 3).padding(1)));
    blocks_->push_back(block);
  }
  register_module("proj", proj_);
  register_module("blocks", blocks_);
}

torch::Tensor RfFuseImpl::forward(const torch::Tensor& phi, const torch::Tensor& psi) {
  if (!psi.defined()) throw std::invalid_argument("residue fusion requires a label feature");
  torch::Tensor resized = psi;
  if (psi.size(2) != phi.size(2) || psi.size(3) != phi.size(3))
    resized = F::interpolate(psi, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{phi.size(2), phi.size(3)})
                                      .mode(torch::kNearest));
  torch::Tensor h = proj_->forward(torch::cat({phi, resized}, 1));
  for (const auto& block : *blocks_)
    h = h + block->as<torch::nn::Sequential>()->forward(h);
  return h;
}

// ------------------------------------------------------------------- Decoder

DecoderImpl::DecoderImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  ups_ = torch::nn::ModuleList();
  const int n = cfg_.n_levels;
  for (int i = 0; i < n; ++i) {
    const int in = i == 0 ? cfg_.level_channels(n - 1) : 2 * cfg_.level_channels(n - 1 - i);
    const int out = i == n - 1 ? 1 : cfg_.level_channels(n - 2 - i);
    torch::nn::Sequential level;
    level->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
    if (i < n - 1) {
      level->push_back(instance_norm(out));
      level->push_back(torch::nn::ReLU());
    } else {
      level->push_back(torch::nn::Tanh());
    }
    ups_->push_back(level);
  }
  register_module("ups", ups_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent,
                                   const std::vector<torch::Tensor>& skips) {
  const int n = cfg_.n_levels;
  if (static_cast<int>(skips.size()) != n)
    throw std::invalid_argument("decoder expects one skip per encoder level");
  torch::Tensor h = latent;
  for (int i = 0; i < n; ++i) {
    h = (*ups_)[i]->as<torch::nn::Sequential>()->forward(h);
    if (i < n - 1) {
      const torch::Tensor& skip = skips[n - 2 - i];
      if (skip.size(2) != h.size(2) || skip.size(3) != h.size(3))
        throw std::invalid_argument("skip connection shape mismatch");
      h = torch::cat({h, skip}, 1);
    }
  }
  return h;
}

// ----------------------------------------------------------------- Generator

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = Encoder(cfg_);
  decoder_ = Decoder(cfg_);
  register_module("encoder", encoder_);
  register_module("decoder", decoder_);
  if (cfg_.use_rf) {
    rf_ = RfFuse(cfg_);
    register_module("rf", rf_);
  }
}

torch::Tensor GeneratorImpl::fuse(const torch::Tensor& phi, const torch::Tensor& psi) {
  return cfg_.use_rf ? rf_->forward(phi, psi) : phi;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, const torch::Tensor& psi) {
  EncoderFeature enc = encoder_->forward(x);
  torch::Tensor latent = fuse(enc.bottleneck, psi);
  return decoder_->forward(latent, enc.skips);
}

// -------------------------------------------------------------------- Critic

CriticImpl::CriticImpl(CriticConfig cfg) : cfg_(cfg) {
  if (cfg_.input_size >> cfg_.n_layers < 1)
    throw std::invalid_argument("too many critic layers for the input size");
  layers_ = torch::nn::ModuleList();
  int in = 2;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const int out = capped(cfg_.base_channels, l, cfg_.max_channels);
    const int spatial = cfg_.input_size >> (l + 1);
    torch::nn::Sequential layer;
    layer->push_back(down_conv(in, out));
    if (l > 0)
      layer->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions(
          {static_cast<std::int64_t>(out), spatial, spatial})));
    layer->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    layers_->push_back(layer);
    in = out;
  }
  score_ = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, 4).stride(1).padding(1));
  register_module("layers", layers_);
  register_module("score", score_);
}

CriticOutput CriticImpl::forward(const torch::Tensor& condition, const torch::Tensor& candidate) {
  if (condition.sizes() != candidate.sizes())
    throw std::invalid_argument("condition/candidate shape mismatch");
  if (condition.size(2) != cfg_.input_size || condition.size(3) != cfg_.input_size)
    throw std::invalid_argument("critic input size mismatch");
  CriticOutput out;
  torch::Tensor h = torch::cat({condition, candidate}, 1);
  for (const auto& layer : *layers_) {
    h = layer->as<torch::nn::Sequential>()->forward(h);
    out.features.push_back(h);
  }
  out.score_map = score_->forward(h);
  return out;
}

// ----------------------------------------------------------------- utilities

void init_weights(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(static_cast<std::int64_t>(seed));
  for (const auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::xavier_normal_(conv->weight);
      if (conv->bias.defined()) torch::nn::init::zeros_(conv->bias);
    } else if (auto* convt = m->as<torch::nn::ConvTranspose2d>()) {
      torch::nn::init::xavier_normal_(convt->weight);
      if (convt->bias.defined()) torch::nn::init::zeros_(convt->bias);
    } else if (auto* linear = m->as<torch::nn::Linear>()) {
      torch::nn::init::xavier_normal_(linear->weight);
      if (linear->bias.defined()) torch::nn::init::zeros_(linear->bias);
    }
  }
}

void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
  module.eval();
}

std::string parameter_digest(const torch::nn::Module& module) {
  Sha256 hash;
  for (const auto& item : module.named_parameters()) {
    hash.update(item.key().data(), item.key().size());
    torch::Tensor t = item.value().detach().cpu().contiguous();
    hash.update(t.data_ptr(), t.numel() * t.element_size());
  }
  return hash.hex_digest();
}

void save_checkpoint(const std::string& path, torch::nn::Module& module,
                     const CheckpointMeta& meta, torch::optim::Optimizer* optimizer) {
  torch::serialize::OutputArchive root;
  root.write("version", torch::IValue(meta.version));
  root.write("step", torch::IValue(meta.step));
  root.write("config_digest", torch::IValue(meta.config_digest));
  root.write("n_extra", torch::IValue(static_cast<std::int64_t>(meta.extra.size())));
  for (std::size_t i = 0; i < meta.extra.size(); ++i) {
    root.write("extra_k" + std::to_string(i), torch::IValue(meta.extra[i].first));
    root.write("extra_v" + std::to_string(i), torch::IValue(meta.extra[i].second));
  }
  torch::serialize::OutputArchive marchive;
  module.save(marchive);
  root.write("module", marchive);
  if (optimizer) {
    torch::serialize::OutputArchive oarchive;
    optimizer->save(oarchive);
    root.write("optimizer", oarchive);
  }
  root.save_to(path);
}

namespace {

CheckpointMeta read_meta(torch::serialize::InputArchive& root) {
  CheckpointMeta meta;
  torch::IValue v;
  root.read("version", v);
  meta.version = v.toInt();
  root.read("step", v);
  meta.step = v.toInt();
  root.read("config_digest", v);
  meta.config_digest = v.toStringRef();
  root.read("n_extra", v);
  const auto n = v.toInt();
  for (std::int64_t i = 0; i < n; ++i) {
    torch::IValue k, val;
    root.read("extra_k" + std::to_string(i), k);
    root.read("extra_v" + std::to_string(i), val);
    meta.extra.emplace_back(k.toStringRef(), val.toStringRef());
  }
  return meta;
}

}  // namespace

CheckpointMeta load_checkpoint(const std::string& path, torch::nn::Module& module,
                               const std::string& expected_digest, bool force,
                               torch::optim::Optimizer* optimizer) {
  torch::serialize::InputArchive root;
  root.load_from(path);
  CheckpointMeta meta = read_meta(root);
  if (!force && !expected_digest.empty() && meta.config_digest != expected_digest)
    throw std::runtime_error("checkpoint config digest mismatch for " + path +
                             " (pass force to override)");
  torch::serialize::InputArchive marchive;
  root.read("module", marchive);
  module.load(marchive);
  if (optimizer) {
    torch::serialize::InputArchive oarchive;
    root.read("optimizer", oarchive);
    optimizer->load(oarchive);
  }
  return meta;
}

CheckpointMeta peek_checkpoint_meta(const std::string& path) {
  torch::serialize::InputArchive root;
  root.load_from(path);
  return read_meta(root);
}

}  // namespace xmdg::models
