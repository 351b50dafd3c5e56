#pragma once

#include <torch/torch.h>

#include <span>
#include <string>
#include <vector>

#include "xmdg/models.hpp"

namespace xmdg::eval {

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<int>> confusion;  // rows = ground truth, cols = prediction
  double fid = -1.0;                        // negative when not computed
  int n_samples = 0;
  std::string config_digest;
  std::string notes;
};

// Frozen-classifier accuracy and confusion matrix on generated data.
// `samples` must be [N,1,S,S] in the classifier's [0,1] input range.
EvalReport classify_generated(models::Classifier& classifier, const torch::Tensor& samples,
                              const std::vector<int>& true_classes);

// Frechet distance between Gaussians fit to the two feature sets (rows =
// samples). Matrix square root via symmetric eigendecomposition with a small
// diagonal jitter retry.
double fid(const std::vector<std::vector<double>>& features_real,
           const std::vector<std::vector<double>>& features_gen);

// Classic DTW with steps {(1,0),(0,1),(1,1)} and absolute-difference cost.
double dtw_distance(std::span<const double> a, std::span<const double> b);

// Mean over dimensions of the per-dimension unbiased sample variance.
double intra_class_variance(const std::vector<std::vector<double>>& class_samples);

// Pooled penultimate classifier features, one row per sample; input in [0,1].
std::vector<std::vector<double>> classifier_features(models::Classifier& classifier,
                                                     const torch::Tensor& samples);

std::string report_to_text(const EvalReport& r, const std::vector<std::string>& class_names);

}  // namespace xmdg::eval
