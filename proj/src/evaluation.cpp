#include "xmdg/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace xmdg::eval {

EvalReport classify_generated(models::Classifier& classifier, const torch::Tensor& samples,
                              const std::vector<int>& true_classes) {
  if (samples.size(0) != static_cast<std::int64_t>(true_classes.size()))
    throw std::invalid_argument("sample/label count mismatch");
  const int n_classes = classifier->config().n_classes;
  for (int c : true_classes)
    if (c < 0 || c >= n_classes) throw std::invalid_argument("label outside the class set");

  torch::NoGradGuard no_grad;
  classifier->eval();
  torch::Tensor logits = classifier->forward(samples);
  torch::Tensor pred = logits.argmax(1);

  EvalReport r;
  r.n_samples = static_cast<int>(true_classes.size());
  r.confusion.assign(n_classes, std::vector<int>(n_classes, 0));
  int correct = 0;
  for (std::size_t i = 0; i < true_classes.size(); ++i) {
    const int p = static_cast<int>(pred[i].item<std::int64_t>());
    r.confusion[true_classes[i]][p] += 1;
    if (p == true_classes[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / r.n_samples;
  r.per_class_accuracy.resize(n_classes, 0.0);
  for (int c = 0; c < n_classes; ++c) {
    int row_total = 0;
    for (int p = 0; p < n_classes; ++p) row_total += r.confusion[c][p];
    r.per_class_accuracy[c] = row_total > 0 ? static_cast<double>(r.confusion[c][c]) / row_total : 0.0;
  }
  r.config_digest = classifier->config().digest();
  return r;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric PSD square root; eigenvalues clamped at zero.
MatrixXd sym_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

void moments(const std::vector<std::vector<double>>& rows, VectorXd& mu, MatrixXd& sigma) {
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows.front().size());
  MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rows[i][j];
  mu = x.colwise().mean();
  MatrixXd centered = x.rowwise() - mu.transpose();
  sigma = n > 1 ? MatrixXd(centered.transpose() * centered / (n - 1.0))
                : MatrixXd::Zero(d, d);
}

}  // namespace

double fid(const std::vector<std::vector<double>>& features_real,
           const std::vector<std::vector<double>>& features_gen) {
  if (features_real.empty() || features_gen.empty())
    throw std::invalid_argument("fid requires non-empty feature sets");
  const std::size_t d = features_real.front().size();
  for (const auto& r : features_real)
    if (r.size() != d) throw std::invalid_argument("inconsistent feature dimension");
  for (const auto& r : features_gen)
    if (r.size() != d) throw std::invalid_argument("inconsistent feature dimension");

  VectorXd mu_r, mu_g;
  MatrixXd sig_r, sig_g;
  moments(features_real, mu_r, sig_r);
  moments(features_gen, mu_g, sig_g);

  // tr((Sr Sg)^{1/2}) = tr((Sr^{1/2} Sg Sr^{1/2})^{1/2}), computed on the
  // symmetric form; retried with diagonal jitter on numerical failure.
  double tr_mean = 0.0;
  for (double jitter : {0.0, 1e-10, 1e-8, 1e-6}) {
    try {
      MatrixXd jr = sig_r + jitter * MatrixXd::Identity(sig_r.rows(), sig_r.cols());
      MatrixXd jg = sig_g + jitter * MatrixXd::Identity(sig_g.rows(), sig_g.cols());
      MatrixXd root_r = sym_sqrt(jr);
      tr_mean = sym_sqrt(root_r * jg * root_r).trace();
      break;
    } catch (const std::runtime_error&) {
      if (jitter >= 1e-6) throw;
    }
  }
  const double mean_term = (mu_r - mu_g).squaredNorm();
  return mean_term + sig_r.trace() + sig_g.trace() - 2.0 * tr_mean;
}

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw requires non-empty sequences");
  const std::size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = std::abs(a[i - 1] - b[j - 1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double intra_class_variance(const std::vector<std::vector<double>>& class_samples) {
  if (class_samples.size() < 2)
    throw std::invalid_argument("intra-class variance needs at least 2 samples");
  const std::size_t d = class_samples.front().size();
  for (const auto& s : class_samples)
    if (s.size() != d) throw std::invalid_argument("inconsistent sample dimension");
  const double n = static_cast<double>(class_samples.size());
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const auto& s : class_samples) mean += s[j];
    mean /= n;
    double ss = 0.0;
    for (const auto& s : class_samples) ss += (s[j] - mean) * (s[j] - mean);
    total += ss / (n - 1.0);
  }
  return total / static_cast<double>(d);
}

std::vector<std::vector<double>> classifier_features(models::Classifier& classifier,
                                                     const torch::Tensor& samples) {
  torch::NoGradGuard no_grad;
  classifier->eval();
  auto [logits, fmap] = classifier->forward_with_features(samples);
  torch::Tensor pooled = torch::adaptive_avg_pool2d(fmap, {1, 1}).flatten(1).to(torch::kFloat64);
  std::vector<std::vector<double>> out(pooled.size(0));
  for (std::int64_t i = 0; i < pooled.size(0); ++i) {
    const double* row = pooled[i].const_data_ptr<double>();
    out[i].assign(row, row + pooled.size(1));
  }
  return out;
}

std::string report_to_text(const EvalReport& r, const std::vector<std::string>& class_names) {
  std::ostringstream out;
  out << "samples " << r.n_samples << "\n";
  out << "accuracy " << r.accuracy << "\n";
  if (r.fid >= 0) out << "fid " << r.fid << "\n";
  out << "classifier_digest " << r.config_digest << "\n";
  if (!r.notes.empty()) out << "notes " << r.notes << "\n";
  out << "confusion rows=truth cols=prediction\n";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) {
    out << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ":";
    for (int v : r.confusion[c]) out << " " << v;
    out << "  (acc " << r.per_class_accuracy[c] << ")\n";
  }
  return out.str();
}

}  // namespace xmdg::eval
