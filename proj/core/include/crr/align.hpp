#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crr/feature_store.hpp"

namespace crr {

/// Encoder outputs for one training batch, with a domain tag and class id
/// per row. All alignment math runs in 64-bit.
struct Batch {
  std::size_t rows = 0;
  std::size_t dims = 0;
  std::vector<double> values;        // rows * dims, E(X)
  std::vector<std::uint8_t> domain;  // 0 = image, 1 = sketch
  std::vector<std::uint32_t> labels;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * dims, dims};
  }
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as the differentiated argument
};

/// KL(N(0,1) || N(mu_d, sigma_d^2 + eps)) averaged over dimensions, with
/// mu_d / sigma_d^2 the per-dimension batch mean and population variance:
///   mean_d [ log sqrt(v_d) + (1 + mu_d^2) / (2 v_d) - 1/2 ],  v = sigma^2 + eps.
/// Zero (up to eps) exactly when every dimension has mean 0 and variance 1.
/// Returns the analytic gradient with respect to every batch entry.
LossGrad dist_loss(const Batch& batch);

inline constexpr double kDistLossEpsilon = 1e-6;

/// Mean softmax cross-entropy; grad = (softmax - onehot) / N, laid out like
/// `logits` (rows * classes, row-major).
LossGrad cls_loss(std::span<const double> logits, std::size_t rows,
                  std::size_t classes, std::span<const std::uint32_t> labels);

struct TrainConfig {
  double lambda1 = 1.0;   // classification weight
  double lambda3 = 0.1;   // distribution alignment weight
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t output_dim = 16;  // encoder output width D
  std::size_t hidden_dim = 0;   // 0 = linear encoder, else tanh hidden width
};

struct TotalLoss {
  double loss = 0.0;
  double cls_part = 0.0;
  double dist_part = 0.0;
  std::vector<double> grad_values;  // lambda3 * dist gradient wrt batch values
  std::vector<double> grad_logits;  // lambda1 * cls gradient wrt logits
};

/// lambda1 * cls_loss + lambda3 * dist_loss; gradients combine linearly.
TotalLoss total_loss(const Batch& batch, std::span<const double> logits,
                     std::size_t classes, std::span<const std::uint32_t> labels,
                     const TrainConfig& cfg);

/// Shared two-domain encoder: optional tanh hidden layer, then linear.
struct ToyEncoder {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t hidden_dim = 0;        // 0 = linear
  std::vector<double> w_hidden;      // input_dim * hidden_dim
  std::vector<double> b_hidden;      // hidden_dim
  std::vector<double> w_out;         // (hidden_dim ? hidden_dim : input_dim) * output_dim
  std::vector<double> b_out;         // output_dim

  /// Forward pass for a row of raw features.
  std::vector<double> encode_row(std::span<const float> x) const;
  /// Forward pass for a whole matrix.
  std::vector<double> encode_all(const FeatureMatrix& x) const;

  bool operator==(const ToyEncoder&) const = default;
};

struct TrainTrace {
  std::vector<double> cls_loss;
  std::vector<double> dist_loss;
  std::vector<double> total_loss;
  std::vector<double> cross_domain_pos_dist;  // mean same-class sketch-image distance
  std::vector<double> max_abs_mean;           // output moment diagnostics
  std::vector<double> max_abs_var_dev;        // max |sigma_d^2 - 1|

  std::size_t epochs() const { return total_loss.size(); }
};

struct TrainResult {
  ToyEncoder encoder;
  std::vector<double> head_weights;  // output_dim * classes
  std::vector<double> head_bias;     // classes
  std::size_t classes = 0;
  TrainTrace trace;
};

/// Mini-batch gradient descent on total_loss over both domains through the
/// shared encoder. Class ids are unified across the two label lists by
/// name. Deterministic for a fixed config; throws on divergence (NaN loss).
TrainResult train_toy(const FeatureMatrix& images, const LabelList& image_labels,
                      const FeatureMatrix& sketches, const LabelList& sketch_labels,
                      const TrainConfig& cfg);

/// Trace CSV: epoch,cls_loss,dist_loss,total,cross_domain_pos_dist.
std::string trace_to_csv(const TrainTrace& trace);

/// CRTE container, bit-exact round trip.
void save_encoder(const ToyEncoder& encoder, const std::filesystem::path& path);
ToyEncoder load_encoder(const std::filesystem::path& path);

}  // namespace crr
