#include "crr/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "binary_io.hpp"

namespace crr {

LossGrad dist_loss(const Batch& batch) {
  if (batch.rows < 2)
    throw argument_error("dist_loss: batch must hold at least 2 rows");
  const std::size_t n = batch.rows, dims = batch.dims;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_d = 1.0 / static_cast<double>(dims);

  LossGrad out;
  out.grad.assign(n * dims, 0.0);
  for (std::size_t d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += batch.values[i * dims + d];
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = batch.values[i * dims + d] - mean;
      var += c * c;
    }
    var *= inv_n;  // population variance
    const double v = var + kDistLossEpsilon;
    out.loss += 0.5 * std::log(v) + (1.0 + mean * mean) / (2.0 * v) - 0.5;

    const double g_mean = mean / (static_cast<double>(n) * v);
    const double scale = (1.0 / (2.0 * v) - (1.0 + mean * mean) / (2.0 * v * v)) *
                         (2.0 * inv_n);
    for (std::size_t i = 0; i < n; ++i) {
      const double centered = batch.values[i * dims + d] - mean;
      out.grad[i * dims + d] = inv_d * (scale * centered + g_mean);
    }
  }
  out.loss *= inv_d;
  return out;
}

LossGrad cls_loss(std::span<const double> logits, std::size_t rows,
                  std::size_t classes, std::span<const std::uint32_t> labels) {
  if (logits.size() != rows * classes)
    throw argument_error("cls_loss: logits shape mismatch");
  if (labels.size() != rows) throw argument_error("cls_loss: label count mismatch");
  for (std::uint32_t y : labels)
    if (y >= classes)
      throw argument_error("cls_loss: label " + std::to_string(y) +
                           " out of range (C=" + std::to_string(classes) + ")");
  const double inv_n = 1.0 / static_cast<double>(rows);
  LossGrad out;
  out.grad.assign(rows * classes, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = logits.data() + i * classes;
    double zmax = z[0];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    out.loss += (log_denom - (z[labels[i]] - zmax)) * inv_n;
    double* g = out.grad.data() + i * classes;
    for (std::size_t c = 0; c < classes; ++c)
      g[c] = std::exp(z[c] - zmax) / denom * inv_n;
    g[labels[i]] -= inv_n;
  }
  return out;
}

TotalLoss total_loss(const Batch& batch, std::span<const double> logits,
                     std::size_t classes, std::span<const std::uint32_t> labels,
                     const TrainConfig& cfg) {
  const LossGrad cls = cls_loss(logits, batch.rows, classes, labels);
  const LossGrad dist = dist_loss(batch);
  TotalLoss out;
  out.cls_part = cls.loss;
  out.dist_part = dist.loss;
  out.loss = cfg.lambda1 * cls.loss + cfg.lambda3 * dist.loss;
  out.grad_logits.resize(cls.grad.size());
  for (std::size_t i = 0; i < cls.grad.size(); ++i)
    out.grad_logits[i] = cfg.lambda1 * cls.grad[i];
  out.grad_values.resize(dist.grad.size());
  for (std::size_t i = 0; i < dist.grad.size(); ++i)
    out.grad_values[i] = cfg.lambda3 * dist.grad[i];
  return out;
}

std::vector<double> ToyEncoder::encode_row(std::span<const float> x) const {
  std::vector<double> out(output_dim, 0.0);
  if (hidden_dim == 0) {
    for (std::size_t o = 0; o < output_dim; ++o) {
      double acc = b_out[o];
      for (std::size_t i = 0; i < input_dim; ++i)
        acc += static_cast<double>(x[i]) * w_out[i * output_dim + o];
      out[o] = acc;
    }
    return out;
  }
  std::vector<double> h(hidden_dim);
  for (std::size_t j = 0; j < hidden_dim; ++j) {
    double acc = b_hidden[j];
    for (std::size_t i = 0; i < input_dim; ++i)
      acc += static_cast<double>(x[i]) * w_hidden[i * hidden_dim + j];
    h[j] = std::tanh(acc);
  }
  for (std::size_t o = 0; o < output_dim; ++o) {
    double acc = b_out[o];
    for (std::size_t j = 0; j < hidden_dim; ++j)
      acc += h[j] * w_out[j * output_dim + o];
    out[o] = acc;
  }
  return out;
}

std::vector<double> ToyEncoder::encode_all(const FeatureMatrix& x) const {
  std::vector<double> out;
  out.reserve(x.rows * output_dim);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = encode_row(x.row(i));
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

namespace {

struct UnifiedData {
  std::vector<std::uint32_t> labels;   // unified id space
  std::vector<std::uint8_t> domain;    // 0 image, 1 sketch
  std::vector<std::size_t> source;     // row in its source matrix
  std::size_t classes = 0;
};

UnifiedData unify(const FeatureMatrix& images, const LabelList& image_labels,
                  const FeatureMatrix& sketches, const LabelList& sketch_labels) {
  if (images.rows != image_labels.size() || sketches.rows != sketch_labels.size())
    throw argument_error("train_toy: label count does not match rows");
  if (images.dims != sketches.dims)
    throw argument_error("train_toy: image and sketch dims differ");
  if (images.rows == 0 || sketches.rows == 0)
    throw argument_error("train_toy: both domains must be non-empty");
  std::unordered_map<std::string, std::uint32_t> ids;
  const auto unified_id = [&](const std::string& name) {
    const auto [it, inserted] =
        ids.emplace(name, static_cast<std::uint32_t>(ids.size()));
    return it->second;
  };
  UnifiedData out;
  for (std::size_t i = 0; i < images.rows; ++i) {
    out.labels.push_back(unified_id(image_labels.names[image_labels.ids[i]]));
    out.domain.push_back(0);
    out.source.push_back(i);
  }
  for (std::size_t i = 0; i < sketches.rows; ++i) {
    out.labels.push_back(unified_id(sketch_labels.names[sketch_labels.ids[i]]));
    out.domain.push_back(1);
    out.source.push_back(i);
  }
  out.classes = ids.size();
  return out;
}

void init_params(std::vector<double>& w, std::size_t fan_in, std::size_t count,
                 Rng& rng) {
  w.resize(count);
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w) v = rng.next_gaussian() * scale;
}

// Mean distance between encoder outputs of same-class cross-domain pairs.
double cross_domain_pos_distance(const std::vector<double>& img_out, std::size_t n_img,
                                 const std::vector<double>& skt_out, std::size_t n_skt,
                                 std::span<const std::uint32_t> img_labels,
                                 std::span<const std::uint32_t> skt_labels,
                                 std::size_t dims) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t s = 0; s < n_skt; ++s)
    for (std::size_t i = 0; i < n_img; ++i) {
      if (skt_labels[s] != img_labels[i]) continue;
      double acc = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = skt_out[s * dims + d] - img_out[i * dims + d];
        acc += diff * diff;
      }
      sum += std::sqrt(acc);
      ++pairs;
    }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

}  // namespace

TrainResult train_toy(const FeatureMatrix& images, const LabelList& image_labels,
                      const FeatureMatrix& sketches, const LabelList& sketch_labels,
                      const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0)
    throw argument_error("train_toy: learning rate must be positive");
  if (cfg.batch_size < 2)
    throw argument_error("train_toy: batch size must be >= 2");
  if (cfg.output_dim == 0) throw argument_error("train_toy: output_dim must be >= 1");
  if (cfg.lambda1 < 0.0 || cfg.lambda3 < 0.0)
    throw argument_error("train_toy: loss weights must be nonnegative");

  const UnifiedData data = unify(images, image_labels, sketches, sketch_labels);
  const std::size_t input_dim = images.dims;
  const std::size_t out_dim = cfg.output_dim;
  const std::size_t hidden = cfg.hidden_dim;
  const std::size_t total_rows = data.labels.size();

  TrainResult result;
  result.classes = data.classes;
  ToyEncoder& enc = result.encoder;
  enc.input_dim = input_dim;
  enc.output_dim = out_dim;
  enc.hidden_dim = hidden;

  Rng init_rng(derive_seed(cfg.seed, 0xA11));
  if (hidden > 0) {
    init_params(enc.w_hidden, input_dim, input_dim * hidden, init_rng);
    enc.b_hidden.assign(hidden, 0.0);
    init_params(enc.w_out, hidden, hidden * out_dim, init_rng);
  } else {
    init_params(enc.w_out, input_dim, input_dim * out_dim, init_rng);
  }
  enc.b_out.assign(out_dim, 0.0);
  init_params(result.head_weights, out_dim, out_dim * data.classes, init_rng);
  result.head_bias.assign(data.classes, 0.0);

  const auto source_row = [&](std::size_t idx) {
    return data.domain[idx] == 0 ? images.row(data.source[idx])
                                 : sketches.row(data.source[idx]);
  };

  std::vector<std::size_t> order(total_rows);
  for (std::size_t i = 0; i < total_rows; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(cfg.seed, 0xE90C5 + epoch));
    epoch_rng.shuffle(order);

    double epoch_cls = 0.0, epoch_dist = 0.0, epoch_total = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < total_rows; start += cfg.batch_size) {
      const std::size_t b_rows = std::min(cfg.batch_size, total_rows - start);
      if (b_rows < 2) break;  // a singleton tail has no defined variance

      Batch batch;
      batch.rows = b_rows;
      batch.dims = out_dim;
      batch.values.resize(b_rows * out_dim);
      batch.domain.resize(b_rows);
      batch.labels.resize(b_rows);

      // Forward through the encoder, keeping hidden activations for backprop.
      std::vector<double> hidden_act(hidden > 0 ? b_rows * hidden : 0);
      for (std::size_t r = 0; r < b_rows; ++r) {
        const std::size_t idx = order[start + r];
        batch.domain[r] = data.domain[idx];
        batch.labels[r] = data.labels[idx];
        const auto x = source_row(idx);
        if (hidden > 0) {
          double* h = hidden_act.data() + r * hidden;
          for (std::size_t j = 0; j < hidden; ++j) {
            double acc = enc.b_hidden[j];
            for (std::size_t i = 0; i < input_dim; ++i)
              acc += static_cast<double>(x[i]) * enc.w_hidden[i * hidden + j];
            h[j] = std::tanh(acc);
          }
          for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = enc.b_out[o];
            for (std::size_t j = 0; j < hidden; ++j)
              acc += h[j] * enc.w_out[j * out_dim + o];
            batch.values[r * out_dim + o] = acc;
          }
        } else {
          for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = enc.b_out[o];
            for (std::size_t i = 0; i < input_dim; ++i)
              acc += static_cast<double>(x[i]) * enc.w_out[i * out_dim + o];
            batch.values[r * out_dim + o] = acc;
          }
        }
      }

      std::vector<double> logits(b_rows * data.classes);
      for (std::size_t r = 0; r < b_rows; ++r)
        for (std::size_t c = 0; c < data.classes; ++c) {
          double acc = result.head_bias[c];
          for (std::size_t o = 0; o < out_dim; ++o)
            acc += batch.values[r * out_dim + o] *
                   result.head_weights[o * data.classes + c];
          logits[r * data.classes + c] = acc;
        }

      const TotalLoss tl = total_loss(batch, logits, data.classes, batch.labels, cfg);
      if (!std::isfinite(tl.loss))
        throw format_error("train_toy: loss diverged (NaN/Inf) at epoch " +
                           std::to_string(epoch));
      epoch_cls += tl.cls_part * static_cast<double>(b_rows);
      epoch_dist += tl.dist_part * static_cast<double>(b_rows);
      epoch_total += tl.loss * static_cast<double>(b_rows);
      seen += b_rows;

      // d(loss)/d(encoder output) = head-propagated cls grad + dist grad.
      std::vector<double> d_out(b_rows * out_dim, 0.0);
      for (std::size_t r = 0; r < b_rows; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          double acc = tl.grad_values[r * out_dim + o];
          for (std::size_t c = 0; c < data.classes; ++c)
            acc += tl.grad_logits[r * data.classes + c] *
                   result.head_weights[o * data.classes + c];
          d_out[r * out_dim + o] = acc;
        }

      // Head update.
      const double lr = cfg.learning_rate;
      for (std::size_t o = 0; o < out_dim; ++o)
        for (std::size_t c = 0; c < data.classes; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b_rows; ++r)
            acc += batch.values[r * out_dim + o] * tl.grad_logits[r * data.classes + c];
          result.head_weights[o * data.classes + c] -= lr * acc;
        }
      for (std::size_t c = 0; c < data.classes; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < b_rows; ++r)
          acc += tl.grad_logits[r * data.classes + c];
        result.head_bias[c] -= lr * acc;
      }

      // Encoder update.
      if (hidden > 0) {
        std::vector<double> d_hidden(b_rows * hidden, 0.0);
        for (std::size_t r = 0; r < b_rows; ++r)
          for (std::size_t j = 0; j < hidden; ++j) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out_dim; ++o)
              acc += d_out[r * out_dim + o] * enc.w_out[j * out_dim + o];
            const double h = hidden_act[r * hidden + j];
            d_hidden[r * hidden + j] = acc * (1.0 - h * h);
          }
        for (std::size_t j = 0; j < hidden; ++j)
          for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = 0.0;
            for (std::size_t r = 0; r < b_rows; ++r)
              acc += hidden_act[r * hidden + j] * d_out[r * out_dim + o];
            enc.w_out[j * out_dim + o] -= lr * acc;
          }
        for (std::size_t o = 0; o < out_dim; ++o) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b_rows; ++r) acc += d_out[r * out_dim + o];
          enc.b_out[o] -= lr * acc;
        }
        for (std::size_t r = 0; r < b_rows; ++r) {
          const auto x = source_row(order[start + r]);
          for (std::size_t i = 0; i < input_dim; ++i)
            for (std::size_t j = 0; j < hidden; ++j)
              enc.w_hidden[i * hidden + j] -=
                  lr * static_cast<double>(x[i]) * d_hidden[r * hidden + j];
        }
        for (std::size_t j = 0; j < hidden; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b_rows; ++r) acc += d_hidden[r * hidden + j];
          enc.b_hidden[j] -= lr * acc;
        }
      } else {
        for (std::size_t r = 0; r < b_rows; ++r) {
          const auto x = source_row(order[start + r]);
          for (std::size_t i = 0; i < input_dim; ++i)
            for (std::size_t o = 0; o < out_dim; ++o)
              enc.w_out[i * out_dim + o] -=
                  lr * static_cast<double>(x[i]) * d_out[r * out_dim + o];
        }
        for (std::size_t o = 0; o < out_dim; ++o) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b_rows; ++r) acc += d_out[r * out_dim + o];
          enc.b_out[o] -= lr * acc;
        }
      }
    }

    // Epoch diagnostics on the full dataset.
    const std::vector<double> img_out = enc.encode_all(images);
    const std::vector<double> skt_out = enc.encode_all(sketches);
    std::vector<std::uint32_t> img_ul(images.rows), skt_ul(sketches.rows);
    for (std::size_t i = 0; i < images.rows; ++i) img_ul[i] = data.labels[i];
    for (std::size_t i = 0; i < sketches.rows; ++i)
      skt_ul[i] = data.labels[images.rows + i];

    result.trace.cls_loss.push_back(seen ? epoch_cls / static_cast<double>(seen) : 0.0);
    result.trace.dist_loss.push_back(seen ? epoch_dist / static_cast<double>(seen) : 0.0);
    result.trace.total_loss.push_back(seen ? epoch_total / static_cast<double>(seen) : 0.0);
    result.trace.cross_domain_pos_dist.push_back(cross_domain_pos_distance(
        img_out, images.rows, skt_out, sketches.rows, img_ul, skt_ul, out_dim));

    double worst_mean = 0.0, worst_var = 0.0;
    const std::size_t n_all = images.rows + sketches.rows;
    for (std::size_t d = 0; d < out_dim; ++d) {
      double mean = 0.0;
      for (std::size_t i = 0; i < images.rows; ++i) mean += img_out[i * out_dim + d];
      for (std::size_t i = 0; i < sketches.rows; ++i) mean += skt_out[i * out_dim + d];
      mean /= static_cast<double>(n_all);
      double var = 0.0;
      for (std::size_t i = 0; i < images.rows; ++i) {
        const double c = img_out[i * out_dim + d] - mean;
        var += c * c;
      }
      for (std::size_t i = 0; i < sketches.rows; ++i) {
        const double c = skt_out[i * out_dim + d] - mean;
        var += c * c;
      }
      var /= static_cast<double>(n_all);
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
    result.trace.max_abs_mean.push_back(worst_mean);
    result.trace.max_abs_var_dev.push_back(worst_var);
  }

  return result;
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::string out = "epoch,cls_loss,dist_loss,total,cross_domain_pos_dist\n";
  char buf[192];
  for (std::size_t e = 0; e < trace.epochs(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e,
                  trace.cls_loss[e], trace.dist_loss[e], trace.total_loss[e],
                  trace.cross_domain_pos_dist[e]);
    out += buf;
  }
  return out;
}

namespace {
constexpr char kMagic[4] = {'C', 'R', 'T', 'E'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

void save_encoder(const ToyEncoder& encoder, const std::filesystem::path& path) {
  detail::Writer w(path);
  w.magic(kMagic);
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(encoder.input_dim));
  w.u32(static_cast<std::uint32_t>(encoder.hidden_dim));
  w.u32(static_cast<std::uint32_t>(encoder.output_dim));
  if (encoder.hidden_dim > 0) {
    w.bytes(encoder.w_hidden.data(), encoder.w_hidden.size() * 8);
    w.bytes(encoder.b_hidden.data(), encoder.b_hidden.size() * 8);
  }
  w.bytes(encoder.w_out.data(), encoder.w_out.size() * 8);
  w.bytes(encoder.b_out.data(), encoder.b_out.size() * 8);
  w.close();
}

ToyEncoder load_encoder(const std::filesystem::path& path) {
  detail::Reader r(path);
  r.expect_magic(kMagic, "CRTE");
  const auto version = r.u8();
  if (version != kVersion)
    throw format_error(r.path() + ": unsupported CRTE version " + std::to_string(version));
  ToyEncoder e;
  e.input_dim = r.u32();
  e.hidden_dim = r.u32();
  e.output_dim = r.u32();
  if (e.input_dim == 0 || e.output_dim == 0)
    throw format_error(r.path() + ": inconsistent CRTE geometry");
  const std::size_t fan_in = e.hidden_dim > 0 ? e.hidden_dim : e.input_dim;
  if (e.hidden_dim > 0) {
    e.w_hidden.resize(e.input_dim * e.hidden_dim);
    r.bytes(e.w_hidden.data(), e.w_hidden.size() * 8);
    e.b_hidden.resize(e.hidden_dim);
    r.bytes(e.b_hidden.data(), e.b_hidden.size() * 8);
  }
  e.w_out.resize(fan_in * e.output_dim);
  r.bytes(e.w_out.data(), e.w_out.size() * 8);
  e.b_out.resize(e.output_dim);
  r.bytes(e.b_out.data(), e.b_out.size() * 8);
  r.expect_exhausted();
  return e;
}

}  // namespace crr
