#include "splatseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "splatseg/errors.hpp"

namespace splatseg {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

Eigen::Matrix<double, kSsimWindow, 1> ssim_kernel() {
  Eigen::Matrix<double, kSsimWindow, 1> k;
  const int c = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i)
    k[i] = std::exp(-0.5 * (i - c) * (i - c) / (kSsimSigma * kSsimSigma));
  return k / k.sum();
}

// Zero-padded separable convolution with the SSIM kernel.
MatX ssim_conv(const MatX& field) {
  static const auto kernel = ssim_kernel();
  const int h = static_cast<int>(field.rows()), w = static_cast<int>(field.cols());
  const int half = kSsimWindow / 2;
  MatX tmp = MatX::Zero(h, w), out = MatX::Zero(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double acc = 0;
      for (int k = -half; k <= half; ++k) {
        const int uu = u + k;
        if (uu >= 0 && uu < w) acc += kernel[k + half] * field(v, uu);
      }
      tmp(v, u) = acc;
    }
  }
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double acc = 0;
      for (int k = -half; k <= half; ++k) {
        const int vv = v + k;
        if (vv >= 0 && vv < h) acc += kernel[k + half] * tmp(vv, u);
      }
      out(v, u) = acc;
    }
  }
  return out;
}

MatX channel_field(const ImageRGB& img, int channel) {
  MatX f(img.height, img.width);
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) f(v, u) = img.data(pixel_index(u, v, img.width), channel);
  return f;
}

struct SsimEval {
  double mean = 0;
  Eigen::MatrixX3d grad;  // d mean / d first image, filled only when requested
};

SsimEval ssim_eval(const ImageRGB& x, const ImageRGB& y, bool with_grad) {
  const int h = x.height, w = x.width;
  const double count = 3.0 * h * w;

  // Window mass inside the image, shared by all channels.
  const MatX nmap = ssim_conv(MatX::Ones(h, w));

  SsimEval result;
  if (with_grad) result.grad = Eigen::MatrixX3d::Zero(h * w, 3);
  double ssim_sum = 0;  // summed then divided once, so identical images give exactly 1

  for (int c = 0; c < 3; ++c) {
    const MatX fx = channel_field(x, c);
    const MatX fy = channel_field(y, c);
    const MatX mu_x = ssim_conv(fx).cwiseQuotient(nmap);
    const MatX mu_y = ssim_conv(fy).cwiseQuotient(nmap);
    const MatX e_xx = ssim_conv(fx.cwiseProduct(fx)).cwiseQuotient(nmap);
    const MatX e_yy = ssim_conv(fy.cwiseProduct(fy)).cwiseQuotient(nmap);
    const MatX e_xy = ssim_conv(fx.cwiseProduct(fy)).cwiseQuotient(nmap);

    MatX d_mu = MatX::Zero(h, w), d_exx = MatX::Zero(h, w), d_exy = MatX::Zero(h, w);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const double mx = mu_x(v, u), my = mu_y(v, u);
        const double sxx = e_xx(v, u) - mx * mx;
        const double syy = e_yy(v, u) - my * my;
        const double sxy = e_xy(v, u) - mx * my;
        const double a1 = 2 * mx * my + kSsimC1, a2 = 2 * sxy + kSsimC2;
        const double b1 = mx * mx + my * my + kSsimC1, b2 = sxx + syy + kSsimC2;
        const double s = (a1 * a2) / (b1 * b2);
        ssim_sum += s;
        if (!with_grad) continue;

        const double ds_da1 = a2 / (b1 * b2);
        const double ds_da2 = a1 / (b1 * b2);
        const double ds_db1 = -s / b1;
        const double ds_db2 = -s / b2;
        d_mu(v, u) = ds_da1 * 2 * my + ds_db1 * 2 * mx + ds_da2 * (-2 * my) + ds_db2 * (-2 * mx);
        d_exx(v, u) = ds_db2;
        d_exy(v, u) = 2 * ds_da2;
      }
    }
    if (!with_grad) continue;

    // Adjoint of the renormalized convolution: divide by the window mass at
    // the source pixel, then convolve (the kernel is symmetric).
    const MatX back_mu = ssim_conv(d_mu.cwiseQuotient(nmap));
    const MatX back_exx = ssim_conv(d_exx.cwiseQuotient(nmap));
    const MatX back_exy = ssim_conv(d_exy.cwiseQuotient(nmap));
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const double g =
            back_mu(v, u) + 2 * fx(v, u) * back_exx(v, u) + fy(v, u) * back_exy(v, u);
        result.grad(pixel_index(u, v, w), c) = g / count;
      }
    }
  }
  result.mean = ssim_sum / count;
  return result;
}

}  // namespace

double ssim_mean(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height)
    throw DataError("ssim: image shapes do not match");
  return ssim_eval(a, b, false).mean;
}

LossReport rendering_loss(const ImageRGB& rendered, const ImageRGB& truth, double lambda_dssim) {
  if (rendered.width != truth.width || rendered.height != truth.height)
    throw DataError("rendering_loss: image shapes do not match");

  const double count = static_cast<double>(rendered.data.size());
  const Eigen::MatrixX3d diff = rendered.data - truth.data;
  const double l1 = diff.cwiseAbs().sum() / count;

  const SsimEval ssim = ssim_eval(rendered, truth, true);

  LossReport report;
  const double l1_term = (1.0 - lambda_dssim) * l1;
  const double dssim_term = lambda_dssim * (1.0 - ssim.mean);
  report.value = l1_term + dssim_term;
  report.term_breakdown["l1"] = l1_term;
  report.term_breakdown["dssim"] = dssim_term;

  Eigen::MatrixX3d grad =
      diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); }) *
      ((1.0 - lambda_dssim) / count);
  grad -= lambda_dssim * ssim.grad;
  report.grad_image = std::move(grad);
  return report;
}

NormalizedFeatureMap l2_normalize_map(const FeatureMap& fm) {
  NormalizedFeatureMap out;
  out.map = fm;
  out.norms = VecX::Zero(fm.data.rows());
  for (int p = 0; p < fm.data.rows(); ++p) {
    const double n = fm.data.row(p).norm();
    out.norms[p] = n;
    if (n < kFeatureNormEps)
      out.map.data.row(p).setZero();
    else
      out.map.data.row(p) /= n;
  }
  return out;
}

MatX NormalizedFeatureMap::backward(const MatX& grad_normalized) const {
  if (grad_normalized.rows() != map.data.rows() || grad_normalized.cols() != map.data.cols())
    throw DataError("l2_normalize_map backward: gradient shape mismatch");
  MatX grad = MatX::Zero(map.data.rows(), map.data.cols());
  for (int p = 0; p < map.data.rows(); ++p) {
    const double n = norms[p];
    if (n < kFeatureNormEps) continue;
    const auto unit = map.data.row(p);
    grad.row(p) = (grad_normalized.row(p) - unit * unit.dot(grad_normalized.row(p))) / n;
  }
  return grad;
}

double cluster_temperature(const MatX& members, const VecX& centroid, double epsilon,
                           double floor) {
  const int n = static_cast<int>(members.rows());
  if (n < 1) throw DataError("cluster_temperature: empty cluster");
  double deviation = 0;
  for (int q = 0; q < n; ++q) deviation += (members.row(q).transpose() - centroid).norm();
  const double phi = deviation / (n * std::log(n + epsilon));
  return std::max(phi, floor);
}

std::vector<ClusterStats> cluster_statistics(const FeatureMap& fm_normalized,
                                             const SegmentMask& mask, int min_cluster_size,
                                             double temperature_epsilon,
                                             double temperature_floor) {
  if (mask.rows() != fm_normalized.height || mask.cols() != fm_normalized.width)
    throw DataError("cluster_statistics: mask shape does not match the feature map");
  const int w = fm_normalized.width, h = fm_normalized.height;
  const int dim = fm_normalized.feature_dim();

  std::unordered_map<int, int> index_of_label;
  std::vector<int> labels;
  std::vector<std::vector<int>> pixels;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const int label = mask(v, u);
      if (label == 0) continue;
      auto [it, inserted] = index_of_label.try_emplace(label, static_cast<int>(labels.size()));
      if (inserted) {
        labels.push_back(label);
        pixels.emplace_back();
      }
      pixels[it->second].push_back(pixel_index(u, v, w));
    }
  }

  std::vector<ClusterStats> stats;
  for (int k = 0; k < static_cast<int>(labels.size()); ++k) {
    if (static_cast<int>(pixels[k].size()) <= min_cluster_size) continue;
    ClusterStats cs;
    cs.segment_id = labels[k];
    cs.size = static_cast<int>(pixels[k].size());
    MatX members(cs.size, dim);
    for (int q = 0; q < cs.size; ++q) members.row(q) = fm_normalized.data.row(pixels[k][q]);
    cs.centroid = members.colwise().mean();
    cs.temperature = cluster_temperature(members, cs.centroid, temperature_epsilon,
                                         temperature_floor);
    stats.push_back(std::move(cs));
  }
  return stats;
}

LossReport contrastive_clustering_loss(const FeatureMap& fm_normalized, const SegmentMask& mask,
                                       int min_cluster_size) {
  return contrastive_clustering_loss(fm_normalized, mask,
                                     cluster_statistics(fm_normalized, mask, min_cluster_size));
}

LossReport contrastive_clustering_loss(const FeatureMap& fm_normalized, const SegmentMask& mask,
                                       const std::vector<ClusterStats>& stats) {
  if (mask.rows() != fm_normalized.height || mask.cols() != fm_normalized.width)
    throw DataError("contrastive_clustering_loss: mask shape does not match the feature map");

  LossReport report;
  report.grad_feature_map = MatX::Zero(fm_normalized.data.rows(), fm_normalized.data.cols());
  report.term_breakdown["surviving_clusters"] = static_cast<double>(stats.size());
  const int n_clusters = static_cast<int>(stats.size());
  if (n_clusters < 2) {
    report.degenerate = true;
    return report;
  }

  const int dim = fm_normalized.feature_dim();
  std::unordered_map<int, int> cluster_of_label;
  for (int k = 0; k < n_clusters; ++k) cluster_of_label[stats[k].segment_id] = k;

  // Centroid rows pre-divided by their temperature; the logits are then a
  // single matrix-vector product per pixel.
  MatX scaled_centroids(n_clusters, dim);
  for (int k = 0; k < n_clusters; ++k)
    scaled_centroids.row(k) = stats[k].centroid.transpose() / stats[k].temperature;

  const double inv_nk = 1.0 / n_clusters;
  const int w = fm_normalized.width, h = fm_normalized.height;
  VecX logits(n_clusters), softmax(n_clusters);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const int label = mask(v, u);
      if (label == 0) continue;
      const auto it = cluster_of_label.find(label);
      if (it == cluster_of_label.end()) continue;
      const int own = it->second;
      const int p = pixel_index(u, v, w);

      logits.noalias() = scaled_centroids * fm_normalized.data.row(p).transpose();
      const double peak = logits.maxCoeff();
      softmax = (logits.array() - peak).exp();
      const double denom = softmax.sum();
      report.value += inv_nk * (peak + std::log(denom) - logits[own]);

      softmax /= denom;
      report.grad_feature_map->row(p) =
          inv_nk * (softmax.transpose() * scaled_centroids - scaled_centroids.row(own));
    }
  }
  return report;
}

LossReport spatial_regularization(const GaussianCloud& cloud, const SpatialRegOptions& opts) {
  const int n = cloud.size();
  if (n <= opts.near_count + opts.far_count)
    throw DataError("spatial_regularization: cloud smaller than the neighborhood size");

  const int samples = std::min(opts.sample_count, n);
  std::mt19937_64 rng(opts.rng_seed);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < samples; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }

  const int dim = cloud.feature_dim();
  MatX unit = MatX::Zero(dim, n);
  VecX norms(n);
  for (int i = 0; i < n; ++i) {
    const double nn = cloud.features.col(i).norm();
    norms[i] = nn;
    if (nn >= kFeatureNormEps) unit.col(i) = cloud.features.col(i) / nn;
  }

  const double near_weight = opts.lambda_near / (samples * opts.near_count);
  const double far_weight = opts.lambda_far / (samples * opts.far_count);

  LossReport report;
  MatX grad_unit = MatX::Zero(dim, n);
  double near_value = 0, far_value = 0;

  std::vector<std::pair<double, int>> dist;
  dist.reserve(n - 1);
  for (int s = 0; s < samples; ++s) {
    const int j = pool[s];
    dist.clear();
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      dist.emplace_back((cloud.positions.col(i) - cloud.positions.col(j)).norm(), i);
    }
    std::partial_sort(dist.begin(), dist.begin() + opts.near_count, dist.end());
    std::nth_element(dist.begin() + opts.near_count,
                     dist.end() - opts.far_count, dist.end());
    std::sort(dist.end() - opts.far_count, dist.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
              });

    for (int k = 0; k < opts.near_count; ++k) {
      const int i = dist[k].second;
      const double sim = unit.col(j).dot(unit.col(i));
      const double hval = sigmoid(1.0 - sim);
      near_value += near_weight * hval;
      const double c = near_weight * hval * (1.0 - hval);
      grad_unit.col(j) -= c * unit.col(i);
      grad_unit.col(i) -= c * unit.col(j);
    }
    for (int k = 0; k < opts.far_count; ++k) {
      const int i = dist[dist.size() - 1 - k].second;
      const double sim = unit.col(j).dot(unit.col(i));
      const double hval = sigmoid(sim);
      far_value += far_weight * hval;
      const double c = far_weight * hval * (1.0 - hval);
      grad_unit.col(j) += c * unit.col(i);
      grad_unit.col(i) += c * unit.col(j);
    }
  }

  MatX grad = MatX::Zero(dim, n);
  for (int i = 0; i < n; ++i) {
    if (norms[i] < kFeatureNormEps) continue;
    grad.col(i) = (grad_unit.col(i) - unit.col(i) * unit.col(i).dot(grad_unit.col(i))) / norms[i];
  }

  report.value = near_value + far_value;
  report.term_breakdown["near"] = near_value;
  report.term_breakdown["far"] = far_value;
  report.grad_cloud_features = std::move(grad);
  return report;
}

LossReport total_loss(const LossReport& rendering, const LossReport* clustering,
                      const LossReport* regularization, double lambda_clustering) {
  LossReport report;
  report.value = rendering.value;
  report.grad_image = rendering.grad_image;
  report.term_breakdown["rendering"] = rendering.value;
  if (clustering) {
    report.value += lambda_clustering * clustering->value;
    report.term_breakdown["clustering"] = clustering->value;
    if (clustering->grad_feature_map)
      report.grad_feature_map = lambda_clustering * (*clustering->grad_feature_map);
    report.degenerate = report.degenerate || clustering->degenerate;
  }
  if (regularization) {
    report.value += regularization->value;
    report.term_breakdown["regularization"] = regularization->value;
    report.grad_cloud_features = regularization->grad_cloud_features;
  }
  report.term_breakdown["total"] = report.value;
  return report;
}

}  // namespace splatseg
