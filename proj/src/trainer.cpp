#include "splatseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "splatseg/errors.hpp"

namespace splatseg {

namespace {

void adam_step_impl(double* param, const double* grad, double* m, double* v, Eigen::Index n,
                    double lr, double beta1, double beta2, double eps, std::int64_t step) {
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(grad[i]))
      throw NumericalError("adam_step: non-finite gradient at flat index " + std::to_string(i));
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (Eigen::Index i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double derive_scene_extent(const std::vector<TrainView>& views, const GaussianCloud& cloud) {
  Vec3 centroid = Vec3::Zero();
  for (const auto& view : views) centroid += view.camera.center();
  centroid /= static_cast<double>(views.size());
  double radius = 0;
  for (const auto& view : views)
    radius = std::max(radius, (view.camera.center() - centroid).norm());
  double extent = 1.1 * radius;
  if (extent < 1e-9 && cloud.size() > 0) {
    const Vec3 lo = cloud.positions.rowwise().minCoeff();
    const Vec3 hi = cloud.positions.rowwise().maxCoeff();
    extent = 0.5 * (hi - lo).norm();
  }
  return std::max(extent, 1e-6);
}

double position_lr(const TrainConfig& cfg, double extent, int iteration) {
  const double t = cfg.iterations > 0
                       ? static_cast<double>(iteration) / static_cast<double>(cfg.iterations)
                       : 1.0;
  const double log_lr = std::log(cfg.lr.position_init * extent) * (1.0 - t) +
                        std::log(cfg.lr.position_final * extent) * t;
  return std::exp(log_lr);
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw DataError("train config: iterations must be non-negative");
  if (clustering_every < 1 || regularization_every < 1 || densify_interval < 1)
    throw DataError("train config: intervals must be at least 1");
  if (prune_opacity <= 0 || densify_grad_threshold <= 0 || split_scale_ratio <= 0 ||
      prune_scale_ratio <= 0 || split_factor <= 0)
    throw DataError("train config: thresholds must be positive");
}

void adam_step(MatX& param, const MatX& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols())
    throw DataError("adam_step: parameter/gradient shape mismatch");
  if (state.m.size() == 0) {
    state.m = MatX::Zero(param.rows(), param.cols());
    state.v = MatX::Zero(param.rows(), param.cols());
  }
  if (state.m.rows() != param.rows() || state.m.cols() != param.cols())
    throw DataError("adam_step: optimizer state shape mismatch");
  ++state.step;
  adam_step_impl(param.data(), grad.data(), state.m.data(), state.v.data(), param.size(), lr,
                 beta1, beta2, eps, state.step);
}

void adam_step(VecX& param, const VecX& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (param.size() != grad.size()) throw DataError("adam_step: parameter/gradient shape mismatch");
  if (state.m.size() == 0) {
    state.m = MatX::Zero(1, param.size());
    state.v = MatX::Zero(1, param.size());
  }
  if (state.m.size() != param.size()) throw DataError("adam_step: optimizer state shape mismatch");
  ++state.step;
  adam_step_impl(param.data(), grad.data(), state.m.data(), state.v.data(), param.size(), lr,
                 beta1, beta2, eps, state.step);
}

OptimizerStates OptimizerStates::zero_like(const GaussianCloud& cloud) {
  const int n = cloud.size();
  OptimizerStates s;
  auto init = [n](AdamState& st, int rows) {
    st.m = MatX::Zero(rows, n);
    st.v = MatX::Zero(rows, n);
    st.step = 0;
  };
  init(s.position, 3);
  init(s.log_scale, 3);
  init(s.rotation, 4);
  init(s.opacity, 1);
  init(s.color, 3);
  init(s.feature, cloud.feature_dim());
  return s;
}

void OptimizerStates::splice(const std::vector<bool>& keep, int added) {
  auto splice_one = [&](AdamState& st) {
    const int kept = static_cast<int>(std::count(keep.begin(), keep.end(), true));
    MatX m = MatX::Zero(st.m.rows(), kept + added);
    MatX v = MatX::Zero(st.v.rows(), kept + added);
    int out = 0;
    for (int i = 0; i < static_cast<int>(keep.size()); ++i) {
      if (!keep[i]) continue;
      m.col(out) = st.m.col(i);
      v.col(out) = st.v.col(i);
      ++out;
    }
    st.m = std::move(m);
    st.v = std::move(v);
  };
  splice_one(position);
  splice_one(log_scale);
  splice_one(rotation);
  splice_one(opacity);
  splice_one(color);
  splice_one(feature);
}

DensifyEvent densify_and_prune(GaussianCloud& cloud, const TrainConfig& cfg,
                               std::mt19937_64& rng, OptimizerStates& opt) {
  const int n = cloud.size();
  const double extent = cfg.scene_extent;
  DensifyEvent event;

  std::vector<bool> keep(n, true);
  std::vector<bool> clone(n, false), split(n, false);
  for (int i = 0; i < n; ++i) {
    const double opacity = sigmoid(cloud.opacities[i]);
    const double max_scale = cloud.log_scales.col(i).array().exp().maxCoeff();
    if (opacity < cfg.prune_opacity || max_scale > cfg.prune_scale_ratio * extent) {
      keep[i] = false;
      event.pruned.push_back(i);
      continue;
    }
    const double avg_grad =
        cloud.grad_count[i] > 0 ? cloud.grad_accum[i] / cloud.grad_count[i] : 0.0;
    if (avg_grad > cfg.densify_grad_threshold) {
      if (max_scale > cfg.split_scale_ratio * extent) {
        split[i] = true;
        keep[i] = false;  // the parent is replaced by its children
      } else {
        clone[i] = true;
      }
    }
  }

  std::vector<Gaussian> children;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    if (clone[i]) {
      children.push_back(cloud.gaussian(i));
      event.children.push_back({0, false, cloud.features.col(i)});
      ++event.clone_count;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!split[i]) continue;
    const Gaussian parent = cloud.gaussian(i);
    const Mat3 rot = rotation_matrix_of(normalize_quaternion(parent.rotation));
    const Vec3 scale = parent.scale();
    for (int c = 0; c < 2; ++c) {
      Gaussian child = parent;
      const Vec3 xi(normal(rng), normal(rng), normal(rng));
      child.position = parent.position + rot * (scale.cwiseProduct(xi));
      child.log_scale = parent.log_scale.array() - std::log(cfg.split_factor);
      children.push_back(child);
      event.children.push_back({0, true, parent.feature});
      ++event.split_count;
    }
  }

  cloud.filter(keep);
  const int base = cloud.size();
  for (int c = 0; c < static_cast<int>(children.size()); ++c) {
    cloud.append(children[c]);
    event.children[c].child_index = base + c;
  }
  cloud.reset_grad_stats();
  opt.splice(keep, static_cast<int>(children.size()));
  return event;
}

IterationLosses evaluate_training_losses(const GaussianCloud& cloud, const TrainView& view,
                                         const TrainConfig& cfg, bool apply_clustering,
                                         bool apply_regularization, std::uint64_t reg_seed) {
  IterationLosses out;
  out.render = rasterize(cloud, view.camera, cfg.render);

  const LossReport rendering = rendering_loss(out.render.color, view.image, cfg.lambda_dssim);

  LossReport clustering;
  NormalizedFeatureMap normalized;
  if (apply_clustering) {
    normalized = l2_normalize_map(out.render.features);
    clustering = contrastive_clustering_loss(normalized.map, view.mask, cfg.min_cluster_size);
  }

  LossReport regularization;
  if (apply_regularization) {
    SpatialRegOptions reg = cfg.regularization;
    reg.rng_seed = reg_seed;
    regularization = spatial_regularization(cloud, reg);
  }

  out.total = total_loss(rendering, apply_clustering ? &clustering : nullptr,
                         apply_regularization ? &regularization : nullptr, cfg.lambda_clustering);

  MatX grad_features = MatX::Zero(out.render.features.data.rows(), cloud.feature_dim());
  if (apply_clustering && out.total.grad_feature_map)
    grad_features = normalized.backward(*out.total.grad_feature_map);

  out.gradients =
      rasterize_backward(out.render, cloud, view.camera, *out.total.grad_image, grad_features);
  if (apply_regularization && out.total.grad_cloud_features)
    out.gradients.feature += *out.total.grad_cloud_features;
  return out;
}

TrainResult train(GaussianCloud cloud, const std::vector<TrainView>& views,
                  const TrainConfig& cfg_in, const DensifyHook& hook) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  if (views.empty()) throw DataError("train: no training views");
  for (const auto& view : views) {
    view.camera.validate();
    if (view.image.width != view.camera.width || view.image.height != view.camera.height ||
        view.mask.cols() != view.camera.width || view.mask.rows() != view.camera.height)
      throw DataError("train: view image/mask size does not match its camera");
  }
  cloud.validate();
  if (cfg.scene_extent <= 0) cfg.scene_extent = derive_scene_extent(views, cloud);

  OptimizerStates opt = OptimizerStates::zero_like(cloud);
  std::mt19937_64 view_rng(mix_seed(cfg.rng_seed, 0x5A5A01));
  std::mt19937_64 densify_rng(mix_seed(cfg.rng_seed, 0x5A5A02));
  const std::uint64_t reg_stream = mix_seed(cfg.rng_seed, 0x5A5A03);

  std::vector<int> order(views.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.log.reserve(cfg.iterations);

  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    if ((it - 1) % static_cast<int>(views.size()) == 0)
      std::shuffle(order.begin(), order.end(), view_rng);
    const TrainView& view = views[order[(it - 1) % views.size()]];

    const bool apply_cc = (it % cfg.clustering_every == 0);
    const bool apply_reg = (it % cfg.regularization_every == 0);

    IterationLosses losses;
    try {
      losses = evaluate_training_losses(cloud, view, cfg, apply_cc, apply_reg,
                                        mix_seed(reg_stream, static_cast<std::uint64_t>(it)));
    } catch (const DataError& e) {
      throw DataError("iteration " + std::to_string(it) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(losses.total.value))
      throw NumericalError("iteration " + std::to_string(it) + ": non-finite total loss");

    adam_step(cloud.features, losses.gradients.feature, opt.feature, cfg.lr.feature, 0.9,
              cfg.feature_beta2);
    if (!cfg.freeze_geometry) {
      adam_step(cloud.positions, losses.gradients.position, opt.position,
                position_lr(cfg, cfg.scene_extent, it));
      adam_step(cloud.log_scales, losses.gradients.log_scale, opt.log_scale, cfg.lr.log_scale);
      adam_step(cloud.rotations, losses.gradients.rotation, opt.rotation, cfg.lr.rotation);
      adam_step(cloud.opacities, losses.gradients.opacity, opt.opacity, cfg.lr.opacity);
      adam_step(cloud.colors, losses.gradients.color, opt.color, cfg.lr.color);
      for (int i = 0; i < cloud.size(); ++i)
        cloud.rotations.col(i) = normalize_quaternion(cloud.rotations.col(i));
    }

    for (int i = 0; i < cloud.size(); ++i) {
      cloud.grad_accum[i] += losses.gradients.position.col(i).norm();
      cloud.grad_count[i] += 1;
    }

    if (!cfg.freeze_geometry && cfg.densify_enabled && it % cfg.densify_interval == 0 &&
        it >= cfg.densify_start && it <= cfg.densify_end) {
      DensifyEvent event = densify_and_prune(cloud, cfg, densify_rng, opt);
      event.iteration = it;
      if (hook) hook(event, cloud, opt);
    }

    TrainLogRecord rec;
    rec.iteration = it;
    rec.total = losses.total.value;
    rec.rendering = losses.total.term_breakdown.at("rendering");
    rec.clustering_applied = apply_cc;
    rec.regularization_applied = apply_reg;
    if (apply_cc) rec.clustering = losses.total.term_breakdown.at("clustering");
    if (apply_reg) rec.regularization = losses.total.term_breakdown.at("regularization");
    rec.gaussian_count = cloud.size();
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
  }

  result.cloud = std::move(cloud);
  return result;
}

}  // namespace splatseg
