#include "splatseg/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include <CLI11.hpp>

#include "splatseg/errors.hpp"
#include "splatseg/io.hpp"
#include "splatseg/metrics.hpp"
#include "splatseg/segmenter.hpp"
#include "splatseg/synthdata.hpp"
#include "splatseg/trainer.hpp"

namespace splatseg::cli {

namespace fs = std::filesystem;

namespace {

SceneSpecFile demo_spec() {
  SceneSpecFile spec;
  spec.scene.name = "triad";
  spec.scene.image_width = 64;
  spec.scene.image_height = 64;
  spec.scene.feature_dim = 16;
  spec.scene.objects = {
      {Vec3(-1.3, -0.6, 0.25), 0.85, 220, Vec3(0.85, 0.25, 0.2)},
      {Vec3(1.3, -0.6, 0.25), 0.85, 220, Vec3(0.2, 0.7, 0.25)},
      {Vec3(0.0, 1.3, 0.25), 0.85, 220, Vec3(0.25, 0.35, 0.85)},
  };
  spec.scene.background_plane.enabled = true;
  spec.scene.background_plane.count = 160;
  spec.scene.background_plane.extent = 3.2;
  spec.scene.background_plane.z = -0.8;
  spec.scene.ring.count = 25;
  spec.scene.ring.radius = 7.0;
  spec.scene.ring.elevation_deg = 28.0;
  spec.scene.test_every = 5;
  spec.corruption.split_prob = 0.3;
  return spec;
}

std::string view_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/view_%03d.%s", prefix, i, ext);
  return buf;
}

// One query per object: the first train view where the object covers enough
// pixels, prompted at the region pixel closest to the region centroid.
std::vector<QueryRecord> derive_queries(const std::vector<SegmentMask>& gt_masks,
                                        const std::vector<bool>& is_test, int object_count) {
  std::vector<QueryRecord> queries;
  for (int id = 1; id <= object_count; ++id) {
    QueryRecord q;
    q.object_id = id;
    bool found = false;
    for (int view = 0; view < static_cast<int>(gt_masks.size()) && !found; ++view) {
      if (is_test[view]) continue;
      const SegmentMask& mask = gt_masks[view];
      double cu = 0, cv = 0;
      int count = 0;
      for (int v = 0; v < mask.rows(); ++v)
        for (int u = 0; u < mask.cols(); ++u)
          if (mask(v, u) == id) {
            cu += u;
            cv += v;
            ++count;
          }
      if (count < 25) continue;
      cu /= count;
      cv /= count;
      double best = 1e30;
      for (int v = 0; v < mask.rows(); ++v)
        for (int u = 0; u < mask.cols(); ++u) {
          if (mask(v, u) != id) continue;
          const double d = (u - cu) * (u - cu) + (v - cv) * (v - cv);
          if (d < best) {
            best = d;
            q.view = view;
            q.u = u;
            q.v = v;
          }
        }
      found = true;
    }
    if (found) queries.push_back(q);
  }
  return queries;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}

Camera camera_for(const RenderArgs& args) {
  if (!args.camera_file.empty()) return load_camera_json(args.camera_file);
  if (args.data_dir.empty() || args.camera_index < 0)
    throw DataError("render: pass --camera-file, or --data with --camera <index>");
  const Manifest manifest = load_manifest(fs::path(args.data_dir) / "manifest.json");
  if (args.camera_index >= static_cast<int>(manifest.views.size()))
    throw DataError("render: camera index out of range");
  return manifest.views[args.camera_index].camera;
}

struct LoadedScene {
  Manifest manifest;
  fs::path dir;
};

LoadedScene load_scene(const std::string& data_dir) {
  LoadedScene s;
  s.dir = data_dir;
  s.manifest = load_manifest(s.dir / "manifest.json");
  return s;
}

}  // namespace

int cmd_generate(const GenerateArgs& args) {
  return guarded([&] {
    SceneSpecFile spec = args.spec_path.empty() ? demo_spec() : load_scene_spec(args.spec_path);
    if (args.seed) spec.scene.rng_seed = *args.seed;
    spec.corruption.rng_seed = mix_seed(spec.scene.rng_seed, 0xC0221);

    const fs::path out = args.out_dir;
    fs::create_directories(out / "images");
    fs::create_directories(out / "masks");
    fs::create_directories(out / "gt_masks");

    const SyntheticScene scene = generate_scene(spec.scene);
    const int n_views = static_cast<int>(scene.cameras.size());

    std::vector<SegmentMask> gt_masks;
    gt_masks.reserve(n_views);
    for (int i = 0; i < n_views; ++i) {
      const RenderOutput render = rasterize(scene.labeled.cloud, scene.cameras[i]);
      save_ppm(out / view_name("images", i, "ppm"), render.color);
      gt_masks.push_back(render_gt_masks(scene.labeled, scene.cameras[i]));
      save_pgm16(out / view_name("gt_masks", i, "pgm"), gt_masks.back());
    }

    const std::vector<SegmentMask> corrupted = corrupt_masks(gt_masks, spec.corruption);
    for (int i = 0; i < n_views; ++i)
      save_pgm16(out / view_name("masks", i, "pgm"), corrupted[i]);

    save_cloud_ply(out / "cloud_gt.ply", scene.labeled.cloud);
    save_instance_ids(out / "gt_instances.json", scene.labeled.instance_id);
    save_queries(out / "queries.json",
                 derive_queries(gt_masks, scene.is_test,
                                static_cast<int>(spec.scene.objects.size())));
    save_scene_spec(out / "scene_spec.json", spec);

    Manifest manifest;
    manifest.scene = spec.scene.name;
    manifest.feature_dim = spec.scene.feature_dim;
    manifest.cloud = "cloud_gt.ply";
    manifest.instances = "gt_instances.json";
    manifest.queries = "queries.json";
    for (int i = 0; i < n_views; ++i) {
      ManifestView view;
      view.camera = scene.cameras[i];
      view.image = view_name("images", i, "ppm");
      view.mask = view_name("masks", i, "pgm");
      view.gt_mask = view_name("gt_masks", i, "pgm");
      view.is_test = scene.is_test[i];
      manifest.views.push_back(std::move(view));
    }
    save_manifest(out / "manifest.json", manifest);
  });
}

int cmd_train(const TrainArgs& args) {
  return guarded([&] {
    const LoadedScene scene = load_scene(args.data_dir);

    fs::path init = args.init_ply.empty() ? scene.dir / scene.manifest.cloud
                                          : fs::path(args.init_ply);
    if (args.init_ply.empty() && scene.manifest.cloud.empty())
      throw DataError("train: dataset has no cloud; pass --init");
    GaussianCloud cloud = load_cloud_ply(init);

    std::vector<TrainView> views;
    for (const auto& mv : scene.manifest.views) {
      if (mv.is_test) continue;
      TrainView view;
      view.camera = mv.camera;
      view.image = load_ppm(scene.dir / mv.image);
      view.mask = load_pgm16(scene.dir / mv.mask);
      views.push_back(std::move(view));
    }
    if (views.empty()) throw DataError("train: dataset has no training views");

    TrainConfig cfg;
    cfg.iterations = args.iterations;
    cfg.freeze_geometry = args.freeze_geometry;
    cfg.lambda_clustering = args.lambda_clustering;
    cfg.rng_seed = args.seed;
    cfg.clustering_every = args.clustering_every;
    cfg.regularization_every = args.regularization_every;
    cfg.lr.feature = args.feature_lr;

    const TrainResult result = train(std::move(cloud), views, cfg);
    save_cloud_ply(args.out_ply, result.cloud);
    const fs::path log_path =
        args.log_path.empty() ? fs::path(args.out_ply + ".log.jsonl") : fs::path(args.log_path);
    save_training_log(log_path, result.log);
  });
}

int cmd_render(const RenderArgs& args) {
  return guarded([&] {
    const GaussianCloud cloud = load_cloud_ply(args.model_ply);
    const Camera cam = camera_for(args);
    const RenderOutput render = rasterize(cloud, cam);
    if (!args.out_image.empty()) save_ppm(args.out_image, render.color);
    if (!args.out_features.empty()) save_feature_map(args.out_features, render.features);
  });
}

namespace {

DiscriminativeFeature prompt_feature(const GaussianCloud& cloud, const Manifest& manifest,
                                     int view, int u, int v) {
  if (view < 0 || view >= static_cast<int>(manifest.views.size()))
    throw DataError("view index out of range");
  const Camera& cam = manifest.views[view].camera;
  const RenderOutput render = rasterize(cloud, cam);
  const DiscriminativeFeature feature = pick_discriminative_feature(render.features, u, v);
  if (feature.degenerate)
    throw DataError("degenerate feature at pixel (" + std::to_string(u) + ", " +
                    std::to_string(v) + ")");
  return feature;
}

}  // namespace

int cmd_select(const SelectArgs& args) {
  return guarded([&] {
    const GaussianCloud cloud = load_cloud_ply(args.model_ply);
    const LoadedScene scene = load_scene(args.data_dir);
    const DiscriminativeFeature feature =
        prompt_feature(cloud, scene.manifest, args.view, args.u, args.v);
    const Camera& cam = scene.manifest.views[args.view].camera;
    const RenderOutput render = rasterize(cloud, cam);
    const BoolMask mask = object_mask(similarity_map(render.features, feature.feature), args.t);
    save_pgm16(args.out_mask, to_labels(mask));
  });
}

int cmd_segment3d(const Segment3dArgs& args) {
  return guarded([&] {
    const GaussianCloud cloud = load_cloud_ply(args.model_ply);
    const LoadedScene scene = load_scene(args.data_dir);
    const DiscriminativeFeature feature =
        prompt_feature(cloud, scene.manifest, args.view, args.u, args.v);
    const std::vector<int> seeds = select_gaussians_3d(cloud, feature.feature, args.t);
    if (seeds.empty()) throw DataError("segment3d: empty selection at the given prompt");
    const ObjectSelection3D selection = convex_hull_extract(cloud, seeds);
    save_cloud_ply(args.out_ply, cloud.subset(selection.hull_indices));
  });
}

int cmd_eval(const EvalArgs& args) {
  return guarded([&] {
    const GaussianCloud cloud = load_cloud_ply(args.model_ply);
    const LoadedScene scene = load_scene(args.data_dir);

    fs::path queries_path = args.queries_path.empty() ? scene.dir / scene.manifest.queries
                                                      : fs::path(args.queries_path);
    if (args.queries_path.empty() && scene.manifest.queries.empty())
      throw DataError("eval: dataset has no queries file; pass --queries");
    const std::vector<QueryRecord> records = load_queries(queries_path);

    std::vector<Camera> cameras;
    std::vector<SegmentMask> gt_masks;
    std::vector<int> test_views;
    for (int i = 0; i < static_cast<int>(scene.manifest.views.size()); ++i) {
      cameras.push_back(scene.manifest.views[i].camera);
      gt_masks.push_back(load_pgm16(scene.dir / scene.manifest.views[i].gt_mask));
      if (scene.manifest.views[i].is_test) test_views.push_back(i);
    }
    if (test_views.empty()) throw DataError("eval: dataset has no test views");

    std::vector<SegmentationQuery> queries;
    for (const auto& r : records) queries.push_back({r.object_id, r.view, r.u, r.v});

    const EvalReport report = evaluate(cloud, cameras, test_views, gt_masks, queries, args.t);
    std::ofstream out(args.out_report);
    if (!out) throw DataError("cannot write " + args.out_report);
    out << report.table();
    std::ofstream jsonl(args.out_report + ".jsonl");
    jsonl << report.jsonl();
    std::cout << report.table();
  });
}

int run(int argc, const char* const* argv) {
  CLI::App app{"3D Gaussian splatting with a per-Gaussian segmentation feature field"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "generate a synthetic multi-view dataset");
  generate->add_option("--spec", gen.spec_path, "scene spec JSON (omit for the demo scene)");
  generate->add_option("--out", gen.out_dir, "output directory")->required();
  std::uint64_t seed_value = 0;
  auto* seed_opt = generate->add_option("--seed", seed_value, "override the spec seed");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "optimize a cloud on a dataset");
  train->add_option("--data", tr.data_dir, "dataset directory")->required();
  train->add_option("--out", tr.out_ply, "output cloud PLY")->required();
  train->add_option("--init", tr.init_ply, "initial cloud (default: the dataset cloud)");
  train->add_option("--log", tr.log_path, "training log path");
  train->add_option("--iters", tr.iterations, "iterations");
  train->add_flag("--freeze-geometry", tr.freeze_geometry, "update features only");
  train->add_option("--lambda-clustering", tr.lambda_clustering, "clustering loss weight");
  train->add_option("--seed", tr.seed, "rng seed");
  train->add_option("--clustering-every", tr.clustering_every, "clustering loss cadence");
  train->add_option("--reg-every", tr.regularization_every, "regularization cadence");
  train->add_option("--feature-lr", tr.feature_lr, "feature learning rate");

  RenderArgs ren;
  auto* render = app.add_subcommand("render", "render a view of a cloud");
  render->add_option("--model", ren.model_ply, "cloud PLY")->required();
  render->add_option("--data", ren.data_dir, "dataset directory (for --camera)");
  render->add_option("--camera", ren.camera_index, "camera index into the dataset");
  render->add_option("--camera-file", ren.camera_file, "camera JSON file");
  render->add_option("--out-image", ren.out_image, "output PPM image");
  render->add_option("--out-feat", ren.out_features, "output feature map");

  SelectArgs sel;
  auto* select = app.add_subcommand("select", "pixel-prompted object mask in the same view");
  select->add_option("--model", sel.model_ply)->required();
  select->add_option("--data", sel.data_dir)->required();
  select->add_option("--view", sel.view)->required();
  std::vector<int> sel_pixel;
  select->add_option("--pixel", sel_pixel, "prompt pixel u,v")->required()->expected(2)
      ->delimiter(',');
  select->add_option("--t", sel.t, "similarity threshold");
  select->add_option("--out-mask", sel.out_mask)->required();

  Segment3dArgs seg;
  auto* segment3d = app.add_subcommand("segment3d", "extract the prompted 3D object");
  segment3d->add_option("--model", seg.model_ply)->required();
  segment3d->add_option("--data", seg.data_dir)->required();
  segment3d->add_option("--view", seg.view)->required();
  std::vector<int> seg_pixel;
  segment3d->add_option("--pixel", seg_pixel, "prompt pixel u,v")->required()->expected(2)
      ->delimiter(',');
  segment3d->add_option("--t", seg.t, "similarity threshold");
  segment3d->add_option("--out", seg.out_ply)->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score pixel-prompted masks on the test split");
  eval->add_option("--model", ev.model_ply)->required();
  eval->add_option("--data", ev.data_dir)->required();
  eval->add_option("--queries", ev.queries_path, "queries JSON (default: the dataset's)");
  eval->add_option("--t", ev.t, "similarity threshold");
  eval->add_option("--out", ev.out_report)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  if (generate->parsed()) {
    if (seed_opt->count() > 0) gen.seed = seed_value;
    return cmd_generate(gen);
  }
  if (train->parsed()) return cmd_train(tr);
  if (render->parsed()) return cmd_render(ren);
  if (select->parsed()) {
    sel.u = sel_pixel[0];
    sel.v = sel_pixel[1];
    return cmd_select(sel);
  }
  if (segment3d->parsed()) {
    seg.u = seg_pixel[0];
    seg.v = seg_pixel[1];
    return cmd_segment3d(seg);
  }
  if (eval->parsed()) return cmd_eval(ev);
  return kUsageError;
}

}  // namespace splatseg::cli
