#include "splatseg/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "splatseg/errors.hpp"

namespace splatseg {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

void write_floats(std::ostream& out, const float* data, size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

json load_json(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return j;
}

void save_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path, false);
  out << j.dump(2) << "\n";
}

json camera_to_json(const Camera& cam) {
  return json{{"fx", cam.fx},
              {"fy", cam.fy},
              {"cx", cam.cx},
              {"cy", cam.cy},
              {"width", cam.width},
              {"height", cam.height},
              {"rotation", {cam.rotation[0], cam.rotation[1], cam.rotation[2], cam.rotation[3]}},
              {"translation", {cam.translation[0], cam.translation[1], cam.translation[2]}},
              {"near", cam.near}};
}

Camera camera_from_json(const json& j) {
  Camera cam;
  try {
    cam.fx = j.at("fx");
    cam.fy = j.at("fy");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    const auto& r = j.at("rotation");
    const auto& t = j.at("translation");
    cam.rotation = Vec4(r.at(0), r.at(1), r.at(2), r.at(3));
    cam.translation = Vec3(t.at(0), t.at(1), t.at(2));
    cam.near = j.at("near");
  } catch (const json::exception& e) {
    throw DataError(std::string("camera record: ") + e.what());
  }
  cam.validate();
  return cam;
}

}  // namespace

void save_cloud_ply(const std::filesystem::path& path, const GaussianCloud& cloud) {
  const int n = cloud.size(), dim = cloud.feature_dim();
  auto out = open_out(path, true);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
  const char* base[] = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                        "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"};
  for (const char* name : base) out << "property float " << name << "\n";
  for (int d = 0; d < dim; ++d) out << "property float f_seg_" << d << "\n";
  out << "end_header\n";

  std::vector<float> row(14 + dim);
  for (int i = 0; i < n; ++i) {
    int k = 0;
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(cloud.positions(a, i));
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(cloud.colors(a, i));
    row[k++] = static_cast<float>(cloud.opacities[i]);
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(cloud.log_scales(a, i));
    for (int a = 0; a < 4; ++a) row[k++] = static_cast<float>(cloud.rotations(a, i));
    for (int d = 0; d < dim; ++d) row[k++] = static_cast<float>(cloud.features(d, i));
    write_floats(out, row.data(), row.size());
  }
}

GaussianCloud load_cloud_ply(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw DataError(path.string() + ": not a PLY file");
  long vertex_count = -1;
  std::vector<std::string> properties;
  bool little_endian = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      little_endian = (fmt == "binary_little_endian");
    } else if (word == "element") {
      std::string kind;
      ls >> kind >> vertex_count;
      if (kind != "vertex") throw DataError(path.string() + ": unexpected element " + kind);
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw DataError(path.string() + ": only float properties supported");
      properties.push_back(name);
    } else if (word == "end_header") {
      break;
    } else if (word == "comment" || word.empty()) {
      continue;
    }
  }
  if (!little_endian) throw DataError(path.string() + ": expected binary_little_endian format");
  if (vertex_count < 0) throw DataError(path.string() + ": missing vertex element");

  auto index_of = [&](const std::string& name) {
    for (int i = 0; i < static_cast<int>(properties.size()); ++i)
      if (properties[i] == name) return i;
    throw DataError(path.string() + ": missing property " + name);
  };
  const int stride = static_cast<int>(properties.size());
  int dim = 0;
  while (true) {
    bool found = false;
    for (const auto& p : properties)
      if (p == "f_seg_" + std::to_string(dim)) found = true;
    if (!found) break;
    ++dim;
  }

  std::vector<int> layout;
  const char* base[] = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                        "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"};
  for (const char* name : base) layout.push_back(index_of(name));
  for (int d = 0; d < dim; ++d) layout.push_back(index_of("f_seg_" + std::to_string(d)));

  GaussianCloud cloud = GaussianCloud::create(dim, static_cast<int>(vertex_count));
  std::vector<float> row(stride);
  for (long i = 0; i < vertex_count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(stride * 4));
    if (!in) throw DataError(path.string() + ": truncated vertex data");
    int k = 0;
    for (int a = 0; a < 3; ++a) cloud.positions(a, i) = row[layout[k++]];
    for (int a = 0; a < 3; ++a) cloud.colors(a, i) = row[layout[k++]];
    cloud.opacities[i] = row[layout[k++]];
    for (int a = 0; a < 3; ++a) cloud.log_scales(a, i) = row[layout[k++]];
    for (int a = 0; a < 4; ++a) cloud.rotations(a, i) = row[layout[k++]];
    for (int d = 0; d < dim; ++d) cloud.features(d, i) = row[layout[k++]];
  }
  return cloud;
}

void save_pgm16(const std::filesystem::path& path, const SegmentMask& mask) {
  auto out = open_out(path, true);
  out << "P5\n" << mask.cols() << " " << mask.rows() << "\n65535\n";
  for (int v = 0; v < mask.rows(); ++v)
    for (int u = 0; u < mask.cols(); ++u) {
      const int value = mask(v, u);
      if (value < 0 || value > 65535)
        throw DataError(path.string() + ": label out of the 16-bit range");
      const unsigned char bytes[2] = {static_cast<unsigned char>(value >> 8),
                                      static_cast<unsigned char>(value & 0xFF)};
      out.write(reinterpret_cast<const char*>(bytes), 2);
    }
}

SegmentMask load_pgm16(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535)
    throw DataError(path.string() + ": expected 16-bit binary PGM (P5, maxval 65535)");
  in.get();  // single whitespace after the header
  SegmentMask mask(h, w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      unsigned char bytes[2];
      in.read(reinterpret_cast<char*>(bytes), 2);
      if (!in) throw DataError(path.string() + ": truncated pixel data");
      mask(v, u) = (static_cast<int>(bytes[0]) << 8) | bytes[1];
    }
  return mask;
}

void save_ppm(const std::filesystem::path& path, const ImageRGB& image) {
  auto out = open_out(path, true);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (int p = 0; p < image.width * image.height; ++p)
    for (int c = 0; c < 3; ++c) {
      const double clamped = std::min(1.0, std::max(0.0, image.data(p, c)));
      const unsigned char byte = static_cast<unsigned char>(std::lround(clamped * 255.0));
      out.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

ImageRGB load_ppm(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255)
    throw DataError(path.string() + ": expected 8-bit binary PPM (P6, maxval 255)");
  in.get();
  ImageRGB image = ImageRGB::zero(w, h);
  for (int p = 0; p < w * h; ++p)
    for (int c = 0; c < 3; ++c) {
      unsigned char byte;
      in.read(reinterpret_cast<char*>(&byte), 1);
      if (!in) throw DataError(path.string() + ": truncated pixel data");
      image.data(p, c) = byte / 255.0;
    }
  return image;
}

void save_feature_map(const std::filesystem::path& path, const FeatureMap& fm) {
  auto out = open_out(path, true);
  out.write("CGCF", 4);
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(fm.height),
                                   static_cast<std::uint32_t>(fm.width),
                                   static_cast<std::uint32_t>(fm.feature_dim())};
  out.write(reinterpret_cast<const char*>(header), 12);
  std::vector<float> row(fm.feature_dim());
  for (int p = 0; p < fm.width * fm.height; ++p) {
    for (int d = 0; d < fm.feature_dim(); ++d) row[d] = static_cast<float>(fm.data(p, d));
    write_floats(out, row.data(), row.size());
  }
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CGCF", 4) != 0)
    throw DataError(path.string() + ": bad feature map magic");
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), 12);
  if (!in) throw DataError(path.string() + ": truncated feature map header");
  FeatureMap fm = FeatureMap::zero(static_cast<int>(header[1]), static_cast<int>(header[0]),
                                   static_cast<int>(header[2]));
  std::vector<float> row(fm.feature_dim());
  for (int p = 0; p < fm.width * fm.height; ++p) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw DataError(path.string() + ": truncated feature map data");
    for (int d = 0; d < fm.feature_dim(); ++d) fm.data(p, d) = row[d];
  }
  return fm;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  json views = json::array();
  for (const auto& view : manifest.views)
    views.push_back(json{{"camera", camera_to_json(view.camera)},
                         {"image", view.image},
                         {"mask", view.mask},
                         {"gt_mask", view.gt_mask},
                         {"split", view.is_test ? "test" : "train"}});
  json j{{"version", manifest.version},
         {"scene", manifest.scene},
         {"feature_dim", manifest.feature_dim},
         {"views", views}};
  if (!manifest.cloud.empty()) j["cloud"] = manifest.cloud;
  if (!manifest.instances.empty()) j["instances"] = manifest.instances;
  if (!manifest.queries.empty()) j["queries"] = manifest.queries;
  save_json(path, j);
}

Manifest load_manifest(const std::filesystem::path& path) {
  const json j = load_json(path);
  const auto dir = path.parent_path();
  Manifest manifest;
  try {
    manifest.version = j.at("version");
    manifest.scene = j.at("scene");
    manifest.feature_dim = j.at("feature_dim");
    for (const auto& vj : j.at("views")) {
      ManifestView view;
      view.camera = camera_from_json(vj.at("camera"));
      view.image = vj.at("image");
      view.mask = vj.at("mask");
      view.gt_mask = vj.at("gt_mask");
      view.is_test = vj.at("split") == "test";
      manifest.views.push_back(std::move(view));
    }
    manifest.cloud = j.value("cloud", "");
    manifest.instances = j.value("instances", "");
    manifest.queries = j.value("queries", "");
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (manifest.views.empty()) throw DataError(path.string() + ": manifest lists no views");

  auto check = [&](const std::string& rel) {
    if (!rel.empty() && !std::filesystem::exists(dir / rel))
      throw DataError(path.string() + ": referenced file missing: " + rel);
  };
  for (const auto& view : manifest.views) {
    check(view.image);
    check(view.mask);
    check(view.gt_mask);
  }
  check(manifest.cloud);
  check(manifest.instances);
  check(manifest.queries);
  return manifest;
}

void save_queries(const std::filesystem::path& path, const std::vector<QueryRecord>& queries) {
  json j = json::array();
  for (const auto& q : queries)
    j.push_back(json{{"object_id", q.object_id}, {"view", q.view}, {"pixel", {q.u, q.v}}});
  save_json(path, j);
}

std::vector<QueryRecord> load_queries(const std::filesystem::path& path) {
  const json j = load_json(path);
  std::vector<QueryRecord> queries;
  try {
    for (const auto& qj : j) {
      QueryRecord q;
      q.object_id = qj.at("object_id");
      q.view = qj.at("view");
      q.u = qj.at("pixel").at(0);
      q.v = qj.at("pixel").at(1);
      queries.push_back(q);
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return queries;
}

void save_instance_ids(const std::filesystem::path& path, const Eigen::VectorXi& ids) {
  json j = json::array();
  for (int i = 0; i < ids.size(); ++i) j.push_back(ids[i]);
  save_json(path, j);
}

Eigen::VectorXi load_instance_ids(const std::filesystem::path& path) {
  const json j = load_json(path);
  Eigen::VectorXi ids(j.size());
  for (int i = 0; i < static_cast<int>(j.size()); ++i) ids[i] = j.at(i);
  return ids;
}

void save_training_log(const std::filesystem::path& path,
                       const std::vector<TrainLogRecord>& log) {
  auto out = open_out(path, false);
  for (const auto& rec : log) {
    json j{{"iteration", rec.iteration},
           {"total", rec.total},
           {"rendering", rec.rendering},
           {"gaussians", rec.gaussian_count},
           {"wall_ms", rec.wall_ms}};
    j["clustering"] = rec.clustering_applied ? json(rec.clustering) : json(nullptr);
    j["regularization"] = rec.regularization_applied ? json(rec.regularization) : json(nullptr);
    out << j.dump() << "\n";
  }
}

void save_scene_spec(const std::filesystem::path& path, const SceneSpecFile& spec) {
  json objects = json::array();
  for (const auto& obj : spec.scene.objects)
    objects.push_back(json{{"center", {obj.center[0], obj.center[1], obj.center[2]}},
                           {"radius", obj.radius},
                           {"count", obj.count},
                           {"color", {obj.color[0], obj.color[1], obj.color[2]}}});
  json j{{"name", spec.scene.name},
         {"image_width", spec.scene.image_width},
         {"image_height", spec.scene.image_height},
         {"feature_dim", spec.scene.feature_dim},
         {"seed", spec.scene.rng_seed},
         {"objects", objects},
         {"test_every", spec.scene.test_every},
         {"object_opacity", spec.scene.object_opacity},
         {"ring",
          {{"count", spec.scene.ring.count},
           {"radius", spec.scene.ring.radius},
           {"elevation_deg", spec.scene.ring.elevation_deg},
           {"focal", spec.scene.ring.focal}}},
         {"background_plane",
          {{"enabled", spec.scene.background_plane.enabled},
           {"count", spec.scene.background_plane.count},
           {"extent", spec.scene.background_plane.extent},
           {"z", spec.scene.background_plane.z},
           {"color",
            {spec.scene.background_plane.color[0], spec.scene.background_plane.color[1],
             spec.scene.background_plane.color[2]}}}},
         {"corruption",
          {{"split_prob", spec.corruption.split_prob},
           {"drop_prob", spec.corruption.drop_prob},
           {"merge_prob", spec.corruption.merge_prob}}}};
  save_json(path, j);
}

SceneSpecFile load_scene_spec(const std::filesystem::path& path) {
  const json j = load_json(path);
  SceneSpecFile spec;
  try {
    spec.scene.name = j.value("name", "scene");
    spec.scene.image_width = j.value("image_width", 64);
    spec.scene.image_height = j.value("image_height", 64);
    spec.scene.feature_dim = j.value("feature_dim", 16);
    spec.scene.rng_seed = j.value("seed", 0ULL);
    spec.scene.test_every = j.value("test_every", 5);
    spec.scene.object_opacity = j.value("object_opacity", 0.8);
    for (const auto& oj : j.at("objects")) {
      ObjectSpec obj;
      const auto& c = oj.at("center");
      obj.center = Vec3(c.at(0), c.at(1), c.at(2));
      obj.radius = oj.at("radius");
      obj.count = oj.at("count");
      const auto& col = oj.at("color");
      obj.color = Vec3(col.at(0), col.at(1), col.at(2));
      spec.scene.objects.push_back(obj);
    }
    if (j.contains("ring")) {
      const auto& r = j.at("ring");
      spec.scene.ring.count = r.value("count", 24);
      spec.scene.ring.radius = r.value("radius", 7.0);
      spec.scene.ring.elevation_deg = r.value("elevation_deg", 25.0);
      spec.scene.ring.focal = r.value("focal", 0.0);
    }
    if (j.contains("background_plane")) {
      const auto& p = j.at("background_plane");
      spec.scene.background_plane.enabled = p.value("enabled", false);
      spec.scene.background_plane.count = p.value("count", 0);
      spec.scene.background_plane.extent = p.value("extent", 3.0);
      spec.scene.background_plane.z = p.value("z", -0.6);
      if (p.contains("color")) {
        const auto& col = p.at("color");
        spec.scene.background_plane.color = Vec3(col.at(0), col.at(1), col.at(2));
      }
    }
    if (j.contains("corruption")) {
      const auto& c = j.at("corruption");
      spec.corruption.split_prob = c.value("split_prob", 0.0);
      spec.corruption.drop_prob = c.value("drop_prob", 0.0);
      spec.corruption.merge_prob = c.value("merge_prob", 0.0);
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  spec.scene.validate();
  return spec;
}

Camera load_camera_json(const std::filesystem::path& path) {
  return camera_from_json(load_json(path));
}

void save_camera_json(const std::filesystem::path& path, const Camera& cam) {
  save_json(path, camera_to_json(cam));
}

}  // namespace splatseg
