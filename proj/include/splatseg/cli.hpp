#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace splatseg::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNumericalError = 3;

struct GenerateArgs {
  std::string spec_path;  // empty = built-in demo scene
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};
int cmd_generate(const GenerateArgs& args);

struct TrainArgs {
  std::string data_dir;
  std::string out_ply;
  std::string init_ply;   // empty = the dataset's ground-truth cloud
  std::string log_path;   // empty = <out_ply>.log.jsonl
  int iterations = 30000;
  bool freeze_geometry = false;
  double lambda_clustering = 1e-6;
  std::uint64_t seed = 0;
  int clustering_every = 50;
  int regularization_every = 100;
  double feature_lr = 2.5e-3;
};
int cmd_train(const TrainArgs& args);

struct RenderArgs {
  std::string model_ply;
  std::string data_dir;     // used with camera_index
  int camera_index = -1;
  std::string camera_file;  // alternative to data_dir + index
  std::string out_image;
  std::string out_features;
};
int cmd_render(const RenderArgs& args);

struct SelectArgs {
  std::string model_ply;
  std::string data_dir;
  int view = 0;
  int u = 0, v = 0;
  double t = 0.7;
  std::string out_mask;
};
int cmd_select(const SelectArgs& args);

struct Segment3dArgs {
  std::string model_ply;
  std::string data_dir;
  int view = 0;
  int u = 0, v = 0;
  double t = 0.7;
  std::string out_ply;
};
int cmd_segment3d(const Segment3dArgs& args);

struct EvalArgs {
  std::string model_ply;
  std::string data_dir;
  std::string queries_path;  // empty = the dataset's queries file
  std::string out_report;
  double t = 0.7;
};
int cmd_eval(const EvalArgs& args);

int run(int argc, const char* const* argv);

}  // namespace splatseg::cli
