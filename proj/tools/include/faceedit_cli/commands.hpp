#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace faceedit::cli {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string checkpoint;
};

struct TrainArgs {
  std::string ablation;  // empty keeps the config's flags
  std::string resume;
  std::int64_t epochs = -1;
};

struct EditArgs {
  std::string input;  // image file or directory
  std::string output;
  std::string set;     // Name=0|1,...
  std::string source;  // explicit source bits, over all-zero
  std::string classifier;
};

struct VisualizeArgs {
  std::string input;
  std::string output_dir = "heatmaps";
  std::string attributes;  // comma-separated subset, empty for all
};

struct EvaluateArgs {
  std::string mode = "accuracy";  // accuracy | fid | ablation | classifier
  std::string classifier;
  std::int64_t n_per_attribute = 256;
  std::string output_dir = "reports";
  std::string fid_reference = "split";  // split | same
};

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string classifier;
};

int cmd_train(const GlobalOptions& g, const TrainArgs& a, std::ostream& out, std::ostream& err);
int cmd_edit(const GlobalOptions& g, const EditArgs& a, std::ostream& out, std::ostream& err);
int cmd_visualize(const GlobalOptions& g, const VisualizeArgs& a, std::ostream& out, std::ostream& err);
int cmd_evaluate(const GlobalOptions& g, const EvaluateArgs& a, std::ostream& out, std::ostream& err);
int cmd_serve(const GlobalOptions& g, const ServeArgs& a, std::ostream& out, std::ostream& err);

// Full command line, args[0] being the program name. Returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace faceedit::cli
