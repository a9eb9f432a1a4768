#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace flowforge::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kIncompatible = 4,
};

struct PreprocessArgs {
  std::string config;
  std::optional<std::string> ckpt;
};

struct PretrainArgs {
  std::string config;
  std::string out;
  std::optional<std::size_t> steps;
};

struct TrainArgs {
  std::string config;
  std::string ckpt;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> steps;
};

struct SampleArgs {
  std::string config;
  std::string ckpt;
  std::size_t n = 100;
  std::int64_t cond = 0;
  std::string solver = "euler";
  std::string out = "samples.csv";
};

struct ReportArgs {
  std::string run_dir;
};

// Each command reports through `out`/`err` and returns an ExitCode. The
// FLOWFORGE_SEED environment variable, when set, overrides the config seed.
int cmd_preprocess(const PreprocessArgs& args, std::ostream& out, std::ostream& err);
int cmd_pretrain(const PretrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream& err);
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

}  // namespace flowforge::cli
