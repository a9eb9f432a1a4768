#include <iostream>

#include "CLI11.hpp"
#include "flowforge/commands.hpp"

int main(int argc, char** argv) {
  using namespace flowforge::cli;

  CLI::App app{"flowforge: RL fine-tuning of toy flow-matching models"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Encode every condition into the on-disk cache");
  c_pre->add_option("--config", pre.config, "Run config (YAML)")->required();
  c_pre->add_option("--ckpt", pre.ckpt, "Take the encoder from this checkpoint");

  PretrainArgs pt;
  auto* c_pt = app.add_subcommand("pretrain", "Flow-matching pretraining");
  c_pt->add_option("--config", pt.config, "Run config (YAML)")->required();
  c_pt->add_option("--out", pt.out, "Checkpoint to write")->required();
  c_pt->add_option("--steps", pt.steps, "Override pretrain.steps");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "RL fine-tuning from a checkpoint");
  c_tr->add_option("--config", tr.config, "Run config (YAML)")->required();
  c_tr->add_option("--ckpt", tr.ckpt, "Starting checkpoint")->required();
  c_tr->add_option("--out-dir", tr.out_dir, "Output directory (default: output_dir)");
  c_tr->add_option("--steps", tr.steps, "Override trainer.total_steps");

  SampleArgs sa;
  auto* c_sa = app.add_subcommand("sample", "Draw ODE samples for one condition");
  c_sa->add_option("--config", sa.config, "Run config (YAML)")->required();
  c_sa->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
  c_sa->add_option("--n", sa.n, "Number of samples");
  c_sa->add_option("--cond", sa.cond, "Condition id");
  c_sa->add_option("--solver", sa.solver, "euler or heun");
  c_sa->add_option("--out", sa.out, "Output CSV");

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "Summarize a run's metrics.csv");
  c_rp->add_option("--run-dir", rp.run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*c_pre) return cmd_preprocess(pre, std::cout, std::cerr);
  if (*c_pt) return cmd_pretrain(pt, std::cout, std::cerr);
  if (*c_tr) return cmd_train(tr, std::cout, std::cerr);
  if (*c_sa) return cmd_sample(sa, std::cout, std::cerr);
  if (*c_rp) return cmd_report(rp, std::cout, std::cerr);
  return kConfigError;
}
