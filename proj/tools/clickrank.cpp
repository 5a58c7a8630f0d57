// Command-line front end for the session click-out ranking pipeline.
//
// Subcommands mirror the pipeline stages; `run` executes them all. Options
// override the config file key by key, so `clickrank run --config base.cfg
// --mf-epochs 50` works as expected.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "clickrank/config.hpp"
#include "clickrank/eval.hpp"
#include "clickrank/ingest.hpp"
#include "clickrank/pipeline.hpp"
#include "clickrank/synth.hpp"
#include "clickrank/text_io.hpp"

namespace {

using clickrank::PipelineConfig;

// Every option lands in a key-value map with config-file keys; build_config
// does the parsing and validation in one place.
struct KvOptions {
  std::map<std::string, std::string> values;
  std::map<std::string, std::string> pending;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto& slot = pending[key];
    cmd->add_option_function<std::string>(
        flag, [&slot](const std::string& v) { slot = v; }, help);
  }

  void collect() {
    for (auto& [key, value] : pending) {
      if (!value.empty()) values[key] = value;
    }
  }
};

PipelineConfig make_config(const std::string& config_path, KvOptions& opts) {
  opts.collect();
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = clickrank::read_config_file(config_path);
  for (const auto& [key, value] : opts.values) kv[key] = value;
  return clickrank::build_config(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-based hotel click-out ranking pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "Config file (key=value lines)")->expected(1);

  KvOptions opts;
  auto add_common = [&](CLI::App* cmd) {
    opts.add(cmd, "--workdir", "paths.workdir", "Working directory for stage artifacts");
    opts.add(cmd, "--seed", "seed", "Global seed (derives per-stage seeds)");
  };

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic session log");
  std::string gen_output = "synthetic.csv";
  generate->add_option("--output", gen_output, "Output log path");
  std::map<std::string, std::string> synth_kv;
  auto add_synth = [&](const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = synth_kv[key];
    generate->add_option_function<std::string>(
        flag, [&slot](const std::string& v) { slot = v; }, help);
  };
  add_synth("--users", "synth.users", "Number of users");
  add_synth("--items", "synth.items", "Number of items");
  add_synth("--clusters", "synth.clusters", "Number of item clusters");
  add_synth("--sessions-per-user", "synth.sessions_per_user", "Sessions per user");
  add_synth("--mean-length", "synth.mean_session_length", "Mean hotel actions per session");
  add_synth("--impression-size", "synth.impression_size", "Impression list size");
  add_synth("--affinity", "synth.affinity", "Probability of drawing from the preferred cluster");
  add_synth("--noise", "synth.noise_rate", "Probability of inserting a non-hotel action");
  add_synth("--seed", "synth.seed", "Generator seed");

  // split
  auto* split_cmd = app.add_subcommand("split", "Split a log into local/inner train and test sets");
  add_common(split_cmd);
  opts.add(split_cmd, "--input", "paths.input", "Input session log");
  opts.add(split_cmd, "--ratio", "split.ratio", "Train fraction (0, 1)");
  opts.add(split_cmd, "--delimiter", "split.delimiter", "Field delimiter (single char or 'tab')");

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Train item embeddings on the split corpus");
  add_common(embed_cmd);
  opts.add(embed_cmd, "--dimension", "embed.dimension", "Embedding dimension");
  opts.add(embed_cmd, "--window", "embed.window", "Context window size");
  opts.add(embed_cmd, "--min-count", "embed.min_count", "Minimum item frequency");
  opts.add(embed_cmd, "--negatives", "embed.negatives", "Negative samples per positive");
  opts.add(embed_cmd, "--epochs", "embed.epochs", "Training epochs");
  opts.add(embed_cmd, "--step-size", "embed.step_size", "Initial step size");

  // train-mf
  auto* mf_cmd = app.add_subcommand("train-mf", "Train the latent-factor ranker");
  add_common(mf_cmd);
  opts.add(mf_cmd, "--epochs", "mf.epochs", "Training epochs");
  opts.add(mf_cmd, "--components", "mf.components", "Latent dimensions");
  opts.add(mf_cmd, "--lr", "mf.lr", "Learning rate (adagrad)");
  opts.add(mf_cmd, "--schedule", "mf.schedule", "adagrad or adadelta");
  opts.add(mf_cmd, "--price-buckets", "mf.price_buckets", "Quantile price buckets");
  bool mf_final = false;
  mf_cmd->add_flag("--final", mf_final, "Train on the full local training set");

  // train-rnn
  auto* rnn_cmd = app.add_subcommand("train-rnn", "Train the GRU sequence ranker");
  add_common(rnn_cmd);
  opts.add(rnn_cmd, "--hidden-dim", "gru.hidden_dim", "Hidden state size");
  opts.add(rnn_cmd, "--epochs", "gru.epochs", "Training epochs");
  opts.add(rnn_cmd, "--lr", "gru.lr", "Step size");
  opts.add(rnn_cmd, "--max-len", "gru.max_len", "Maximum encoded session length");
  opts.add(rnn_cmd, "--batch-size", "gru.batch_size", "Mini-batch size");
  bool rnn_final = false;
  rnn_cmd->add_flag("--final", rnn_final, "Train on the full local training set");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Write base-model rankings for a partition");
  add_common(predict_cmd);
  std::string partition = "inner_test";
  predict_cmd->add_option("--partition", partition, "inner_test or local_test");
  bool predict_final = false;
  predict_cmd->add_flag("--final-models", predict_final, "Use the retrained model instances");

  // train-stack
  auto* stack_cmd = app.add_subcommand("train-stack", "Train the stacker on inner-test rankings");
  add_common(stack_cmd);
  opts.add(stack_cmd, "--rounds", "stack.rounds", "Boosting rounds");
  opts.add(stack_cmd, "--max-depth", "stack.max_depth", "Maximum tree depth");
  opts.add(stack_cmd, "--shrinkage", "stack.shrinkage", "Shrinkage per round");
  opts.add(stack_cmd, "--min-child-weight", "stack.min_child_weight", "Minimum hessian per child");

  // ensemble
  auto* ensemble_cmd = app.add_subcommand("ensemble", "Rank the local test set and write the submission");
  add_common(ensemble_cmd);
  opts.add(ensemble_cmd, "--mode", "ensemble.mode", "mf-only, rnn-only, borda or stack");
  opts.add(ensemble_cmd, "--retrain-base", "pipeline.retrain_base", "Use retrained base models (true/false)");
  opts.add(ensemble_cmd, "--output", "paths.output", "Submission path");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against ground truth");
  add_common(eval_cmd);
  std::string eval_predictions, eval_truth;
  eval_cmd->add_option("--predictions", eval_predictions, "Prediction file (default: workdir final)");
  eval_cmd->add_option("--truth", eval_truth, "Ground truth file (default: workdir local test)");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the full pipeline");
  add_common(run_cmd);
  opts.add(run_cmd, "--input", "paths.input", "Input session log");
  opts.add(run_cmd, "--ratio", "split.ratio", "Train fraction (0, 1)");
  opts.add(run_cmd, "--delimiter", "split.delimiter", "Field delimiter");
  opts.add(run_cmd, "--mode", "ensemble.mode", "mf-only, rnn-only, borda or stack");
  opts.add(run_cmd, "--retrain-base", "pipeline.retrain_base", "Retrain base models on local train (true/false)");
  opts.add(run_cmd, "--output", "paths.output", "Submission path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      std::map<std::string, std::string> kv;
      for (const auto& [key, value] : synth_kv) {
        if (!value.empty()) kv[key] = value;
      }
      clickrank::generate_synthetic_file(gen_output, clickrank::build_synth_spec(kv));
      std::cout << "wrote " << gen_output << "\n";
      return 0;
    }

    PipelineConfig config = make_config(config_path, opts);

    if (split_cmd->parsed()) {
      clickrank::stage_split(config);
    } else if (embed_cmd->parsed()) {
      clickrank::stage_embed(config);
    } else if (mf_cmd->parsed()) {
      clickrank::stage_train_mf(config, mf_final);
    } else if (rnn_cmd->parsed()) {
      clickrank::stage_train_rnn(config, rnn_final);
    } else if (predict_cmd->parsed()) {
      clickrank::stage_predict(config, partition, predict_final);
    } else if (stack_cmd->parsed()) {
      clickrank::stage_train_stack(config);
    } else if (ensemble_cmd->parsed()) {
      clickrank::stage_ensemble(config);
    } else if (eval_cmd->parsed()) {
      if (!eval_predictions.empty() || !eval_truth.empty()) {
        if (eval_predictions.empty() || eval_truth.empty()) {
          throw std::runtime_error("evaluate: --predictions and --truth go together");
        }
        auto preds = clickrank::read_predictions(eval_predictions);
        auto truth = clickrank::read_ground_truth(eval_truth);
        std::cout << clickrank::report_text(clickrank::evaluate(preds, truth));
      } else {
        std::cout << clickrank::report_text(clickrank::stage_evaluate(config));
      }
    } else if (run_cmd->parsed()) {
      clickrank::EvalReport report = clickrank::run_pipeline(config);
      std::cout << clickrank::report_text(report);
      std::cout << "submission: " << config.submission_path() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
