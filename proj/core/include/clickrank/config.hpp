#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "clickrank/embedding.hpp"
#include "clickrank/ensemble.hpp"
#include "clickrank/gbdt.hpp"
#include "clickrank/gru.hpp"
#include "clickrank/mf.hpp"
#include "clickrank/synth.hpp"

namespace clickrank {

// Everything run_pipeline needs. Sub-seeds default to offsets of the global
// seed; every other default matches the selected hyperparameters of the
// experiment (see README).
struct PipelineConfig {
  std::string input_log;
  std::string workdir = "work";
  std::string output;  // submission path; defaults to <workdir>/submission.csv
  char delimiter = ',';
  double ratio = 0.8;
  std::uint64_t seed = 42;

  EmbedParams embed;
  MfHyper mf;
  int price_buckets = 10;
  GruParams gru;
  GbdtParams stack_trees;
  EnsembleMode mode = EnsembleMode::stack;
  bool retrain_base = true;

  std::string submission_path() const;
};

// Flat 'section.key=value' text; '#' comments and blank lines ignored.
std::map<std::string, std::string> read_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Builds a config from key-value pairs; unknown keys are an error. The global
// 'seed' key re-seeds every stage that has no explicit '<stage>.seed'.
PipelineConfig build_config(const std::map<std::string, std::string>& kv);

// The full key set with current values, parseable by parse_config_text.
std::string config_to_string(const PipelineConfig& config);

SynthSpec build_synth_spec(const std::map<std::string, std::string>& kv);

}  // namespace clickrank
