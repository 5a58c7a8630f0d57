#pragma once

#include <string>
#include <vector>

#include "clickrank/config.hpp"
#include "clickrank/eval.hpp"
#include "clickrank/types.hpp"

namespace clickrank {

// Workdir artifact names. Stages communicate through these files only, so any
// stage can be rerun in isolation and a failed run resumes from its last
// completed stage.
struct Artifacts {
  std::string dir;

  std::string sessions(const std::string& partition) const { return dir + "/" + partition + ".csv"; }
  std::string truth(const std::string& partition) const { return dir + "/truth_" + partition + ".csv"; }
  std::string embeddings() const { return dir + "/embeddings.txt"; }
  std::string mf_hotel(bool final_model) const {
    return dir + (final_model ? "/mf_hotel_final.txt" : "/mf_hotel.txt");
  }
  std::string mf_price(bool final_model) const {
    return dir + (final_model ? "/mf_price_final.txt" : "/mf_price.txt");
  }
  std::string gru(bool final_model) const {
    return dir + (final_model ? "/gru_final.txt" : "/gru.txt");
  }
  std::string predictions(const std::string& model, const std::string& partition) const {
    return dir + "/pred_" + model + "_" + partition + ".csv";
  }
  std::string stack_rows() const { return dir + "/stack_rows.csv"; }
  std::string stack_model() const { return dir + "/stack_model.txt"; }
  std::string report_kv() const { return dir + "/report.kv"; }
  std::string report_txt() const { return dir + "/report.txt"; }
};

// Individual stages; each reads and writes workdir files. `final_models`
// selects the instances retrained on the full local training set.
void stage_split(const PipelineConfig& config);
void stage_embed(const PipelineConfig& config);
void stage_train_mf(const PipelineConfig& config, bool final_models);
void stage_train_rnn(const PipelineConfig& config, bool final_models);
void stage_predict(const PipelineConfig& config, const std::string& partition, bool final_models);
void stage_train_stack(const PipelineConfig& config);
void stage_ensemble(const PipelineConfig& config);
EvalReport stage_evaluate(const PipelineConfig& config);

// Full flow: split, embed, train base models on the inner training set,
// predict the inner test set, train the stacker on those predictions,
// optionally retrain the base models on the full local training set, rank the
// local test set under the configured mode, evaluate. Any failure carries the
// stage name; artifacts of completed stages stay on disk.
EvalReport run_pipeline(const PipelineConfig& config);

// The masked clickout a prediction targets: the session's last clickout when
// it has impressions and no reference. Returns nullptr otherwise.
const Action* masked_clickout(const Session& session);

std::vector<Session> load_sessions(const std::string& path, const std::string& expected_partition,
                                   char delimiter);

}  // namespace clickrank
