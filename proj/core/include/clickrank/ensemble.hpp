#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clickrank/gbdt.hpp"
#include "clickrank/gru.hpp"
#include "clickrank/mf.hpp"
#include "clickrank/types.hpp"

namespace clickrank {

enum class EnsembleMode { mf_only, rnn_only, borda, stack };

EnsembleMode parse_mode(const std::string& name);
std::string mode_name(EnsembleMode mode);

// Borda count over >= 2 rankings of the same item set: rank r earns m - r
// points, totals sorted descending, ties resolved by the first list's order.
RankedList borda_combine(const std::vector<RankedList>& lists);

// One impression item of one clickout, as seen by the stacker: both base
// models' ranks and scores plus the impression position.
struct StackRow {
  std::string group_id;
  std::string item_id;
  int label = 0;
  int mf_rank = 0;  // 1-based
  int rnn_rank = 0;
  double mf_score = 0.0;
  double rnn_score = 0.0;
  int impression_position = 0;

  std::vector<double> features() const {
    return {static_cast<double>(mf_rank), static_cast<double>(rnn_rank), mf_score, rnn_score,
            static_cast<double>(impression_position)};
  }
};

const std::vector<std::string>& stack_feature_names();

// Unlabeled rows for one session; both lists must be permutations of
// `impressions`.
std::vector<StackRow> session_stack_rows(const RankedList& mf, const RankedList& rnn,
                                         const std::vector<std::string>& impressions);

// Labeled training rows across sessions. Both prediction sets must cover the
// same sessions; `impressions` maps each session to its original impression
// list (the source of impression_position).
std::vector<StackRow> build_stack_rows(const std::vector<RankedList>& mf_predictions,
                                       const std::vector<RankedList>& rnn_predictions,
                                       const GroundTruth& truth,
                                       const std::map<std::string, std::vector<std::string>>& impressions);

TreeEnsemble train_stack(const std::vector<StackRow>& rows, const GbdtParams& params);

RankedList stack_combine(const TreeEnsemble& stack_model, const RankedList& mf,
                         const RankedList& rnn, const std::vector<std::string>& impressions);

// Everything route needs to rank one session.
struct ModelSet {
  const LatentModel* hotel = nullptr;
  const LatentModel* price = nullptr;
  const GruRanker* gru = nullptr;
  const EmbeddingTable* table = nullptr;
  const TreeEnsemble* stack = nullptr;
  int max_len = 200;
};

// Cold-start sessions (one hotel action after filtering) emit the impression
// list verbatim; longer sessions go through the configured combiner. Sessions
// the GRU cannot encode (no referenced hotel action before the clickout) also
// fall back to impression order when the mode needs the RNN.
RankedList route(const Session& session, const std::vector<std::string>& impressions,
                 const std::optional<std::vector<int>>& prices, EnsembleMode mode,
                 const ModelSet& models);

// Prediction interchange: 'session_id,item_recommendations' with items
// space-separated in rank order, optional '#partition=' first line, and an
// optional parallel .scores file.
void write_predictions(const std::string& path, const std::vector<RankedList>& predictions,
                       const std::string& partition_tag = "", bool with_scores = false);
std::vector<RankedList> read_predictions(const std::string& path,
                                         const std::string& expected_partition = "");

}  // namespace clickrank
