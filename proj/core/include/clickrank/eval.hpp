#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clickrank/types.hpp"

namespace clickrank {

struct EvalReport {
  double mrr = 0.0;
  int n_sessions = 0;
  double hit_at_1 = 0.0;
  std::map<std::string, double> per_session;  // session_id -> reciprocal rank
};

// 1/position of truth (1-based); 0 when absent.
double reciprocal_rank(const RankedList& list, const std::string& truth);

// Mean reciprocal rank over every ground-truth session. Sessions without a
// prediction count as 0; a prediction without a ground-truth entry or a
// duplicated session id is an error.
EvalReport evaluate(const std::vector<RankedList>& predictions, const GroundTruth& truth);

// Each masked clickout's impression list, unchanged. Clickouts without
// impressions are skipped with a warning on stderr.
std::vector<RankedList> impression_baseline(const std::vector<Session>& masked_sessions);

// Clickout metadata needed by the submission format.
struct SubmissionMeta {
  std::string user_id;
  std::int64_t timestamp = 0;
  int step = 1;
};

// user_id/timestamp/step of each session's last clickout.
std::map<std::string, SubmissionMeta> submission_meta(const std::vector<Session>& sessions);

void write_submission(const std::string& path, const std::vector<RankedList>& predictions,
                      const std::map<std::string, SubmissionMeta>& meta);
std::vector<RankedList> read_submission(const std::string& path);

std::string report_text(const EvalReport& report);
void write_report(const std::string& path, const EvalReport& report);  // key=value lines

}  // namespace clickrank
