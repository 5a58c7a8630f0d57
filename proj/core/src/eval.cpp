#include "clickrank/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

double reciprocal_rank(const RankedList& list, const std::string& truth) {
  auto it = std::find(list.items.begin(), list.items.end(), truth);
  if (it == list.items.end()) return 0.0;
  return 1.0 / static_cast<double>(it - list.items.begin() + 1);
}

EvalReport evaluate(const std::vector<RankedList>& predictions, const GroundTruth& truth) {
  std::map<std::string, const RankedList*> by_session;
  for (const RankedList& p : predictions) {
    if (!by_session.emplace(p.session_id, &p).second) {
      throw std::runtime_error("evaluate: duplicate prediction for session " + p.session_id);
    }
    if (!truth.count(p.session_id)) {
      throw std::runtime_error("evaluate: prediction for session " + p.session_id +
                               " has no ground-truth entry");
    }
  }

  EvalReport report;
  report.n_sessions = static_cast<int>(truth.size());
  double sum = 0.0;
  int hits = 0;
  for (const auto& [sid, item] : truth) {
    double rr = 0.0;
    auto it = by_session.find(sid);
    if (it != by_session.end()) rr = reciprocal_rank(*it->second, item);
    report.per_session[sid] = rr;
    sum += rr;
    if (rr == 1.0) ++hits;
  }
  if (report.n_sessions > 0) {
    report.mrr = sum / report.n_sessions;
    report.hit_at_1 = static_cast<double>(hits) / report.n_sessions;
  }
  return report;
}

std::vector<RankedList> impression_baseline(const std::vector<Session>& masked_sessions) {
  std::vector<RankedList> out;
  for (const Session& s : masked_sessions) {
    auto it = std::find_if(s.actions.rbegin(), s.actions.rend(),
                           [](const Action& a) { return is_clickout(a); });
    if (it == s.actions.rend()) continue;
    if (!it->impressions || it->impressions->empty()) {
      std::cerr << "impression_baseline: session " << s.session_id
                << " clickout has no impressions, skipped\n";
      continue;
    }
    RankedList r;
    r.session_id = s.session_id;
    r.items = *it->impressions;
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, SubmissionMeta> submission_meta(const std::vector<Session>& sessions) {
  std::map<std::string, SubmissionMeta> meta;
  for (const Session& s : sessions) {
    auto it = std::find_if(s.actions.rbegin(), s.actions.rend(),
                           [](const Action& a) { return is_clickout(a); });
    if (it == s.actions.rend()) continue;
    meta[s.session_id] = {s.user_id, it->timestamp, it->step};
  }
  return meta;
}

void write_submission(const std::string& path, const std::vector<RankedList>& predictions,
                      const std::map<std::string, SubmissionMeta>& meta) {
  std::ostringstream out;
  out << "user_id,session_id,timestamp,step,item_recommendations\n";
  for (const RankedList& p : predictions) {
    SubmissionMeta m;
    auto it = meta.find(p.session_id);
    if (it != meta.end()) m = it->second;
    out << m.user_id << "," << p.session_id << "," << m.timestamp << "," << m.step << ","
        << join(p.items, ' ') << "\n";
  }
  write_file(path, out.str());
}

std::vector<RankedList> read_submission(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open submission file: " + path);
  std::vector<RankedList> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    auto cells = split(line, ',');
    if (cells.size() != 5) throw std::runtime_error("bad submission row: " + line);
    RankedList r;
    r.session_id = cells[1];
    if (!cells[4].empty()) r.items = split(cells[4], ' ');
    out.push_back(std::move(r));
  }
  return out;
}

std::string report_text(const EvalReport& report) {
  std::ostringstream out;
  out << "sessions evaluated: " << report.n_sessions << "\n"
      << "MRR:                " << format_double(report.mrr) << "\n"
      << "hit@1:              " << format_double(report.hit_at_1) << "\n";
  return out.str();
}

void write_report(const std::string& path, const EvalReport& report) {
  std::ostringstream out;
  out << "mrr=" << format_double(report.mrr) << "\n"
      << "n=" << report.n_sessions << "\n"
      << "hit1=" << format_double(report.hit_at_1) << "\n";
  write_file(path, out.str());
}

}  // namespace clickrank
