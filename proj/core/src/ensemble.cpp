#include "clickrank/ensemble.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

EnsembleMode parse_mode(const std::string& name) {
  if (name == "mf-only" || name == "mf") return EnsembleMode::mf_only;
  if (name == "rnn-only" || name == "rnn") return EnsembleMode::rnn_only;
  if (name == "borda") return EnsembleMode::borda;
  if (name == "stack") return EnsembleMode::stack;
  throw std::invalid_argument("unknown ensemble mode '" + name +
                              "' (expected mf-only, rnn-only, borda or stack)");
}

std::string mode_name(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::mf_only: return "mf-only";
    case EnsembleMode::rnn_only: return "rnn-only";
    case EnsembleMode::borda: return "borda";
    case EnsembleMode::stack: return "stack";
  }
  return "?";
}

RankedList borda_combine(const std::vector<RankedList>& lists) {
  if (lists.size() < 2) throw std::invalid_argument("borda_combine: need at least two lists");
  const std::size_t m = lists[0].items.size();
  const std::set<std::string> reference(lists[0].items.begin(), lists[0].items.end());
  if (reference.size() != m) throw std::invalid_argument("borda_combine: duplicate items");
  for (std::size_t k = 1; k < lists.size(); ++k) {
    std::set<std::string> other(lists[k].items.begin(), lists[k].items.end());
    if (other != reference) {
      std::vector<std::string> diff;
      std::set_symmetric_difference(reference.begin(), reference.end(), other.begin(),
                                    other.end(), std::back_inserter(diff));
      throw std::invalid_argument("borda_combine: item sets differ between lists, disagreement: " +
                                  join(diff, ' '));
    }
  }

  std::map<std::string, double> points;
  for (const RankedList& list : lists) {
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      points[list.items[r]] += static_cast<double>(m - (r + 1));
    }
  }
  // Sort by points, first list's order breaking ties.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[lists[0].items[a]] > points[lists[0].items[b]];
  });
  RankedList out;
  out.session_id = lists[0].session_id;
  for (std::size_t i : order) {
    out.items.push_back(lists[0].items[i]);
    out.scores.push_back(points[lists[0].items[i]]);
  }
  return out;
}

const std::vector<std::string>& stack_feature_names() {
  static const std::vector<std::string> kNames = {"mf_rank", "rnn_rank", "mf_score", "rnn_score",
                                                  "impression_position"};
  return kNames;
}

namespace {

std::map<std::string, int> rank_of(const RankedList& list) {
  std::map<std::string, int> ranks;
  for (std::size_t r = 0; r < list.items.size(); ++r) {
    ranks[list.items[r]] = static_cast<int>(r) + 1;
  }
  return ranks;
}

std::map<std::string, double> score_of(const RankedList& list) {
  std::map<std::string, double> scores;
  for (std::size_t r = 0; r < list.items.size(); ++r) {
    scores[list.items[r]] = list.scores.empty() ? 0.0 : list.scores[r];
  }
  return scores;
}

}  // namespace

std::vector<StackRow> session_stack_rows(const RankedList& mf, const RankedList& rnn,
                                         const std::vector<std::string>& impressions) {
  auto mf_ranks = rank_of(mf);
  auto rnn_ranks = rank_of(rnn);
  auto mf_scores = score_of(mf);
  auto rnn_scores = score_of(rnn);
  std::vector<StackRow> rows;
  rows.reserve(impressions.size());
  for (std::size_t p = 0; p < impressions.size(); ++p) {
    const std::string& item = impressions[p];
    auto mf_it = mf_ranks.find(item);
    auto rnn_it = rnn_ranks.find(item);
    if (mf_it == mf_ranks.end() || rnn_it == rnn_ranks.end()) {
      throw std::runtime_error("stack rows: item '" + item +
                               "' missing from a base prediction for session " + mf.session_id);
    }
    StackRow row;
    row.group_id = mf.session_id;
    row.item_id = item;
    row.mf_rank = mf_it->second;
    row.rnn_rank = rnn_it->second;
    row.mf_score = mf_scores[item];
    row.rnn_score = rnn_scores[item];
    row.impression_position = static_cast<int>(p);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<StackRow> build_stack_rows(const std::vector<RankedList>& mf_predictions,
                                       const std::vector<RankedList>& rnn_predictions,
                                       const GroundTruth& truth,
                                       const std::map<std::string, std::vector<std::string>>& impressions) {
  std::map<std::string, const RankedList*> rnn_by_session;
  for (const RankedList& r : rnn_predictions) rnn_by_session[r.session_id] = &r;
  if (rnn_by_session.size() != rnn_predictions.size()) {
    throw std::runtime_error("build_stack_rows: duplicate session in rnn predictions");
  }
  std::vector<StackRow> rows;
  std::set<std::string> seen;
  for (const RankedList& mf : mf_predictions) {
    auto rnn_it = rnn_by_session.find(mf.session_id);
    if (rnn_it == rnn_by_session.end()) {
      throw std::runtime_error("build_stack_rows: session " + mf.session_id +
                               " present only in the MF predictions");
    }
    seen.insert(mf.session_id);
    auto imp_it = impressions.find(mf.session_id);
    if (imp_it == impressions.end()) {
      throw std::runtime_error("build_stack_rows: no impression list for session " +
                               mf.session_id);
    }
    auto truth_it = truth.find(mf.session_id);
    auto session_rows = session_stack_rows(mf, *rnn_it->second, imp_it->second);
    for (StackRow& row : session_rows) {
      if (truth_it != truth.end()) row.label = (row.item_id == truth_it->second) ? 1 : 0;
      rows.push_back(std::move(row));
    }
  }
  if (seen.size() != rnn_by_session.size()) {
    for (const auto& [sid, _] : rnn_by_session) {
      if (!seen.count(sid)) {
        throw std::runtime_error("build_stack_rows: session " + sid +
                                 " present only in the RNN predictions");
      }
    }
  }
  return rows;
}

TreeEnsemble train_stack(const std::vector<StackRow>& rows, const GbdtParams& params) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  x.reserve(rows.size());
  y.reserve(rows.size());
  for (const StackRow& r : rows) {
    x.push_back(r.features());
    y.push_back(r.label);
  }
  return train_trees(x, y, params, stack_feature_names());
}

RankedList stack_combine(const TreeEnsemble& stack_model, const RankedList& mf,
                         const RankedList& rnn, const std::vector<std::string>& impressions) {
  auto rows = session_stack_rows(mf, rnn, impressions);
  std::vector<double> scores(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = stack_model.predict(rows[i].features());
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return rows[a].impression_position < rows[b].impression_position;
  });
  RankedList out;
  out.session_id = mf.session_id;
  for (std::size_t i : order) {
    out.items.push_back(rows[i].item_id);
    out.scores.push_back(scores[i]);
  }
  return out;
}

RankedList route(const Session& session, const std::vector<std::string>& impressions,
                 const std::optional<std::vector<int>>& prices, EnsembleMode mode,
                 const ModelSet& models) {
  if (impressions.empty()) throw std::invalid_argument("route: empty impression list");
  Session filtered = filter_hotel_actions(session);

  auto verbatim = [&]() {
    RankedList out;
    out.session_id = session.session_id;
    out.items = impressions;
    return out;
  };
  if (filtered.actions.size() <= 1) return verbatim();

  const bool needs_rnn = mode != EnsembleMode::mf_only;
  if (needs_rnn) {
    // The GRU needs at least one referenced hotel action before the clickout.
    int click = -1;
    for (int i = static_cast<int>(filtered.actions.size()) - 1; i >= 0; --i) {
      if (is_clickout(filtered.actions[i])) {
        click = i;
        break;
      }
    }
    const int limit = click >= 0 ? click : static_cast<int>(filtered.actions.size());
    bool has_prefix = false;
    for (int i = 0; i < limit; ++i) {
      if (filtered.actions[i].reference) {
        has_prefix = true;
        break;
      }
    }
    if (!has_prefix) return verbatim();
  }

  auto mf_list = [&]() {
    return rank_impressions(*models.hotel, *models.price, session.user_id, impressions, prices,
                            session.session_id);
  };
  auto rnn_list = [&]() {
    return predict_clickout(*models.gru, *models.table, session, impressions, models.max_len);
  };

  switch (mode) {
    case EnsembleMode::mf_only: return mf_list();
    case EnsembleMode::rnn_only: return rnn_list();
    case EnsembleMode::borda: return borda_combine({mf_list(), rnn_list()});
    case EnsembleMode::stack: return stack_combine(*models.stack, mf_list(), rnn_list(), impressions);
  }
  throw std::logic_error("route: unhandled mode");
}

void write_predictions(const std::string& path, const std::vector<RankedList>& predictions,
                       const std::string& partition_tag, bool with_scores) {
  std::ostringstream out;
  if (!partition_tag.empty()) out << "#partition=" << partition_tag << "\n";
  out << "session_id,item_recommendations\n";
  for (const RankedList& p : predictions) {
    out << p.session_id << "," << join(p.items, ' ') << "\n";
  }
  write_file(path, out.str());
  if (with_scores) {
    std::ostringstream sout;
    if (!partition_tag.empty()) sout << "#partition=" << partition_tag << "\n";
    sout << "session_id,scores\n";
    for (const RankedList& p : predictions) {
      std::vector<std::string> parts;
      parts.reserve(p.scores.size());
      for (double s : p.scores) parts.push_back(format_double(s));
      sout << p.session_id << "," << join(parts, ' ') << "\n";
    }
    write_file(path + ".scores", sout.str());
  }
}

std::vector<RankedList> read_predictions(const std::string& path,
                                         const std::string& expected_partition) {
  if (!expected_partition.empty()) {
    std::string tag = read_partition_tag(path);
    if (tag != expected_partition) {
      throw std::runtime_error("partition mismatch for " + path + ": expected '" +
                               expected_partition + "', found '" + tag + "'");
    }
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file: " + path);
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
    if (cells.size() != 2) throw std::runtime_error("bad prediction row: " + line);
    RankedList r;
    r.session_id = cells[0];
    if (!cells[1].empty()) r.items = split(cells[1], ' ');
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace clickrank
