#include "clickrank/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "clickrank/rng.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const std::array<std::string, 8> kColumns = {"user_id",     "session_id", "timestamp",
                                             "step",        "action_type", "reference",
                                             "impressions", "prices"};

}  // namespace

const std::array<std::string, 6>& hotel_action_types() {
  static const std::array<std::string, 6> kTypes = {
      "interaction item rating", "interaction item info", "clickout item",
      "interaction item image",  "interaction item deal", "search for item"};
  return kTypes;
}

bool is_hotel_action(const Action& a) {
  const std::string t = to_lower(a.action_type);
  const auto& types = hotel_action_types();
  return std::find(types.begin(), types.end(), t) != types.end();
}

std::vector<Action> parse_log(std::istream& in, char delimiter) {
  std::string line;
  long line_no = 0;

  // Header (skipping metadata lines).
  std::unordered_map<std::string, int> col;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, delimiter);
    for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = static_cast<int>(i);
    break;
  }
  for (const auto& name : kColumns) {
    if (!col.count(name)) {
      throw std::runtime_error("log header is missing required column '" + name + "'");
    }
  }

  std::vector<Action> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, delimiter);
    auto cell = [&](const std::string& name) -> const std::string& {
      static const std::string empty;
      int idx = col.at(name);
      return idx < static_cast<int>(cells.size()) ? cells[idx] : empty;
    };

    Action a;
    a.user_id = cell("user_id");
    a.session_id = cell("session_id");
    a.timestamp = parse_int(cell("timestamp"), "timestamp");
    a.step = static_cast<int>(parse_int(cell("step"), "step"));
    a.action_type = cell("action_type");
    if (!cell("reference").empty()) a.reference = cell("reference");
    if (!cell("impressions").empty()) a.impressions = split(cell("impressions"), '|');
    if (!cell("prices").empty()) {
      std::vector<int> prices;
      for (const auto& p : split(cell("prices"), '|')) {
        prices.push_back(static_cast<int>(parse_int(p, "prices")));
      }
      a.prices = std::move(prices);
    }
    if (a.prices && !a.impressions) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": prices present without impressions");
    }
    if (a.prices && a.prices->size() != a.impressions->size()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": prices length " +
                               std::to_string(a.prices->size()) +
                               " does not match impressions length " +
                               std::to_string(a.impressions->size()));
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Action> parse_log_file(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file: " + path);
  return parse_log(in, delimiter);
}

void write_log(std::ostream& out, const std::vector<Action>& actions, char delimiter,
               const std::string& partition_tag) {
  if (!partition_tag.empty()) out << "#partition=" << partition_tag << "\n";
  const std::string d(1, delimiter);
  out << join({kColumns.begin(), kColumns.end()}, d) << "\n";
  for (const Action& a : actions) {
    std::vector<std::string> cells = {a.user_id, a.session_id, std::to_string(a.timestamp),
                                      std::to_string(a.step), a.action_type};
    cells.push_back(a.reference ? *a.reference : "");
    cells.push_back(a.impressions ? join(*a.impressions, '|') : "");
    if (a.prices) {
      std::vector<std::string> ps;
      ps.reserve(a.prices->size());
      for (int p : *a.prices) ps.push_back(std::to_string(p));
      cells.push_back(join(ps, '|'));
    } else {
      cells.push_back("");
    }
    out << join(cells, d) << "\n";
  }
}

void write_log_file(const std::string& path, const std::vector<Session>& sessions,
                    char delimiter, const std::string& partition_tag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_log(out, flatten_sessions(sessions), delimiter, partition_tag);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_partition_tag(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string prefix = "#partition=";
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return "";
}

std::vector<Session> group_sessions(const std::vector<Action>& actions) {
  std::vector<Session> sessions;
  std::unordered_map<std::string, std::size_t> index;
  for (const Action& a : actions) {
    auto it = index.find(a.session_id);
    if (it == index.end()) {
      index.emplace(a.session_id, sessions.size());
      sessions.push_back(Session{a.session_id, a.user_id, {a}});
    } else {
      sessions[it->second].actions.push_back(a);
    }
  }
  for (Session& s : sessions) {
    std::stable_sort(s.actions.begin(), s.actions.end(),
                     [](const Action& x, const Action& y) { return x.step < y.step; });
  }
  return sessions;
}

std::vector<Action> flatten_sessions(const std::vector<Session>& sessions) {
  std::vector<Action> out;
  for (const Session& s : sessions) {
    out.insert(out.end(), s.actions.begin(), s.actions.end());
  }
  return out;
}

std::vector<Action> filter_hotel_actions(const std::vector<Action>& actions) {
  std::vector<Action> out;
  out.reserve(actions.size());
  for (const Action& a : actions) {
    if (is_hotel_action(a)) out.push_back(a);
  }
  return out;
}

Session filter_hotel_actions(const Session& session) {
  Session out{session.session_id, session.user_id, filter_hotel_actions(session.actions)};
  return out;
}

std::pair<std::vector<Session>, std::vector<Session>> split_sessions(
    const std::vector<Session>& sessions, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must be in (0, 1), got " + format_double(ratio));
  }
  std::vector<Session> train, test;
  for (const Session& s : sessions) {
    if (split_unit(s.session_id, seed) < ratio) {
      train.push_back(s);
    } else {
      test.push_back(s);
    }
  }
  return {std::move(train), std::move(test)};
}

std::pair<std::vector<Session>, GroundTruth> mask_last_clickout(std::vector<Session> sessions) {
  GroundTruth truth;
  for (Session& s : sessions) {
    auto it = std::find_if(s.actions.rbegin(), s.actions.rend(),
                           [](const Action& a) { return is_clickout(a); });
    if (it == s.actions.rend()) continue;
    if (!it->reference) continue;  // already masked at the source
    truth[s.session_id] = *it->reference;
    it->reference.reset();
  }
  return {std::move(sessions), std::move(truth)};
}

std::pair<std::vector<Session>, std::vector<Session>> partition_cold_start(
    const std::vector<Session>& sessions) {
  std::vector<Session> singletons, multi;
  for (const Session& s : sessions) {
    (s.actions.size() == 1 ? singletons : multi).push_back(s);
  }
  return {std::move(singletons), std::move(multi)};
}

SplitBundle make_split_bundle(const std::vector<Session>& sessions, double ratio,
                              std::uint64_t seed) {
  SplitBundle b;
  auto [local_train, local_test_raw] = split_sessions(sessions, ratio, seed);
  // The inner split repeats the same procedure on local train with a derived
  // seed, so the two levels stay independent.
  auto [inner_train, inner_test_raw] = split_sessions(local_train, ratio, seed + 1);

  auto [local_test, local_truth] = mask_last_clickout(std::move(local_test_raw));
  auto [inner_test, inner_truth] = mask_last_clickout(std::move(inner_test_raw));

  b.local_train = std::move(local_train);
  b.local_test = std::move(local_test);
  b.inner_train = std::move(inner_train);
  b.inner_test = std::move(inner_test);
  b.ground_truth = std::move(local_truth);
  b.ground_truth.insert(inner_truth.begin(), inner_truth.end());
  return b;
}

void write_ground_truth(const std::string& path, const GroundTruth& truth) {
  std::ostringstream out;
  out << "session_id,item_id\n";
  for (const auto& [sid, item] : truth) out << sid << "," << item << "\n";
  write_file(path, out.str());
}

GroundTruth read_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground truth file: " + path);
  GroundTruth truth;
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
    if (cells.size() != 2) throw std::runtime_error("bad ground truth row: " + line);
    truth[cells[0]] = cells[1];
  }
  return truth;
}

}  // namespace clickrank
