#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace clickrank {

// One row of the interaction log. `reference` is the acted-on item id for
// hotel actions; `impressions`/`prices` are present on clickout rows only and
// stay aligned with each other.
struct Action {
  std::string user_id;
  std::string session_id;
  std::int64_t timestamp = 0;
  int step = 1;
  std::string action_type;
  std::optional<std::string> reference;
  std::optional<std::vector<std::string>> impressions;
  std::optional<std::vector<int>> prices;

  bool operator==(const Action&) const = default;
};

// All actions of one session id, ordered by step.
struct Session {
  std::string session_id;
  std::string user_id;
  std::vector<Action> actions;

  std::size_t size() const { return actions.size(); }
};

// An ordering of an impression list with per-item scores; the universal
// prediction currency. `scores`, when non-empty, is aligned with `items` and
// non-increasing.
struct RankedList {
  std::string session_id;
  std::vector<std::string> items;
  std::vector<double> scores;
};

// session_id -> masked clickout item id.
using GroundTruth = std::map<std::string, std::string>;

inline bool is_clickout(const Action& a) { return a.action_type == "clickout item"; }

}  // namespace clickrank
