#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "clickrank/types.hpp"

namespace clickrank {

// The six hotel-related action types. Everything else is dropped by
// filter_hotel_actions. Comparison is case-insensitive; the canonical
// lowercase spelling is stored here.
const std::array<std::string, 6>& hotel_action_types();
bool is_hotel_action(const Action& a);

// Reads a delimiter-separated log with a header row. Required columns:
// user_id, session_id, timestamp, step, action_type, reference, impressions,
// prices. List cells are pipe-separated. Empty cells map to absent fields.
// Lines starting with '#' are metadata (see read_partition_tag) and skipped.
std::vector<Action> parse_log(std::istream& in, char delimiter = ',');
std::vector<Action> parse_log_file(const std::string& path, char delimiter = ',');

// Inverse of parse_log; writes the same shape back. An optional partition tag
// is emitted as a leading '#partition=<name>' line.
void write_log(std::ostream& out, const std::vector<Action>& actions, char delimiter = ',',
               const std::string& partition_tag = "");
void write_log_file(const std::string& path, const std::vector<Session>& sessions,
                    char delimiter = ',', const std::string& partition_tag = "");

// Returns the '#partition=' tag of a file, or "" when untagged.
std::string read_partition_tag(const std::string& path);

// Groups rows into sessions keyed by session_id, first-seen order preserved,
// actions ordered by step within each session.
std::vector<Session> group_sessions(const std::vector<Action>& actions);
std::vector<Action> flatten_sessions(const std::vector<Session>& sessions);

std::vector<Action> filter_hotel_actions(const std::vector<Action>& actions);
Session filter_hotel_actions(const Session& session);

// Session-atomic split: every session lands wholly on one side, chosen by a
// seeded hash of its session_id, so the partition is independent of input
// order and machine.
std::pair<std::vector<Session>, std::vector<Session>> split_sessions(
    const std::vector<Session>& sessions, double ratio, std::uint64_t seed);

// Nullifies the reference of each session's last clickout and records the
// removed item id. Sessions without a clickout, or whose last clickout is
// already unreferenced (challenge test shape), pass through untouched.
std::pair<std::vector<Session>, GroundTruth> mask_last_clickout(std::vector<Session> sessions);

// (length-1 sessions, everything else). Callers filter to hotel actions first.
std::pair<std::vector<Session>, std::vector<Session>> partition_cold_start(
    const std::vector<Session>& sessions);

// The four-way split of the experiment: 80/20 into local train/test, the
// same split repeated on local train, last clickouts of both test sides
// masked. ground_truth covers every masked session.
struct SplitBundle {
  std::vector<Session> local_train;
  std::vector<Session> local_test;
  std::vector<Session> inner_train;
  std::vector<Session> inner_test;
  GroundTruth ground_truth;
};

SplitBundle make_split_bundle(const std::vector<Session>& sessions, double ratio,
                              std::uint64_t seed);

void write_ground_truth(const std::string& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::string& path);

}  // namespace clickrank
