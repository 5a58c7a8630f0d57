#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "clickrank/matrix.hpp"
#include "clickrank/types.hpp"

namespace clickrank {

// Quantile price bins. bucket_of returns the 0-based bin of a price; bin j
// holds prices p with upper[j-1] < p <= upper[j] (the last bin is open-ended).
struct PriceBuckets {
  std::vector<int> upper;  // n_buckets - 1 edges

  int count() const { return static_cast<int>(upper.size()) + 1; }
  int bucket_of(int price) const;
};

PriceBuckets quantile_buckets(std::vector<int> prices, int n_buckets);

enum class InteractionMode { hotel, price_category };

// Sparse binary user x entity matrix. In hotel mode entities are item ids; in
// price-category mode they are bucket labels "0".."k-1" and `buckets` carries
// the learned bin edges.
struct InteractionMatrix {
  std::vector<std::string> users;
  std::vector<std::string> entities;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> entity_index;
  std::vector<std::vector<int>> rows;  // per user, sorted distinct entity indices
  std::optional<PriceBuckets> buckets;

  int n_users() const { return static_cast<int>(users.size()); }
  int n_entities() const { return static_cast<int>(entities.size()); }
  std::size_t n_entries() const;
};

InteractionMatrix build_interactions(const std::vector<Session>& sessions, InteractionMode mode,
                                     int price_buckets = 10);

enum class Schedule { adagrad, adadelta };

Schedule parse_schedule(const std::string& name);
std::string schedule_name(Schedule s);

// Defaults are the strongest tuning row: 200 epochs, 300 components, rate
// 0.1, adadelta.
struct MfHyper {
  int epochs = 200;
  int n_components = 300;
  double learning_rate = 0.1;
  Schedule schedule = Schedule::adadelta;
  int kos_k = 5;        // anchor on the k-th best of the sampled positives
  int kos_n = 10;       // positives sampled per user update
  int max_trials = 100; // negative draws before giving up on a violator
  std::uint64_t seed = 1;
};

// Latent factors plus biases, with the id maps needed to score external ids.
struct LatentModel {
  int n_components = 0;
  Matrix user_factors;
  Matrix item_factors;
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
  std::optional<PriceBuckets> buckets;  // present on price-category models

  int n_users() const { return static_cast<int>(users.size()); }
  int n_items() const { return static_cast<int>(items.size()); }
  int user_of(const std::string& id) const;
  int item_of(const std::string& id) const;
};

LatentModel train_mf(const InteractionMatrix& matrix, const MfHyper& hyper);

// dot(U_u, H_i) + user_bias[u] + item_bias[i]; throws on out-of-range indices.
double score(const LatentModel& model, int user, int item);

// Score by external ids. Unknown users reduce to the item bias (cold user).
// Unknown items return nullopt; callers fall back to the price model.
std::optional<double> score_ids(const LatentModel& model, const std::string& user,
                                const std::string& item);

// Items missing from the hotel model are scored through the price-category
// model at the given bucket; when that is not derivable either, the sentinel
// -infinity is returned so such items sink to the bottom of any ranking.
double score_with_fallback(const LatentModel& model, const LatentModel& price_model,
                           const std::string& user, const std::string& item,
                           std::optional<int> item_price_bucket);

// Impressions sorted by score_with_fallback, descending; ties keep impression
// order. `prices`, when present, is aligned with `impressions` and feeds the
// bucket fallback.
RankedList rank_impressions(const LatentModel& model, const LatentModel& price_model,
                            const std::string& user, const std::vector<std::string>& impressions,
                            const std::optional<std::vector<int>>& prices = std::nullopt,
                            const std::string& session_id = "");

// One WARP k-OS step for a fixed (user, positive, negative) triple; exposed
// so unit tests can drive single updates. Returns the applied rank weight.
double warp_update(LatentModel& model, const MfHyper& hyper, int user, int positive,
                   int negative, int trials, std::vector<double>& opt_state);

void save_model(const std::string& path, const LatentModel& model);
LatentModel load_model(const std::string& path);

}  // namespace clickrank
