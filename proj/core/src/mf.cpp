#include "clickrank/mf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/rng.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

namespace {

constexpr double kAdadeltaDecay = 0.95;
constexpr double kEpsilon = 1e-6;

// Parameter layout for optimizer state: user factors, item factors, item
// biases. User biases get no gradient from the pairwise hinge (they cancel
// between the positive and negative score) and stay at zero.
struct ParamLayout {
  int d;
  int n_users;
  int n_items;

  std::size_t user_factor(int u, int t) const {
    return static_cast<std::size_t>(u) * d + t;
  }
  std::size_t item_factor(int i, int t) const {
    return static_cast<std::size_t>(n_users) * d + static_cast<std::size_t>(i) * d + t;
  }
  std::size_t item_bias(int i) const {
    return static_cast<std::size_t>(n_users + n_items) * d + i;
  }
  std::size_t total() const {
    return static_cast<std::size_t>(n_users + n_items) * d + n_items;
  }
};

// Applies one scheduled gradient step to *param. State holds one slot per
// parameter for adagrad (sum of squared gradients) and two for adadelta
// (decayed squared gradient, decayed squared update).
void apply_step(double* param, double grad, std::size_t index, const MfHyper& hyper,
                std::vector<double>& state, std::size_t n_params) {
  if (hyper.schedule == Schedule::adagrad) {
    double& acc = state[index];
    acc += grad * grad;
    *param -= hyper.learning_rate * grad / (std::sqrt(acc) + kEpsilon);
  } else {
    double& eg = state[index];
    double& ed = state[n_params + index];
    eg = kAdadeltaDecay * eg + (1.0 - kAdadeltaDecay) * grad * grad;
    double delta = -std::sqrt(ed + kEpsilon) / std::sqrt(eg + kEpsilon) * grad;
    *param += delta;
    ed = kAdadeltaDecay * ed + (1.0 - kAdadeltaDecay) * delta * delta;
  }
}

bool row_contains(const std::vector<int>& sorted_row, int value) {
  return std::binary_search(sorted_row.begin(), sorted_row.end(), value);
}

}  // namespace

int PriceBuckets::bucket_of(int price) const {
  auto it = std::lower_bound(upper.begin(), upper.end(), price);
  return static_cast<int>(it - upper.begin());
}

PriceBuckets quantile_buckets(std::vector<int> prices, int n_buckets) {
  if (prices.empty()) throw std::runtime_error("no prices to bucket");
  if (n_buckets < 1) throw std::invalid_argument("price bucket count must be >= 1");
  std::sort(prices.begin(), prices.end());
  PriceBuckets b;
  const std::size_t n = prices.size();
  for (int j = 1; j < n_buckets; ++j) {
    std::size_t pos = (static_cast<std::size_t>(j) * n) / n_buckets;
    b.upper.push_back(prices[pos - 1]);
  }
  // Collapse duplicate edges so bucket_of stays well defined on ties.
  b.upper.erase(std::unique(b.upper.begin(), b.upper.end()), b.upper.end());
  return b;
}

std::size_t InteractionMatrix::n_entries() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

InteractionMatrix build_interactions(const std::vector<Session>& sessions, InteractionMode mode,
                                     int price_buckets) {
  InteractionMatrix m;
  auto user_of = [&](const std::string& id) {
    auto it = m.user_index.find(id);
    if (it != m.user_index.end()) return it->second;
    int idx = m.n_users();
    m.user_index.emplace(id, idx);
    m.users.push_back(id);
    m.rows.emplace_back();
    return idx;
  };
  auto entity_of = [&](const std::string& id) {
    auto it = m.entity_index.find(id);
    if (it != m.entity_index.end()) return it->second;
    int idx = m.n_entities();
    m.entity_index.emplace(id, idx);
    m.entities.push_back(id);
    return idx;
  };
  auto add = [&](int u, int e) {
    auto& row = m.rows[u];
    auto it = std::lower_bound(row.begin(), row.end(), e);
    if (it == row.end() || *it != e) row.insert(it, e);
  };

  if (mode == InteractionMode::hotel) {
    for (const Session& s : sessions) {
      for (const Action& a : s.actions) {
        if (!is_hotel_action(a) || !a.reference) continue;
        add(user_of(a.user_id), entity_of(*a.reference));
      }
    }
    // Drop users that ended up with no entries (none are created above, but
    // keep the invariant explicit).
    return m;
  }

  // price_category: clicked items mapped to quantile buckets of their
  // displayed price.
  struct Click {
    std::string user;
    int price;
  };
  std::vector<Click> clicks;
  std::vector<int> all_prices;
  for (const Session& s : sessions) {
    for (const Action& a : s.actions) {
      if (!is_clickout(a) || !a.reference || !a.impressions || !a.prices) continue;
      auto it = std::find(a.impressions->begin(), a.impressions->end(), *a.reference);
      if (it == a.impressions->end()) continue;
      int price = (*a.prices)[it - a.impressions->begin()];
      clicks.push_back({a.user_id, price});
      all_prices.push_back(price);
    }
  }
  if (clicks.empty()) {
    throw std::runtime_error("price-category matrix: no priced clickouts in input");
  }
  m.buckets = quantile_buckets(all_prices, price_buckets);
  // Register every bucket label up front so indices match bucket numbers.
  for (int b = 0; b < m.buckets->count(); ++b) entity_of(std::to_string(b));
  for (const Click& c : clicks) {
    add(user_of(c.user), m.buckets->bucket_of(c.price));
  }
  return m;
}

Schedule parse_schedule(const std::string& name) {
  if (name == "adagrad") return Schedule::adagrad;
  if (name == "adadelta") return Schedule::adadelta;
  throw std::invalid_argument("unknown learning schedule '" + name +
                              "' (expected adagrad or adadelta)");
}

std::string schedule_name(Schedule s) {
  return s == Schedule::adagrad ? "adagrad" : "adadelta";
}

int LatentModel::user_of(const std::string& id) const {
  auto it = user_index.find(id);
  return it == user_index.end() ? -1 : it->second;
}

int LatentModel::item_of(const std::string& id) const {
  auto it = item_index.find(id);
  return it == item_index.end() ? -1 : it->second;
}

double score(const LatentModel& model, int user, int item) {
  if (user < 0 || user >= model.n_users()) {
    throw std::out_of_range("user index " + std::to_string(user) + " out of range");
  }
  if (item < 0 || item >= model.n_items()) {
    throw std::out_of_range("item index " + std::to_string(item) + " out of range");
  }
  return dot(model.user_factors.row(user), model.item_factors.row(item)) +
         model.user_bias[user] + model.item_bias[item];
}

std::optional<double> score_ids(const LatentModel& model, const std::string& user,
                                const std::string& item) {
  int i = model.item_of(item);
  if (i < 0) return std::nullopt;
  int u = model.user_of(user);
  if (u < 0) return model.item_bias[i];  // cold user: bias-only score
  return score(model, u, i);
}

double score_with_fallback(const LatentModel& model, const LatentModel& price_model,
                           const std::string& user, const std::string& item,
                           std::optional<int> item_price_bucket) {
  if (auto s = score_ids(model, user, item)) return *s;
  if (item_price_bucket) {
    if (auto s = score_ids(price_model, user, std::to_string(*item_price_bucket))) return *s;
  }
  return -std::numeric_limits<double>::infinity();
}

RankedList rank_impressions(const LatentModel& model, const LatentModel& price_model,
                            const std::string& user, const std::vector<std::string>& impressions,
                            const std::optional<std::vector<int>>& prices,
                            const std::string& session_id) {
  if (impressions.empty()) throw std::invalid_argument("rank_impressions: empty impression list");
  const std::size_t n = impressions.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<int> bucket;
    if (prices && price_model.buckets) {
      bucket = price_model.buckets->bucket_of((*prices)[i]);
    }
    scores[i] = score_with_fallback(model, price_model, user, impressions[i], bucket);
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedList out;
  out.session_id = session_id;
  out.items.reserve(n);
  out.scores.reserve(n);
  for (std::size_t i : order) {
    out.items.push_back(impressions[i]);
    out.scores.push_back(scores[i]);
  }
  return out;
}

double warp_update(LatentModel& model, const MfHyper& hyper, int user, int positive,
                   int negative, int trials, std::vector<double>& opt_state) {
  const ParamLayout layout{model.n_components, model.n_users(), model.n_items()};
  const std::size_t n_params = layout.total();
  const std::size_t slots = hyper.schedule == Schedule::adagrad ? 1 : 2;
  if (opt_state.empty()) opt_state.assign(n_params * slots, 0.0);

  double rank_estimate = std::floor(static_cast<double>(model.n_items() - 1) / trials);
  double weight = std::log(std::max(1.0, rank_estimate));
  if (weight <= 0.0) return 0.0;

  const int d = model.n_components;
  auto u_row = model.user_factors.row(user);
  auto pos_row = model.item_factors.row(positive);
  auto neg_row = model.item_factors.row(negative);

  // Gradients of weight * (1 - s_pos + s_neg) at the current parameters; all
  // reads happen before any write.
  std::vector<double> grad_user(d), grad_pos(d), grad_neg(d);
  for (int t = 0; t < d; ++t) {
    grad_user[t] = weight * (neg_row[t] - pos_row[t]);
    grad_pos[t] = -weight * u_row[t];
    grad_neg[t] = weight * u_row[t];
  }

  for (int t = 0; t < d; ++t) {
    apply_step(&u_row[t], grad_user[t], layout.user_factor(user, t), hyper, opt_state, n_params);
    apply_step(&pos_row[t], grad_pos[t], layout.item_factor(positive, t), hyper, opt_state,
               n_params);
    apply_step(&neg_row[t], grad_neg[t], layout.item_factor(negative, t), hyper, opt_state,
               n_params);
  }
  apply_step(&model.item_bias[positive], -weight, layout.item_bias(positive), hyper, opt_state,
             n_params);
  apply_step(&model.item_bias[negative], weight, layout.item_bias(negative), hyper, opt_state,
             n_params);

  for (int t = 0; t < d; ++t) {
    if (!std::isfinite(u_row[t]) || !std::isfinite(pos_row[t]) || !std::isfinite(neg_row[t])) {
      throw std::runtime_error("non-finite factor after update (user=" + std::to_string(user) +
                               ")");
    }
  }
  return weight;
}

LatentModel train_mf(const InteractionMatrix& matrix, const MfHyper& hyper) {
  if (matrix.n_entries() == 0) throw std::runtime_error("train_mf: empty interaction matrix");
  if (hyper.n_components <= 0 || hyper.epochs <= 0 || hyper.kos_k < 1 || hyper.kos_n < 1 ||
      hyper.max_trials < 1) {
    throw std::invalid_argument("train_mf: hyperparameters must be positive");
  }

  LatentModel model;
  model.n_components = hyper.n_components;
  model.users = matrix.users;
  model.items = matrix.entities;
  model.user_index = matrix.user_index;
  model.item_index = matrix.entity_index;
  model.buckets = matrix.buckets;

  const int d = hyper.n_components;
  const int n_users = matrix.n_users();
  const int n_items = matrix.n_entities();

  Rng rng(hyper.seed);
  model.user_factors = Matrix(n_users, d);
  model.item_factors = Matrix(n_items, d);
  for (double& w : model.user_factors.data()) w = rng.range(-0.5 / d, 0.5 / d);
  for (double& w : model.item_factors.data()) w = rng.range(-0.5 / d, 0.5 / d);
  model.user_bias.assign(n_users, 0.0);
  model.item_bias.assign(n_items, 0.0);

  std::vector<double> opt_state;
  std::vector<int> user_order(n_users);
  for (int u = 0; u < n_users; ++u) user_order[u] = u;

  std::vector<int> sampled;
  std::vector<int> pool;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle(user_order, rng);
    for (int u : user_order) {
      const auto& row = matrix.rows[u];
      if (row.empty()) continue;

      // Draw up to kos_n distinct positives and anchor on the k-th best.
      const int n_sampled = std::min<int>(hyper.kos_n, static_cast<int>(row.size()));
      sampled.clear();
      if (n_sampled == static_cast<int>(row.size())) {
        sampled = row;
      } else {
        pool.resize(row.size());
        std::copy(row.begin(), row.end(), pool.begin());
        for (int k = 0; k < n_sampled; ++k) {
          std::size_t j = k + rng.below(pool.size() - k);
          std::swap(pool[k], pool[j]);
          sampled.push_back(pool[k]);
        }
      }
      std::vector<std::pair<double, int>> scored;
      scored.reserve(sampled.size());
      for (int i : sampled) scored.emplace_back(score(model, u, i), i);
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      const int anchor_pos = std::min<int>(hyper.kos_k, n_sampled) - 1;
      const int positive = scored[anchor_pos].second;
      const double s_pos = scored[anchor_pos].first;

      for (int trial = 1; trial <= hyper.max_trials; ++trial) {
        int candidate = rng.index(n_items);
        if (row_contains(row, candidate)) continue;  // consumes a trial
        double s_neg = score(model, u, candidate);
        if (s_neg > s_pos - 1.0) {
          try {
            warp_update(model, hyper, u, positive, candidate, trial, opt_state);
          } catch (const std::exception& e) {
            throw std::runtime_error("epoch " + std::to_string(epoch) + ": " + e.what());
          }
          break;
        }
      }
    }
  }
  return model;
}

void save_model(const std::string& path, const LatentModel& model) {
  std::ostringstream out;
  out << "components=" << model.n_components << " users=" << model.n_users()
      << " items=" << model.n_items() << "\n";
  for (const auto& id : model.users) out << id << "\n";
  for (const auto& id : model.items) out << id << "\n";
  auto write_matrix = [&](const Matrix& m) {
    for (int r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      for (int c = 0; c < m.cols(); ++c) {
        if (c > 0) out << " ";
        out << format_double(row[c]);
      }
      out << "\n";
    }
  };
  auto write_vector = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i > 0) out << " ";
      out << format_double(v[i]);
    }
    out << "\n";
  };
  write_matrix(model.user_factors);
  write_matrix(model.item_factors);
  write_vector(model.user_bias);
  write_vector(model.item_bias);
  if (model.buckets) {
    out << "buckets";
    for (int e : model.buckets->upper) out << " " << e;
    out << "\n";
  }
  write_file(path, out.str());
}

LatentModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty model file: " + path);
  int d = 0, n_users = 0, n_items = 0;
  if (std::sscanf(header.c_str(), "components=%d users=%d items=%d", &d, &n_users, &n_items) !=
      3) {
    throw std::runtime_error("bad model header: " + header);
  }
  LatentModel model;
  model.n_components = d;
  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw std::runtime_error("truncated model file: " + path);
    return line;
  };
  for (int u = 0; u < n_users; ++u) {
    model.users.push_back(next_line());
    model.user_index.emplace(model.users.back(), u);
  }
  for (int i = 0; i < n_items; ++i) {
    model.items.push_back(next_line());
    model.item_index.emplace(model.items.back(), i);
  }
  auto read_matrix = [&](int rows) {
    Matrix m(rows, d);
    for (int r = 0; r < rows; ++r) {
      auto parts = split(next_line(), ' ');
      if (parts.size() != static_cast<std::size_t>(d)) {
        throw std::runtime_error("bad factor row in " + path);
      }
      auto row = m.row(r);
      for (int c = 0; c < d; ++c) row[c] = parse_double(parts[c], "factor");
    }
    return m;
  };
  auto read_vector = [&](int n) {
    auto parts = split(next_line(), ' ');
    if (parts.size() != static_cast<std::size_t>(n)) {
      throw std::runtime_error("bad bias row in " + path);
    }
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = parse_double(parts[i], "bias");
    return v;
  };
  model.user_factors = read_matrix(n_users);
  model.item_factors = read_matrix(n_items);
  model.user_bias = read_vector(n_users);
  model.item_bias = read_vector(n_items);
  if (std::getline(in, line) && line.rfind("buckets", 0) == 0) {
    PriceBuckets b;
    auto parts = split(line, ' ');
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i].empty()) continue;
      b.upper.push_back(static_cast<int>(parse_int(parts[i], "bucket edge")));
    }
    model.buckets = std::move(b);
  }
  return model;
}

}  // namespace clickrank
