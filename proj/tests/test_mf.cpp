#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "clickrank/ingest.hpp"
#include "clickrank/mf.hpp"
#include "clickrank/rng.hpp"
#include "oracles.hpp"

using namespace clickrank;

namespace {

Session one_user_session(const std::string& user, const std::vector<std::string>& refs) {
  Session s;
  s.session_id = "s_" + user;
  s.user_id = user;
  int step = 1;
  for (const auto& r : refs) {
    Action a;
    a.user_id = user;
    a.session_id = s.session_id;
    a.step = step++;
    a.timestamp = 100 + a.step;
    a.action_type = "interaction item info";
    a.reference = r;
    s.actions.push_back(std::move(a));
  }
  return s;
}

LatentModel random_model(int users, int items, int d, std::uint64_t seed) {
  LatentModel m;
  m.n_components = d;
  m.user_factors = Matrix(users, d);
  m.item_factors = Matrix(items, d);
  Rng rng(seed);
  for (double& v : m.user_factors.data()) v = rng.range(-1.0, 1.0);
  for (double& v : m.item_factors.data()) v = rng.range(-1.0, 1.0);
  m.user_bias.resize(users);
  m.item_bias.resize(items);
  for (double& v : m.user_bias) v = rng.range(-0.5, 0.5);
  for (double& v : m.item_bias) v = rng.range(-0.5, 0.5);
  for (int u = 0; u < users; ++u) {
    m.users.push_back("u" + std::to_string(u));
    m.user_index.emplace(m.users.back(), u);
  }
  for (int i = 0; i < items; ++i) {
    m.items.push_back("i" + std::to_string(i));
    m.item_index.emplace(m.items.back(), i);
  }
  return m;
}

// Two user blocks, two item blocks; block-0 users interact only with block-0
// items and vice versa, with a few held-out positives per user.
struct SeparableFixture {
  InteractionMatrix matrix;
  std::vector<std::pair<int, int>> held_out;  // (user, positive item)
};

SeparableFixture separable_matrix(int users_per_block, int items_per_block, std::uint64_t seed) {
  SeparableFixture f;
  InteractionMatrix& m = f.matrix;
  const int n_items = 2 * items_per_block;
  for (int i = 0; i < n_items; ++i) {
    m.entities.push_back("i" + std::to_string(i));
    m.entity_index.emplace(m.entities.back(), i);
  }
  Rng rng(seed);
  for (int u = 0; u < 2 * users_per_block; ++u) {
    m.users.push_back("u" + std::to_string(u));
    m.user_index.emplace(m.users.back(), u);
    const int base = (u < users_per_block) ? 0 : items_per_block;
    std::set<int> positives;
    while (static_cast<int>(positives.size()) < items_per_block / 2) {
      positives.insert(base + rng.index(items_per_block));
    }
    // Hold one positive out of training.
    auto it = positives.begin();
    std::advance(it, rng.index(static_cast<int>(positives.size())));
    f.held_out.emplace_back(u, *it);
    positives.erase(it);
    m.rows.emplace_back(positives.begin(), positives.end());
  }
  return f;
}

}  // namespace

TEST_CASE("hotel interactions are distinct user-item pairs from hotel actions only") {
  auto s = one_user_session("u1", {"a", "a", "b"});
  auto m = build_interactions({s}, InteractionMode::hotel);
  CHECK(m.n_users() == 1);
  CHECK(m.n_entities() == 2);
  CHECK(m.n_entries() == 2);

  // A non-whitelisted action's reference is ignored.
  Session noisy = s;
  Action sort_order;
  sort_order.user_id = "u1";
  sort_order.session_id = noisy.session_id;
  sort_order.step = 4;
  sort_order.action_type = "change of sort order";
  sort_order.reference = "c";
  noisy.actions.push_back(sort_order);
  auto m2 = build_interactions({noisy}, InteractionMode::hotel);
  CHECK(m2.n_entries() == 2);
  CHECK(!m2.entity_index.count("c"));
}

TEST_CASE("quantile buckets split 1000 distinct prices evenly") {
  Rng rng(4);
  std::vector<int> prices(1000);
  for (int i = 0; i < 1000; ++i) prices[i] = i * 7 + 3;  // distinct
  shuffle(prices, rng);
  PriceBuckets buckets = quantile_buckets(prices, 10);
  REQUIRE(buckets.count() == 10);
  std::vector<int> counts(10, 0);
  for (int p : prices) ++counts[buckets.bucket_of(p)];
  for (int c : counts) {
    CHECK(c >= 99);
    CHECK(c <= 101);
  }
}

TEST_CASE("price-category matrix buckets the clicked price") {
  std::vector<Session> sessions;
  for (int u = 0; u < 6; ++u) {
    Session s;
    s.session_id = "s" + std::to_string(u);
    s.user_id = "u" + std::to_string(u);
    Action click;
    click.user_id = s.user_id;
    click.session_id = s.session_id;
    click.step = 1;
    click.action_type = "clickout item";
    click.reference = "a";
    click.impressions = std::vector<std::string>{"a", "b"};
    click.prices = std::vector<int>{100 * (u + 1), 50};
    s.actions.push_back(click);
    sessions.push_back(s);
  }
  auto m = build_interactions(sessions, InteractionMode::price_category, 3);
  REQUIRE(m.buckets.has_value());
  CHECK(m.n_users() == 6);
  CHECK(m.n_entries() == 6);

  CHECK_THROWS_WITH_AS(build_interactions({one_user_session("u", {"a"})},
                                          InteractionMode::price_category, 3),
                       doctest::Contains("no priced clickouts"), std::runtime_error);
}

TEST_CASE("score is the biased dot product") {
  SUBCASE("all-zero model scores zero") {
    LatentModel m = random_model(2, 2, 3, 1);
    std::fill(m.user_factors.data().begin(), m.user_factors.data().end(), 0.0);
    std::fill(m.item_factors.data().begin(), m.item_factors.data().end(), 0.0);
    std::fill(m.user_bias.begin(), m.user_bias.end(), 0.0);
    std::fill(m.item_bias.begin(), m.item_bias.end(), 0.0);
    CHECK(score(m, 0, 0) == 0.0);
  }
  SUBCASE("unit basis vectors give one") {
    LatentModel m = random_model(4, 4, 4, 2);
    std::fill(m.user_factors.data().begin(), m.user_factors.data().end(), 0.0);
    std::fill(m.item_factors.data().begin(), m.item_factors.data().end(), 0.0);
    std::fill(m.user_bias.begin(), m.user_bias.end(), 0.0);
    std::fill(m.item_bias.begin(), m.item_bias.end(), 0.0);
    m.user_factors.at(3, 3) = 1.0;
    m.item_factors.at(3, 3) = 1.0;
    CHECK(score(m, 3, 3) == doctest::Approx(1.0));
  }
  SUBCASE("random model matches the naive triple loop") {
    LatentModel m = random_model(5, 4, 4, 7);
    auto expected = oracles::naive_score_matrix(m);
    for (int u = 0; u < 5; ++u) {
      for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(score(m, u, i) - expected[u][i]) < 1e-12);
      }
    }
  }
  SUBCASE("out-of-range indices throw") {
    LatentModel m = random_model(2, 2, 3, 1);
    CHECK_THROWS_AS(score(m, 2, 0), std::out_of_range);
    CHECK_THROWS_AS(score(m, 0, -1), std::out_of_range);
  }
}

TEST_CASE("one warp update moves the violating pair apart") {
  LatentModel m = random_model(3, 6, 4, 5);
  std::fill(m.user_factors.data().begin(), m.user_factors.data().end(), 0.0);
  std::fill(m.item_factors.data().begin(), m.item_factors.data().end(), 0.0);
  std::fill(m.user_bias.begin(), m.user_bias.end(), 0.0);
  std::fill(m.item_bias.begin(), m.item_bias.end(), 0.0);
  MfHyper hyper;
  hyper.n_components = 4;
  hyper.schedule = Schedule::adagrad;
  hyper.learning_rate = 0.1;

  std::vector<double> state;
  double before_pos = score(m, 0, 1);
  double before_neg = score(m, 0, 2);
  double weight = warp_update(m, hyper, 0, 1, 2, 1, state);
  CHECK(weight > 0.0);
  CHECK(score(m, 0, 1) > before_pos);
  CHECK(score(m, 0, 2) < before_neg);
}

TEST_CASE("warp weight is zero when the estimated rank collapses") {
  LatentModel m = random_model(2, 6, 3, 9);
  MfHyper hyper;
  hyper.n_components = 3;
  std::vector<double> state;
  auto params_before = m.item_bias;
  // floor((6 - 1) / 5) = 1 -> log 1 = 0: no update.
  CHECK(warp_update(m, hyper, 0, 1, 2, 5, state) == 0.0);
  CHECK(m.item_bias == params_before);
}

TEST_CASE("adagrad accumulators never decrease") {
  LatentModel m = random_model(3, 8, 4, 11);
  MfHyper hyper;
  hyper.n_components = 4;
  hyper.schedule = Schedule::adagrad;
  std::vector<double> state;
  std::vector<double> previous;
  Rng rng(3);
  for (int step = 0; step < 20; ++step) {
    int pos = rng.index(8);
    int neg = rng.index(8);
    if (pos == neg) continue;
    warp_update(m, hyper, rng.index(3), pos, neg, 1 + rng.index(3), state);
    if (!previous.empty()) {
      for (std::size_t i = 0; i < state.size(); ++i) CHECK(state[i] >= previous[i]);
    }
    previous = state;
  }
}

TEST_CASE("default hyperparameters are the strongest tuning row") {
  MfHyper hyper;
  CHECK(hyper.epochs == 200);
  CHECK(hyper.n_components == 300);
  CHECK(hyper.learning_rate == 0.1);
  CHECK(hyper.schedule == Schedule::adadelta);
}

TEST_CASE("training separates a two-block matrix") {
  SeparableFixture f = separable_matrix(15, 10, 21);
  MfHyper hyper;
  hyper.epochs = 60;
  hyper.n_components = 8;
  hyper.schedule = Schedule::adadelta;
  hyper.seed = 13;
  LatentModel model = train_mf(f.matrix, hyper);

  std::vector<double> pos_scores, neg_scores;
  for (auto [u, held] : f.held_out) {
    pos_scores.push_back(score(model, u, held));
    // Negatives: items of the other block.
    const int other_base = held < 10 ? 10 : 0;
    for (int k = 0; k < 10; ++k) neg_scores.push_back(score(model, u, other_base + k));
  }
  CHECK(oracles::auc(pos_scores, neg_scores) > 0.9);
}

TEST_CASE("sampled hinge loss decreases over the first epochs") {
  SeparableFixture f = separable_matrix(12, 8, 33);
  // Frozen (user, positive, negative) triples.
  Rng rng(44);
  std::vector<std::array<int, 3>> triples;
  for (int k = 0; k < 200; ++k) {
    int u = rng.index(24);
    const auto& row = f.matrix.rows[u];
    int pos = row[rng.index(static_cast<int>(row.size()))];
    int neg = rng.index(16);
    if (std::binary_search(row.begin(), row.end(), neg)) continue;
    triples.push_back({u, pos, neg});
  }
  auto hinge = [&](const LatentModel& m) {
    double total = 0.0;
    for (auto [u, pos, neg] : triples) {
      total += std::max(0.0, 1.0 - score(m, u, pos) + score(m, u, neg));
    }
    return total / static_cast<double>(triples.size());
  };

  MfHyper hyper;
  hyper.n_components = 8;
  hyper.schedule = Schedule::adadelta;
  hyper.seed = 5;
  std::vector<double> losses;
  for (int epochs : {2, 4, 6, 8, 10}) {
    hyper.epochs = epochs;
    losses.push_back(hinge(train_mf(f.matrix, hyper)));
  }
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-9);
}

TEST_CASE("training is deterministic") {
  SeparableFixture f = separable_matrix(6, 6, 2);
  MfHyper hyper;
  hyper.epochs = 5;
  hyper.n_components = 4;
  LatentModel a = train_mf(f.matrix, hyper);
  LatentModel b = train_mf(f.matrix, hyper);
  CHECK(a.user_factors.data() == b.user_factors.data());
  CHECK(a.item_bias == b.item_bias);
}

TEST_CASE("score_with_fallback routes unknown items through the price model") {
  LatentModel hotel = random_model(2, 2, 3, 6);
  LatentModel price = random_model(2, 3, 3, 7);
  price.items = {"0", "1", "2"};
  price.item_index = {{"0", 0}, {"1", 1}, {"2", 2}};
  price.buckets = PriceBuckets{{100, 200}};

  SUBCASE("known item passes through") {
    CHECK(score_with_fallback(hotel, price, "u0", "i1", 2) == score(hotel, 0, 1));
  }
  SUBCASE("unknown item with a bucket uses the price model") {
    CHECK(score_with_fallback(hotel, price, "u0", "zzz", 2) == score(price, 0, 2));
  }
  SUBCASE("unknown item without a bucket sinks to the sentinel") {
    CHECK(score_with_fallback(hotel, price, "u0", "zzz", std::nullopt) ==
          -std::numeric_limits<double>::infinity());
  }
  SUBCASE("budget user ranks cheap unseen items above expensive ones") {
    // Price model: user 0 prefers bucket 0 over bucket 2.
    std::fill(price.user_factors.data().begin(), price.user_factors.data().end(), 0.0);
    std::fill(price.item_factors.data().begin(), price.item_factors.data().end(), 0.0);
    price.user_bias = {0.0, 0.0};
    price.item_bias = {2.0, 1.0, -1.0};
    double cheap = score_with_fallback(hotel, price, "u0", "unseen-cheap", 0);
    double pricey = score_with_fallback(hotel, price, "u0", "unseen-pricey", 2);
    CHECK(cheap > pricey);
  }
}

TEST_CASE("rank_impressions orders by score with impression-order ties") {
  LatentModel hotel = random_model(2, 8, 4, 12);
  LatentModel price = random_model(1, 2, 4, 13);
  price.buckets = PriceBuckets{{100}};

  SUBCASE("single impression ranks first") {
    auto list = rank_impressions(hotel, price, "u0", {"i3"});
    CHECK(list.items == std::vector<std::string>{"i3"});
  }
  SUBCASE("all-equal scores keep impression order") {
    LatentModel flat = hotel;
    std::fill(flat.user_factors.data().begin(), flat.user_factors.data().end(), 0.0);
    std::fill(flat.item_factors.data().begin(), flat.item_factors.data().end(), 0.0);
    std::fill(flat.user_bias.begin(), flat.user_bias.end(), 0.0);
    std::fill(flat.item_bias.begin(), flat.item_bias.end(), 0.0);
    auto list = rank_impressions(flat, price, "u0", {"i5", "i2", "i7"});
    CHECK(list.items == std::vector<std::string>{"i5", "i2", "i7"});
  }
  SUBCASE("matches a full sort of independently computed scores") {
    std::vector<std::string> impressions = {"i0", "i3", "i1", "i6", "i7", "i2", "i5", "i4"};
    auto list = rank_impressions(hotel, price, "u1", impressions);
    auto expected_scores = oracles::naive_score_matrix(hotel);
    std::vector<std::pair<double, std::string>> pairs;
    for (const auto& item : impressions) {
      pairs.emplace_back(expected_scores[1][hotel.item_index.at(item)], item);
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> expected;
    for (const auto& [s, item] : pairs) expected.push_back(item);
    CHECK(list.items == expected);
  }
  SUBCASE("unknown users fall back to item biases") {
    auto list = rank_impressions(hotel, price, "nobody", {"i0", "i1", "i2"});
    std::vector<std::pair<double, std::string>> pairs;
    for (const auto& item : {"i0", "i1", "i2"}) {
      pairs.emplace_back(hotel.item_bias[hotel.item_index.at(item)], item);
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; k < 3; ++k) CHECK(list.items[k] == pairs[k].second);
  }
}

TEST_CASE("adding a constant to all item biases leaves the ranking unchanged") {
  LatentModel hotel = random_model(3, 10, 4, 31);
  LatentModel price = random_model(1, 2, 4, 32);
  std::vector<std::string> impressions = {"i4", "i9", "i0", "i2", "i7"};
  auto before = rank_impressions(hotel, price, "u2", impressions);
  for (double& b : hotel.item_bias) b += 3.25;
  auto after = rank_impressions(hotel, price, "u2", impressions);
  CHECK(before.items == after.items);
}

TEST_CASE("permuting impressions permutes only tie-broken positions") {
  LatentModel hotel = random_model(2, 8, 4, 41);
  LatentModel price = random_model(1, 2, 4, 42);
  std::vector<std::string> impressions = {"i0", "i1", "i2", "i3", "i4"};
  auto base = rank_impressions(hotel, price, "u0", impressions);
  std::vector<std::string> shuffled = {"i3", "i0", "i4", "i2", "i1"};
  auto permuted = rank_impressions(hotel, price, "u0", shuffled);
  // Same multiset of (item, score) pairs.
  std::multiset<std::pair<std::string, double>> a, b;
  for (std::size_t i = 0; i < base.items.size(); ++i) a.insert({base.items[i], base.scores[i]});
  for (std::size_t i = 0; i < permuted.items.size(); ++i) {
    b.insert({permuted.items[i], permuted.scores[i]});
  }
  CHECK(a == b);
  // Scores are generically distinct here, so the order matches exactly.
  CHECK(base.items == permuted.items);
}

TEST_CASE("latent model files round-trip") {
  LatentModel m = random_model(3, 4, 5, 77);
  m.buckets = PriceBuckets{{10, 20, 30}};
  save_model("/tmp/clickrank_mf_test.txt", m);
  LatentModel loaded = load_model("/tmp/clickrank_mf_test.txt");
  CHECK(loaded.n_components == m.n_components);
  CHECK(loaded.users == m.users);
  CHECK(loaded.items == m.items);
  CHECK(loaded.user_factors.data() == m.user_factors.data());
  CHECK(loaded.item_factors.data() == m.item_factors.data());
  CHECK(loaded.user_bias == m.user_bias);
  CHECK(loaded.item_bias == m.item_bias);
  REQUIRE(loaded.buckets.has_value());
  CHECK(loaded.buckets->upper == m.buckets->upper);
}
