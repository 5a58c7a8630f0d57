#include <doctest.h>

#include <algorithm>
#include <set>

#include "clickrank/ensemble.hpp"
#include "clickrank/rng.hpp"
#include "oracles.hpp"

using namespace clickrank;

namespace {

RankedList make_list(const std::string& sid, std::vector<std::string> items) {
  RankedList r;
  r.session_id = sid;
  r.items = std::move(items);
  return r;
}

RankedList make_scored(const std::string& sid, std::vector<std::string> items,
                       std::vector<double> scores) {
  RankedList r = make_list(sid, std::move(items));
  r.scores = std::move(scores);
  return r;
}

}  // namespace

TEST_CASE("borda over identical lists is the identity") {
  auto a = make_list("s", {"a", "b", "c"});
  auto out = borda_combine({a, a});
  CHECK(out.items == a.items);
}

TEST_CASE("borda over reversed lists ties everything to first-list order") {
  auto out = borda_combine({make_list("s", {"a", "b", "c"}), make_list("s", {"c", "b", "a"})});
  CHECK(out.items == std::vector<std::string>{"a", "b", "c"});
  CHECK(out.scores == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("borda point totals follow the m-minus-r rule") {
  auto out = borda_combine(
      {make_list("s", {"a", "b", "c", "d"}), make_list("s", {"b", "a", "d", "c"})});
  CHECK(out.items == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(out.scores == std::vector<double>{5.0, 5.0, 2.0, 2.0});
}

TEST_CASE("borda rejects mismatched item sets and reports the difference") {
  CHECK_THROWS_WITH_AS(
      borda_combine({make_list("s", {"a", "b"}), make_list("s", {"a", "c"})}),
      doctest::Contains("b c"), std::invalid_argument);
  CHECK_THROWS_AS(borda_combine({make_list("s", {"a"})}), std::invalid_argument);
}

TEST_CASE("borda matches exhaustive enumeration for every permutation up to length 4") {
  const std::vector<std::string> universe = {"a", "b", "c", "d"};
  for (int m = 2; m <= 4; ++m) {
    std::vector<std::string> base(universe.begin(), universe.begin() + m);
    std::vector<std::string> first = base;
    std::sort(first.begin(), first.end());
    do {
      std::vector<std::string> second = base;
      std::sort(second.begin(), second.end());
      do {
        auto combined = borda_combine({make_list("s", first), make_list("s", second)});
        auto expected = oracles::borda_order({make_list("s", first), make_list("s", second)});
        CHECK(combined.items == expected);
        // Output is a permutation of the input set.
        std::set<std::string> seen(combined.items.begin(), combined.items.end());
        CHECK(seen.size() == combined.items.size());
        CHECK(seen == std::set<std::string>(first.begin(), first.end()));
      } while (std::next_permutation(second.begin(), second.end()));
    } while (std::next_permutation(first.begin(), first.end()));
  }
}

TEST_CASE("borda is anonymous across lists up to tie-breaking") {
  Rng rng(17);
  for (int round = 0; round < 30; ++round) {
    std::vector<std::string> items;
    for (int i = 0; i < 5; ++i) items.push_back("i" + std::to_string(i));
    std::vector<std::string> first = items, second = items;
    shuffle(first, rng);
    shuffle(second, rng);
    auto ab = borda_combine({make_list("s", first), make_list("s", second)});
    auto ba = borda_combine({make_list("s", second), make_list("s", first)});
    auto points_ab = oracles::borda_points({make_list("s", first), make_list("s", second)});
    // Same totals either way; order may differ only inside tied groups.
    for (std::size_t i = 0; i < ab.items.size(); ++i) {
      CHECK(points_ab[ab.items[i]] == points_ab[ba.items[i]]);
    }
  }
}

TEST_CASE("stack rows carry both ranks, both scores and the truth label") {
  std::vector<std::string> impressions;
  for (int i = 0; i < 25; ++i) impressions.push_back("i" + std::to_string(i));
  std::vector<std::string> mf_order = impressions;
  std::vector<std::string> rnn_order = impressions;
  std::reverse(rnn_order.begin(), rnn_order.end());
  std::vector<double> mf_scores, rnn_scores;
  for (int i = 0; i < 25; ++i) {
    mf_scores.push_back(25.0 - i);
    rnn_scores.push_back(-static_cast<double>(i));
  }
  auto mf = make_scored("s1", mf_order, mf_scores);
  auto rnn = make_scored("s1", rnn_order, rnn_scores);
  GroundTruth truth{{"s1", "i7"}};
  std::map<std::string, std::vector<std::string>> imp{{"s1", impressions}};

  auto rows = build_stack_rows({mf}, {rnn}, truth, imp);
  REQUIRE(rows.size() == 25);
  int labels = 0;
  for (const auto& r : rows) labels += r.label;
  CHECK(labels == 1);
  // First MF item has mf_rank 1; i7 carries the label.
  CHECK(rows[0].item_id == "i0");
  CHECK(rows[0].mf_rank == 1);
  CHECK(rows[0].rnn_rank == 25);
  CHECK(rows[7].label == 1);
  CHECK(rows[7].impression_position == 7);
}

TEST_CASE("build_stack_rows rejects one-sided sessions") {
  auto mf = make_list("s1", {"a"});
  auto rnn = make_list("s2", {"a"});
  GroundTruth truth;
  std::map<std::string, std::vector<std::string>> imp{{"s1", {"a"}}, {"s2", {"a"}}};
  CHECK_THROWS_WITH_AS(build_stack_rows({mf}, {rnn}, truth, imp), doctest::Contains("only in"),
                       std::runtime_error);
}

TEST_CASE("stack_combine ranks by the tree model with impression-order ties") {
  auto mf = make_scored("s", {"a", "b", "c"}, {3, 2, 1});
  auto rnn = make_scored("s", {"c", "a", "b"}, {0, -1, -2});
  std::vector<std::string> impressions = {"a", "b", "c"};

  SUBCASE("an empty ensemble yields impression order") {
    TreeEnsemble empty;
    empty.feature_names = stack_feature_names();
    auto out = stack_combine(empty, mf, rnn, impressions);
    CHECK(out.items == impressions);
  }
  SUBCASE("single item ranks first") {
    TreeEnsemble empty;
    empty.feature_names = stack_feature_names();
    auto out = stack_combine(empty, make_scored("s", {"a"}, {1.0}),
                             make_scored("s", {"a"}, {0.0}), {"a"});
    CHECK(out.items == std::vector<std::string>{"a"});
  }
  SUBCASE("a trained model matches a full sort of its own predictions") {
    // Train a model that prefers low mf_rank.
    std::vector<StackRow> rows;
    Rng rng(3);
    for (int g = 0; g < 40; ++g) {
      for (int r = 1; r <= 5; ++r) {
        StackRow row;
        row.group_id = "g" + std::to_string(g);
        row.item_id = "x" + std::to_string(r);
        row.mf_rank = r;
        row.rnn_rank = 1 + rng.index(5);
        row.mf_score = 1.0 / r;
        row.rnn_score = rng.range(-1, 0);
        row.impression_position = rng.index(5);
        row.label = (r == 1) ? 1 : 0;
        rows.push_back(std::move(row));
      }
    }
    GbdtParams params;
    params.n_rounds = 10;
    params.max_depth = 3;
    TreeEnsemble model = train_stack(rows, params);

    auto out = stack_combine(model, mf, rnn, impressions);
    auto session_rows = session_stack_rows(mf, rnn, impressions);
    std::vector<std::pair<double, std::string>> expected;
    for (const auto& r : session_rows) {
      expected.emplace_back(model.predict(r.features()), r.item_id);
    }
    std::stable_sort(expected.begin(), expected.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(out.items[i] == expected[i].second);
  }
}

TEST_CASE("route sends cold sessions to the impression list and honours each mode") {
  // A deliberately trivial model set: flat MF scores, identity embeddings.
  LatentModel hotel;
  hotel.n_components = 2;
  hotel.user_factors = Matrix(1, 2);
  hotel.item_factors = Matrix(3, 2);
  hotel.user_bias = {0.0};
  hotel.item_bias = {0.3, 0.2, 0.1};
  hotel.users = {"u1"};
  hotel.user_index = {{"u1", 0}};
  hotel.items = {"x", "y", "z"};
  hotel.item_index = {{"x", 0}, {"y", 1}, {"z", 2}};
  LatentModel price = hotel;
  price.buckets = PriceBuckets{{100}};

  EmbeddingTable table;
  table.dimension = 3;
  table.vectors = Matrix(3, 3);
  for (int i = 0; i < 3; ++i) {
    table.items.push_back(hotel.items[i]);
    table.vocab.emplace(hotel.items[i], i);
    table.vectors.at(i, i) = 1.0;
  }
  GruRanker gru(3, 2, hotel.items);
  TreeEnsemble stack_model;
  stack_model.feature_names = stack_feature_names();

  ModelSet models;
  models.hotel = &hotel;
  models.price = &price;
  models.gru = &gru;
  models.table = &table;
  models.stack = &stack_model;

  auto make_session = [&](int n_interactions) {
    Session s;
    s.session_id = "s1";
    s.user_id = "u1";
    int step = 1;
    for (int i = 0; i < n_interactions; ++i) {
      Action a;
      a.user_id = "u1";
      a.session_id = "s1";
      a.step = step++;
      a.action_type = "interaction item info";
      a.reference = hotel.items[i % 3];
      s.actions.push_back(std::move(a));
    }
    Action click;
    click.user_id = "u1";
    click.session_id = "s1";
    click.step = step;
    click.action_type = "clickout item";
    click.impressions = std::vector<std::string>{"x", "y", "z"};
    s.actions.push_back(click);
    return s;
  };
  const std::vector<std::string> impressions = {"x", "y", "z"};

  SUBCASE("a length-1 session emits its impressions verbatim in every mode") {
    Session cold = make_session(0);
    for (auto mode : {EnsembleMode::mf_only, EnsembleMode::rnn_only, EnsembleMode::borda,
                      EnsembleMode::stack}) {
      auto out = route(cold, impressions, std::nullopt, mode, models);
      CHECK(out.items == impressions);
    }
  }
  SUBCASE("mf-only equals rank_impressions") {
    Session s = make_session(1);
    auto routed = route(s, impressions, std::nullopt, EnsembleMode::mf_only, models);
    auto direct = rank_impressions(hotel, price, "u1", impressions, std::nullopt, "s1");
    CHECK(routed.items == direct.items);
  }
  SUBCASE("borda equals borda_combine of the two base lists") {
    Session s = make_session(2);
    auto routed = route(s, impressions, std::nullopt, EnsembleMode::borda, models);
    auto mf_list = rank_impressions(hotel, price, "u1", impressions, std::nullopt, "s1");
    auto rnn_list = predict_clickout(gru, table, s, impressions);
    auto direct = borda_combine({mf_list, rnn_list});
    CHECK(routed.items == direct.items);
  }
  SUBCASE("route never drops or duplicates an impression item") {
    for (int n : {0, 1, 2, 5}) {
      Session s = make_session(n);
      for (auto mode : {EnsembleMode::mf_only, EnsembleMode::rnn_only, EnsembleMode::borda,
                        EnsembleMode::stack}) {
        auto out = route(s, impressions, std::nullopt, mode, models);
        std::multiset<std::string> got(out.items.begin(), out.items.end());
        CHECK(got == std::multiset<std::string>(impressions.begin(), impressions.end()));
      }
    }
  }
}

TEST_CASE("prediction files round-trip with partition tags") {
  std::vector<RankedList> preds = {make_scored("s1", {"a", "b"}, {2.0, 1.0}),
                                   make_scored("s2", {"c"}, {0.5})};
  write_predictions("/tmp/clickrank_preds_test.csv", preds, "inner_test", true);
  auto loaded = read_predictions("/tmp/clickrank_preds_test.csv", "inner_test");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].session_id == "s1");
  CHECK(loaded[0].items == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_WITH_AS(read_predictions("/tmp/clickrank_preds_test.csv", "local_test"),
                       doctest::Contains("partition mismatch"), std::runtime_error);
}
