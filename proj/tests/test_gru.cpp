#include <doctest.h>

#include <cmath>

#include "clickrank/gru.hpp"
#include "clickrank/rng.hpp"
#include "oracles.hpp"

using namespace clickrank;

namespace {

std::vector<std::vector<double>> random_sequence(int len, int dim, Rng& rng) {
  std::vector<std::vector<double>> seq(len, std::vector<double>(dim));
  for (auto& x : seq) {
    for (double& v : x) v = rng.range(-1.0, 1.0);
  }
  return seq;
}

GruRanker random_toy_model(int input_dim, int hidden, int items, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (int i = 0; i < items; ++i) ids.push_back("i" + std::to_string(i));
  GruRanker m(input_dim, hidden, std::move(ids));
  Rng rng(seed);
  for (double& p : m.params()) p = rng.range(-0.7, 0.7);
  return m;
}

EmbeddingTable identity_table(int n) {
  EmbeddingTable t;
  t.dimension = n;
  t.vectors = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    t.items.push_back("i" + std::to_string(i));
    t.vocab.emplace(t.items.back(), i);
    t.vectors.at(i, i) = 1.0;
  }
  return t;
}

}  // namespace

TEST_CASE("forward produces a normalized log-distribution over all items") {
  GruRanker m = random_toy_model(4, 3, 6, 2);
  Rng rng(5);
  auto logp = forward(m, random_sequence(5, 4, rng));
  REQUIRE(static_cast<int>(logp.size()) == m.n_items());
  double sum = 0.0;
  for (double v : logp) {
    CHECK(v <= 0.0);
    sum += std::exp(v);
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("a zero-weight model is exactly uniform") {
  std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  GruRanker m(3, 4, ids);  // all parameters zero
  Rng rng(6);
  auto logp = forward(m, random_sequence(4, 3, rng));
  for (double v : logp) CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
  CHECK(nll_loss(m, random_sequence(3, 3, rng), 2) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("dimension mismatches are rejected") {
  GruRanker m = random_toy_model(4, 3, 5, 9);
  std::vector<std::vector<double>> bad = {{1.0, 2.0}};
  CHECK_THROWS_AS(forward(m, bad), std::invalid_argument);
  CHECK_THROWS_AS(forward(m, {}), std::invalid_argument);
}

TEST_CASE("full-parameter gradients match central finite differences") {
  Rng rng(31);
  for (int config = 0; config < 5; ++config) {
    GruRanker m = random_toy_model(3, 2, 3, 100 + config);
    auto seq = random_sequence(2 + config % 3, 3, rng);
    int target = rng.index(3);

    std::vector<double> grad(m.params().size(), 0.0);
    nll_loss_grad(m, seq, target, grad);

    for (std::size_t i = 0; i < m.params().size(); ++i) {
      double numeric = oracles::central_difference(m.params(), i,
                                                   [&] { return nll_loss(m, seq, target); });
      CHECK(oracles::grad_close(grad[i], numeric));
    }
  }
}

TEST_CASE("a small batch can be driven to rank its targets first") {
  Rng rng(77);
  std::vector<TrainPair> pairs;
  for (int k = 0; k < 4; ++k) {
    TrainPair p;
    p.sequence = random_sequence(3, 4, rng);
    p.target = k;
    pairs.push_back(std::move(p));
  }
  auto batches = make_batches(pairs, 4, 200);
  std::vector<std::string> ids = {"i0", "i1", "i2", "i3"};
  GruParams params;
  params.hidden_dim = 8;
  params.epochs = 500;
  params.step_size = 0.5;
  params.seed = 3;
  GruRanker m = train_rnn(batches, 4, ids, params);

  double total = 0.0;
  for (const auto& p : pairs) {
    auto logp = forward(m, p.sequence);
    total += -logp[p.target];
    int argmax = 0;
    for (int i = 1; i < 4; ++i) {
      if (logp[i] > logp[argmax]) argmax = i;
    }
    CHECK(argmax == p.target);
  }
  CHECK(total / 4.0 < 0.05);
}

TEST_CASE("padding never leaks into loss or predictions") {
  Rng rng(41);
  std::vector<TrainPair> pairs;
  for (int len : {2, 5, 9}) {
    TrainPair p;
    p.sequence = random_sequence(len, 3, rng);
    p.target = rng.index(4);
    pairs.push_back(std::move(p));
  }
  auto batches = make_batches(pairs, 3, 200);
  REQUIRE(batches.size() == 1);
  const TrainBatch& batch = batches[0];
  CHECK(batch.max_len == 9);

  GruRanker m = random_toy_model(3, 4, 4, 8);
  // Row sequences reconstructed from the padded batch match the originals,
  // so the padded region is never read.
  std::stable_sort(pairs.begin(), pairs.end(), [](const TrainPair& a, const TrainPair& b) {
    return a.sequence.size() < b.sequence.size();
  });
  for (int row = 0; row < batch.batch; ++row) {
    auto from_batch = batch.sequence(row);
    CHECK(from_batch == pairs[row].sequence);
    CHECK(forward(m, from_batch) == forward(m, pairs[row].sequence));
    CHECK(nll_loss(m, from_batch, batch.targets[row]) ==
          nll_loss(m, pairs[row].sequence, batch.targets[row]));
  }
}

TEST_CASE("inference is identical alone or inside any batch") {
  Rng rng(43);
  TrainPair lone;
  lone.sequence = random_sequence(4, 3, rng);
  lone.target = 1;
  std::vector<TrainPair> crowd = {lone};
  for (int k = 0; k < 5; ++k) {
    TrainPair p;
    p.sequence = random_sequence(2 + k, 3, rng);
    p.target = 0;
    crowd.push_back(std::move(p));
  }
  auto alone = make_batches({lone}, 1, 200);
  auto batched = make_batches(crowd, 6, 200);
  GruRanker m = random_toy_model(3, 4, 4, 3);

  auto find_row = [&](const TrainBatch& b) {
    for (int row = 0; row < b.batch; ++row) {
      if (b.sequence(row) == lone.sequence) return row;
    }
    return -1;
  };
  int row = find_row(batched[0]);
  REQUIRE(row >= 0);
  CHECK(forward(m, batched[0].sequence(row)) == forward(m, alone[0].sequence(0)));
}

TEST_CASE("sessions beyond max_len match their pre-truncated tail") {
  EmbeddingTable table = identity_table(8);
  GruRanker m = random_toy_model(8, 4, 8, 21);
  std::vector<std::string> long_items, tail;
  Rng rng(9);
  for (int i = 0; i < 250; ++i) long_items.push_back("i" + std::to_string(rng.index(8)));
  tail.assign(long_items.end() - 200, long_items.end());

  auto full = forward(m, encode_items(table, long_items, 200));
  auto truncated = forward(m, encode_items(table, tail, 200));
  CHECK(full == truncated);
}

TEST_CASE("predict_clickout maps impressions to output scores") {
  EmbeddingTable table = identity_table(6);
  GruRanker m = random_toy_model(6, 5, 6, 11);

  Session s;
  s.session_id = "s1";
  s.user_id = "u1";
  auto add = [&](int step, const std::string& type, const std::string& ref) {
    Action a;
    a.user_id = "u1";
    a.session_id = "s1";
    a.step = step;
    a.action_type = type;
    if (!ref.empty()) a.reference = ref;
    s.actions.push_back(std::move(a));
  };
  add(1, "interaction item info", "i2");
  add(2, "interaction item image", "i4");
  add(3, "clickout item", "");
  s.actions.back().impressions = std::vector<std::string>{"i1", "i5", "i0"};

  SUBCASE("single impression ranks first") {
    auto list = predict_clickout(m, table, s, {"i3"});
    CHECK(list.items == std::vector<std::string>{"i3"});
  }
  SUBCASE("ranking matches the independently extracted forward scores") {
    std::vector<std::string> impressions = {"i1", "i5", "i0", "i3", "i4"};
    auto list = predict_clickout(m, table, s, impressions);
    auto logp = forward(m, encode_items(table, {"i2", "i4"}, 200));
    std::vector<std::pair<double, std::string>> expected;
    for (const auto& item : impressions) expected.emplace_back(logp[table.vocab.at(item)], item);
    std::stable_sort(expected.begin(), expected.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(list.items[i] == expected[i].second);
  }
  SUBCASE("unknown impressions keep impression order") {
    auto list = predict_clickout(m, table, s, {"zz", "yy", "xx"});
    CHECK(list.items == std::vector<std::string>{"zz", "yy", "xx"});
  }
  SUBCASE("a session with no prefix belongs on the cold-start path") {
    Session cold;
    cold.session_id = "s2";
    cold.user_id = "u1";
    Action click;
    click.user_id = "u1";
    click.session_id = "s2";
    click.step = 1;
    click.action_type = "clickout item";
    click.impressions = std::vector<std::string>{"i0"};
    cold.actions.push_back(click);
    CHECK_THROWS_WITH_AS(predict_clickout(m, table, cold, {"i0"}),
                         doctest::Contains("cold-start"), std::runtime_error);
  }
}

TEST_CASE("training loss starts at log(n_items) for zero weights") {
  std::vector<std::string> ids;
  for (int i = 0; i < 7; ++i) ids.push_back("i" + std::to_string(i));
  GruRanker m(3, 4, ids);
  Rng rng(2);
  auto seq = random_sequence(3, 3, rng);
  CHECK(nll_loss(m, seq, 4) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("training is deterministic under a fixed seed") {
  Rng rng(55);
  std::vector<TrainPair> pairs;
  for (int k = 0; k < 6; ++k) {
    TrainPair p;
    p.sequence = random_sequence(2 + k % 3, 3, rng);
    p.target = k % 4;
    pairs.push_back(std::move(p));
  }
  auto batches = make_batches(pairs, 2, 200);
  std::vector<std::string> ids = {"a", "b", "c", "d"};
  GruParams params;
  params.hidden_dim = 5;
  params.epochs = 10;
  params.seed = 4;
  GruRanker a = train_rnn(batches, 3, ids, params);
  GruRanker b = train_rnn(batches, 3, ids, params);
  CHECK(a.params() == b.params());
}

TEST_CASE("GRU model files round-trip") {
  GruRanker m = random_toy_model(3, 4, 5, 71);
  save_gru("/tmp/clickrank_gru_test.txt", m);
  GruRanker loaded = load_gru("/tmp/clickrank_gru_test.txt");
  CHECK(loaded.input_dim() == m.input_dim());
  CHECK(loaded.hidden_dim() == m.hidden_dim());
  CHECK(loaded.items() == m.items());
  CHECK(loaded.params() == m.params());
}
