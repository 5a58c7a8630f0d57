#include "clickrank/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/rng.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cumulative unigram^0.75 table for negative sampling; sampled by binary
// search so draws depend only on our own rng stream.
struct NegativeSampler {
  std::vector<double> cumulative;

  explicit NegativeSampler(const std::vector<long long>& counts) {
    cumulative.reserve(counts.size());
    double total = 0.0;
    for (long long c : counts) {
      total += std::pow(static_cast<double>(c), 0.75);
      cumulative.push_back(total);
    }
  }

  int draw(Rng& rng) const {
    double u = rng.unit() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return static_cast<int>(it - cumulative.begin());
  }
};

}  // namespace

std::vector<std::string> session_item_refs(const Session& session) {
  std::vector<std::string> refs;
  for (const Action& a : session.actions) {
    if (is_hotel_action(a) && a.reference) refs.push_back(*a.reference);
  }
  return refs;
}

std::vector<std::vector<std::string>> session_corpus(const std::vector<Session>& sessions) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(sessions.size());
  for (const Session& s : sessions) {
    auto refs = session_item_refs(s);
    if (!refs.empty()) corpus.push_back(std::move(refs));
  }
  return corpus;
}

double sgns_example_loss(const Matrix& in, const Matrix& out, int center, int context,
                         std::span<const int> negatives) {
  auto v = in.row(center);
  double loss = -std::log(sigmoid(dot(v, out.row(context))));
  for (int n : negatives) {
    loss -= std::log(sigmoid(-dot(v, out.row(n))));
  }
  return loss;
}

double sgns_example_grad(const Matrix& in, const Matrix& out, int center, int context,
                         std::span<const int> negatives, SgnsGrad& grad) {
  const int d = in.cols();
  auto v = in.row(center);
  grad.center_in.assign(d, 0.0);
  grad.out_rows.clear();

  auto out_grad = [&](int row) -> std::vector<double>& {
    for (auto& [r, g] : grad.out_rows) {
      if (r == row) return g;
    }
    grad.out_rows.emplace_back(row, std::vector<double>(d, 0.0));
    return grad.out_rows.back().second;
  };

  double loss = 0.0;
  {
    auto u = out.row(context);
    double s = sigmoid(dot(v, u));
    loss -= std::log(s);
    double coeff = s - 1.0;  // d(-log sigma(v.u))/d(v.u)
    auto& gu = out_grad(context);
    for (int i = 0; i < d; ++i) {
      grad.center_in[i] += coeff * u[i];
      gu[i] += coeff * v[i];
    }
  }
  for (int n : negatives) {
    auto u = out.row(n);
    double s = sigmoid(dot(v, u));
    loss -= std::log(1.0 - s);
    double coeff = s;  // d(-log sigma(-v.u))/d(v.u)
    auto& gu = out_grad(n);
    for (int i = 0; i < d; ++i) {
      grad.center_in[i] += coeff * u[i];
      gu[i] += coeff * v[i];
    }
  }
  return loss;
}

EmbeddingTable train_item2vec(const std::vector<std::vector<std::string>>& corpus,
                              const EmbedParams& params) {
  if (params.dimension <= 0 || params.window <= 0 || params.min_count < 1 ||
      params.negatives <= 0 || params.epochs <= 0 || params.step_size <= 0.0) {
    throw std::invalid_argument("embedding parameters must be positive");
  }

  // Vocabulary in first-occurrence order, filtered by min_count.
  std::unordered_map<std::string, long long> counts;
  std::vector<std::string> order;
  long long total_positions = 0;
  for (const auto& sentence : corpus) {
    for (const auto& item : sentence) {
      if (counts[item]++ == 0) order.push_back(item);
      ++total_positions;
    }
  }
  EmbeddingTable table;
  table.dimension = params.dimension;
  for (const auto& item : order) {
    if (counts[item] >= params.min_count) {
      table.vocab.emplace(item, static_cast<int>(table.items.size()));
      table.items.push_back(item);
    }
  }
  if (table.items.empty()) throw std::runtime_error("no trainable items");

  const int vocab = static_cast<int>(table.items.size());
  const int d = params.dimension;
  std::vector<long long> vocab_counts(vocab);
  for (int i = 0; i < vocab; ++i) vocab_counts[i] = counts[table.items[i]];
  NegativeSampler sampler(vocab_counts);

  Rng rng(params.seed);
  Matrix in(vocab, d);
  Matrix out(vocab, d);
  for (double& w : in.data()) w = rng.range(-0.5 / d, 0.5 / d);

  // Sentences in index form, unknown (sub-min_count) items dropped.
  std::vector<std::vector<int>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& sentence : corpus) {
    std::vector<int> ids;
    for (const auto& item : sentence) {
      auto it = table.vocab.find(item);
      if (it != table.vocab.end()) ids.push_back(it->second);
    }
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }

  const double total_steps =
      static_cast<double>(params.epochs) * static_cast<double>(total_positions);
  long long processed = 0;
  std::vector<int> negatives;
  SgnsGrad grad;

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    for (const auto& sentence : sentences) {
      const int len = static_cast<int>(sentence.size());
      for (int i = 0; i < len; ++i, ++processed) {
        double alpha = params.step_size *
                       std::max(1.0 - static_cast<double>(processed) / total_steps, 1e-4);
        int lo = std::max(0, i - params.window);
        int hi = std::min(len - 1, i + params.window);
        for (int j = lo; j <= hi; ++j) {
          if (j == i) continue;
          int center = sentence[i];
          int context = sentence[j];
          negatives.clear();
          for (int k = 0; k < params.negatives; ++k) {
            int n = sampler.draw(rng);
            if (n == context) continue;  // dropped, not redrawn
            negatives.push_back(n);
          }
          sgns_example_grad(in, out, center, context, negatives, grad);
          auto v = in.row(center);
          for (int t = 0; t < d; ++t) v[t] -= alpha * grad.center_in[t];
          for (const auto& [row, g] : grad.out_rows) {
            auto u = out.row(row);
            for (int t = 0; t < d; ++t) u[t] -= alpha * g[t];
          }
        }
      }
    }
  }

  table.vectors = std::move(in);
  return table;
}

EmbeddingTable train_item2vec(const std::vector<Session>& sessions, const EmbedParams& params) {
  return train_item2vec(session_corpus(sessions), params);
}

std::vector<std::vector<double>> encode_items(const EmbeddingTable& table,
                                              const std::vector<std::string>& items,
                                              int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  std::size_t start = items.size() > static_cast<std::size_t>(max_len)
                          ? items.size() - static_cast<std::size_t>(max_len)
                          : 0;
  std::vector<std::vector<double>> encoded;
  encoded.reserve(items.size() - start);
  for (std::size_t i = start; i < items.size(); ++i) {
    int idx = table.index_of(items[i]);
    if (idx < 0) {
      encoded.emplace_back(table.dimension, 0.0);
    } else {
      auto row = table.vectors.row(idx);
      encoded.emplace_back(row.begin(), row.end());
    }
  }
  return encoded;
}

std::vector<std::vector<double>> encode_session(const EmbeddingTable& table,
                                                const Session& session, int max_len) {
  return encode_items(table, session_item_refs(session), max_len);
}

void save_embeddings(const std::string& path, const EmbeddingTable& table) {
  std::ostringstream out;
  out << "dim=" << table.dimension << " vocab=" << table.items.size() << "\n";
  for (std::size_t i = 0; i < table.items.size(); ++i) {
    out << table.items[i];
    auto row = table.vectors.row(static_cast<int>(i));
    for (double v : row) out << " " << format_double(v);
    out << "\n";
  }
  write_file(path, out.str());
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty embeddings file: " + path);
  int d = 0;
  std::size_t n = 0;
  if (std::sscanf(header.c_str(), "dim=%d vocab=%zu", &d, &n) != 2) {
    throw std::runtime_error("bad embeddings header: " + header);
  }
  EmbeddingTable table;
  table.dimension = d;
  table.vectors = Matrix(static_cast<int>(n), d);
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated embeddings file: " + path);
    auto parts = split(line, ' ');
    if (parts.size() != static_cast<std::size_t>(d) + 1) {
      throw std::runtime_error("bad embeddings row: " + line);
    }
    table.vocab.emplace(parts[0], static_cast<int>(i));
    table.items.push_back(parts[0]);
    auto row = table.vectors.row(static_cast<int>(i));
    for (int t = 0; t < d; ++t) row[t] = parse_double(parts[t + 1], "embedding value");
  }
  return table;
}

}  // namespace clickrank
