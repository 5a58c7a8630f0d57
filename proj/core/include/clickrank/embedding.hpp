#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "clickrank/matrix.hpp"
#include "clickrank/types.hpp"

namespace clickrank {

struct EmbedParams {
  int dimension = 60;
  int window = 5;
  int min_count = 1;
  int negatives = 5;
  int epochs = 5;
  double step_size = 0.025;
  std::uint64_t seed = 1;
};

// Item embeddings trained on sessions-as-sentences. `vectors` rows follow
// `items` order; `vocab` maps ids back to rows.
struct EmbeddingTable {
  int dimension = 0;
  std::vector<std::string> items;
  std::unordered_map<std::string, int> vocab;
  Matrix vectors;

  int index_of(const std::string& item) const {
    auto it = vocab.find(item);
    return it == vocab.end() ? -1 : it->second;
  }
};

// Ordered hotel-item references of a session: filter to hotel actions, keep
// each action's reference when present. This is the sentence fed to the
// embedding trainer and the GRU encoder.
std::vector<std::string> session_item_refs(const Session& session);
std::vector<std::vector<std::string>> session_corpus(const std::vector<Session>& sessions);

EmbeddingTable train_item2vec(const std::vector<std::vector<std::string>>& corpus,
                              const EmbedParams& params);
EmbeddingTable train_item2vec(const std::vector<Session>& sessions, const EmbedParams& params);

// Embeddings of the last `max_len` item references of the session, in order.
// Items missing from the vocabulary encode as the zero vector.
std::vector<std::vector<double>> encode_session(const EmbeddingTable& table,
                                                const Session& session, int max_len = 200);
std::vector<std::vector<double>> encode_items(const EmbeddingTable& table,
                                              const std::vector<std::string>& items,
                                              int max_len = 200);

// One skip-gram example under negative sampling: predict `context` from
// `center` against `negatives`. Gradients are sparse; only the center row of
// the input matrix and the context/negative rows of the output matrix move.
struct SgnsGrad {
  std::vector<double> center_in;                              // d/d in[center]
  std::vector<std::pair<int, std::vector<double>>> out_rows;  // d/d out[row]
};

double sgns_example_loss(const Matrix& in, const Matrix& out, int center, int context,
                         std::span<const int> negatives);
double sgns_example_grad(const Matrix& in, const Matrix& out, int center, int context,
                         std::span<const int> negatives, SgnsGrad& grad);

void save_embeddings(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::string& path);

}  // namespace clickrank
