#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "clickrank/embedding.hpp"
#include "clickrank/types.hpp"

namespace clickrank {

struct GruParams {
  int hidden_dim = 100;
  int epochs = 10;
  double step_size = 0.01;
  int max_len = 200;
  int batch_size = 32;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

// Single-layer GRU over embedded item sequences, sigmoid on the final hidden
// state, then an affine layer to one score per known item and a log-softmax.
// Parameters live in one flat buffer so gradient checks and norm clipping can
// treat the model as a single vector.
class GruRanker {
 public:
  GruRanker() = default;
  GruRanker(int input_dim, int hidden_dim, std::vector<std::string> items);

  void init_weights(std::uint64_t seed);  // uniform +-1/sqrt(hidden); biases 0

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int n_items() const { return n_items_; }
  const std::vector<std::string>& items() const { return items_; }
  int item_of(const std::string& id) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Weight blocks, in layout order: update/reset/candidate input weights
  // (hidden x input), recurrent weights (hidden x hidden), gate biases,
  // output weights (items x hidden), output bias.
  std::span<double> w_in(int gate);
  std::span<double> w_rec(int gate);
  std::span<double> bias(int gate);
  std::span<double> w_out();
  std::span<double> b_out();
  std::span<const double> w_in(int gate) const;
  std::span<const double> w_rec(int gate) const;
  std::span<const double> bias(int gate) const;
  std::span<const double> w_out() const;
  std::span<const double> b_out() const;

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  int n_items_ = 0;
  std::vector<std::string> items_;
  std::unordered_map<std::string, int> item_index_;
  std::vector<double> params_;
};

// Log-scores over all known items for one encoded session; values sum to one
// after exponentiation.
std::vector<double> forward(const GruRanker& model, const std::vector<std::vector<double>>& seq);

// Negative log-likelihood of `target` and, for the _grad variant, the full
// parameter gradient accumulated into `grad` (same layout as model.params()).
double nll_loss(const GruRanker& model, const std::vector<std::vector<double>>& seq, int target);
double nll_loss_grad(const GruRanker& model, const std::vector<std::vector<double>>& seq,
                     int target, std::vector<double>& grad);

// One training example: embedded prefix of a session and the clickout target
// as an output column.
struct TrainPair {
  std::vector<std::vector<double>> sequence;
  int target = -1;
};

// Padded batch as fed to training: batch x max_len x input_dim with per-row
// valid lengths. Positions at or beyond a row's length are zero and never
// read.
struct TrainBatch {
  int batch = 0;
  int max_len = 0;
  int input_dim = 0;
  std::vector<double> inputs;
  std::vector<int> lengths;
  std::vector<int> targets;

  std::span<const double> step(int row, int t) const {
    return {inputs.data() +
                (static_cast<std::size_t>(row) * max_len + t) * static_cast<std::size_t>(input_dim),
            static_cast<std::size_t>(input_dim)};
  }
  std::vector<std::vector<double>> sequence(int row) const;
};

// Groups pairs of similar length, truncates to the last max_len steps, pads
// to the longest row per batch.
std::vector<TrainBatch> make_batches(const std::vector<TrainPair>& pairs, int batch_size,
                                     int max_len);

// Training pairs from unmasked sessions: the embedded items strictly before
// the last referenced clickout, with that clickout's item as target. Sessions
// without such a clickout, an empty prefix, or an out-of-vocabulary target
// are skipped.
std::vector<TrainPair> make_train_pairs(const std::vector<Session>& sessions,
                                        const EmbeddingTable& table, const GruRanker& model,
                                        int max_len);

// Mini-batch gradient descent on the NLL of the final step, gradients clipped
// at clip_norm. Deterministic under the seed.
GruRanker train_rnn(const std::vector<TrainBatch>& batches, int input_dim,
                    std::vector<std::string> items, const GruParams& params);

// Convenience: pairs + batches + training from sessions.
GruRanker train_rnn(const std::vector<Session>& sessions, const EmbeddingTable& table,
                    const GruParams& params);

// Scores the impression list of a masked clickout: forward over the encoded
// session prefix, each impression mapped to its output column's log-score,
// unknown items to -infinity; ties and the unknown group keep impression
// order.
RankedList predict_clickout(const GruRanker& model, const EmbeddingTable& table,
                            const Session& session, const std::vector<std::string>& impressions,
                            int max_len = 200);

void save_gru(const std::string& path, const GruRanker& model);
GruRanker load_gru(const std::string& path);

}  // namespace clickrank
