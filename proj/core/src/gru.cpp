#include "clickrank/gru.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/rng.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M x, with M given row-major (rows x cols).
void mat_vec_add(std::span<const double> m, int rows, int cols, std::span<const double> x,
                 std::span<double> y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m.data() + static_cast<std::size_t>(r) * cols;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += row[c] * x[c];
    y[r] += s;
  }
}

// y += M^T x.
void mat_t_vec_add(std::span<const double> m, int rows, int cols, std::span<const double> x,
                   std::span<double> y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) y[c] += row[c] * x[r];
  }
}

// M += a * outer(u, v).
void outer_add(std::span<double> m, int rows, int cols, std::span<const double> u,
               std::span<const double> v) {
  for (int r = 0; r < rows; ++r) {
    double* row = m.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += u[r] * v[c];
  }
}

struct StepCache {
  std::vector<double> h_prev, z, r, c, uc_h;
};

}  // namespace

GruRanker::GruRanker(int input_dim, int hidden_dim, std::vector<std::string> items)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), n_items_(static_cast<int>(items.size())),
      items_(std::move(items)) {
  if (input_dim <= 0 || hidden_dim <= 0 || n_items_ <= 0) {
    throw std::invalid_argument("GruRanker: dimensions must be positive");
  }
  for (int i = 0; i < n_items_; ++i) item_index_.emplace(items_[i], i);
  const std::size_t h = hidden_dim_, in = input_dim_, n = n_items_;
  params_.assign(3 * h * in + 3 * h * h + 3 * h + n * h + n, 0.0);
}

void GruRanker::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim_));
  const std::size_t h = hidden_dim_, in = input_dim_, n = n_items_;
  // Weight matrices random, the three gate biases zero.
  for (std::size_t i = 0; i < 3 * h * in + 3 * h * h; ++i) params_[i] = rng.range(-scale, scale);
  for (std::size_t i = 3 * h * in + 3 * h * h + 3 * h; i < params_.size() - n; ++i) {
    params_[i] = rng.range(-scale, scale);
  }
}

int GruRanker::item_of(const std::string& id) const {
  auto it = item_index_.find(id);
  return it == item_index_.end() ? -1 : it->second;
}

namespace {
// Block offsets inside the flat parameter buffer.
struct Layout {
  std::size_t h, in, n;
  std::size_t w_in(int gate) const { return static_cast<std::size_t>(gate) * h * in; }
  std::size_t w_rec(int gate) const { return 3 * h * in + static_cast<std::size_t>(gate) * h * h; }
  std::size_t bias(int gate) const {
    return 3 * h * in + 3 * h * h + static_cast<std::size_t>(gate) * h;
  }
  std::size_t w_out() const { return 3 * h * in + 3 * h * h + 3 * h; }
  std::size_t b_out() const { return w_out() + n * h; }
};

Layout layout_of(const GruRanker& m) {
  return {static_cast<std::size_t>(m.hidden_dim()), static_cast<std::size_t>(m.input_dim()),
          static_cast<std::size_t>(m.n_items())};
}
}  // namespace

std::span<double> GruRanker::w_in(int g) {
  Layout l = layout_of(*this);
  return {params_.data() + l.w_in(g), l.h * l.in};
}
std::span<double> GruRanker::w_rec(int g) {
  Layout l = layout_of(*this);
  return {params_.data() + l.w_rec(g), l.h * l.h};
}
std::span<double> GruRanker::bias(int g) {
  Layout l = layout_of(*this);
  return {params_.data() + l.bias(g), l.h};
}
std::span<double> GruRanker::w_out() {
  Layout l = layout_of(*this);
  return {params_.data() + l.w_out(), l.n * l.h};
}
std::span<double> GruRanker::b_out() {
  Layout l = layout_of(*this);
  return {params_.data() + l.b_out(), l.n};
}
std::span<const double> GruRanker::w_in(int g) const {
  Layout l = layout_of(*this);
  return {params_.data() + l.w_in(g), l.h * l.in};
}
std::span<const double> GruRanker::w_rec(int g) const {
  Layout l = layout_of(*this);
  return {params_.data() + l.w_rec(g), l.h * l.h};
}
std::span<const double> GruRanker::bias(int g) const {
  Layout l = layout_of(*this);
  return {params_.data() + l.bias(g), l.h};
}
std::span<const double> GruRanker::w_out() const {
  Layout l = layout_of(*this);
  return {params_.data() + l.w_out(), l.n * l.h};
}
std::span<const double> GruRanker::b_out() const {
  Layout l = layout_of(*this);
  return {params_.data() + l.b_out(), l.n};
}

namespace {

constexpr int kUpdate = 0;
constexpr int kReset = 1;
constexpr int kCandidate = 2;

// Runs the recurrence; fills per-step caches when requested. Returns the
// final hidden state.
std::vector<double> run_recurrence(const GruRanker& m,
                                   const std::vector<std::vector<double>>& seq,
                                   std::vector<StepCache>* caches) {
  const int h = m.hidden_dim();
  const int in = m.input_dim();
  std::vector<double> hidden(h, 0.0);
  std::vector<double> z(h), r(h), c(h), uc_h(h);
  for (const auto& x : seq) {
    if (static_cast<int>(x.size()) != in) {
      throw std::invalid_argument("GRU input dimension mismatch: expected " + std::to_string(in) +
                                  ", got " + std::to_string(x.size()));
    }
    std::copy(m.bias(kUpdate).begin(), m.bias(kUpdate).end(), z.begin());
    mat_vec_add(m.w_in(kUpdate), h, in, x, z);
    mat_vec_add(m.w_rec(kUpdate), h, h, hidden, z);
    std::copy(m.bias(kReset).begin(), m.bias(kReset).end(), r.begin());
    mat_vec_add(m.w_in(kReset), h, in, x, r);
    mat_vec_add(m.w_rec(kReset), h, h, hidden, r);
    for (int i = 0; i < h; ++i) {
      z[i] = sigmoid(z[i]);
      r[i] = sigmoid(r[i]);
    }
    std::fill(uc_h.begin(), uc_h.end(), 0.0);
    mat_vec_add(m.w_rec(kCandidate), h, h, hidden, uc_h);
    std::copy(m.bias(kCandidate).begin(), m.bias(kCandidate).end(), c.begin());
    mat_vec_add(m.w_in(kCandidate), h, in, x, c);
    for (int i = 0; i < h; ++i) c[i] = std::tanh(c[i] + r[i] * uc_h[i]);

    if (caches) {
      caches->push_back({hidden, z, r, c, uc_h});
    }
    for (int i = 0; i < h; ++i) hidden[i] = (1.0 - z[i]) * c[i] + z[i] * hidden[i];
  }
  return hidden;
}

std::vector<double> output_log_softmax(const GruRanker& m, const std::vector<double>& activated) {
  const int h = m.hidden_dim();
  const int n = m.n_items();
  std::vector<double> y(m.b_out().begin(), m.b_out().end());
  mat_vec_add(m.w_out(), n, h, activated, y);
  double max_y = *std::max_element(y.begin(), y.end());
  double sum = 0.0;
  for (double v : y) sum += std::exp(v - max_y);
  double lse = max_y + std::log(sum);
  for (double& v : y) v -= lse;
  return y;
}

}  // namespace

std::vector<double> forward(const GruRanker& model, const std::vector<std::vector<double>>& seq) {
  if (seq.empty()) throw std::invalid_argument("forward: empty sequence");
  std::vector<double> hidden = run_recurrence(model, seq, nullptr);
  std::vector<double> a(hidden.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) a[i] = sigmoid(hidden[i]);
  return output_log_softmax(model, a);
}

double nll_loss(const GruRanker& model, const std::vector<std::vector<double>>& seq, int target) {
  if (target < 0 || target >= model.n_items()) {
    throw std::out_of_range("nll_loss: target out of range");
  }
  return -forward(model, seq)[target];
}

double nll_loss_grad(const GruRanker& model, const std::vector<std::vector<double>>& seq,
                     int target, std::vector<double>& grad) {
  if (seq.empty()) throw std::invalid_argument("nll_loss_grad: empty sequence");
  if (target < 0 || target >= model.n_items()) {
    throw std::out_of_range("nll_loss_grad: target out of range");
  }
  if (grad.size() != model.params().size()) grad.assign(model.params().size(), 0.0);

  const int h = model.hidden_dim();
  const int in = model.input_dim();
  const int n = model.n_items();
  const Layout l = layout_of(model);

  std::vector<StepCache> caches;
  caches.reserve(seq.size());
  std::vector<double> hidden = run_recurrence(model, seq, &caches);
  std::vector<double> a(h);
  for (int i = 0; i < h; ++i) a[i] = sigmoid(hidden[i]);
  std::vector<double> logp = output_log_softmax(model, a);
  const double loss = -logp[target];

  auto block = [&](std::size_t offset, std::size_t size) {
    return std::span<double>(grad.data() + offset, size);
  };

  // Output layer: dL/dy = softmax(y) - onehot.
  std::vector<double> dy(n);
  for (int i = 0; i < n; ++i) dy[i] = std::exp(logp[i]);
  dy[target] -= 1.0;
  auto g_wout = block(l.w_out(), l.n * l.h);
  auto g_bout = block(l.b_out(), l.n);
  outer_add(g_wout, n, h, dy, a);
  for (int i = 0; i < n; ++i) g_bout[i] += dy[i];

  std::vector<double> dh(h, 0.0);
  mat_t_vec_add(model.w_out(), n, h, dy, dh);
  for (int i = 0; i < h; ++i) dh[i] *= a[i] * (1.0 - a[i]);  // through the sigmoid

  std::vector<double> dz(h), dr(h), dc(h), dc_pre(h), dz_pre(h), dr_pre(h), duc(h), dh_prev(h);
  for (int t = static_cast<int>(seq.size()) - 1; t >= 0; --t) {
    const StepCache& s = caches[t];
    const auto& x = seq[t];
    for (int i = 0; i < h; ++i) {
      dz[i] = dh[i] * (s.h_prev[i] - s.c[i]);
      dc[i] = dh[i] * (1.0 - s.z[i]);
      dh_prev[i] = dh[i] * s.z[i];
      dc_pre[i] = dc[i] * (1.0 - s.c[i] * s.c[i]);
      dr[i] = dc_pre[i] * s.uc_h[i];
      duc[i] = dc_pre[i] * s.r[i];
      dz_pre[i] = dz[i] * s.z[i] * (1.0 - s.z[i]);
      dr_pre[i] = dr[i] * s.r[i] * (1.0 - s.r[i]);
    }
    outer_add(block(l.w_in(kCandidate), l.h * l.in), h, in, dc_pre, x);
    outer_add(block(l.w_in(kUpdate), l.h * l.in), h, in, dz_pre, x);
    outer_add(block(l.w_in(kReset), l.h * l.in), h, in, dr_pre, x);
    outer_add(block(l.w_rec(kCandidate), l.h * l.h), h, h, duc, s.h_prev);
    outer_add(block(l.w_rec(kUpdate), l.h * l.h), h, h, dz_pre, s.h_prev);
    outer_add(block(l.w_rec(kReset), l.h * l.h), h, h, dr_pre, s.h_prev);
    auto g_bc = block(l.bias(kCandidate), l.h);
    auto g_bz = block(l.bias(kUpdate), l.h);
    auto g_br = block(l.bias(kReset), l.h);
    for (int i = 0; i < h; ++i) {
      g_bc[i] += dc_pre[i];
      g_bz[i] += dz_pre[i];
      g_br[i] += dr_pre[i];
    }
    mat_t_vec_add(model.w_rec(kCandidate), h, h, duc, dh_prev);
    mat_t_vec_add(model.w_rec(kUpdate), h, h, dz_pre, dh_prev);
    mat_t_vec_add(model.w_rec(kReset), h, h, dr_pre, dh_prev);
    dh = dh_prev;
  }
  return loss;
}

std::vector<std::vector<double>> TrainBatch::sequence(int row) const {
  std::vector<std::vector<double>> seq;
  seq.reserve(lengths[row]);
  for (int t = 0; t < lengths[row]; ++t) {
    auto s = step(row, t);
    seq.emplace_back(s.begin(), s.end());
  }
  return seq;
}

std::vector<TrainBatch> make_batches(const std::vector<TrainPair>& pairs, int batch_size,
                                     int max_len) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].sequence.size() < pairs[b].sequence.size();
  });

  for (const TrainPair& p : pairs) {
    if (p.sequence.empty()) throw std::invalid_argument("make_batches: empty sequence");
  }

  std::vector<TrainBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::size_t end = std::min(order.size(), start + batch_size);
    TrainBatch batch;
    batch.batch = static_cast<int>(end - start);
    batch.input_dim = static_cast<int>(pairs[order[start]].sequence[0].size());
    int longest = 0;
    for (std::size_t k = start; k < end; ++k) {
      int len = std::min<int>(max_len, static_cast<int>(pairs[order[k]].sequence.size()));
      longest = std::max(longest, len);
    }
    batch.max_len = longest;
    batch.inputs.assign(static_cast<std::size_t>(batch.batch) * longest * batch.input_dim, 0.0);
    for (std::size_t k = start; k < end; ++k) {
      const TrainPair& p = pairs[order[k]];
      int row = static_cast<int>(k - start);
      int full = static_cast<int>(p.sequence.size());
      int len = std::min(max_len, full);
      int offset = full - len;  // keep the last max_len steps
      batch.lengths.push_back(len);
      batch.targets.push_back(p.target);
      for (int t = 0; t < len; ++t) {
        const auto& x = p.sequence[offset + t];
        std::copy(x.begin(), x.end(),
                  batch.inputs.begin() +
                      (static_cast<std::size_t>(row) * longest + t) * batch.input_dim);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<TrainPair> make_train_pairs(const std::vector<Session>& sessions,
                                        const EmbeddingTable& table, const GruRanker& model,
                                        int max_len) {
  std::vector<TrainPair> pairs;
  for (const Session& session : sessions) {
    Session filtered = filter_hotel_actions(session);
    int click = -1;
    for (int i = static_cast<int>(filtered.actions.size()) - 1; i >= 0; --i) {
      if (is_clickout(filtered.actions[i]) && filtered.actions[i].reference) {
        click = i;
        break;
      }
    }
    if (click < 0) continue;
    int target = model.item_of(*filtered.actions[click].reference);
    if (target < 0) continue;
    std::vector<std::string> prefix;
    for (int i = 0; i < click; ++i) {
      if (filtered.actions[i].reference) prefix.push_back(*filtered.actions[i].reference);
    }
    if (prefix.empty()) continue;
    pairs.push_back({encode_items(table, prefix, max_len), target});
  }
  return pairs;
}

GruRanker train_rnn(const std::vector<TrainBatch>& batches, int input_dim,
                    std::vector<std::string> items, const GruParams& params) {
  GruRanker model(input_dim, params.hidden_dim, std::move(items));
  model.init_weights(params.seed);
  Rng rng(params.seed + 0x5eed);

  std::vector<std::size_t> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});
  std::vector<double> grad(model.params().size());

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle(batch_order, rng);
    for (std::size_t bi : batch_order) {
      const TrainBatch& batch = batches[bi];
      if (batch.batch == 0) continue;
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (int row = 0; row < batch.batch; ++row) {
        batch_loss += nll_loss_grad(model, batch.sequence(row), batch.targets[row], grad);
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("non-finite loss in epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(bi));
      }
      const double inv = 1.0 / batch.batch;
      double norm_sq = 0.0;
      for (double& g : grad) {
        g *= inv;
        norm_sq += g * g;
      }
      double scale = params.step_size;
      double norm = std::sqrt(norm_sq);
      if (norm > params.clip_norm) scale *= params.clip_norm / norm;
      auto& p = model.params();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= scale * grad[i];
    }
  }
  return model;
}

GruRanker train_rnn(const std::vector<Session>& sessions, const EmbeddingTable& table,
                    const GruParams& params) {
  GruRanker proto(table.dimension, params.hidden_dim, table.items);
  auto pairs = make_train_pairs(sessions, table, proto, params.max_len);
  if (pairs.empty()) throw std::runtime_error("train_rnn: no trainable sessions");
  auto batches = make_batches(pairs, params.batch_size, params.max_len);
  return train_rnn(batches, table.dimension, table.items, params);
}

RankedList predict_clickout(const GruRanker& model, const EmbeddingTable& table,
                            const Session& session, const std::vector<std::string>& impressions,
                            int max_len) {
  if (impressions.empty()) throw std::invalid_argument("predict_clickout: empty impression list");

  Session filtered = filter_hotel_actions(session);
  int click = -1;
  for (int i = static_cast<int>(filtered.actions.size()) - 1; i >= 0; --i) {
    if (is_clickout(filtered.actions[i])) {
      click = i;
      break;
    }
  }
  std::vector<std::string> prefix;
  const int limit = click >= 0 ? click : static_cast<int>(filtered.actions.size());
  for (int i = 0; i < limit; ++i) {
    if (filtered.actions[i].reference) prefix.push_back(*filtered.actions[i].reference);
  }
  if (prefix.empty()) {
    throw std::runtime_error("predict_clickout: no hotel actions before the clickout (session " +
                             session.session_id + " belongs on the cold-start path)");
  }

  std::vector<double> logp = forward(model, encode_items(table, prefix, max_len));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> scores(impressions.size());
  for (std::size_t i = 0; i < impressions.size(); ++i) {
    int idx = model.item_of(impressions[i]);
    scores[i] = idx >= 0 ? logp[idx] : neg_inf;
  }
  std::vector<std::size_t> order(impressions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedList out;
  out.session_id = session.session_id;
  for (std::size_t i : order) {
    out.items.push_back(impressions[i]);
    out.scores.push_back(scores[i]);
  }
  return out;
}

void save_gru(const std::string& path, const GruRanker& model) {
  std::ostringstream out;
  out << "input=" << model.input_dim() << " hidden=" << model.hidden_dim()
      << " items=" << model.n_items() << "\n";
  for (const auto& id : model.items()) out << id << "\n";
  const auto& p = model.params();
  out << "params " << p.size() << "\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << format_double(p[i]) << ((i % 8 == 7 || i + 1 == p.size()) ? "\n" : " ");
  }
  write_file(path, out.str());
}

GruRanker load_gru(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open GRU model: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty GRU model: " + path);
  int input = 0, hidden = 0, items = 0;
  if (std::sscanf(header.c_str(), "input=%d hidden=%d items=%d", &input, &hidden, &items) != 3) {
    throw std::runtime_error("bad GRU header: " + header);
  }
  std::vector<std::string> ids;
  ids.reserve(items);
  std::string line;
  for (int i = 0; i < items; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated GRU model: " + path);
    ids.push_back(line);
  }
  GruRanker model(input, hidden, std::move(ids));
  std::size_t n = 0;
  in >> line >> n;
  if (line != "params" || n != model.params().size()) {
    throw std::runtime_error("bad GRU params block in " + path);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> model.params()[i])) throw std::runtime_error("truncated GRU params in " + path);
  }
  return model;
}

}  // namespace clickrank
