#include "clickrank/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

namespace {

constexpr double kTiny = 1e-16;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const GbdtParams& params;
  Tree tree;

  int build(std::vector<int>& rows, int depth) {
    double g = 0.0, h = 0.0;
    for (int r : rows) {
      g += grad[r];
      h += hess[r];
    }
    SplitChoice best;
    if (depth < params.max_depth && rows.size() >= 2) {
      best = find_split(rows, g, h);
    }
    int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (!best.found) {
      tree.nodes[id].value = -g / (h + kTiny);
      return id;
    }
    tree.nodes[id].feature = best.feature;
    tree.nodes[id].threshold = best.threshold;
    std::vector<int> left, right;
    for (int r : rows) {
      (x[r][best.feature] <= best.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    int l = build(left, depth + 1);
    int r = build(right, depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  // Exact greedy search: every boundary between distinct adjacent values of
  // every feature, best objective gain wins; first feature / lowest threshold
  // on ties keeps training deterministic.
  SplitChoice find_split(const std::vector<int>& rows, double g_total, double h_total) {
    SplitChoice best;
    const int n_features = static_cast<int>(x[rows[0]].size());
    const double parent = g_total * g_total / (h_total + kTiny);
    std::vector<int> order(rows);
    for (int f = 0; f < n_features; ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return x[a][f] < x[b][f]; });
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        gl += grad[order[i]];
        hl += hess[order[i]];
        double v = x[order[i]][f];
        double next = x[order[i + 1]][f];
        if (v == next) continue;
        double hr = h_total - hl;
        double gr = g_total - gl;
        if (hl < params.min_child_weight || hr < params.min_child_weight) continue;
        double gain = gl * gl / (hl + kTiny) + gr * gr / (hr + kTiny) - parent;
        if (gain > best.gain + 1e-12) {
          best.found = true;
          best.feature = f;
          best.threshold = 0.5 * (v + next);
          best.gain = gain;
        }
      }
    }
    return best;
  }
};

}  // namespace

const std::vector<std::string>& mf_feature_names() {
  static const std::vector<std::string> kNames = {"mf_score", "session_position", "user_bias",
                                                  "impression_position", "item_bias"};
  return kNames;
}

std::vector<FeatureRow> extract_features(const Session& session,
                                         const std::vector<std::string>& impressions,
                                         const LatentModel& model,
                                         const LatentModel& price_model,
                                         const std::optional<std::vector<int>>& prices,
                                         const std::optional<std::string>& truth) {
  if (impressions.empty()) throw std::invalid_argument("extract_features: empty impression list");

  // Interaction context: hotel actions strictly before the session's last
  // clickout (the one being predicted).
  Session filtered = filter_hotel_actions(session);
  auto last_click = std::find_if(filtered.actions.rbegin(), filtered.actions.rend(),
                                 [](const Action& a) { return is_clickout(a); });
  std::size_t context_len = filtered.actions.size();
  if (last_click != filtered.actions.rend()) {
    context_len = filtered.actions.size() - 1 - (last_click - filtered.actions.rbegin());
  }

  const int user = model.user_of(session.user_id);
  std::vector<FeatureRow> rows;
  rows.reserve(impressions.size());
  for (std::size_t p = 0; p < impressions.size(); ++p) {
    const std::string& item = impressions[p];
    FeatureRow row;
    row.group_id = session.session_id;
    row.item_id = item;
    row.impression_position = static_cast<double>(p);
    if (truth) row.label = (item == *truth) ? 1 : 0;

    std::optional<int> bucket;
    if (prices && price_model.buckets) bucket = price_model.buckets->bucket_of((*prices)[p]);
    row.mf_score = score_with_fallback(model, price_model, session.user_id, item, bucket);

    row.session_position = -1.0;
    for (std::size_t i = context_len; i-- > 0;) {
      if (filtered.actions[i].reference && *filtered.actions[i].reference == item) {
        row.session_position = static_cast<double>(context_len - 1 - i);
        break;
      }
    }

    row.user_bias = user >= 0 ? model.user_bias[user] : 0.0;
    int item_idx = model.item_of(item);
    row.item_bias = item_idx >= 0 ? model.item_bias[item_idx] : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

double Tree::eval(std::span<const double> features) const {
  int id = 0;
  while (!nodes[id].is_leaf()) {
    const TreeNode& n = nodes[id];
    id = features[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[id].value;
}

int Tree::n_internal_nodes() const {
  int n = 0;
  for (const TreeNode& node : nodes) {
    if (!node.is_leaf()) ++n;
  }
  return n;
}

double TreeEnsemble::predict(std::span<const double> features) const {
  double sum = 0.0;
  for (const Tree& t : trees) sum += t.eval(features);
  return base_score + shrinkage * sum;
}

TreeEnsemble train_trees(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, const GbdtParams& params,
                         std::vector<std::string> feature_names) {
  if (features.empty()) throw std::runtime_error("train_trees: no rows");
  if (features.size() != labels.size()) {
    throw std::invalid_argument("train_trees: features/labels size mismatch");
  }
  const std::size_t n = features.size();
  const std::size_t n_pos = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0 || n_pos == n) throw std::runtime_error("train_trees: degenerate labels");

  TreeEnsemble model;
  model.shrinkage = params.shrinkage;
  const double rate = static_cast<double>(n_pos) / static_cast<double>(n);
  model.base_score = std::log(rate / (1.0 - rate));
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < features[0].size(); ++f) {
      feature_names.push_back("f" + std::to_string(f));
    }
  }
  model.feature_names = std::move(feature_names);

  std::vector<double> margin(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  for (int round = 0; round < params.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      double p = sigmoid(margin[i]);
      grad[i] = p - labels[i];
      hess[i] = p * (1.0 - p);
    }
    TreeBuilder builder{features, grad, hess, params, {}};
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    builder.build(all, 0);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += params.shrinkage * builder.tree.eval(features[i]);
    }
    model.trees.push_back(std::move(builder.tree));
  }
  return model;
}

TreeEnsemble train_trees(const std::vector<FeatureRow>& rows, const GbdtParams& params) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  x.reserve(rows.size());
  y.reserve(rows.size());
  for (const FeatureRow& r : rows) {
    x.push_back(r.features());
    y.push_back(r.label);
  }
  return train_trees(x, y, params, mf_feature_names());
}

double predict(const TreeEnsemble& model, const FeatureRow& row) {
  return model.predict(row.features());
}

RankedList rank_group(const TreeEnsemble& model, const std::vector<FeatureRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("rank_group: empty group");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> scores(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = predict(model, rows[i]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return rows[a].impression_position < rows[b].impression_position;
  });
  RankedList out;
  out.session_id = rows[0].group_id;
  for (std::size_t i : order) {
    out.items.push_back(rows[i].item_id);
    out.scores.push_back(scores[i]);
  }
  return out;
}

std::map<std::string, int> feature_importance(const TreeEnsemble& model) {
  std::map<std::string, int> counts;
  for (const auto& name : model.feature_names) counts[name] = 0;
  for (const Tree& t : model.trees) {
    for (const TreeNode& n : t.nodes) {
      if (!n.is_leaf()) ++counts[model.feature_names[n.feature]];
    }
  }
  return counts;
}

double logistic_loss(const TreeEnsemble& model, const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, int n_trees) {
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double margin = model.base_score;
    for (int t = 0; t < n_trees; ++t) margin += model.shrinkage * model.trees[t].eval(features[i]);
    double p = sigmoid(margin);
    loss -= labels[i] ? std::log(std::max(p, kTiny)) : std::log(std::max(1.0 - p, kTiny));
  }
  return loss / static_cast<double>(features.size());
}

void write_feature_rows(const std::string& path, const std::vector<FeatureRow>& rows,
                        char delimiter) {
  std::ostringstream out;
  const std::string d(1, delimiter);
  out << join({"group_id", "label", "mf_score", "session_position", "user_bias",
               "impression_position", "item_bias"},
              d)
      << "\n";
  for (const FeatureRow& r : rows) {
    out << join({r.group_id, std::to_string(r.label), format_double(r.mf_score),
                 format_double(r.session_position), format_double(r.user_bias),
                 format_double(r.impression_position), format_double(r.item_bias)},
                d)
        << "\n";
  }
  write_file(path, out.str());
}

std::vector<FeatureRow> read_feature_rows(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty feature file: " + path);
  std::vector<FeatureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, delimiter);
    if (cells.size() != 7) throw std::runtime_error("bad feature row: " + line);
    FeatureRow r;
    r.group_id = cells[0];
    r.label = static_cast<int>(parse_int(cells[1], "label"));
    r.mf_score = parse_double(cells[2], "mf_score");
    r.session_position = parse_double(cells[3], "session_position");
    r.user_bias = parse_double(cells[4], "user_bias");
    r.impression_position = parse_double(cells[5], "impression_position");
    r.item_bias = parse_double(cells[6], "item_bias");
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

void dump_node(std::ostringstream& out, const Tree& tree, int id, int depth) {
  const TreeNode& n = tree.nodes[id];
  out << std::string(static_cast<std::size_t>(depth) * 2, ' ');
  if (n.is_leaf()) {
    out << "leaf value=" << format_double(n.value) << "\n";
  } else {
    out << "split feature=" << n.feature << " threshold=" << format_double(n.threshold) << "\n";
    dump_node(out, tree, n.left, depth + 1);
    dump_node(out, tree, n.right, depth + 1);
  }
}

int parse_node(const std::vector<std::string>& lines, std::size_t& pos, Tree& tree) {
  if (pos >= lines.size()) throw std::runtime_error("truncated tree dump");
  std::string line = lines[pos++];
  std::size_t start = line.find_first_not_of(' ');
  line = line.substr(start == std::string::npos ? 0 : start);
  int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (line.rfind("leaf", 0) == 0) {
    double v = 0.0;
    if (std::sscanf(line.c_str(), "leaf value=%lf", &v) != 1) {
      throw std::runtime_error("bad leaf line: " + line);
    }
    tree.nodes[id].value = v;
    return id;
  }
  int feature = 0;
  double threshold = 0.0;
  if (std::sscanf(line.c_str(), "split feature=%d threshold=%lf", &feature, &threshold) != 2) {
    throw std::runtime_error("bad split line: " + line);
  }
  tree.nodes[id].feature = feature;
  tree.nodes[id].threshold = threshold;
  int l = parse_node(lines, pos, tree);
  int r = parse_node(lines, pos, tree);
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

}  // namespace

void save_trees(const std::string& path, const TreeEnsemble& model) {
  std::ostringstream out;
  out << "gbdt trees=" << model.trees.size() << " base_score=" << format_double(model.base_score)
      << " shrinkage=" << format_double(model.shrinkage)
      << " features=" << model.feature_names.size() << "\n";
  for (std::size_t f = 0; f < model.feature_names.size(); ++f) {
    out << "feature " << f << " " << model.feature_names[f] << "\n";
  }
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    out << "tree " << t << "\n";
    dump_node(out, model.trees[t], 0, 1);
  }
  write_file(path, out.str());
}

TreeEnsemble load_trees(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tree model: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty()) throw std::runtime_error("empty tree model: " + path);

  TreeEnsemble model;
  std::size_t n_trees = 0, n_features = 0;
  if (std::sscanf(lines[0].c_str(), "gbdt trees=%zu base_score=%lf shrinkage=%lf features=%zu",
                  &n_trees, &model.base_score, &model.shrinkage, &n_features) != 4) {
    throw std::runtime_error("bad tree model header: " + lines[0]);
  }
  std::size_t pos = 1;
  for (std::size_t f = 0; f < n_features; ++f, ++pos) {
    auto parts = split(lines[pos], ' ');
    if (parts.size() != 3 || parts[0] != "feature") {
      throw std::runtime_error("bad feature line: " + lines[pos]);
    }
    model.feature_names.push_back(parts[2]);
  }
  for (std::size_t t = 0; t < n_trees; ++t) {
    if (pos >= lines.size() || lines[pos].rfind("tree ", 0) != 0) {
      throw std::runtime_error("expected tree header at line " + std::to_string(pos + 1));
    }
    ++pos;
    Tree tree;
    parse_node(lines, pos, tree);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace clickrank
