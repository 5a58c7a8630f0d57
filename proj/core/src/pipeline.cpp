#include "clickrank/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "clickrank/ensemble.hpp"
#include "clickrank/ingest.hpp"
#include "clickrank/text_io.hpp"

namespace clickrank {

namespace {

template <typename F>
auto with_stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + name + ": " + e.what());
  }
}

std::vector<RankedList> attach_scores(std::vector<RankedList> lists, const std::string& path) {
  if (!std::filesystem::exists(path)) return lists;
  std::map<std::string, std::vector<double>> scores;
  for (const RankedList& raw : read_predictions(path)) {
    std::vector<double> values;
    values.reserve(raw.items.size());
    for (const auto& s : raw.items) values.push_back(parse_double(s, "score"));
    scores[raw.session_id] = std::move(values);
  }
  for (RankedList& list : lists) {
    auto it = scores.find(list.session_id);
    if (it != scores.end() && it->second.size() == list.items.size()) {
      list.scores = it->second;
    }
  }
  return lists;
}

struct LoadedModels {
  LatentModel hotel;
  LatentModel price;
  GruRanker gru;
  EmbeddingTable table;
};

LoadedModels load_base_models(const PipelineConfig& config, bool final_models) {
  Artifacts art{config.workdir};
  LoadedModels m;
  m.hotel = load_model(art.mf_hotel(final_models));
  m.price = load_model(art.mf_price(final_models));
  m.gru = load_gru(art.gru(final_models));
  m.table = load_embeddings(art.embeddings());
  return m;
}

}  // namespace

const Action* masked_clickout(const Session& session) {
  for (auto it = session.actions.rbegin(); it != session.actions.rend(); ++it) {
    if (is_clickout(*it)) {
      if (!it->reference && it->impressions && !it->impressions->empty()) return &*it;
      return nullptr;
    }
  }
  return nullptr;
}

std::vector<Session> load_sessions(const std::string& path, const std::string& expected_partition,
                                   char delimiter) {
  if (!expected_partition.empty()) {
    std::string tag = read_partition_tag(path);
    if (tag != expected_partition) {
      throw std::runtime_error("partition mismatch for " + path + ": expected '" +
                               expected_partition + "', found '" + tag + "'");
    }
  }
  return group_sessions(parse_log_file(path, delimiter));
}

void stage_split(const PipelineConfig& config) {
  if (config.input_log.empty()) throw std::runtime_error("no input log configured (paths.input)");
  Artifacts art{config.workdir};
  std::filesystem::create_directories(config.workdir);

  auto sessions = group_sessions(parse_log_file(config.input_log, config.delimiter));
  SplitBundle bundle = make_split_bundle(sessions, config.ratio, config.seed);

  write_log_file(art.sessions("local_train"), bundle.local_train, config.delimiter, "local_train");
  write_log_file(art.sessions("local_test"), bundle.local_test, config.delimiter, "local_test");
  write_log_file(art.sessions("inner_train"), bundle.inner_train, config.delimiter, "inner_train");
  write_log_file(art.sessions("inner_test"), bundle.inner_test, config.delimiter, "inner_test");

  GroundTruth local_truth, inner_truth;
  for (const Session& s : bundle.local_test) {
    auto it = bundle.ground_truth.find(s.session_id);
    if (it != bundle.ground_truth.end()) local_truth.insert(*it);
  }
  for (const Session& s : bundle.inner_test) {
    auto it = bundle.ground_truth.find(s.session_id);
    if (it != bundle.ground_truth.end()) inner_truth.insert(*it);
  }
  write_ground_truth(art.truth("local_test"), local_truth);
  write_ground_truth(art.truth("inner_test"), inner_truth);
}

void stage_embed(const PipelineConfig& config) {
  Artifacts art{config.workdir};
  // The embedding corpus is the whole visible dataset: train sessions plus
  // the masked test sessions (whose targets are already nullified).
  auto corpus_sessions = load_sessions(art.sessions("local_train"), "local_train", config.delimiter);
  auto test = load_sessions(art.sessions("local_test"), "local_test", config.delimiter);
  corpus_sessions.insert(corpus_sessions.end(), test.begin(), test.end());
  EmbeddingTable table = train_item2vec(corpus_sessions, config.embed);
  save_embeddings(art.embeddings(), table);
}

void stage_train_mf(const PipelineConfig& config, bool final_models) {
  Artifacts art{config.workdir};
  const std::string partition = final_models ? "local_train" : "inner_train";
  auto sessions = load_sessions(art.sessions(partition), partition, config.delimiter);

  MfHyper hyper = config.mf;
  if (final_models) hyper.seed = config.mf.seed + 1;
  LatentModel hotel = train_mf(build_interactions(sessions, InteractionMode::hotel), hyper);
  save_model(art.mf_hotel(final_models), hotel);
  LatentModel price = train_mf(
      build_interactions(sessions, InteractionMode::price_category, config.price_buckets), hyper);
  save_model(art.mf_price(final_models), price);
}

void stage_train_rnn(const PipelineConfig& config, bool final_models) {
  Artifacts art{config.workdir};
  const std::string partition = final_models ? "local_train" : "inner_train";
  auto sessions = load_sessions(art.sessions(partition), partition, config.delimiter);
  EmbeddingTable table = load_embeddings(art.embeddings());

  GruParams params = config.gru;
  if (final_models) params.seed = config.gru.seed + 1;
  GruRanker model = train_rnn(sessions, table, params);
  save_gru(art.gru(final_models), model);
}

void stage_predict(const PipelineConfig& config, const std::string& partition_name,
                   bool final_models) {
  Artifacts art{config.workdir};
  // "local_validation" is the inner test set under its other common name.
  const std::string partition =
      partition_name == "local_validation" ? "inner_test" : partition_name;
  auto sessions = load_sessions(art.sessions(partition), partition, config.delimiter);
  LoadedModels m = load_base_models(config, final_models);

  std::vector<RankedList> mf_lists, rnn_lists;
  for (const Session& s : sessions) {
    const Action* click = masked_clickout(s);
    if (!click) continue;
    Session filtered = filter_hotel_actions(s);
    if (filtered.actions.size() <= 1) continue;  // cold-start path
    int click_pos = -1;
    for (int i = static_cast<int>(filtered.actions.size()) - 1; i >= 0; --i) {
      if (is_clickout(filtered.actions[i])) {
        click_pos = i;
        break;
      }
    }
    bool has_prefix = false;
    for (int i = 0; i < click_pos; ++i) {
      if (filtered.actions[i].reference) has_prefix = true;
    }
    if (!has_prefix) continue;
    mf_lists.push_back(rank_impressions(m.hotel, m.price, s.user_id, *click->impressions,
                                        click->prices, s.session_id));
    rnn_lists.push_back(
        predict_clickout(m.gru, m.table, s, *click->impressions, config.gru.max_len));
  }
  write_predictions(art.predictions("mf", partition), mf_lists, partition, true);
  write_predictions(art.predictions("rnn", partition), rnn_lists, partition, true);
}

void stage_train_stack(const PipelineConfig& config) {
  Artifacts art{config.workdir};
  // The stacker trains on inner-test predictions only; the partition tag on
  // the prediction files enforces it.
  auto mf_lists = attach_scores(read_predictions(art.predictions("mf", "inner_test"), "inner_test"),
                                art.predictions("mf", "inner_test") + ".scores");
  auto rnn_lists =
      attach_scores(read_predictions(art.predictions("rnn", "inner_test"), "inner_test"),
                    art.predictions("rnn", "inner_test") + ".scores");
  GroundTruth truth = read_ground_truth(art.truth("inner_test"));
  auto sessions = load_sessions(art.sessions("inner_test"), "inner_test", config.delimiter);

  std::map<std::string, std::vector<std::string>> impressions;
  for (const Session& s : sessions) {
    if (const Action* click = masked_clickout(s)) impressions[s.session_id] = *click->impressions;
  }

  auto rows = build_stack_rows(mf_lists, rnn_lists, truth, impressions);
  if (rows.empty()) throw std::runtime_error("no stack rows built from inner test predictions");

  std::ostringstream out;
  out << "group_id,label,mf_rank,rnn_rank,mf_score,rnn_score,impression_position\n";
  for (const StackRow& r : rows) {
    out << r.group_id << "," << r.label << "," << r.mf_rank << "," << r.rnn_rank << ","
        << format_double(r.mf_score) << "," << format_double(r.rnn_score) << ","
        << r.impression_position << "\n";
  }
  write_file(art.stack_rows(), out.str());

  TreeEnsemble model = train_stack(rows, config.stack_trees);
  save_trees(art.stack_model(), model);
}

void stage_ensemble(const PipelineConfig& config) {
  Artifacts art{config.workdir};
  auto sessions = load_sessions(art.sessions("local_test"), "local_test", config.delimiter);

  const bool needs_rnn = config.mode != EnsembleMode::mf_only;
  LoadedModels m;
  m.hotel = load_model(art.mf_hotel(config.retrain_base));
  m.price = load_model(art.mf_price(config.retrain_base));
  if (needs_rnn) {
    m.gru = load_gru(art.gru(config.retrain_base));
    m.table = load_embeddings(art.embeddings());
  }
  TreeEnsemble stack_model;
  if (config.mode == EnsembleMode::stack) stack_model = load_trees(art.stack_model());

  ModelSet models;
  models.hotel = &m.hotel;
  models.price = &m.price;
  models.gru = &m.gru;
  models.table = &m.table;
  models.stack = &stack_model;
  models.max_len = config.gru.max_len;

  std::vector<RankedList> final_lists;
  for (const Session& s : sessions) {
    const Action* click = masked_clickout(s);
    if (!click) continue;
    final_lists.push_back(route(s, *click->impressions, click->prices, config.mode, models));
  }
  write_predictions(art.predictions("final", "local_test"), final_lists, "local_test", true);
  write_submission(config.submission_path(), final_lists, submission_meta(sessions));
}

EvalReport stage_evaluate(const PipelineConfig& config) {
  Artifacts art{config.workdir};
  // Final scores come from the local test partition only.
  auto predictions = read_predictions(art.predictions("final", "local_test"), "local_test");
  GroundTruth truth = read_ground_truth(art.truth("local_test"));
  EvalReport report = evaluate(predictions, truth);
  write_report(art.report_kv(), report);
  write_file(art.report_txt(), report_text(report));
  return report;
}

EvalReport run_pipeline(const PipelineConfig& config) {
  const bool needs_rnn = config.mode != EnsembleMode::mf_only;
  const bool needs_stack = config.mode == EnsembleMode::stack;
  // Inner-trained instances are needed to feed the stacker, and stand in for
  // the final models when retraining is disabled.
  const bool needs_inner = needs_stack || !config.retrain_base;

  with_stage("split", [&] { stage_split(config); return 0; });
  with_stage("embed", [&] { stage_embed(config); return 0; });
  if (needs_inner) {
    with_stage("train-mf", [&] { stage_train_mf(config, false); return 0; });
    if (needs_rnn) {
      with_stage("train-rnn", [&] { stage_train_rnn(config, false); return 0; });
    }
  }
  if (needs_stack) {
    with_stage("predict", [&] { stage_predict(config, "inner_test", false); return 0; });
    with_stage("train-stack", [&] { stage_train_stack(config); return 0; });
  }
  if (config.retrain_base) {
    with_stage("train-mf-final", [&] { stage_train_mf(config, true); return 0; });
    if (needs_rnn) {
      with_stage("train-rnn-final", [&] { stage_train_rnn(config, true); return 0; });
    }
  }
  with_stage("ensemble", [&] { stage_ensemble(config); return 0; });
  return with_stage("evaluate", [&] { return stage_evaluate(config); });
}

}  // namespace clickrank
