#include "clickrank/config.hpp"

#include <sstream>
#include <stdexcept>

#include "clickrank/text_io.hpp"

namespace clickrank {

std::string PipelineConfig::submission_path() const {
  return output.empty() ? workdir + "/submission.csv" : output;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::size_t eq = line.find('=', start);
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key=value, got '" + line + "'");
    }
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  return parse_config_text(read_file(path));
}

namespace {

char parse_delimiter(const std::string& v) {
  if (v == "tab" || v == "\\t") return '\t';
  if (v.size() != 1) throw std::runtime_error("delimiter must be a single character, got '" + v + "'");
  return v[0];
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

PipelineConfig build_config(const std::map<std::string, std::string>& kv) {
  PipelineConfig c;

  // Global seed first: it feeds every stage default.
  if (auto it = kv.find("seed"); it != kv.end()) {
    c.seed = static_cast<std::uint64_t>(parse_int(it->second, "seed"));
  }
  c.embed.seed = c.seed + 1000;
  c.mf.seed = c.seed + 2000;
  c.gru.seed = c.seed + 3000;

  for (const auto& [key, value] : kv) {
    if (key == "seed") {
      // handled above
    } else if (key == "paths.input") {
      c.input_log = value;
    } else if (key == "paths.workdir") {
      c.workdir = value;
    } else if (key == "paths.output") {
      c.output = value;
    } else if (key == "split.ratio") {
      c.ratio = parse_double(value, key);
    } else if (key == "split.seed") {
      c.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "split.delimiter") {
      c.delimiter = parse_delimiter(value);
    } else if (key == "embed.dimension") {
      c.embed.dimension = static_cast<int>(parse_int(value, key));
    } else if (key == "embed.window") {
      c.embed.window = static_cast<int>(parse_int(value, key));
    } else if (key == "embed.min_count") {
      c.embed.min_count = static_cast<int>(parse_int(value, key));
    } else if (key == "embed.negatives") {
      c.embed.negatives = static_cast<int>(parse_int(value, key));
    } else if (key == "embed.epochs") {
      c.embed.epochs = static_cast<int>(parse_int(value, key));
    } else if (key == "embed.step_size") {
      c.embed.step_size = parse_double(value, key);
    } else if (key == "embed.seed") {
      c.embed.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "mf.epochs") {
      c.mf.epochs = static_cast<int>(parse_int(value, key));
    } else if (key == "mf.components") {
      c.mf.n_components = static_cast<int>(parse_int(value, key));
    } else if (key == "mf.lr") {
      c.mf.learning_rate = parse_double(value, key);
    } else if (key == "mf.schedule") {
      c.mf.schedule = parse_schedule(value);
    } else if (key == "mf.kos_k") {
      c.mf.kos_k = static_cast<int>(parse_int(value, key));
    } else if (key == "mf.kos_n") {
      c.mf.kos_n = static_cast<int>(parse_int(value, key));
    } else if (key == "mf.max_trials") {
      c.mf.max_trials = static_cast<int>(parse_int(value, key));
    } else if (key == "mf.price_buckets") {
      c.price_buckets = static_cast<int>(parse_int(value, key));
    } else if (key == "mf.seed") {
      c.mf.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "gru.hidden_dim") {
      c.gru.hidden_dim = static_cast<int>(parse_int(value, key));
    } else if (key == "gru.epochs") {
      c.gru.epochs = static_cast<int>(parse_int(value, key));
    } else if (key == "gru.lr") {
      c.gru.step_size = parse_double(value, key);
    } else if (key == "gru.max_len") {
      c.gru.max_len = static_cast<int>(parse_int(value, key));
    } else if (key == "gru.batch_size") {
      c.gru.batch_size = static_cast<int>(parse_int(value, key));
    } else if (key == "gru.clip_norm") {
      c.gru.clip_norm = parse_double(value, key);
    } else if (key == "gru.seed") {
      c.gru.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "stack.rounds") {
      c.stack_trees.n_rounds = static_cast<int>(parse_int(value, key));
    } else if (key == "stack.max_depth") {
      c.stack_trees.max_depth = static_cast<int>(parse_int(value, key));
    } else if (key == "stack.shrinkage") {
      c.stack_trees.shrinkage = parse_double(value, key);
    } else if (key == "stack.min_child_weight") {
      c.stack_trees.min_child_weight = parse_double(value, key);
    } else if (key == "ensemble.mode") {
      c.mode = parse_mode(value);
    } else if (key == "pipeline.retrain_base") {
      c.retrain_base = parse_bool(value, key);
    } else {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
  return c;
}

std::string config_to_string(const PipelineConfig& c) {
  std::ostringstream out;
  out << "paths.input=" << c.input_log << "\n";
  out << "paths.workdir=" << c.workdir << "\n";
  out << "paths.output=" << c.output << "\n";
  out << "seed=" << c.seed << "\n";
  out << "split.ratio=" << format_double(c.ratio) << "\n";
  out << "split.delimiter=" << (c.delimiter == '\t' ? std::string("tab") : std::string(1, c.delimiter))
      << "\n";
  out << "embed.dimension=" << c.embed.dimension << "\n";
  out << "embed.window=" << c.embed.window << "\n";
  out << "embed.min_count=" << c.embed.min_count << "\n";
  out << "embed.negatives=" << c.embed.negatives << "\n";
  out << "embed.epochs=" << c.embed.epochs << "\n";
  out << "embed.step_size=" << format_double(c.embed.step_size) << "\n";
  out << "embed.seed=" << c.embed.seed << "\n";
  out << "mf.epochs=" << c.mf.epochs << "\n";
  out << "mf.components=" << c.mf.n_components << "\n";
  out << "mf.lr=" << format_double(c.mf.learning_rate) << "\n";
  out << "mf.schedule=" << schedule_name(c.mf.schedule) << "\n";
  out << "mf.kos_k=" << c.mf.kos_k << "\n";
  out << "mf.kos_n=" << c.mf.kos_n << "\n";
  out << "mf.max_trials=" << c.mf.max_trials << "\n";
  out << "mf.price_buckets=" << c.price_buckets << "\n";
  out << "mf.seed=" << c.mf.seed << "\n";
  out << "gru.hidden_dim=" << c.gru.hidden_dim << "\n";
  out << "gru.epochs=" << c.gru.epochs << "\n";
  out << "gru.lr=" << format_double(c.gru.step_size) << "\n";
  out << "gru.max_len=" << c.gru.max_len << "\n";
  out << "gru.batch_size=" << c.gru.batch_size << "\n";
  out << "gru.clip_norm=" << format_double(c.gru.clip_norm) << "\n";
  out << "gru.seed=" << c.gru.seed << "\n";
  out << "stack.rounds=" << c.stack_trees.n_rounds << "\n";
  out << "stack.max_depth=" << c.stack_trees.max_depth << "\n";
  out << "stack.shrinkage=" << format_double(c.stack_trees.shrinkage) << "\n";
  out << "stack.min_child_weight=" << format_double(c.stack_trees.min_child_weight) << "\n";
  out << "ensemble.mode=" << mode_name(c.mode) << "\n";
  out << "pipeline.retrain_base=" << (c.retrain_base ? "true" : "false") << "\n";
  return out.str();
}

SynthSpec build_synth_spec(const std::map<std::string, std::string>& kv) {
  SynthSpec s;
  for (const auto& [key, value] : kv) {
    if (key == "synth.users") {
      s.n_users = static_cast<int>(parse_int(value, key));
    } else if (key == "synth.items") {
      s.n_items = static_cast<int>(parse_int(value, key));
    } else if (key == "synth.clusters") {
      s.n_clusters = static_cast<int>(parse_int(value, key));
    } else if (key == "synth.sessions_per_user") {
      s.sessions_per_user = static_cast<int>(parse_int(value, key));
    } else if (key == "synth.mean_session_length") {
      s.mean_session_length = parse_double(value, key);
    } else if (key == "synth.impression_size") {
      s.impression_size = static_cast<int>(parse_int(value, key));
    } else if (key == "synth.affinity") {
      s.affinity = parse_double(value, key);
    } else if (key == "synth.noise_rate") {
      s.noise_rate = parse_double(value, key);
    } else if (key == "synth.seed") {
      s.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else {
      throw std::runtime_error("unknown synthetic spec key '" + key + "'");
    }
  }
  return s;
}

}  // namespace clickrank
