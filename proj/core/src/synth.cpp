#include "clickrank/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "clickrank/ingest.hpp"
#include "clickrank/rng.hpp"

namespace clickrank {

namespace {

void validate(const SynthSpec& spec) {
  if (spec.n_users < 1 || spec.n_items < 1 || spec.sessions_per_user < 1) {
    throw std::invalid_argument("synthetic spec: counts must be positive");
  }
  if (spec.n_clusters < 1 || spec.n_clusters > spec.n_items) {
    throw std::invalid_argument("synthetic spec: need 1 <= n_clusters <= n_items");
  }
  if (spec.impression_size < 1 || spec.impression_size > spec.n_items) {
    throw std::invalid_argument("synthetic spec: impression_size must be in [1, n_items]");
  }
  if (!(spec.affinity > 0.0 && spec.affinity <= 1.0)) {
    throw std::invalid_argument("synthetic spec: affinity must be in (0, 1]");
  }
  if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
    throw std::invalid_argument("synthetic spec: noise_rate must be in [0, 1)");
  }
  if (spec.mean_session_length < 1.0) {
    throw std::invalid_argument("synthetic spec: mean_session_length must be >= 1");
  }
}

int poisson(double lambda, Rng& rng) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.unit();
  } while (p > limit);
  return k - 1;
}

const char* kInteractionTypes[] = {"interaction item info", "interaction item image",
                                   "interaction item rating", "interaction item deal",
                                   "search for item"};
const char* kNoiseTypes[] = {"change of sort order", "filter selection", "search for destination"};

}  // namespace

int synth_item_cluster(const SynthSpec& spec, int item) {
  return static_cast<int>(static_cast<long long>(item) * spec.n_clusters / spec.n_items);
}

int synth_item_price(const SynthSpec& spec, int item) {
  // Cluster bands of width 100 with a stable per-item jitter below the band
  // width, so bucket boundaries track clusters.
  int jitter = static_cast<int>(splitmix64(spec.seed ^ (0x9d7f3u + item)) % 40);
  return 100 * (synth_item_cluster(spec, item) + 1) + jitter;
}

std::vector<Action> generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  std::vector<Action> log;

  auto item_id = [](int i) { return "i" + std::to_string(i); };

  std::int64_t timestamp = 1500000000;
  for (int u = 0; u < spec.n_users; ++u) {
    const std::string user = "u" + std::to_string(u);
    const int preferred = rng.index(spec.n_clusters);
    // Items of the preferred cluster form a contiguous block.
    int lo = 0, hi = 0;
    for (int i = 0; i < spec.n_items; ++i) {
      if (synth_item_cluster(spec, i) == preferred) {
        if (hi == 0) lo = i;
        hi = i + 1;
      }
    }
    auto draw_item = [&]() {
      if (rng.unit() < spec.affinity) return lo + rng.index(hi - lo);
      return rng.index(spec.n_items);
    };

    for (int s = 0; s < spec.sessions_per_user; ++s) {
      const std::string session = "s" + std::to_string(u) + "_" + std::to_string(s);
      const int n_hotel = 1 + poisson(spec.mean_session_length - 1.0, rng);
      int step = 1;
      timestamp += 30 + rng.index(120);

      auto push = [&](Action a) {
        a.user_id = user;
        a.session_id = session;
        a.timestamp = timestamp;
        a.step = step++;
        timestamp += 1 + rng.index(60);
        log.push_back(std::move(a));
      };
      auto make_clickout = [&](int item) {
        Action a;
        a.action_type = "clickout item";
        a.reference = item_id(item);
        std::set<int> chosen = {item};
        std::vector<int> impressions = {item};
        while (static_cast<int>(impressions.size()) < spec.impression_size) {
          int d = rng.index(spec.n_items);
          if (chosen.insert(d).second) impressions.push_back(d);
        }
        shuffle(impressions, rng);
        std::vector<std::string> ids;
        std::vector<int> prices;
        for (int i : impressions) {
          ids.push_back(item_id(i));
          prices.push_back(synth_item_price(spec, i));
        }
        a.impressions = std::move(ids);
        a.prices = std::move(prices);
        return a;
      };

      for (int k = 0; k < n_hotel - 1; ++k) {
        if (rng.unit() < spec.noise_rate) {
          Action noise;
          noise.action_type = kNoiseTypes[rng.index(3)];
          noise.reference = "misc" + std::to_string(rng.index(8));
          push(std::move(noise));
        }
        int item = draw_item();
        if (rng.unit() < 0.1) {
          push(make_clickout(item));  // occasional mid-session clickout
        } else {
          Action a;
          a.action_type = kInteractionTypes[rng.index(5)];
          a.reference = item_id(item);
          push(std::move(a));
        }
      }
      push(make_clickout(draw_item()));
    }
  }
  return log;
}

void generate_synthetic_file(const std::string& path, const SynthSpec& spec, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_log(out, generate_synthetic(spec), delimiter);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace clickrank
