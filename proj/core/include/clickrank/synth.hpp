#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clickrank/types.hpp"

namespace clickrank {

// Desk-scale synthetic session log. Every user gets a latent preferred item
// cluster; with probability `affinity` each interacted item and the final
// clickout reference come from that cluster, otherwise uniformly from all
// items. Each clickout's impression list holds the true item plus uniform
// distractors; item prices follow the item's cluster, so price buckets are
// learnable. `noise_rate` is the probability of inserting a non-hotel action
// in front of each interaction.
struct SynthSpec {
  int n_users = 2000;
  int n_items = 500;
  int n_clusters = 20;
  int sessions_per_user = 3;
  double mean_session_length = 5.0;  // hotel actions per session, clickout included
  int impression_size = 25;
  double affinity = 0.8;
  double noise_rate = 0.1;
  std::uint64_t seed = 42;
};

int synth_item_cluster(const SynthSpec& spec, int item);
int synth_item_price(const SynthSpec& spec, int item);

std::vector<Action> generate_synthetic(const SynthSpec& spec);
void generate_synthetic_file(const std::string& path, const SynthSpec& spec,
                             char delimiter = ',');

}  // namespace clickrank
