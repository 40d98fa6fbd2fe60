#include "fedjets/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "fedjets/error.hpp"
#include "fedjets/rng.hpp"

namespace fedjets::data {

namespace {

std::vector<int> resolve_labels(const LabeledDataset& ds, const std::vector<int>& allowed) {
  if (allowed.empty()) {
    std::vector<int> all(ds.num_classes);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  std::vector<int> out = allowed;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (int y : out)
    if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes) throw ConfigError("allowed label out of range");
  return out;
}

std::size_t pool_size(const LabeledDataset& ds, std::span<const int> labels) {
  std::size_t n = 0;
  for (int y : labels) n += ds.class_index[static_cast<std::size_t>(y)].size();
  return n;
}

// Splits `total` over `parts` as evenly as possible, earlier parts first.
std::vector<std::size_t> even_split(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
  return out;
}

ClientShard finish_shard(const LabeledDataset& ds, int id, ShardKind kind, std::vector<std::size_t> samples) {
  ClientShard s;
  s.client_id = id;
  s.kind = kind;
  std::sort(samples.begin(), samples.end());
  s.samples = std::move(samples);
  s.label_histogram.assign(ds.num_classes, 0);
  for (auto i : s.samples) ++s.label_histogram[static_cast<std::size_t>(ds.labels[i])];
  return s;
}

void draw_from_label(const LabeledDataset& ds, int label, std::size_t count, Rng& rng,
                     std::vector<std::size_t>& out) {
  const auto& pool = ds.class_index[static_cast<std::size_t>(label)];
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), std::min(count, pool.size()), rng);
}

}  // namespace

const char* shard_kind_name(ShardKind kind) {
  switch (kind) {
    case ShardKind::anchor:
      return "anchor";
    case ShardKind::normal:
      return "normal";
    case ShardKind::test:
      return "test";
  }
  return "?";
}

std::vector<int> ClientShard::label_set() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < label_histogram.size(); ++c)
    if (label_histogram[c] > 0) out.push_back(static_cast<int>(c));
  return out;
}

void ClientShard::validate(const LabeledDataset& ds) const {
  if (samples.empty()) throw ConfigError("client " + std::to_string(client_id) + " has an empty shard");
  std::vector<std::size_t> hist(ds.num_classes, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] >= ds.size()) throw ConfigError("shard sample index out of range");
    if (i > 0 && samples[i] <= samples[i - 1]) throw ConfigError("shard samples must be unique and sorted");
    ++hist[static_cast<std::size_t>(ds.labels[samples[i]])];
  }
  if (hist != label_histogram) throw ConfigError("shard histogram does not match its samples");
  if (kind == ShardKind::anchor && assigned_expert < 0) throw ConfigError("anchor shard without an expert");
}

std::vector<ClientShard> partition_quantity(const LabeledDataset& ds, std::size_t num_clients,
                                            std::size_t labels_per_client, std::uint64_t seed,
                                            const PartitionOptions& options) {
  const auto labels = resolve_labels(ds, options.allowed_labels);
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  if (labels_per_client == 0 || labels_per_client > labels.size())
    throw ConfigError("labels_per_client must lie in [1, " + std::to_string(labels.size()) + "]");
  const std::size_t per_client =
      options.samples_per_client > 0 ? options.samples_per_client : pool_size(ds, labels) / num_clients;
  const auto per_label = even_split(per_client, labels_per_client);
  if (per_label.back() == 0) throw ConfigError("shard too small to hold every one of its labels");

  Rng rng = make_rng({seed, stream::kPartition});
  // Without replacement, each label's samples are dealt out from one shuffled queue.
  std::vector<std::vector<std::size_t>> queues(ds.num_classes);
  if (!options.with_replacement) {
    for (int y : labels) {
      queues[static_cast<std::size_t>(y)] = ds.class_index[static_cast<std::size_t>(y)];
      std::shuffle(queues[static_cast<std::size_t>(y)].begin(), queues[static_cast<std::size_t>(y)].end(), rng);
    }
  }

  std::vector<ClientShard> shards;
  shards.reserve(num_clients);
  std::vector<int> order = labels;
  for (std::size_t k = 0; k < num_clients; ++k) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(labels_per_client));
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::size_t> samples;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      if (options.with_replacement) {
        draw_from_label(ds, chosen[j], per_label[j], rng, samples);
      } else {
        auto& q = queues[static_cast<std::size_t>(chosen[j])];
        const std::size_t n = std::min(per_label[j], q.size());
        if (n == 0) throw ConfigError("label " + std::to_string(chosen[j]) + " exhausted without replacement");
        samples.insert(samples.end(), q.end() - static_cast<std::ptrdiff_t>(n), q.end());
        q.resize(q.size() - n);
      }
    }
    shards.push_back(finish_shard(ds, options.first_client_id + static_cast<int>(k), ShardKind::normal,
                                  std::move(samples)));
  }
  return shards;
}

std::vector<std::size_t> allocate_counts(std::span<const double> weights, std::size_t budget) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(total > 0.0)) throw ConfigError("allocation weights must have a positive sum");
  std::vector<std::size_t> counts(weights.size());
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / total * static_cast<double>(budget);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  // Largest remainders first; ties go to the lower index.
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < budget; k = (k + 1) % order.size(), ++assigned) ++counts[order[k]];
  return counts;
}

std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds, std::size_t num_clients, double alpha,
                                             std::uint64_t seed, const PartitionOptions& options) {
  if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be positive");
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  const auto labels = resolve_labels(ds, options.allowed_labels);
  const std::size_t L = labels.size();

  std::vector<std::size_t> budget(L);
  if (options.samples_per_client == 0) {
    for (std::size_t j = 0; j < L; ++j) budget[j] = ds.class_index[static_cast<std::size_t>(labels[j])].size();
  } else {
    std::vector<double> sizes(L);
    for (std::size_t j = 0; j < L; ++j)
      sizes[j] = static_cast<double>(ds.class_index[static_cast<std::size_t>(labels[j])].size());
    budget = allocate_counts(sizes, options.samples_per_client * num_clients);
    for (std::size_t j = 0; j < L; ++j)
      if (budget[j] > ds.class_index[static_cast<std::size_t>(labels[j])].size())
        throw ConfigError("dirichlet budget for a label exceeds its sample pool");
  }

  Rng rng = make_rng({seed, stream::kPartition});
  std::gamma_distribution<double> gamma(alpha, 1.0);
  // gammas[k][j]: unnormalised share of label j held by client k.
  std::vector<std::vector<double>> gammas(num_clients, std::vector<double>(L));
  auto draw_row = [&](std::size_t k) {
    for (auto& g : gammas[k]) g = gamma(rng);
  };
  for (std::size_t k = 0; k < num_clients; ++k) draw_row(k);

  std::vector<std::vector<std::size_t>> counts;  // [label][client]
  constexpr int kMaxRedraws = 100;
  for (int attempt = 0;; ++attempt) {
    counts.assign(L, {});
    for (std::size_t j = 0; j < L; ++j) {
      std::vector<double> w(num_clients);
      for (std::size_t k = 0; k < num_clients; ++k) w[k] = gammas[k][j];
      // A label whose shares all underflowed falls back to uniform.
      if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) std::fill(w.begin(), w.end(), 1.0);
      counts[j] = allocate_counts(w, budget[j]);
    }
    std::vector<std::size_t> empty;
    for (std::size_t k = 0; k < num_clients; ++k) {
      std::size_t total = 0;
      for (std::size_t j = 0; j < L; ++j) total += counts[j][k];
      if (total == 0) empty.push_back(k);
    }
    if (empty.empty()) break;
    if (attempt == kMaxRedraws)
      throw ConfigError("dirichlet partition left a client empty after " + std::to_string(kMaxRedraws) + " redraws");
    for (auto k : empty) draw_row(k);
  }

  std::vector<ClientShard> shards;
  shards.reserve(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) {
    std::vector<std::size_t> samples;
    for (std::size_t j = 0; j < L; ++j)
      if (counts[j][k] > 0) draw_from_label(ds, labels[j], counts[j][k], rng, samples);
    shards.push_back(finish_shard(ds, options.first_client_id + static_cast<int>(k), ShardKind::normal,
                                  std::move(samples)));
  }
  return shards;
}

std::vector<ClientShard> make_anchor_shards(const LabeledDataset& ds, std::size_t num_experts,
                                            std::size_t labels_per_anchor, std::uint64_t seed,
                                            const AnchorOptions& options) {
  if (num_experts == 0) throw ConfigError("need at least one anchor");
  std::vector<ClientShard> shards;
  if (!options.disjoint) {
    PartitionOptions popt;
    popt.samples_per_client = options.samples_per_anchor;
    shards = partition_dirichlet(ds, num_experts, options.alpha, derive_seed({seed, stream::kAnchors}), popt);
  } else {
    if (labels_per_anchor == 0 || num_experts * labels_per_anchor > ds.num_classes)
      throw ConfigError("disjoint anchors need M * labels_per_anchor <= C (" + std::to_string(num_experts) + " * " +
                        std::to_string(labels_per_anchor) + " > " + std::to_string(ds.num_classes) + ")");
    Rng rng = make_rng({seed, stream::kAnchors});
    std::vector<int> order(ds.num_classes);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t q = 0; q < num_experts; ++q) {
      std::vector<std::size_t> samples;
      for (std::size_t j = 0; j < labels_per_anchor; ++j) {
        const int y = order[q * labels_per_anchor + j];
        const auto& pool = ds.class_index[static_cast<std::size_t>(y)];
        draw_from_label(ds, y, options.samples_per_label > 0 ? options.samples_per_label : pool.size(), rng, samples);
      }
      shards.push_back(finish_shard(ds, static_cast<int>(q), ShardKind::anchor, std::move(samples)));
    }
  }
  for (std::size_t q = 0; q < shards.size(); ++q) {
    shards[q].kind = ShardKind::anchor;
    shards[q].client_id = static_cast<int>(q);
    shards[q].assigned_expert = static_cast<int>(q);
  }
  return shards;
}

std::vector<ClientShard> make_test_clients(const LabeledDataset& ds_test, std::size_t count, std::uint64_t seed,
                                           std::span<const ClientShard> training_shards,
                                           const TestClientOptions& options) {
  const auto labels = resolve_labels(ds_test, options.allowed_labels);
  const std::size_t k = options.labels_per_client;
  if (k == 0 || k > labels.size()) throw ConfigError("test labels_per_client must lie in [1, allowed labels]");

  std::set<std::vector<int>> seen;
  std::size_t total = 0;
  for (const auto& s : training_shards) {
    seen.insert(s.label_set());
    total += s.samples.size();
  }
  std::size_t per_client = options.samples_per_client;
  if (per_client == 0) {
    if (training_shards.empty()) throw ConfigError("test shard size needs training shards or an explicit size");
    per_client = std::max<std::size_t>(k, total / training_shards.size());
  }
  const auto per_label = even_split(per_client, k);
  if (per_label.back() == 0) throw ConfigError("test shard too small to hold every one of its labels");

  Rng rng = make_rng({seed, stream::kTest});
  std::vector<ClientShard> shards;
  std::vector<int> order = labels;
  for (std::size_t u = 0; u < count; ++u) {
    std::vector<int> chosen;
    bool found = false;
    for (std::size_t attempt = 0; attempt < options.max_retries && !found; ++attempt) {
      std::shuffle(order.begin(), order.end(), rng);
      chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(chosen.begin(), chosen.end());
      found = !seen.contains(chosen);
    }
    if (!found) throw ConfigError("no unseen label combination found for test client " + std::to_string(u));
    std::vector<std::size_t> samples;
    for (std::size_t j = 0; j < k; ++j) draw_from_label(ds_test, chosen[j], per_label[j], rng, samples);
    shards.push_back(finish_shard(ds_test, options.first_client_id + static_cast<int>(u), ShardKind::test,
                                  std::move(samples)));
  }
  return shards;
}

}  // namespace fedjets::data
