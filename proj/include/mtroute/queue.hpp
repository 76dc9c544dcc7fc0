#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mtroute/classifier.hpp"
#include "mtroute/domain.hpp"

namespace mtroute {

struct QueueEntry {
  TranslationRequest request;
  double cached_entropy = 1.0;
  // Model version the entropy was computed at; empty until first scored.
  std::optional<std::uint64_t> model_version;
};

// Pending requests ranked by classifier uncertainty, highest normalized
// entropy first, ties to the smaller arrival index.
//
// Unscored entries carry entropy 1.0, the upper bound, so until the model has
// been updated the queue is FIFO. After updates, the rerank policy decides
// which cached entropies get refreshed:
//   full      every stale entry, each rerank
//   subset(n) the n entries with the oldest model version
//   lazy      nothing up front; pop refreshes the top candidate until the
//             top is current
class RankedQueue {
 public:
  explicit RankedQueue(RerankPolicy policy = RerankPolicy::automatic()) : policy_(policy) {}

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(const std::string& id) const { return ids_.contains(id); }
  const RerankPolicy& policy() const noexcept { return policy_; }
  RerankPolicy active_policy() const { return policy_.resolve(size()); }

  // Total entropy evaluations performed so far.
  std::uint64_t recomputations() const noexcept { return recomputations_; }

  void push(TranslationRequest request) {
    if (ids_.contains(request.id)) throw ConfigError("duplicate request id '" + request.id + "'");
    const std::uint64_t seq = next_seq_++;
    ids_.insert(request.id);
    QueueEntry entry{std::move(request), 1.0, std::nullopt};
    index(seq, entry);
    entries_.emplace(seq, std::move(entry));
  }

  void rerank(const Learner& model) {
    const std::uint64_t version = model.version();
    if (version == 0 || empty()) return;
    const auto policy = active_policy();
    std::size_t budget = SIZE_MAX;
    switch (policy.kind) {
      case RerankPolicy::Kind::kLazy: return;
      case RerankPolicy::Kind::kSubset: budget = policy.subset_size; break;
      default: break;
    }
    while (budget > 0 && !by_staleness_.empty()) {
      const auto key = *by_staleness_.begin();
      if (key.version == static_cast<std::int64_t>(version)) break;
      refresh(key.seq, model);
      --budget;
    }
  }

  // Removes and returns an entry with maximal cached entropy. Under the lazy
  // policy `model` is used to refresh stale candidates first.
  QueueEntry pop_max_entropy(const Learner* model = nullptr) {
    if (empty()) throw LookupError("pop from empty queue");
    if (model && model->version() > 0 && active_policy().kind == RerankPolicy::Kind::kLazy) {
      const auto version = static_cast<std::int64_t>(model->version());
      for (;;) {
        const auto top = *by_rank_.begin();
        if (version_of(entries_.at(top.seq)) == version) break;
        refresh(top.seq, *model);
      }
    }
    const std::uint64_t seq = by_rank_.begin()->seq;
    auto node = entries_.extract(seq);
    unindex(seq, node.mapped());
    ids_.erase(node.mapped().request.id);
    return std::move(node.mapped());
  }

  // Snapshot of all entries in rank order.
  std::vector<const QueueEntry*> ranked() const {
    std::vector<const QueueEntry*> out;
    out.reserve(size());
    for (const auto& key : by_rank_) out.push_back(&entries_.at(key.seq));
    return out;
  }

 private:
  struct RankKey {
    double entropy;
    std::uint64_t arrival;
    std::uint64_t seq;
    bool operator<(const RankKey& o) const {
      if (entropy != o.entropy) return entropy > o.entropy;
      if (arrival != o.arrival) return arrival < o.arrival;
      return seq < o.seq;
    }
  };
  struct StaleKey {
    std::int64_t version;  // -1 when never scored
    std::uint64_t arrival;
    std::uint64_t seq;
    bool operator<(const StaleKey& o) const {
      if (version != o.version) return version < o.version;
      if (arrival != o.arrival) return arrival < o.arrival;
      return seq < o.seq;
    }
  };

  static std::int64_t version_of(const QueueEntry& e) {
    return e.model_version ? static_cast<std::int64_t>(*e.model_version) : -1;
  }

  void index(std::uint64_t seq, const QueueEntry& e) {
    by_rank_.insert({e.cached_entropy, e.request.arrival_index, seq});
    by_staleness_.insert({version_of(e), e.request.arrival_index, seq});
  }
  void unindex(std::uint64_t seq, const QueueEntry& e) {
    by_rank_.erase({e.cached_entropy, e.request.arrival_index, seq});
    by_staleness_.erase({version_of(e), e.request.arrival_index, seq});
  }

  void refresh(std::uint64_t seq, const Learner& model) {
    auto& e = entries_.at(seq);
    unindex(seq, e);
    e.cached_entropy = normalized_entropy(model.predict_proba(e.request.features.values()));
    e.model_version = model.version();
    ++recomputations_;
    index(seq, e);
  }

  RerankPolicy policy_;
  std::unordered_map<std::uint64_t, QueueEntry> entries_;
  std::unordered_set<std::string> ids_;
  std::set<RankKey> by_rank_;
  std::set<StaleKey> by_staleness_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t recomputations_ = 0;
};

}  // namespace mtroute
