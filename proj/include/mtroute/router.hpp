#pragma once

// The routing loop. Each step pops the most uncertain request, predicts an
// engine, translates with it, draws an ordered engine sample from the class
// probabilities, and then either
//   exploits: the sample leads with the prediction and the normalized entropy
//             is below alpha; learn the prediction, answer with it, no QE, or
//   explores: translate the sample, score it and the prediction with QE,
//             answer with and learn from the sampled engine that strictly beats
//             the prediction (else the prediction).

#include <cstddef>
#include <cstdint>
#include <exception>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtroute/backends.hpp"
#include "mtroute/classifier.hpp"
#include "mtroute/domain.hpp"
#include "mtroute/features.hpp"
#include "mtroute/queue.hpp"
#include "mtroute/random.hpp"
#include "mtroute/sampler.hpp"
#include "mtroute/text.hpp"

namespace mtroute {

// Run-scoped memo of translations so each (request, engine) pair reaches a
// backend at most once.
class TranslationCache {
 public:
  const std::string* find(const std::string& request_id, EngineId e) const {
    auto it = entries_.find({request_id, e});
    return it == entries_.end() ? nullptr : &it->second;
  }
  const std::string& insert(const std::string& request_id, EngineId e, std::string translation) {
    return entries_.insert_or_assign({request_id, e}, std::move(translation)).first->second;
  }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::pair<std::string, EngineId>, std::string> entries_;
};

// A failed run: how many steps completed, and what broke.
class RunError : public Error {
 public:
  RunError(std::size_t completed_steps, std::exception_ptr cause, const std::string& what)
      : Error("run stopped after " + std::to_string(completed_steps) + " completed steps: " + what),
        completed_steps_(completed_steps),
        cause_(std::move(cause)) {}

  std::size_t completed_steps() const noexcept { return completed_steps_; }
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  std::size_t completed_steps_;
  std::exception_ptr cause_;
};

class Router {
 public:
  // With no model given, a zero-initialized OnlineSoftmaxModel is created on
  // the first submit, sized to that request's features.
  Router(RouterConfig config, std::vector<EngineSpec> engines, std::shared_ptr<QualityEstimator> qe,
         std::unique_ptr<Learner> model = nullptr)
      : config_(validate_config(config, engines)),
        engines_(std::move(engines)),
        qe_(std::move(qe)),
        model_(std::move(model)),
        queue_(config_.rerank_policy),
        rng_(config_.seed) {
    if (!qe_) throw ConfigError("router needs a quality estimator");
    for (const auto& e : engines_) {
      if (!e.backend) throw ConfigError("engine '" + e.name + "' has no backend");
    }
    if (model_) {
      if (model_->num_classes() != engines_.size()) throw ConfigError("model class count differs from engine count");
      feature_dim_ = model_->num_features();
    }
  }

  const RouterConfig& config() const noexcept { return config_; }
  const std::vector<EngineSpec>& engines() const noexcept { return engines_; }
  const Learner* model() const noexcept { return model_.get(); }
  const RankedQueue& queue() const noexcept { return queue_; }
  const TranslationCache& cache() const noexcept { return cache_; }
  std::size_t pending() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

  // Enqueue a request. Safe to call from several producer threads.
  void submit(TranslationRequest request) {
    std::lock_guard lock(mutex_);
    if (!feature_dim_) feature_dim_ = request.features.dim();
    if (request.features.dim() != *feature_dim_) {
      throw FormatError("request '" + request.id + "' has feature dim " + std::to_string(request.features.dim()) +
                        ", run uses " + std::to_string(*feature_dim_));
    }
    if (queue_.contains(request.id)) throw ConfigError("duplicate request id '" + request.id + "'");
    if (!model_) {
      model_ = std::make_unique<OnlineSoftmaxModel>(engines_.size(), *feature_dim_, config_.learning_rate,
                                                    config_.l2, config_.lr_schedule);
    }
    if (config_.standardize_features) {
      if (stats_.dim() == 0) stats_ = RunningStats(*feature_dim_);
      auto [z, stats] = standardize(request.features, std::move(stats_));
      request.features = std::move(z);
      stats_ = std::move(stats);
    }
    queue_.push(std::move(request));
  }

  // One pass of the loop body. On a backend failure nothing is learned, the
  // request goes back in the queue and the BackendError propagates.
  StepOutcome step() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) throw LookupError("step on an empty queue");
    queue_.rerank(*model_);
    QueueEntry entry = queue_.pop_max_entropy(model_.get());
    try {
      return decide(entry.request);
    } catch (const BackendError&) {
      queue_.push(std::move(entry.request));
      throw;
    }
  }

  // Submits all requests, then steps until the queue drains.
  std::vector<StepOutcome> run(std::vector<TranslationRequest> requests) {
    for (auto& r : requests) submit(std::move(r));
    std::vector<StepOutcome> outcomes;
    outcomes.reserve(requests.size());
    while (pending() > 0) {
      try {
        outcomes.push_back(step());
      } catch (const std::exception& e) {
        throw RunError(outcomes.size(), std::current_exception(), e.what());
      }
    }
    return outcomes;
  }

 private:
  const std::string& translate_cached(EngineId e, const TranslationRequest& r) {
    if (const auto* hit = cache_.find(r.id, e)) return *hit;
    return cache_.insert(r.id, e, engines_[e].backend->translate(engines_[e], r));
  }

  // Fills the cache for every engine in `wanted` (ascending ids). Failures are
  // reported for the lowest failing engine id.
  void translate_all(const std::vector<EngineId>& wanted, const TranslationRequest& r) {
    if (!config_.parallel_backend_calls) {
      for (EngineId e : wanted) translate_cached(e, r);
      return;
    }
    std::vector<std::pair<EngineId, std::future<std::string>>> pending;
    for (EngineId e : wanted) {
      if (cache_.find(r.id, e)) continue;
      pending.emplace_back(e, std::async(std::launch::async, [this, e, &r] {
                             return engines_[e].backend->translate(engines_[e], r);
                           }));
    }
    std::exception_ptr first_error;
    for (auto& [e, fut] : pending) {
      try {
        cache_.insert(r.id, e, fut.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  StepOutcome decide(const TranslationRequest& r) {
    const auto x = r.features.values();
    const ClassProbabilities p = model_->predict_proba(x);
    const EngineId predicted = p.argmax();
    const std::string predicted_translation = translate_cached(predicted, r);
    const std::vector<EngineId> sampled = sample_engines(p, config_.max_mts, rng_);
    const double entropy = normalized_entropy(p);

    StepOutcome out;
    out.request_id = r.id;
    out.entropy_at_decision = entropy;
    out.source_chars = text::code_point_count(r.source);

    if (sampled.front() == predicted && entropy < config_.alpha) {
      model_->learn(x, predicted);
      out.chosen_engine = predicted;
      out.translation = predicted_translation;
      out.engines_called = {predicted};
      out.qe_calls = 0;
      out.explored = false;
      out.learned_label = predicted;
    } else {
      std::vector<EngineId> called(sampled);
      called.push_back(predicted);
      std::sort(called.begin(), called.end());
      called.erase(std::unique(called.begin(), called.end()), called.end());
      translate_all(called, r);

      std::vector<std::string> hypotheses;
      hypotheses.reserve(called.size());
      for (EngineId e : called) hypotheses.push_back(*cache_.find(r.id, e));
      const auto scores = qe_->batch_score(r.source, hypotheses);
      if (scores.size() != called.size()) throw InvariantError("QE returned the wrong number of scores");
      auto score_of = [&](EngineId e) {
        const auto it = std::lower_bound(called.begin(), called.end(), e);
        return scores[static_cast<std::size_t>(it - called.begin())].value;
      };

      // Best sampled engine, ties to the lowest id.
      EngineId best = sampled.front();
      for (EngineId e : sampled) {
        const double s = score_of(e);
        const double sb = score_of(best);
        if (s > sb || (s == sb && e < best)) best = e;
      }
      const EngineId label = score_of(best) > score_of(predicted) ? best : predicted;

      model_->learn(x, label);
      out.chosen_engine = label;
      out.translation = *cache_.find(r.id, label);
      out.engines_called = std::move(called);
      out.qe_calls = hypotheses.size();
      out.explored = true;
      out.learned_label = label;
    }
    out.cost = step_cost(engines_, out.engines_called, out.source_chars);
    return out;
  }

  RouterConfig config_;
  std::vector<EngineSpec> engines_;
  std::shared_ptr<QualityEstimator> qe_;
  std::unique_ptr<Learner> model_;
  RankedQueue queue_;
  Rng rng_;
  TranslationCache cache_;
  RunningStats stats_;
  std::optional<std::size_t> feature_dim_;
  mutable std::mutex mutex_;
};

}  // namespace mtroute
