#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mtroute/domain.hpp"
#include "mtroute/util.hpp"

namespace mtroute {

// Anything that maps features to engine probabilities and learns one labelled
// example at a time. `version()` counts updates and is what the queue uses to
// tell stale cached entropies from fresh ones.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::size_t num_classes() const = 0;
  virtual std::size_t num_features() const = 0;
  virtual ClassProbabilities predict_proba(std::span<const double> x) const = 0;
  virtual void learn(std::span<const double> x, EngineId label) = 0;
  virtual std::uint64_t version() const = 0;
  // Read-only snapshot for concurrent scoring.
  virtual std::unique_ptr<Learner> clone() const = 0;
};

// (-sum p ln p) / ln K, with 0 ln 0 = 0. A single class has zero entropy.
inline double normalized_entropy(const ClassProbabilities& p) {
  if (p.size() < 2) return 0.0;
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::clamp(h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

struct SoftmaxGradient {
  std::vector<double> weights;  // K x F, row-major
  std::vector<double> bias;     // K
};

// Multinomial logistic regression trained by single-example SGD on
// cross-entropy plus (l2/2)||W||^2. The bias is not regularized.
// Zero-initialized, so the first prediction is uniform.
class OnlineSoftmaxModel final : public Learner {
 public:
  OnlineSoftmaxModel(std::size_t classes, std::size_t features, double learning_rate = 0.1,
                     double l2 = 1e-6, LearningRateSchedule schedule = LearningRateSchedule::kConstant)
      : classes_(classes),
        features_(features),
        learning_rate_(learning_rate),
        l2_(l2),
        schedule_(schedule),
        weights_(classes * features, 0.0),
        bias_(classes, 0.0) {
    if (classes == 0) throw ConfigError("softmax model needs at least one class");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("l2 must be nonnegative");
  }

  std::size_t num_classes() const override { return classes_; }
  std::size_t num_features() const override { return features_; }
  std::uint64_t version() const override { return updates_seen_; }
  std::unique_ptr<Learner> clone() const override { return std::make_unique<OnlineSoftmaxModel>(*this); }

  double learning_rate() const noexcept { return learning_rate_; }
  double l2() const noexcept { return l2_; }
  LearningRateSchedule schedule() const noexcept { return schedule_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> bias() const noexcept { return bias_; }
  std::span<double> mutable_weights() noexcept { return weights_; }
  std::span<double> mutable_bias() noexcept { return bias_; }

  double weight(std::size_t k, std::size_t f) const { return weights_[k * features_ + f]; }

  std::vector<double> logits(std::span<const double> x) const {
    check_dim(x);
    std::vector<double> z(bias_);
    for (std::size_t k = 0; k < classes_; ++k) {
      const double* row = &weights_[k * features_];
      double acc = 0.0;
      for (std::size_t f = 0; f < features_; ++f) acc += row[f] * x[f];
      z[k] += acc;
    }
    return z;
  }

  ClassProbabilities predict_proba(std::span<const double> x) const override {
    return ClassProbabilities(softmax(logits(x)));
  }

  // Step size used by the next update.
  double current_rate() const noexcept {
    if (schedule_ == LearningRateSchedule::kInverseSqrt) {
      return learning_rate_ / std::sqrt(1.0 + static_cast<double>(updates_seen_));
    }
    return learning_rate_;
  }

  // d/dtheta of [-ln p_label + (l2/2)||W||^2]. The logit gradient is p - onehot(label).
  SoftmaxGradient gradient(std::span<const double> x, EngineId label) const {
    check_label(label);
    const auto p = softmax(logits(x));
    SoftmaxGradient g{std::vector<double>(weights_.size()), std::vector<double>(classes_)};
    for (std::size_t k = 0; k < classes_; ++k) {
      const double dz = p[k] - (k == label ? 1.0 : 0.0);
      g.bias[k] = dz;
      for (std::size_t f = 0; f < features_; ++f) {
        g.weights[k * features_ + f] = dz * x[f] + l2_ * weights_[k * features_ + f];
      }
    }
    return g;
  }

  void learn(std::span<const double> x, EngineId label) override {
    const auto g = gradient(x, label);
    const double rate = current_rate();
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] -= rate * g.weights[i];
    for (std::size_t k = 0; k < classes_; ++k) bias_[k] -= rate * g.bias[k];
    ++updates_seen_;
  }

  // Checkpoint: magic line, shape line, hyperparameter line, bias, then one
  // line of weights per class. Doubles use shortest round-trip form.
  void save(std::ostream& out) const {
    out << "mtroute-softmax 1\n";
    out << classes_ << ' ' << features_ << ' ' << updates_seen_ << '\n';
    out << format_double(learning_rate_) << ' ' << format_double(l2_) << ' '
        << (schedule_ == LearningRateSchedule::kInverseSqrt ? "inv_sqrt" : "constant") << '\n';
    out << join_doubles(bias_) << '\n';
    for (std::size_t k = 0; k < classes_; ++k) {
      out << join_doubles(std::span<const double>(weights_).subspan(k * features_, features_)) << '\n';
    }
  }

  static OnlineSoftmaxModel load(std::istream& in) {
    std::string line;
    auto next = [&](const char* what) -> std::string {
      if (!std::getline(in, line)) throw FormatError(std::string("checkpoint: missing ") + what);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    };
    if (next("header") != "mtroute-softmax 1") throw FormatError("checkpoint: bad header");
    const std::string shape_line = next("shape line");
    const auto shape = split(shape_line, ' ');
    if (shape.size() != 3) throw FormatError("checkpoint: shape line needs 3 fields");
    const std::string hyper_line = next("hyperparameter line");
    const auto hyper = split(hyper_line, ' ');
    if (hyper.size() != 3) throw FormatError("checkpoint: hyperparameter line needs 3 fields");
    LearningRateSchedule schedule;
    if (hyper[2] == "constant") schedule = LearningRateSchedule::kConstant;
    else if (hyper[2] == "inv_sqrt") schedule = LearningRateSchedule::kInverseSqrt;
    else throw FormatError("checkpoint: unknown schedule");

    OnlineSoftmaxModel model(parse_u64(shape[0]), parse_u64(shape[1]), parse_double(hyper[0]),
                             parse_double(hyper[1]), schedule);
    model.updates_seen_ = parse_u64(shape[2]);
    auto bias = parse_doubles(next("bias"));
    if (bias.size() != model.classes_) throw FormatError("checkpoint: bias length mismatch");
    model.bias_ = std::move(bias);
    for (std::size_t k = 0; k < model.classes_; ++k) {
      const auto row = parse_doubles(next("weight row"));
      if (row.size() != model.features_) throw FormatError("checkpoint: weight row length mismatch");
      std::copy(row.begin(), row.end(), model.weights_.begin() + static_cast<std::ptrdiff_t>(k * model.features_));
    }
    for (double v : model.weights_) {
      if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite weight");
    }
    return model;
  }

  friend bool operator==(const OnlineSoftmaxModel& a, const OnlineSoftmaxModel& b) {
    return a.classes_ == b.classes_ && a.features_ == b.features_ && a.learning_rate_ == b.learning_rate_ &&
           a.l2_ == b.l2_ && a.schedule_ == b.schedule_ && a.updates_seen_ == b.updates_seen_ &&
           a.weights_ == b.weights_ && a.bias_ == b.bias_;
  }

 private:
  void check_dim(std::span<const double> x) const {
    if (x.size() != features_) {
      throw FormatError("classifier: feature dim " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(features_));
    }
  }
  void check_label(EngineId label) const {
    if (label >= classes_) {
      throw ConfigError("classifier: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(classes_) + ")");
    }
  }

  std::size_t classes_;
  std::size_t features_;
  double learning_rate_;
  double l2_;
  LearningRateSchedule schedule_;
  std::vector<double> weights_;
  std::vector<double> bias_;
  std::uint64_t updates_seen_ = 0;
};

}  // namespace mtroute
