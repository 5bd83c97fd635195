// Copyright 2026 The MeasPipe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "measpipe/modcls.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace measpipe::modcls {

namespace {

double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<Eigen::MatrixXd> snapshot(const nn::ParamList& params) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(params.size());
  for (const nn::Tensor* t : params) out.push_back(t->value);
  return out;
}

void restore(const nn::ParamList& params,
             const std::vector<Eigen::MatrixXd>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

Eigen::VectorXd targets_of(const std::set<ModifierLabel>& gold) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(kNumModifierLabels);
  for (ModifierLabel m : gold) y(static_cast<int>(m)) = 1.0;
  return y;
}

}  // namespace

std::vector<bool> inside_mask(const textprep::TokenAlignment& alignment,
                              const Span& marked_span) {
  std::vector<bool> inside(alignment.size(), false);
  for (std::size_t t = 0; t < alignment.tokens.size(); ++t) {
    const textprep::Token& token = alignment.tokens[t];
    if (token.is_special || token.span.length() == 0) continue;
    if (token.span.start >= marked_span.start &&
        token.span.end <= marked_span.end) {
      inside[t] = true;
    }
  }
  return inside;
}

ModifierModel::ModifierModel(std::unique_ptr<encoder::Encoder> enc, int dim,
                             double dropout, std::uint64_t seed)
    : encoder_(std::move(enc)),
      dim_(dim),
      dropout_rate_(dropout),
      w_("modifier.w", kNumModifierLabels, dim),
      b_("modifier.b", kNumModifierLabels, 1) {
  if (encoder_ == nullptr) {
    throw std::invalid_argument("modifier model needs an encoder");
  }
  if (encoder_->dim() != dim) {
    throw std::invalid_argument("modifier model: encoder dim != configured dim");
  }
  rng::Random random(rng::combine(seed, 0x6d6f6473));
  nn::init_uniform(w_, 1.0 / std::sqrt(static_cast<double>(dim)), random);
}

Eigen::VectorXd ModifierModel::forward(
    const textprep::TokenAlignment& alignment, const std::vector<bool>& inside,
    bool training, rng::Random* random) {
  if (inside.size() != alignment.size()) {
    throw std::invalid_argument("modifier forward: inside mask length mismatch");
  }
  cached_ids_ = alignment.ids();
  const Eigen::MatrixXd hidden = encoder_->forward(cached_ids_, training);

  cached_rows_.clear();
  for (std::size_t t = 0; t < inside.size(); ++t) {
    if (inside[t]) cached_rows_.push_back(static_cast<Eigen::Index>(t));
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim_);
  if (cached_rows_.empty()) {
    // Nothing between the markers (degenerate input): fall back to the
    // sentence-level row so the model still emits a decision.
    mean = hidden.row(0).transpose();
    cached_rows_.push_back(0);
  } else {
    for (Eigen::Index r : cached_rows_) mean += hidden.row(r).transpose();
    mean /= static_cast<double>(cached_rows_.size());
  }

  const bool drop = training && dropout_rate_ > 0.0;
  if (drop && random == nullptr) {
    throw std::invalid_argument("modifier forward: training needs an rng");
  }
  static rng::Random unused(0);
  mean_ = dropout_
              .forward(mean.transpose(), dropout_rate_, drop,
                       drop ? *random : unused)
              .transpose();
  r_ = mean_.array().tanh().matrix();
  return w_.value * r_ + b_.value.col(0);
}

void ModifierModel::backward(const Eigen::VectorXd& d_logits) {
  w_.grad += d_logits * r_.transpose();
  b_.grad.col(0) += d_logits;
  const Eigen::VectorXd dr = w_.value.transpose() * d_logits;
  const Eigen::VectorXd dmean =
      (dr.array() * (1.0 - r_.array().square())).matrix();
  const Eigen::VectorXd d_dropped =
      dropout_.backward(dmean.transpose()).transpose();

  Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(cached_ids_.size()), dim_);
  const double share = 1.0 / static_cast<double>(cached_rows_.size());
  for (Eigen::Index r : cached_rows_) {
    d_hidden.row(r) = share * d_dropped.transpose();
  }
  encoder_->backward(cached_ids_, d_hidden);
}

Eigen::VectorXd ModifierModel::probabilities(
    const textprep::TokenAlignment& alignment, const std::vector<bool>& inside) {
  const Eigen::VectorXd z = forward(alignment, inside, false, nullptr);
  Eigen::VectorXd p(z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) p(k) = sigmoid(z(k));
  return p;
}

std::set<ModifierLabel> ModifierModel::predict(
    const textprep::TokenAlignment& alignment, const std::vector<bool>& inside) {
  return decide_labels(probabilities(alignment, inside), threshold_);
}

double ModifierModel::example_bce(const ModifierExample& example) {
  const Eigen::VectorXd z =
      forward(example.alignment, example.inside, false, nullptr);
  const Eigen::VectorXd y = targets_of(example.gold);
  double loss = 0.0;
  Eigen::VectorXd dz(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    loss += bce_from_logit(z(j), y(j));
    dz(j) = sigmoid(z(j)) - y(j);
  }
  backward(dz);
  return loss;
}

std::set<ModifierLabel> decide_labels(const Eigen::VectorXd& probs,
                                      double threshold) {
  if (probs.size() != kNumModifierLabels) {
    throw std::invalid_argument("decide_labels: wrong probability width");
  }
  std::set<ModifierLabel> fired;
  for (int k = 0; k < kNumModifierLabels; ++k) {
    if (probs(k) >= threshold) fired.insert(static_cast<ModifierLabel>(k));
  }
  if (fired.empty()) return {ModifierLabel::None};
  if (fired.size() > 1) fired.erase(ModifierLabel::None);
  return fired;
}

double modifier_micro_f1(const std::vector<std::set<ModifierLabel>>& predicted,
                         const std::vector<std::set<ModifierLabel>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("modifier_micro_f1: example count mismatch");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    for (ModifierLabel m : predicted[k]) {
      if (gold[k].count(m) > 0) {
        ++tp;
      } else {
        ++fp;
      }
    }
    for (ModifierLabel m : gold[k]) {
      if (predicted[k].count(m) == 0) ++fn;
    }
  }
  if (2 * tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

nn::ParamList ModifierModel::parameters() {
  nn::ParamList params = encoder_->parameters();
  params.push_back(&w_);
  params.push_back(&b_);
  return params;
}

void ModifierModel::save(const std::string& dir) const {
  auto* self = const_cast<ModifierModel*>(this);
  nn::save_parameters(dir, self->parameters(),
                      {{"kind", "modifier"},
                       {"dim", dim_},
                       {"dropout", dropout_rate_},
                       {"threshold", threshold_},
                       {"encoder", encoder_->config()}});
}

std::unique_ptr<ModifierModel> ModifierModel::load(const std::string& dir) {
  std::ifstream meta_in(std::filesystem::path(dir) / "meta.json");
  if (!meta_in) {
    throw std::runtime_error("no modifier checkpoint at '" + dir + "'");
  }
  nlohmann::json meta;
  meta_in >> meta;
  const nlohmann::json extra = meta.value("extra", nlohmann::json::object());
  if (extra.value("kind", "") != "modifier") {
    throw std::runtime_error("checkpoint at '" + dir +
                             "' is not a modifier classifier");
  }
  auto out = std::make_unique<ModifierModel>(
      encoder::from_config(extra.at("encoder")), extra.at("dim").get<int>(),
      extra.at("dropout").get<double>(), /*seed=*/0);
  out->set_threshold(extra.value("threshold", 0.5));
  nn::load_parameters(dir, out->parameters());
  return out;
}

ModifierTrainResult train_modifier(
    ModifierModel& model, const std::vector<ModifierExample>& train,
    const std::vector<ModifierExample>& dev, const ModifierHyperparams& hp,
    const std::function<void(int, double, double)>& log) {
  if (train.empty()) throw std::invalid_argument("train_modifier: no examples");

  const nn::ParamList params = model.parameters();
  nn::AdamOptimizer optimizer(params, {.lr = hp.lr});
  rng::Random random(rng::combine(hp.seed, 0x6d6f6474));
  model.set_threshold(hp.threshold);

  ModifierTrainResult result;
  result.threshold = hp.threshold;
  std::vector<Eigen::MatrixXd> best_values;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::set<ModifierLabel>> dev_gold;
  dev_gold.reserve(dev.size());
  for (const auto& ex : dev) dev_gold.push_back(ex.gold);

  auto dev_probs = [&]() {
    std::vector<Eigen::VectorXd> out;
    out.reserve(dev.size());
    for (const auto& ex : dev) {
      out.push_back(model.probabilities(ex.alignment, ex.inside));
    }
    return out;
  };
  auto micro_at = [&](const std::vector<Eigen::VectorXd>& probs,
                      double threshold) {
    std::vector<std::set<ModifierLabel>> predicted;
    predicted.reserve(probs.size());
    for (const auto& p : probs) predicted.push_back(decide_labels(p, threshold));
    return modifier_micro_f1(predicted, dev_gold);
  };

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    random.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), at + static_cast<std::size_t>(hp.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - at);
      optimizer.zero_grad();
      for (std::size_t k = at; k < stop; ++k) {
        const ModifierExample& ex = train[order[k]];
        const Eigen::VectorXd z =
            model.forward(ex.alignment, ex.inside, true, &random);
        const Eigen::VectorXd y = targets_of(ex.gold);
        Eigen::VectorXd dz(z.size());
        for (Eigen::Index j = 0; j < z.size(); ++j) {
          epoch_loss += bce_from_logit(z(j), y(j));
          dz(j) = scale * (sigmoid(z(j)) - y(j));
        }
        model.backward(dz);
      }
      optimizer.step();
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));

    double f1 = 0.0;
    if (!dev.empty()) {
      f1 = micro_at(dev_probs(), hp.threshold);
      if (result.best_epoch < 0 || f1 > result.best_dev_f1) {
        result.best_epoch = epoch;
        result.best_dev_f1 = f1;
        best_values = snapshot(params);
      }
    }
    result.dev_f1.push_back(f1);
    result.epochs_run = epoch + 1;
    if (log) log(epoch, result.train_loss.back(), f1);
    if (!dev.empty() && epoch - result.best_epoch >= hp.patience) break;
  }

  if (!best_values.empty()) restore(params, best_values);

  if (hp.sweep_threshold && !dev.empty()) {
    const std::vector<Eigen::VectorXd> probs = dev_probs();
    double best_threshold = hp.threshold;
    double best_f1 = -1.0;
    for (int step = 0; step <= 8; ++step) {
      const double threshold = 0.30 + 0.05 * step;
      const double f1 = micro_at(probs, threshold);
      const bool better =
          f1 > best_f1 ||
          (f1 == best_f1 && std::abs(threshold - 0.5) <
                                std::abs(best_threshold - 0.5)) ||
          (f1 == best_f1 &&
           std::abs(threshold - 0.5) == std::abs(best_threshold - 0.5) &&
           threshold < best_threshold);
      if (better) {
        best_threshold = threshold;
        best_f1 = f1;
      }
    }
    model.set_threshold(best_threshold);
    result.threshold = best_threshold;
  }
  return result;
}

}  // namespace measpipe::modcls
