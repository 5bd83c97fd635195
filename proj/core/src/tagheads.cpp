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

#include "measpipe/tagheads.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace measpipe::tagheads {

namespace {

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

std::size_t count_exact_matches(std::vector<Span> a, std::vector<Span> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t matches = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++matches;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return matches;
}

}  // namespace

std::string to_string(TaggerVariant v) {
  switch (v) {
    case TaggerVariant::kQuantity: return "quantity";
    case TaggerVariant::kMeasuredEntity: return "entity";
    case TaggerVariant::kMeasuredProperty: return "property";
    case TaggerVariant::kQualifierQuantity: return "qualifier_q";
    case TaggerVariant::kQualifierProperty: return "qualifier_p";
  }
  throw std::logic_error("unhandled tagger variant");
}

TaggerVariant parse_tagger_variant(const std::string& s) {
  if (s == "quantity") return TaggerVariant::kQuantity;
  if (s == "entity") return TaggerVariant::kMeasuredEntity;
  if (s == "property") return TaggerVariant::kMeasuredProperty;
  if (s == "qualifier_q") return TaggerVariant::kQualifierQuantity;
  if (s == "qualifier_p") return TaggerVariant::kQualifierProperty;
  throw std::invalid_argument("unknown tagger variant '" + s + "'");
}

TagHead::TagHead(TagHeadConfig config, std::uint64_t seed)
    : config_(config),
      w0_("head.w0", config.dim, config.dim),
      b0_("head.b0", config.dim, 1),
      w1_("head.w1", config.dim, config.dim),
      b1_("head.b1", config.dim, 1),
      w2_("head.w2", config.num_tags, 2 * config.dim),
      b2_("head.b2", config.num_tags, 1) {
  if (config.dim <= 0 || config.num_tags <= 1) {
    throw std::invalid_argument("tag head needs dim > 0 and num_tags > 1");
  }
  rng::Random random(rng::combine(seed, 0x68656164));
  const double d = static_cast<double>(config.dim);
  nn::init_uniform(w0_, 1.0 / std::sqrt(d), random);
  nn::init_uniform(w1_, 1.0 / std::sqrt(d), random);
  nn::init_uniform(w2_, 1.0 / std::sqrt(2.0 * d), random);
}

Eigen::MatrixXd TagHead::forward(const Eigen::MatrixXd& hidden, bool training,
                                 rng::Random* random) {
  if (hidden.cols() != config_.dim) {
    throw std::invalid_argument("tag head: hidden width != configured dim");
  }
  if (hidden.rows() < 1) {
    throw std::invalid_argument("tag head: empty hidden sequence");
  }
  const bool drop = training && config_.dropout > 0.0;
  if (drop && random == nullptr) {
    throw std::invalid_argument("tag head: training with dropout needs an rng");
  }
  static rng::Random unused(0);
  h_ = dropout_.forward(hidden, config_.dropout, drop, drop ? *random : unused);
  tanh_h_ = h_.array().tanh().matrix();

  a_ = tanh_h_ * w1_.value.transpose();
  a_.rowwise() += b1_.value.col(0).transpose();
  a_cls_ = w0_.value * tanh_h_.row(0).transpose() + b0_.value.col(0);

  const int d = config_.dim;
  const int t = config_.num_tags;
  z_ = a_ * w2_.value.leftCols(d).transpose();
  const Eigen::VectorXd cls_term =
      w2_.value.rightCols(d) * a_cls_ + b2_.value.col(0);
  z_.rowwise() += cls_term.transpose();

  if (!config_.softmax_emissions) return z_;

  probs_.resize(z_.rows(), t);
  for (Eigen::Index i = 0; i < z_.rows(); ++i) {
    const Eigen::ArrayXd shifted = z_.row(i).array() - z_.row(i).maxCoeff();
    const Eigen::ArrayXd e = shifted.exp();
    probs_.row(i) = (e / e.sum()).matrix().transpose();
  }
  return probs_;
}

Eigen::MatrixXd TagHead::backward(const Eigen::MatrixXd& d_emissions) {
  const int d = config_.dim;
  const Eigen::Index n = z_.rows();
  if (d_emissions.rows() != n || d_emissions.cols() != config_.num_tags) {
    throw std::invalid_argument("tag head backward: gradient shape mismatch");
  }

  Eigen::MatrixXd dz;
  if (config_.softmax_emissions) {
    dz.resize(n, config_.num_tags);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dot = d_emissions.row(i).dot(probs_.row(i));
      dz.row(i) =
          (probs_.row(i).array() * (d_emissions.row(i).array() - dot)).matrix();
    }
  } else {
    dz = d_emissions;
  }

  // Final projection, split into the per-token and the sentence-level half.
  w2_.grad.leftCols(d) += dz.transpose() * a_;
  const Eigen::VectorXd dz_sum = dz.colwise().sum().transpose();
  w2_.grad.rightCols(d) += dz_sum * a_cls_.transpose();
  b2_.grad.col(0) += dz_sum;

  const Eigen::MatrixXd da = dz * w2_.value.leftCols(d);
  const Eigen::VectorXd da_cls = w2_.value.rightCols(d).transpose() * dz_sum;

  // Per-token projection.
  w1_.grad += da.transpose() * tanh_h_;
  b1_.grad.col(0) += da.colwise().sum().transpose();
  Eigen::MatrixXd d_tanh = da * w1_.value;

  // Sentence-level projection (row 0 feeds both paths).
  w0_.grad += da_cls * tanh_h_.row(0);
  b0_.grad.col(0) += da_cls;
  d_tanh.row(0) += (w0_.value.transpose() * da_cls).transpose();

  const Eigen::MatrixXd dh =
      (d_tanh.array() * (1.0 - tanh_h_.array().square())).matrix();
  return dropout_.backward(dh);
}

nn::ParamList TagHead::parameters() {
  return {&w0_, &b0_, &w1_, &b1_, &w2_, &b2_};
}

TaggerModel::TaggerModel(TaggerVariant variant,
                         std::unique_ptr<encoder::Encoder> enc,
                         TagHeadConfig head_config, std::uint64_t seed)
    : variant_(variant),
      encoder_(std::move(enc)),
      head_(head_config, seed),
      crf_trans_("crf.transitions", head_config.num_tags, head_config.num_tags),
      crf_start_("crf.start", head_config.num_tags, 1),
      crf_stop_("crf.stop", head_config.num_tags, 1) {
  if (encoder_ == nullptr) throw std::invalid_argument("tagger needs an encoder");
  if (encoder_->dim() != head_config.dim) {
    throw std::invalid_argument("tagger: encoder dim != head dim");
  }
}

crf::Params TaggerModel::crf_params() const {
  crf::Params p;
  p.transitions = crf_trans_.value;
  p.start = crf_start_.value.col(0);
  p.stop = crf_stop_.value.col(0);
  return p;
}

nn::ParamList TaggerModel::parameters() {
  nn::ParamList params = encoder_->parameters();
  const nn::ParamList head = head_.parameters();
  params.insert(params.end(), head.begin(), head.end());
  params.push_back(&crf_trans_);
  params.push_back(&crf_start_);
  params.push_back(&crf_stop_);
  return params;
}

std::vector<int> TaggerModel::predict_tags(const std::vector<int>& token_ids) {
  const Eigen::MatrixXd hidden = encoder_->forward(token_ids, false);
  const Eigen::MatrixXd emissions = head_.forward(hidden, false);
  return crf::viterbi(crf_params(), emissions);
}

std::vector<Span> TaggerModel::predict_spans(
    const textprep::TokenAlignment& alignment) {
  const std::vector<int> tags = predict_tags(alignment.ids());
  textprep::BioSequence bio;
  bio.tags.reserve(tags.size());
  for (int t : tags) bio.tags.push_back(static_cast<textprep::BioTag>(t));
  return textprep::decode_bio(bio, alignment);
}

double TaggerModel::example_nll(const TagExample& example) {
  const std::vector<int> ids = example.alignment.ids();
  const Eigen::MatrixXd hidden = encoder_->forward(ids, false);
  const Eigen::MatrixXd emissions = head_.forward(hidden, false);
  std::vector<int> gold;
  gold.reserve(example.gold.tags.size());
  for (auto t : example.gold.tags) gold.push_back(static_cast<int>(t));
  return crf::nll(crf_params(), emissions, gold);
}

void TaggerModel::save(const std::string& dir) const {
  auto* self = const_cast<TaggerModel*>(this);
  nlohmann::json extra;
  extra["variant"] = to_string(variant_);
  extra["head"] = {{"dim", head_.config().dim},
                   {"num_tags", head_.config().num_tags},
                   {"dropout", head_.config().dropout},
                   {"softmax_emissions", head_.config().softmax_emissions}};
  extra["encoder"] = encoder_->config();
  nn::save_parameters(dir, self->parameters(), extra);
}

std::unique_ptr<TaggerModel> TaggerModel::load(const std::string& dir) {
  std::ifstream meta_in(std::filesystem::path(dir) / "meta.json");
  if (!meta_in) {
    throw std::runtime_error("no tagger checkpoint at '" + dir + "'");
  }
  nlohmann::json meta;
  meta_in >> meta;
  const nlohmann::json extra = meta.value("extra", nlohmann::json::object());

  TagHeadConfig head_config;
  const auto& head = extra.at("head");
  head_config.dim = head.at("dim").get<int>();
  head_config.num_tags = head.at("num_tags").get<int>();
  head_config.dropout = head.at("dropout").get<double>();
  head_config.softmax_emissions = head.at("softmax_emissions").get<bool>();

  auto model = std::unique_ptr<TaggerModel>(new TaggerModel(
      parse_tagger_variant(extra.at("variant").get<std::string>()),
      encoder::from_config(extra.at("encoder")), head_config, /*seed=*/0));
  nn::load_parameters(dir, model->parameters());
  return model;
}

double exact_span_f1(const std::vector<std::vector<Span>>& predicted,
                     const std::vector<std::vector<Span>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("exact_span_f1: example count mismatch");
  }
  std::size_t matches = 0, num_pred = 0, num_gold = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    matches += count_exact_matches(predicted[k], gold[k]);
    num_pred += predicted[k].size();
    num_gold += gold[k].size();
  }
  if (num_pred + num_gold == 0) return 1.0;
  return 2.0 * static_cast<double>(matches) /
         static_cast<double>(num_pred + num_gold);
}

TagTrainResult train_tagger(
    TaggerModel& model, const std::vector<TagExample>& train,
    const std::vector<TagExample>& dev, const TaggerHyperparams& hp,
    const std::function<void(int, double, double)>& log) {
  if (train.empty()) throw std::invalid_argument("train_tagger: no examples");
  for (const TagExample& ex : train) {
    if (ex.gold.size() != ex.alignment.size()) {
      throw std::invalid_argument("train_tagger: gold/token length mismatch");
    }
  }

  const nn::ParamList params = model.parameters();
  nn::AdamOptimizer optimizer(params, {.lr = hp.lr});
  rng::Random random(rng::combine(hp.seed, 0x747261696e));

  TagTrainResult result;
  std::vector<Eigen::MatrixXd> best_values;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::vector<Span>> dev_gold;
  dev_gold.reserve(dev.size());
  for (const TagExample& ex : dev) dev_gold.push_back(ex.gold_spans);

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
        const TagExample& ex = train[order[k]];
        const std::vector<int> ids = ex.alignment.ids();
        const Eigen::MatrixXd hidden = model.encoder_->forward(ids, true);
        const Eigen::MatrixXd emissions =
            model.head_.forward(hidden, true, &random);
        std::vector<int> gold;
        gold.reserve(ex.gold.size());
        for (auto t : ex.gold.tags) gold.push_back(static_cast<int>(t));

        const crf::Params crf_params = model.crf_params();
        epoch_loss += crf::nll(crf_params, emissions, gold);
        const crf::Gradients g = crf::nll_backward(crf_params, emissions, gold);
        model.crf_trans_.grad += scale * g.transitions;
        model.crf_start_.grad.col(0) += scale * g.start;
        model.crf_stop_.grad.col(0) += scale * g.stop;
        const Eigen::MatrixXd d_hidden = model.head_.backward(scale * g.emissions);
        model.encoder_->backward(ids, d_hidden);
      }
      optimizer.step();
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));

    double f1 = 0.0;
    if (!dev.empty()) {
      std::vector<std::vector<Span>> predicted;
      predicted.reserve(dev.size());
      for (const TagExample& ex : dev) {
        predicted.push_back(model.predict_spans(ex.alignment));
      }
      f1 = exact_span_f1(predicted, dev_gold);
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
  return result;
}

}  // namespace measpipe::tagheads
