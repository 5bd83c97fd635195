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

#include "measpipe/unitdet.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "measpipe/unicode.hpp"

namespace measpipe::unitdet {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically safe BCE from the logit.
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

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

}  // namespace

CharVocab::CharVocab(std::vector<char32_t> chars) : chars_(std::move(chars)) {
  std::sort(chars_.begin(), chars_.end());
  chars_.erase(std::unique(chars_.begin(), chars_.end()), chars_.end());
}

CharVocab CharVocab::from_texts(const std::vector<std::string>& texts) {
  std::set<char32_t> seen;
  for (const auto& text : texts) {
    for (char32_t c : utf8::decode(text)) seen.insert(c);
  }
  return CharVocab(std::vector<char32_t>(seen.begin(), seen.end()));
}

int CharVocab::id(char32_t c) const {
  const auto it = std::lower_bound(chars_.begin(), chars_.end(), c);
  if (it == chars_.end() || *it != c) return kUnkId;
  return static_cast<int>(it - chars_.begin()) + 2;
}

struct UnitDetector::Cache {
  std::vector<int> ids;
  Eigen::MatrixXd x;                    // (n, E)
  Eigen::MatrixXd fi, ff, fg, fo, fc, fh;  // forward direction, (n, H)
  Eigen::MatrixXd bi, bf, bg, bo, bc, bh;  // backward direction
  Eigen::VectorXd logits, probs;        // (n)
};

UnitDetector::UnitDetector(CharVocab vocab, int embed_dim, int hidden_dim,
                           std::uint64_t seed)
    : vocab_(std::move(vocab)),
      embed_dim_(embed_dim),
      hidden_dim_(hidden_dim),
      embed_("unit.embed", vocab_.size(), embed_dim),
      fwd_w_("unit.fwd.w", 4 * hidden_dim, embed_dim),
      fwd_u_("unit.fwd.u", 4 * hidden_dim, hidden_dim),
      fwd_b_("unit.fwd.b", 4 * hidden_dim, 1),
      bwd_w_("unit.bwd.w", 4 * hidden_dim, embed_dim),
      bwd_u_("unit.bwd.u", 4 * hidden_dim, hidden_dim),
      bwd_b_("unit.bwd.b", 4 * hidden_dim, 1),
      out_w_("unit.out.w", 2 * hidden_dim, 1),
      out_b_("unit.out.b", 1, 1) {
  if (embed_dim <= 0 || hidden_dim <= 0) {
    throw std::invalid_argument("unit detector sizes must be positive");
  }
  rng::Random random(rng::combine(seed, 0x756e6974));
  const double se = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  const double sh = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  nn::init_normal(embed_, 0.1, random);
  nn::init_uniform(fwd_w_, se, random);
  nn::init_uniform(fwd_u_, sh, random);
  nn::init_uniform(bwd_w_, se, random);
  nn::init_uniform(bwd_u_, sh, random);
  nn::init_uniform(out_w_, 1.0 / std::sqrt(2.0 * hidden_dim), random);
  // Forget gates open at the start of training.
  fwd_b_.value.block(hidden_dim, 0, hidden_dim, 1).setConstant(1.0);
  bwd_b_.value.block(hidden_dim, 0, hidden_dim, 1).setConstant(1.0);
}

void UnitDetector::forward(const std::vector<int>& ids, Cache* cache) const {
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  const int h = hidden_dim_;
  cache->ids = ids;
  cache->x.resize(n, embed_dim_);
  for (Eigen::Index t = 0; t < n; ++t) {
    cache->x.row(t) = embed_.value.row(ids[static_cast<std::size_t>(t)]);
  }

  auto run_direction = [&](bool forward_dir, const nn::Tensor& w,
                           const nn::Tensor& u, const nn::Tensor& b,
                           Eigen::MatrixXd& gi, Eigen::MatrixXd& gf,
                           Eigen::MatrixXd& gg, Eigen::MatrixXd& go,
                           Eigen::MatrixXd& cs, Eigen::MatrixXd& hs) {
    gi.resize(n, h); gf.resize(n, h); gg.resize(n, h); go.resize(n, h);
    cs.resize(n, h); hs.resize(n, h);
    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
    for (Eigen::Index step = 0; step < n; ++step) {
      const Eigen::Index t = forward_dir ? step : n - 1 - step;
      const Eigen::VectorXd z =
          w.value * cache->x.row(t).transpose() + u.value * h_prev + b.value.col(0);
      const Eigen::ArrayXd zi = z.segment(0, h).array();
      const Eigen::ArrayXd zf = z.segment(h, h).array();
      const Eigen::ArrayXd zg = z.segment(2 * h, h).array();
      const Eigen::ArrayXd zo = z.segment(3 * h, h).array();
      const Eigen::ArrayXd i = 1.0 / (1.0 + (-zi).exp());
      const Eigen::ArrayXd f = 1.0 / (1.0 + (-zf).exp());
      const Eigen::ArrayXd g = zg.tanh();
      const Eigen::ArrayXd o = 1.0 / (1.0 + (-zo).exp());
      const Eigen::ArrayXd c = f * c_prev.array() + i * g;
      const Eigen::ArrayXd hh = o * c.tanh();
      gi.row(t) = i.matrix().transpose();
      gf.row(t) = f.matrix().transpose();
      gg.row(t) = g.matrix().transpose();
      go.row(t) = o.matrix().transpose();
      cs.row(t) = c.matrix().transpose();
      hs.row(t) = hh.matrix().transpose();
      c_prev = c.matrix();
      h_prev = hh.matrix();
    }
  };

  run_direction(true, fwd_w_, fwd_u_, fwd_b_, cache->fi, cache->ff, cache->fg,
                cache->fo, cache->fc, cache->fh);
  run_direction(false, bwd_w_, bwd_u_, bwd_b_, cache->bi, cache->bf, cache->bg,
                cache->bo, cache->bc, cache->bh);

  cache->logits.resize(n);
  cache->probs.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double z = out_w_.value.col(0).segment(0, h).dot(cache->fh.row(t)) +
                     out_w_.value.col(0).segment(h, h).dot(cache->bh.row(t)) +
                     out_b_.value(0, 0);
    cache->logits(t) = z;
    cache->probs(t) = sigmoid(z);
  }
}

double UnitDetector::backward(const Cache& cache,
                              const std::vector<double>& labels, double scale) {
  const Eigen::Index n = cache.logits.size();
  const int h = hidden_dim_;
  const double per_char = scale / static_cast<double>(n);

  double loss = 0.0;
  Eigen::VectorXd dz(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double y = labels[static_cast<std::size_t>(t)];
    loss += bce_from_logit(cache.logits(t), y);
    dz(t) = per_char * (cache.probs(t) - y);
  }

  Eigen::MatrixXd dh_fwd(n, h), dh_bwd(n, h);
  for (Eigen::Index t = 0; t < n; ++t) {
    dh_fwd.row(t) = dz(t) * out_w_.value.col(0).segment(0, h).transpose();
    dh_bwd.row(t) = dz(t) * out_w_.value.col(0).segment(h, h).transpose();
    out_w_.grad.col(0).segment(0, h) += dz(t) * cache.fh.row(t).transpose();
    out_w_.grad.col(0).segment(h, h) += dz(t) * cache.bh.row(t).transpose();
    out_b_.grad(0, 0) += dz(t);
  }

  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, embed_dim_);

  auto back_direction = [&](bool forward_dir, nn::Tensor& w, nn::Tensor& u,
                            nn::Tensor& b, const Eigen::MatrixXd& gi,
                            const Eigen::MatrixXd& gf, const Eigen::MatrixXd& gg,
                            const Eigen::MatrixXd& go, const Eigen::MatrixXd& cs,
                            const Eigen::MatrixXd& hs,
                            const Eigen::MatrixXd& dh_out) {
    Eigen::ArrayXd dh_carry = Eigen::ArrayXd::Zero(h);
    Eigen::ArrayXd dc_carry = Eigen::ArrayXd::Zero(h);
    for (Eigen::Index step = n - 1; step >= 0; --step) {
      // Walk the unrolled sequence opposite to this direction's forward order.
      const Eigen::Index t = forward_dir ? step : n - 1 - step;
      const Eigen::Index prev = forward_dir ? t - 1 : t + 1;
      const bool has_prev = forward_dir ? (t > 0) : (t + 1 < n);

      const Eigen::ArrayXd i = gi.row(t).transpose().array();
      const Eigen::ArrayXd f = gf.row(t).transpose().array();
      const Eigen::ArrayXd g = gg.row(t).transpose().array();
      const Eigen::ArrayXd o = go.row(t).transpose().array();
      const Eigen::ArrayXd c = cs.row(t).transpose().array();
      const Eigen::ArrayXd c_prev =
          has_prev ? cs.row(prev).transpose().array()
                   : Eigen::ArrayXd::Zero(h).eval();
      const Eigen::ArrayXd h_prev =
          has_prev ? hs.row(prev).transpose().array()
                   : Eigen::ArrayXd::Zero(h).eval();

      const Eigen::ArrayXd dh = dh_out.row(t).transpose().array() + dh_carry;
      const Eigen::ArrayXd tanh_c = c.tanh();
      const Eigen::ArrayXd dzo = dh * tanh_c * o * (1.0 - o);
      const Eigen::ArrayXd dc = dc_carry + dh * o * (1.0 - tanh_c.square());
      const Eigen::ArrayXd dzi = dc * g * i * (1.0 - i);
      const Eigen::ArrayXd dzf = dc * c_prev * f * (1.0 - f);
      const Eigen::ArrayXd dzg = dc * i * (1.0 - g.square());

      Eigen::VectorXd dz4(4 * h);
      dz4.segment(0, h) = dzi.matrix();
      dz4.segment(h, h) = dzf.matrix();
      dz4.segment(2 * h, h) = dzg.matrix();
      dz4.segment(3 * h, h) = dzo.matrix();

      w.grad += dz4 * cache.x.row(t);
      u.grad += dz4 * h_prev.matrix().transpose();
      b.grad.col(0) += dz4;
      dx.row(t) += (w.value.transpose() * dz4).transpose();
      dh_carry = (u.value.transpose() * dz4).array();
      dc_carry = dc * f;
    }
  };

  back_direction(true, fwd_w_, fwd_u_, fwd_b_, cache.fi, cache.ff, cache.fg,
                 cache.fo, cache.fc, cache.fh, dh_fwd);
  back_direction(false, bwd_w_, bwd_u_, bwd_b_, cache.bi, cache.bf, cache.bg,
                 cache.bo, cache.bc, cache.bh, dh_bwd);

  for (Eigen::Index t = 0; t < n; ++t) {
    embed_.grad.row(cache.ids[static_cast<std::size_t>(t)]) += dx.row(t);
  }
  return loss / static_cast<double>(n);
}

Eigen::VectorXd UnitDetector::char_probs(const std::u32string& text,
                                         std::size_t max_len) {
  const std::size_t n = std::min(text.size(), max_len);
  if (n == 0) return Eigen::VectorXd();
  std::vector<int> ids;
  ids.reserve(n);
  for (std::size_t k = 0; k < n; ++k) ids.push_back(vocab_.id(text[k]));
  Cache cache;
  forward(ids, &cache);
  return cache.probs;
}

std::optional<Span> longest_positive_run(const Eigen::VectorXd& probs) {
  std::optional<Span> best;
  std::size_t run_start = 0;
  bool open = false;
  auto close = [&](std::size_t end) {
    if (!open) return;
    open = false;
    if (!best || end - run_start > best->length()) best = Span{run_start, end};
  };
  for (Eigen::Index t = 0; t < probs.size(); ++t) {
    if (probs(t) >= 0.5) {
      if (!open) {
        run_start = static_cast<std::size_t>(t);
        open = true;
      }
    } else {
      close(static_cast<std::size_t>(t));
    }
  }
  close(static_cast<std::size_t>(probs.size()));
  return best;
}

std::optional<Span> UnitDetector::predict_span(const std::string& text,
                                               std::size_t max_len) {
  const std::u32string u = utf8::decode(text);
  return longest_positive_run(char_probs(u, max_len));
}

std::string UnitDetector::predict_unit(const std::string& text,
                                       std::size_t max_len) {
  const auto span = predict_span(text, max_len);
  if (!span) return "";
  return utf8::slice(text, span->start, span->end);
}

nn::ParamList UnitDetector::parameters() {
  return {&embed_, &fwd_w_, &fwd_u_, &fwd_b_, &bwd_w_, &bwd_u_, &bwd_b_,
          &out_w_, &out_b_};
}

void UnitDetector::save(const std::string& dir) const {
  auto* self = const_cast<UnitDetector*>(this);
  nlohmann::json chars = nlohmann::json::array();
  for (char32_t c : vocab_.chars()) chars.push_back(static_cast<std::uint32_t>(c));
  nn::save_parameters(dir, self->parameters(),
                      {{"kind", "unit-detector"},
                       {"embed_dim", embed_dim_},
                       {"hidden_dim", hidden_dim_},
                       {"vocab", chars}});
}

std::unique_ptr<UnitDetector> UnitDetector::load(const std::string& dir) {
  std::ifstream meta_in(std::filesystem::path(dir) / "meta.json");
  if (!meta_in) {
    throw std::runtime_error("no unit detector checkpoint at '" + dir + "'");
  }
  nlohmann::json meta;
  meta_in >> meta;
  const nlohmann::json extra = meta.value("extra", nlohmann::json::object());
  if (extra.value("kind", "") != "unit-detector") {
    throw std::runtime_error("checkpoint at '" + dir +
                             "' is not a unit detector");
  }
  std::vector<char32_t> chars;
  for (const auto& c : extra.at("vocab")) {
    chars.push_back(static_cast<char32_t>(c.get<std::uint32_t>()));
  }
  auto out = std::make_unique<UnitDetector>(
      CharVocab(std::move(chars)), extra.at("embed_dim").get<int>(),
      extra.at("hidden_dim").get<int>(), /*seed=*/0);
  nn::load_parameters(dir, out->parameters());
  return out;
}

double char_f1(const std::vector<Span>& predicted,
               const std::vector<Span>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("char_f1: example count mismatch");
  }
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const Span p = predicted[k];
    const Span g = gold[k];
    np += p.length();
    ng += g.length();
    const std::size_t lo = std::max(p.start, g.start);
    const std::size_t hi = std::min(p.end, g.end);
    if (lo < hi) tp += hi - lo;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(np + ng);
}

UnitTrainResult train_unit_detector(
    UnitDetector& model, const std::vector<UnitExample>& train,
    const std::vector<UnitExample>& dev, const UnitHyperparams& hp,
    const std::function<void(int, double, double)>& log) {
  if (train.empty()) {
    throw std::invalid_argument("train_unit_detector: no examples");
  }

  // Pre-encode: ids and per-character labels, clipped to max_len.
  struct Encoded {
    std::vector<int> ids;
    std::vector<double> labels;
  };
  auto encode = [&](const UnitExample& ex) {
    const std::u32string u = utf8::decode(ex.text);
    const std::size_t n = std::min(u.size(), hp.max_len);
    Encoded enc;
    for (std::size_t k = 0; k < n; ++k) {
      enc.ids.push_back(model.vocab().id(u[k]));
      enc.labels.push_back(k >= ex.unit.start && k < ex.unit.end ? 1.0 : 0.0);
    }
    return enc;
  };
  std::vector<Encoded> encoded;
  encoded.reserve(train.size());
  for (const auto& ex : train) {
    Encoded enc = encode(ex);
    if (enc.ids.empty()) {
      throw std::invalid_argument("train_unit_detector: empty example text");
    }
    encoded.push_back(std::move(enc));
  }
  std::vector<Span> dev_gold;
  dev_gold.reserve(dev.size());
  for (const auto& ex : dev) {
    const std::size_t n = std::min(utf8::length(ex.text), hp.max_len);
    dev_gold.push_back(
        {std::min(ex.unit.start, n), std::min(ex.unit.end, n)});
  }

  const nn::ParamList params = model.parameters();
  nn::AdamOptimizer optimizer(params, {.lr = hp.lr});
  rng::Random random(rng::combine(hp.seed, 0x6c73746d));

  UnitTrainResult result;
  std::vector<Eigen::MatrixXd> best_values;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

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
        const Encoded& enc = encoded[order[k]];
        UnitDetector::Cache cache;
        model.forward(enc.ids, &cache);
        epoch_loss += model.backward(cache, enc.labels, scale);
      }
      optimizer.step();
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));

    double f1 = 0.0;
    if (!dev.empty()) {
      std::vector<Span> predicted;
      predicted.reserve(dev.size());
      for (const auto& ex : dev) {
        const auto span = model.predict_span(ex.text, hp.max_len);
        predicted.push_back(span.value_or(Span{0, 0}));
      }
      f1 = char_f1(predicted, dev_gold);
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

}  // namespace measpipe::unitdet
