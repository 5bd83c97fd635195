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

#include <doctest.h>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "measpipe/tokenizers.hpp"
#include "testutil.hpp"

using namespace measpipe;
using namespace measpipe::tagheads;

namespace {

nn::Tensor* find_param(const nn::ParamList& params, const std::string& name) {
  for (nn::Tensor* t : params) {
    if (t->name == name) return t;
  }
  REQUIRE_MESSAGE(false, "missing parameter " << name);
  return nullptr;
}

Eigen::MatrixXd random_matrix(rng::Random& random, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = random.uniform(-1.0, 1.0);
  }
  return m;
}

TagExample make_example(const std::string& text,
                        const std::vector<Span>& spans,
                        const textprep::SubwordTokenizer& tok,
                        std::size_t max_len = 64) {
  TagExample ex;
  ex.alignment = textprep::align_tokens(text, tok, max_len);
  ex.gold = textprep::encode_bio(ex.alignment, spans);
  ex.gold_spans = spans;
  return ex;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("tagger variants round-trip through their names") {
  const TaggerVariant all[] = {
      TaggerVariant::kQuantity, TaggerVariant::kMeasuredEntity,
      TaggerVariant::kMeasuredProperty, TaggerVariant::kQualifierQuantity,
      TaggerVariant::kQualifierProperty};
  for (TaggerVariant v : all) {
    CHECK(parse_tagger_variant(to_string(v)) == v);
  }
  CHECK(to_string(TaggerVariant::kQualifierQuantity) == "qualifier_q");
  CHECK_THROWS_AS(parse_tagger_variant("Quantity"), std::invalid_argument);
}

TEST_CASE("tag head emits one softmax row per token") {
  TagHeadConfig config;
  config.dim = 16;
  config.dropout = 0.0;
  TagHead head(config, 7);
  rng::Random random(1);
  const Eigen::MatrixXd hidden = random_matrix(random, 10, 16);

  const Eigen::MatrixXd probs = head.forward(hidden, false);
  REQUIRE(probs.rows() == 10);
  REQUIRE(probs.cols() == 3);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(probs.row(i).minCoeff() > 0.0);
  }

  SUBCASE("logit mode skips the softmax") {
    TagHeadConfig raw = config;
    raw.softmax_emissions = false;
    TagHead logit_head(raw, 7);
    const Eigen::MatrixXd z = logit_head.forward(hidden, false);
    CHECK(z.rows() == 10);
    CHECK(std::abs(z.row(0).sum() - 1.0) > 1e-6);  // not normalized
  }
  SUBCASE("width mismatch and empty input are rejected") {
    CHECK_THROWS_AS(head.forward(random_matrix(random, 4, 8), false),
                    std::invalid_argument);
    CHECK_THROWS_AS(head.forward(Eigen::MatrixXd(0, 16), false),
                    std::invalid_argument);
  }
}

TEST_CASE("zero final projection yields the uniform distribution") {
  TagHeadConfig config;
  config.dim = 8;
  config.dropout = 0.0;
  TagHead head(config, 3);
  find_param(head.parameters(), "head.w2")->value.setZero();
  find_param(head.parameters(), "head.b2")->value.setConstant(0.7);

  rng::Random random(2);
  const Eigen::MatrixXd probs =
      head.forward(random_matrix(random, 5, 8), false);
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (int t = 0; t < 3; ++t) {
      CHECK(probs(i, t) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward matches an independent scalar evaluation") {
  const int d = 4, n = 3, t = 3;
  TagHeadConfig config;
  config.dim = d;
  config.dropout = 0.0;
  TagHead head(config, 11);
  rng::Random random(6);
  const Eigen::MatrixXd hidden = random_matrix(random, n, d);
  const Eigen::MatrixXd probs = head.forward(hidden, false);

  const auto params = head.parameters();
  const Eigen::MatrixXd& w0 = find_param(params, "head.w0")->value;
  const Eigen::MatrixXd& b0 = find_param(params, "head.b0")->value;
  const Eigen::MatrixXd& w1 = find_param(params, "head.w1")->value;
  const Eigen::MatrixXd& b1 = find_param(params, "head.b1")->value;
  const Eigen::MatrixXd& w2 = find_param(params, "head.w2")->value;
  const Eigen::MatrixXd& b2 = find_param(params, "head.b2")->value;

  std::vector<double> a_cls(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double s = b0(j, 0);
    for (int k = 0; k < d; ++k) s += w0(j, k) * std::tanh(hidden(0, k));
    a_cls[j] = s;
  }
  for (int i = 0; i < n; ++i) {
    std::vector<double> a(d, 0.0);
    for (int j = 0; j < d; ++j) {
      double s = b1(j, 0);
      for (int k = 0; k < d; ++k) s += w1(j, k) * std::tanh(hidden(i, k));
      a[j] = s;
    }
    std::vector<double> z(t, 0.0);
    for (int r = 0; r < t; ++r) {
      double s = b2(r, 0);
      for (int j = 0; j < d; ++j) s += w2(r, j) * a[j] + w2(r, d + j) * a_cls[j];
      z[r] = s;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (int r = 0; r < t; ++r) denom += std::exp(z[r] - m);
    for (int r = 0; r < t; ++r) {
      CHECK(probs(i, r) ==
            doctest::Approx(std::exp(z[r] - m) / denom).epsilon(1e-12));
    }
  }
}

TEST_CASE("head gradients survive a CRF loss finite-difference check") {
  const int d = 6, n = 4;
  TagHeadConfig config;
  config.dim = d;
  config.dropout = 0.0;
  TagHead head(config, 5);
  rng::Random random(8);
  Eigen::MatrixXd hidden = random_matrix(random, n, d);
  const std::vector<int> gold = {0, 1, 2, 0};

  crf::Params cp = crf::Params::zeros(3);
  for (int a = 0; a < 3; ++a) {
    cp.start(a) = random.uniform(-1, 1);
    cp.stop(a) = random.uniform(-1, 1);
    for (int b = 0; b < 3; ++b) cp.transitions(a, b) = random.uniform(-1, 1);
  }

  auto loss = [&]() {
    return crf::nll(cp, head.forward(hidden, false), gold);
  };

  const Eigen::MatrixXd emissions = head.forward(hidden, false);
  const crf::Gradients g = crf::nll_backward(cp, emissions, gold);
  const auto params = head.parameters();
  nn::zero_grads(params);
  const Eigen::MatrixXd d_hidden = head.backward(g.emissions);

  const double h = 1e-5;
  int slots = 0;
  for (nn::Tensor* tensor : params) {
    for (Eigen::Index i = 0; i < tensor->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < tensor->value.cols(); ++j) {
        const double saved = tensor->value(i, j);
        tensor->value(i, j) = saved + h;
        const double up = loss();
        tensor->value(i, j) = saved - h;
        const double down = loss();
        tensor->value(i, j) = saved;
        CHECK(rel_err(tensor->grad(i, j), (up - down) / (2 * h)) < 1e-3);
        ++slots;
      }
    }
  }
  CHECK(slots > 100);

  // The returned d_hidden is the gradient with respect to the inputs.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      const double saved = hidden(i, k);
      hidden(i, k) = saved + h;
      const double up = loss();
      hidden(i, k) = saved - h;
      const double down = loss();
      hidden(i, k) = saved;
      CHECK(rel_err(d_hidden(i, k), (up - down) / (2 * h)) < 1e-3);
    }
  }
}

TEST_CASE("a fresh model predicts no spans for special-only input") {
  TagHeadConfig config;
  config.dim = 8;
  config.dropout = 0.0;
  TaggerModel model(TaggerVariant::kQuantity,
                    encoder::make_encoder("stub:8:4", 32, 16), config, 9);
  const auto tok = textprep::WhitespaceTokenizer::from_texts({"a"});
  const auto alignment = textprep::align_tokens("", tok, 8);
  CHECK(model.predict_spans(alignment).empty());
  CHECK(model.predict_tags(alignment.ids()).size() == 2);
}

TEST_CASE("one example is memorized to near-zero loss") {
  const auto tok =
      textprep::WhitespaceTokenizer::from_texts({"the mass is 25 kg"});
  const TagExample ex = make_example("the mass is 25 kg", {Span{12, 17}}, tok);

  // Raw-logit emissions: the capacity check needs unbounded margins, since
  // softmax rows cap the score gap to paths that reuse the gold transitions.
  TagHeadConfig config;
  config.dim = 16;
  config.dropout = 0.0;
  config.softmax_emissions = false;
  TaggerModel model(TaggerVariant::kQuantity,
                    encoder::make_encoder("stub:16:3", tok.vocab_size(), 64),
                    config, 42);

  TaggerHyperparams hp;
  hp.dim = 16;
  hp.dropout = 0.0;
  hp.batch_size = 1;
  hp.lr = 1e-2;
  hp.epochs = 200;
  hp.seed = 42;
  hp.softmax_emissions = false;
  const TagTrainResult result = train_tagger(model, {ex}, {}, hp);

  CHECK(result.epochs_run == 200);  // no dev, so no early stop
  CHECK(result.best_epoch == -1);
  CHECK(result.train_loss.back() < 0.01);
  CHECK(result.train_loss.back() < result.train_loss.front());
  CHECK(model.example_nll(ex) < 0.01);

  // The memorized example decodes to its gold tags and spans.
  const auto tags = model.predict_tags(ex.alignment.ids());
  textprep::BioSequence bio;
  for (int t : tags) bio.tags.push_back(static_cast<textprep::BioTag>(t));
  CHECK(bio == ex.gold);
  CHECK(model.predict_spans(ex.alignment) == ex.gold_spans);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto tok =
      textprep::WhitespaceTokenizer::from_texts({"the mass is 25 kg now"});
  const std::vector<TagExample> train = {
      make_example("the mass is 25 kg", {Span{12, 17}}, tok),
      make_example("25 kg now", {Span{0, 5}}, tok),
  };
  TaggerHyperparams hp;
  hp.dim = 8;
  hp.dropout = 0.1;
  hp.batch_size = 2;
  hp.lr = 1e-3;
  hp.epochs = 5;
  hp.seed = 7;

  TagHeadConfig config;
  config.dim = 8;
  config.dropout = 0.1;
  auto run = [&]() {
    TaggerModel model(TaggerVariant::kQuantity,
                      encoder::make_encoder("stub:8:2", tok.vocab_size(), 64),
                      config, 13);
    return train_tagger(model, train, {train[0]}, hp).train_loss;
  };
  CHECK(run() == run());
}

TEST_CASE("early stopping restores the best dev epoch") {
  const auto tok =
      textprep::WhitespaceTokenizer::from_texts({"the mass is 25 kg"});
  const TagExample ex = make_example("the mass is 25 kg", {Span{12, 17}}, tok);

  TagHeadConfig config;
  config.dim = 8;
  config.dropout = 0.0;
  config.softmax_emissions = false;
  TaggerModel model(TaggerVariant::kQuantity,
                    encoder::make_encoder("stub:8:1", tok.vocab_size(), 64),
                    config, 3);
  TaggerHyperparams hp;
  hp.dim = 8;
  hp.dropout = 0.0;
  hp.batch_size = 1;
  hp.lr = 1e-2;
  hp.epochs = 100;
  hp.patience = 3;
  hp.seed = 5;
  hp.softmax_emissions = false;
  // 100 copies make one epoch long enough to memorize before patience ends
  // the run.
  const std::vector<TagExample> train(100, ex);
  const TagTrainResult result = train_tagger(model, train, {ex}, hp);

  REQUIRE(result.best_epoch >= 0);
  CHECK(result.best_dev_f1 == 1.0);
  // Early stop: once dev F1 is perfect it cannot improve, so training ends
  // `patience` epochs after the best one.
  CHECK(result.epochs_run == result.best_epoch + hp.patience + 1);
  CHECK(result.dev_f1[result.best_epoch] == 1.0);
  CHECK(model.predict_spans(ex.alignment) == ex.gold_spans);
}

TEST_CASE("a small grammar generalizes to held-out combinations") {
  const std::vector<std::string> nums = {"5", "10", "25", "50"};
  const std::vector<std::string> units = {"kg", "m", "s", "K"};
  const auto tok = textprep::WhitespaceTokenizer::from_texts(
      {"the level was 5 10 25 50 kg m s K here"});

  auto sentence = [](const std::string& n, const std::string& u) {
    return "the level was " + n + " " + u + " here";
  };
  std::vector<TagExample> train, dev;
  for (std::size_t i = 0; i < nums.size(); ++i) {
    for (std::size_t j = 0; j < units.size(); ++j) {
      const std::string text = sentence(nums[i], units[j]);
      const std::size_t start = 14;
      const Span span{start, start + nums[i].size() + 1 + units[j].size()};
      TagExample ex = make_example(text, {span}, tok);
      // Hold out the diagonal pairs; all tokens still occur in training.
      ((i == j) ? dev : train).push_back(std::move(ex));
    }
  }

  TagHeadConfig config;
  config.dim = 24;
  config.dropout = 0.0;
  TaggerModel model(TaggerVariant::kQuantity,
                    encoder::make_encoder("stub:24:6", tok.vocab_size(), 64),
                    config, 21);
  TaggerHyperparams hp;
  hp.dim = 24;
  hp.dropout = 0.0;
  hp.batch_size = 4;
  hp.lr = 3e-2;
  hp.epochs = 40;
  hp.patience = 40;
  hp.seed = 11;
  const TagTrainResult result = train_tagger(model, train, dev, hp);
  CHECK(result.best_dev_f1 == 1.0);
}

TEST_CASE("tagger models round-trip through save and load") {
  test::TempDir tmp("measpipe-tagger-save");
  TagHeadConfig config;
  config.dim = 8;
  config.dropout = 0.05;
  TaggerModel model(TaggerVariant::kQualifierProperty,
                    encoder::make_encoder("embedding:8:3", 40, 32), config, 17);
  const std::vector<int> ids = {2, 5, 9, 14, 3};
  const auto before = model.predict_tags(ids);
  model.save(tmp.str());

  const auto loaded = TaggerModel::load(tmp.str());
  CHECK(loaded->variant() == TaggerVariant::kQualifierProperty);
  CHECK(loaded->head().config().dim == 8);
  CHECK(loaded->head().config().dropout == 0.05);
  CHECK(loaded->predict_tags(ids) == before);
  const crf::Params a = model.crf_params();
  const crf::Params b = loaded->crf_params();
  CHECK((a.transitions - b.transitions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.start - b.start).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(TaggerModel::load(tmp.str() + "-missing"),
                  std::runtime_error);
}

TEST_CASE("exact_span_f1 arithmetic") {
  using Spans = std::vector<Span>;
  CHECK(exact_span_f1({Spans{{0, 2}}, Spans{{3, 5}, {6, 8}}},
                      {Spans{{0, 2}}, Spans{{3, 5}}}) ==
        doctest::Approx(0.8));
  CHECK(exact_span_f1({Spans{{0, 2}}}, {Spans{{0, 2}}}) == 1.0);
  CHECK(exact_span_f1({Spans{}}, {Spans{}}) == 1.0);
  CHECK(exact_span_f1({Spans{{0, 2}}}, {Spans{}}) == 0.0);
  CHECK_THROWS_AS(exact_span_f1({Spans{}}, {Spans{}, Spans{}}),
                  std::invalid_argument);
}
