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

#include "measpipe/encoder.hpp"

#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "measpipe/rng.hpp"
#include "testutil.hpp"

using namespace measpipe;

TEST_CASE("stub encoder is deterministic, bounded, and token-dominated") {
  encoder::StubEncoder enc(16, 42);
  CHECK(enc.dim() == 16);
  CHECK(enc.kind() == "stub");
  CHECK(enc.parameters().empty());

  const std::vector<int> ids = {2, 7, 7, 3};
  const Eigen::MatrixXd h1 = enc.forward(ids, /*training=*/true);
  const Eigen::MatrixXd h2 = enc.forward(ids, /*training=*/false);
  CHECK(h1.rows() == 4);
  CHECK(h1.cols() == 16);
  CHECK((h1 - h2).cwiseAbs().maxCoeff() == 0.0);  // no mode dependence
  CHECK(h1.cwiseAbs().maxCoeff() <= 1.1);         // token part + 0.1 position part

  // Same token at different positions: close (token term equal) but not
  // identical (position term differs).
  CHECK((h1.row(1) - h1.row(2)).cwiseAbs().maxCoeff() <= 0.2);
  CHECK((h1.row(1) - h1.row(2)).cwiseAbs().maxCoeff() > 0.0);

  // Replicate one entry from the published hash recipe.
  const double by_token =
      rng::to_unit(rng::mix(rng::combine(42, rng::combine(7, 2 * 3))));
  const double by_position = rng::to_unit(
      rng::mix(rng::combine(42, rng::combine(7, rng::combine(1, 2 * 3 + 1)))));
  CHECK(h1(1, 3) == by_token + 0.1 * by_position);

  // A different seed produces different features.
  encoder::StubEncoder other(16, 43);
  CHECK((other.forward(ids, false) - h1).cwiseAbs().maxCoeff() > 0.0);

  // backward is a no-op and must not crash.
  enc.backward(ids, Eigen::MatrixXd::Ones(4, 16));
}

TEST_CASE("embedding encoder sums token and position rows") {
  encoder::EmbeddingEncoder enc(20, 8, 12, 7);
  CHECK(enc.dim() == 12);
  CHECK(enc.vocab_size() == 20);
  CHECK(enc.max_positions() == 8);
  const auto params = enc.parameters();
  REQUIRE(params.size() == 2);
  const Eigen::MatrixXd& tok = params[0]->value;
  const Eigen::MatrixXd& pos = params[1]->value;

  const std::vector<int> ids = {5, 5, 19};
  const Eigen::MatrixXd h = enc.forward(ids, false);
  CHECK((h.row(0) - (tok.row(5) + pos.row(0))).cwiseAbs().maxCoeff() == 0.0);
  CHECK((h.row(1) - (tok.row(5) + pos.row(1))).cwiseAbs().maxCoeff() == 0.0);
  CHECK((h.row(2) - (tok.row(19) + pos.row(2))).cwiseAbs().maxCoeff() == 0.0);

  // Positions beyond max_positions clamp to the last row.
  const std::vector<int> long_ids(10, 4);
  const Eigen::MatrixXd hl = enc.forward(long_ids, false);
  CHECK((hl.row(9) - (tok.row(4) + pos.row(7))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("embedding backward accumulates per-row gradients") {
  encoder::EmbeddingEncoder enc(10, 4, 3, 1);
  const auto params = enc.parameters();
  nn::zero_grads(params);

  const std::vector<int> ids = {2, 2, 9};
  Eigen::MatrixXd d(3, 3);
  d << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  enc.backward(ids, d);

  const Eigen::MatrixXd& tok_grad = params[0]->grad;
  const Eigen::MatrixXd& pos_grad = params[1]->grad;
  // Token 2 appears at positions 0 and 1: its row collects both.
  CHECK(tok_grad(2, 0) == 1.0);
  CHECK(tok_grad(2, 1) == 1.0);
  CHECK(tok_grad(9, 2) == 1.0);
  CHECK(tok_grad.row(0).isZero());
  CHECK(pos_grad(0, 0) == 1.0);
  CHECK(pos_grad(1, 1) == 1.0);
  CHECK(pos_grad(2, 2) == 1.0);

  // Finite differences along one coordinate of a scalar readout sum(h).
  const double h0 = enc.forward(ids, false).sum();
  const double eps = 1e-6;
  params[0]->value(2, 0) += eps;
  const double h1 = enc.forward(ids, false).sum();
  params[0]->value(2, 0) -= eps;
  // d sum / d tok(2,0) = number of occurrences of token 2.
  CHECK((h1 - h0) / eps == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("embedding encoder round-trips through save and load") {
  test::TempDir tmp("measpipe-encoder-save");
  encoder::EmbeddingEncoder enc(12, 6, 8, 99);
  const std::vector<int> ids = {1, 11, 3};
  const Eigen::MatrixXd before = enc.forward(ids, false);
  enc.save(tmp.str());

  const auto loaded = encoder::EmbeddingEncoder::load(tmp.str());
  CHECK(loaded->vocab_size() == 12);
  CHECK(loaded->max_positions() == 6);
  CHECK(loaded->dim() == 8);
  CHECK((loaded->forward(ids, false) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("make_encoder parses identifiers and rejects junk") {
  SUBCASE("plain and parameterized stub") {
    auto enc = encoder::make_encoder("stub", 100, 64);
    CHECK(enc->kind() == "stub");
    CHECK(enc->dim() == 768);

    auto small = encoder::make_encoder("stub:32", 100, 64);
    CHECK(small->dim() == 32);

    auto seeded = encoder::make_encoder("stub:32:5", 100, 64);
    auto seeded2 = encoder::make_encoder("stub:32:5", 100, 64);
    const std::vector<int> ids = {4, 9};
    CHECK((seeded->forward(ids, false) - seeded2->forward(ids, false))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  SUBCASE("embedding identifiers honor vocab and positions") {
    auto enc = encoder::make_encoder("embedding:24", 33, 17);
    CHECK(enc->kind() == "embedding");
    CHECK(enc->dim() == 24);
    auto* emb = dynamic_cast<encoder::EmbeddingEncoder*>(enc.get());
    REQUIRE(emb != nullptr);
    CHECK(emb->vocab_size() == 33);
    CHECK(emb->max_positions() == 17);
  }
  SUBCASE("a saved directory loads back") {
    test::TempDir tmp("measpipe-encoder-dir");
    encoder::EmbeddingEncoder enc(12, 6, 8, 99);
    enc.save(tmp.str());
    auto loaded = encoder::make_encoder(tmp.str(), /*vocab_size=*/1,
                                        /*max_positions=*/1);
    CHECK(loaded->kind() == "embedding");
    CHECK(loaded->dim() == 8);  // stored shape wins over the arguments
  }
  SUBCASE("errors list the supported forms") {
    CHECK_THROWS_WITH_AS(encoder::make_encoder("bert-large", 10, 10),
                         doctest::Contains("stub"), std::invalid_argument);
    CHECK_THROWS_AS(encoder::make_encoder("stub:8:1:9", 10, 10),
                    std::invalid_argument);
    CHECK_THROWS_AS(encoder::make_encoder("stub:zero", 10, 10),
                    std::invalid_argument);
  }
}

TEST_CASE("from_config rebuilds an equivalent encoder") {
  encoder::StubEncoder stub(8, 3);
  auto rebuilt = encoder::from_config(stub.config());
  CHECK(rebuilt->kind() == "stub");
  const std::vector<int> ids = {1, 2, 3};
  CHECK((rebuilt->forward(ids, false) - stub.forward(ids, false))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  encoder::EmbeddingEncoder emb(10, 5, 4, 2);
  auto remade = encoder::from_config(emb.config());
  auto* cast = dynamic_cast<encoder::EmbeddingEncoder*>(remade.get());
  REQUIRE(cast != nullptr);
  CHECK(cast->vocab_size() == 10);
  CHECK(cast->max_positions() == 5);
  CHECK(cast->dim() == 4);

  CHECK_THROWS_AS(encoder::from_config({{"kind", "mystery"}}),
                  std::invalid_argument);
}
