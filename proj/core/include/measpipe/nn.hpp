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

#ifndef MEASPIPE_NN_HPP_
#define MEASPIPE_NN_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "measpipe/rng.hpp"

namespace measpipe::nn {

// A named parameter matrix with its gradient accumulator. Vectors are
// represented as (n, 1) matrices.
struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Tensor() = default;
  Tensor(std::string name_, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(name_)),
        value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParamList = std::vector<Tensor*>;

void init_uniform(Tensor& t, double scale, rng::Random& random);
void init_normal(Tensor& t, double stddev, rng::Random& random);

void zero_grads(const ParamList& params);
double grad_norm(const ParamList& params);
// Scales all gradients down when their global L2 norm exceeds max_norm.
void clip_gradients(const ParamList& params, double max_norm);

// Adam with bias correction and optional decoupled L2 on the raw gradient.
class AdamOptimizer {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamOptimizer(ParamList params, Options options);

  void step();
  void zero_grad();
  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  ParamList params_;
  Options options_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long step_count_ = 0;
};

// Inverted dropout; the stored mask holds the per-element scale factors
// (0 or 1/(1-rate)) so backward is a plain elementwise product.
class Dropout {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, double rate, bool training,
                          rng::Random& random);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const;

 private:
  bool identity_ = true;
  Eigen::ArrayXXd mask_;
};

// Writes `dir/meta.json` (tensor names and shapes plus caller-supplied
// fields) and `dir/params.bin` (row-major little-endian doubles in meta
// order). Creates the directory if needed.
void save_parameters(const std::string& dir, const ParamList& params,
                     const nlohmann::json& extra);

// Loads values back into `params`, matching by name and shape; throws
// std::runtime_error on any mismatch. Returns the stored extra fields.
nlohmann::json load_parameters(const std::string& dir, const ParamList& params);

}  // namespace measpipe::nn

#endif  // MEASPIPE_NN_HPP_
