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

#include "measpipe/nn.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace measpipe::nn {

namespace fs = std::filesystem;

void init_uniform(Tensor& t, double scale, rng::Random& random) {
  for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
      t.value(r, c) = random.uniform(-scale, scale);
    }
  }
}

void init_normal(Tensor& t, double stddev, rng::Random& random) {
  for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
      t.value(r, c) = random.normal(0.0, stddev);
    }
  }
}

void zero_grads(const ParamList& params) {
  for (Tensor* t : params) t->zero_grad();
}

double grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (const Tensor* t : params) sq += t->grad.squaredNorm();
  return std::sqrt(sq);
}

void clip_gradients(const ParamList& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = grad_norm(params);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (Tensor* t : params) t->grad *= scale;
}

AdamOptimizer::AdamOptimizer(ParamList params, Options options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor* t : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols()));
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(options_.beta1, step_count_);
  const double bc2 = 1.0 - std::pow(options_.beta2, step_count_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = *params_[k];
    Eigen::MatrixXd g = t.grad;
    if (options_.weight_decay > 0.0) g += options_.weight_decay * t.value;
    m_[k] = options_.beta1 * m_[k] + (1.0 - options_.beta1) * g;
    v_[k] = options_.beta2 * v_[k] +
            (1.0 - options_.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXXd m_hat = m_[k].array() / bc1;
    const Eigen::ArrayXXd v_hat = v_[k].array() / bc2;
    t.value.array() -= options_.lr * m_hat / (v_hat.sqrt() + options_.eps);
  }
}

void AdamOptimizer::zero_grad() { zero_grads(params_); }

Eigen::MatrixXd Dropout::forward(const Eigen::MatrixXd& x, double rate,
                                 bool training, rng::Random& random) {
  if (!training || rate <= 0.0) {
    identity_ = true;
    return x;
  }
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  identity_ = false;
  const double keep = 1.0 - rate;
  mask_.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      mask_(r, c) = random.uniform(0.0, 1.0) < rate ? 0.0 : 1.0 / keep;
    }
  }
  return (x.array() * mask_).matrix();
}

Eigen::MatrixXd Dropout::backward(const Eigen::MatrixXd& dy) const {
  if (identity_) return dy;
  return (dy.array() * mask_).matrix();
}

void save_parameters(const std::string& dir, const ParamList& params,
                     const nlohmann::json& extra) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["format"] = "measpipe-params-v1";
  meta["tensors"] = nlohmann::json::array();
  for (const Tensor* t : params) {
    meta["tensors"].push_back({{"name", t->name},
                               {"rows", t->value.rows()},
                               {"cols", t->value.cols()}});
  }
  meta["extra"] = extra;

  {
    std::ofstream out(fs::path(dir) / "meta.json");
    if (!out) throw std::runtime_error("cannot write meta.json in " + dir);
    out << meta.dump(2) << "\n";
  }

  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write params.bin in " + dir);
  for (const Tensor* t : params) {
    for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t->value.cols(); ++c) {
        const double v = t->value(r, c);
        bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
  if (!bin) throw std::runtime_error("short write to params.bin in " + dir);
}

nlohmann::json load_parameters(const std::string& dir, const ParamList& params) {
  std::ifstream meta_in(fs::path(dir) / "meta.json");
  if (!meta_in) throw std::runtime_error("cannot open meta.json in " + dir);
  nlohmann::json meta;
  meta_in >> meta;
  if (meta.value("format", "") != "measpipe-params-v1") {
    throw std::runtime_error("unrecognized parameter format in " + dir);
  }
  const auto& tensors = meta.at("tensors");
  if (tensors.size() != params.size()) {
    throw std::runtime_error("parameter count mismatch in " + dir);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& entry = tensors[k];
    const Tensor* t = params[k];
    if (entry.at("name").get<std::string>() != t->name ||
        entry.at("rows").get<Eigen::Index>() != t->value.rows() ||
        entry.at("cols").get<Eigen::Index>() != t->value.cols()) {
      throw std::runtime_error("parameter '" + t->name +
                               "' does not match checkpoint in " + dir);
    }
  }

  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open params.bin in " + dir);
  for (Tensor* t : params) {
    for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t->value.cols(); ++c) {
        double v = 0.0;
        bin.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!bin) {
          throw std::runtime_error("params.bin in " + dir +
                                   " is shorter than meta.json declares");
        }
        t->value(r, c) = v;
      }
    }
  }
  return meta.value("extra", nlohmann::json::object());
}

}  // namespace measpipe::nn
