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

#include "measpipe/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace measpipe::crf {

namespace {

void check_inputs(const Params& params, const Eigen::MatrixXd& emissions) {
  const int t = params.num_tags();
  if (t <= 0) throw std::invalid_argument("crf: empty tag set");
  if (params.transitions.rows() != t || params.transitions.cols() != t ||
      params.stop.size() != t) {
    throw std::invalid_argument("crf: inconsistent parameter shapes");
  }
  if (emissions.rows() < 1) {
    throw std::invalid_argument("crf: empty emission sequence");
  }
  if (emissions.cols() != t) {
    throw std::invalid_argument("crf: emission width != tag count");
  }
}

void check_tags(const std::vector<int>& tags, Eigen::Index n, int t) {
  if (static_cast<Eigen::Index>(tags.size()) != n) {
    throw std::invalid_argument("crf: tag sequence length mismatch");
  }
  for (int tag : tags) {
    if (tag < 0 || tag >= t) throw std::invalid_argument("crf: tag out of range");
  }
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf stays -inf
  return m + std::log((v.array() - m).exp().sum());
}

// alpha(i, j) = log sum of scores of all prefixes ending at position i with
// tag j, including start and emission terms.
Eigen::MatrixXd forward_messages(const Params& params,
                                 const Eigen::MatrixXd& emissions) {
  const Eigen::Index n = emissions.rows();
  const int t = params.num_tags();
  Eigen::MatrixXd alpha(n, t);
  alpha.row(0) = params.start.transpose() + emissions.row(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (int j = 0; j < t; ++j) {
      Eigen::VectorXd terms =
          alpha.row(i - 1).transpose() + params.transitions.col(j);
      alpha(i, j) = emissions(i, j) + log_sum_exp(terms);
    }
  }
  return alpha;
}

// beta(i, j) = log sum of scores of all suffixes given tag j at position i,
// excluding position i's own emission, including the stop term.
Eigen::MatrixXd backward_messages(const Params& params,
                                  const Eigen::MatrixXd& emissions) {
  const Eigen::Index n = emissions.rows();
  const int t = params.num_tags();
  Eigen::MatrixXd beta(n, t);
  beta.row(n - 1) = params.stop.transpose();
  for (Eigen::Index i = n - 2; i >= 0; --i) {
    for (int j = 0; j < t; ++j) {
      Eigen::VectorXd terms = params.transitions.row(j).transpose() +
                              emissions.row(i + 1).transpose() +
                              beta.row(i + 1).transpose();
      beta(i, j) = log_sum_exp(terms);
    }
  }
  return beta;
}

std::vector<Eigen::Index> mask_positions(const Eigen::MatrixXd& emissions,
                                         const std::vector<bool>& mask) {
  if (mask.size() != static_cast<std::size_t>(emissions.rows())) {
    throw std::invalid_argument("crf: mask length mismatch");
  }
  std::vector<Eigen::Index> kept;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) kept.push_back(static_cast<Eigen::Index>(i));
  }
  if (kept.empty()) throw std::invalid_argument("crf: mask removes every position");
  return kept;
}

Eigen::MatrixXd compress_rows(const Eigen::MatrixXd& emissions,
                              const std::vector<Eigen::Index>& kept) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(kept.size()), emissions.cols());
  for (std::size_t k = 0; k < kept.size(); ++k) out.row(k) = emissions.row(kept[k]);
  return out;
}

std::vector<int> compress_tags(const std::vector<int>& tags,
                               const std::vector<Eigen::Index>& kept) {
  std::vector<int> out;
  out.reserve(kept.size());
  for (Eigen::Index i : kept) out.push_back(tags[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

Params Params::zeros(int num_tags) {
  Params p;
  p.transitions = Eigen::MatrixXd::Zero(num_tags, num_tags);
  p.start = Eigen::VectorXd::Zero(num_tags);
  p.stop = Eigen::VectorXd::Zero(num_tags);
  return p;
}

double sequence_score(const Params& params, const Eigen::MatrixXd& emissions,
                      const std::vector<int>& tags) {
  check_inputs(params, emissions);
  check_tags(tags, emissions.rows(), params.num_tags());
  const Eigen::Index n = emissions.rows();
  double score = params.start(tags[0]) + emissions(0, tags[0]);
  for (Eigen::Index i = 1; i < n; ++i) {
    score += params.transitions(tags[i - 1], tags[i]) + emissions(i, tags[i]);
  }
  score += params.stop(tags[n - 1]);
  return score;
}

double log_partition(const Params& params, const Eigen::MatrixXd& emissions) {
  check_inputs(params, emissions);
  const Eigen::MatrixXd alpha = forward_messages(params, emissions);
  Eigen::VectorXd last =
      alpha.row(emissions.rows() - 1).transpose() + params.stop;
  return log_sum_exp(last);
}

double nll(const Params& params, const Eigen::MatrixXd& emissions,
           const std::vector<int>& tags) {
  return log_partition(params, emissions) -
         sequence_score(params, emissions, tags);
}

Gradients nll_backward(const Params& params, const Eigen::MatrixXd& emissions,
                       const std::vector<int>& tags) {
  check_inputs(params, emissions);
  check_tags(tags, emissions.rows(), params.num_tags());
  const Eigen::Index n = emissions.rows();
  const int t = params.num_tags();

  const Eigen::MatrixXd alpha = forward_messages(params, emissions);
  const Eigen::MatrixXd beta = backward_messages(params, emissions);
  Eigen::VectorXd last = alpha.row(n - 1).transpose() + params.stop;
  const double log_z = log_sum_exp(last);

  Gradients g;
  g.emissions = Eigen::MatrixXd::Zero(n, t);
  g.transitions = Eigen::MatrixXd::Zero(t, t);
  g.start = Eigen::VectorXd::Zero(t);
  g.stop = Eigen::VectorXd::Zero(t);

  // Unary marginals minus gold indicators.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < t; ++j) {
      g.emissions(i, j) = std::exp(alpha(i, j) + beta(i, j) - log_z);
    }
    g.emissions(i, tags[i]) -= 1.0;
  }
  for (int j = 0; j < t; ++j) {
    g.start(j) = std::exp(alpha(0, j) + beta(0, j) - log_z);
    g.stop(j) = std::exp(alpha(n - 1, j) + beta(n - 1, j) - log_z);
  }
  g.start(tags[0]) -= 1.0;
  g.stop(tags[n - 1]) -= 1.0;

  // Pairwise marginals minus gold transition counts.
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    for (int a = 0; a < t; ++a) {
      for (int b = 0; b < t; ++b) {
        g.transitions(a, b) +=
            std::exp(alpha(i, a) + params.transitions(a, b) +
                     emissions(i + 1, b) + beta(i + 1, b) - log_z);
      }
    }
    g.transitions(tags[i], tags[i + 1]) -= 1.0;
  }
  return g;
}

std::vector<int> viterbi(const Params& params, const Eigen::MatrixXd& emissions) {
  check_inputs(params, emissions);
  const Eigen::Index n = emissions.rows();
  const int t = params.num_tags();

  // Backward max messages: best(i, j) = best achievable score of a suffix
  // starting at position i with tag j (emission at i included). Decoding
  // front to back and taking the lowest tag index that attains each maximum
  // yields the lexicographically smallest optimum; max-of-candidates makes
  // the later equality comparisons exact.
  Eigen::MatrixXd best(n, t);
  best.row(n - 1) = emissions.row(n - 1) + params.stop.transpose();
  for (Eigen::Index i = n - 2; i >= 0; --i) {
    for (int j = 0; j < t; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < t; ++k) {
        m = std::max(m, params.transitions(j, k) + best(i + 1, k));
      }
      best(i, j) = emissions(i, j) + m;
    }
  }

  std::vector<int> tags(static_cast<std::size_t>(n));
  double target = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < t; ++j) {
    target = std::max(target, params.start(j) + best(0, j));
  }
  for (int j = 0; j < t; ++j) {
    if (params.start(j) + best(0, j) == target) {
      tags[0] = j;
      break;
    }
  }
  for (Eigen::Index i = 1; i < n; ++i) {
    const int prev = tags[static_cast<std::size_t>(i - 1)];
    double needed = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < t; ++k) {
      needed = std::max(needed, params.transitions(prev, k) + best(i, k));
    }
    for (int k = 0; k < t; ++k) {
      if (params.transitions(prev, k) + best(i, k) == needed) {
        tags[static_cast<std::size_t>(i)] = k;
        break;
      }
    }
  }
  return tags;
}

double log_partition_masked(const Params& params,
                            const Eigen::MatrixXd& emissions,
                            const std::vector<bool>& mask) {
  const auto kept = mask_positions(emissions, mask);
  return log_partition(params, compress_rows(emissions, kept));
}

double nll_masked(const Params& params, const Eigen::MatrixXd& emissions,
                  const std::vector<int>& tags, const std::vector<bool>& mask) {
  const auto kept = mask_positions(emissions, mask);
  check_tags(tags, emissions.rows(), params.num_tags());
  return nll(params, compress_rows(emissions, kept), compress_tags(tags, kept));
}

Gradients nll_backward_masked(const Params& params,
                              const Eigen::MatrixXd& emissions,
                              const std::vector<int>& tags,
                              const std::vector<bool>& mask) {
  const auto kept = mask_positions(emissions, mask);
  check_tags(tags, emissions.rows(), params.num_tags());
  Gradients inner = nll_backward(params, compress_rows(emissions, kept),
                                 compress_tags(tags, kept));
  Gradients g;
  g.emissions = Eigen::MatrixXd::Zero(emissions.rows(), emissions.cols());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    g.emissions.row(kept[k]) = inner.emissions.row(static_cast<Eigen::Index>(k));
  }
  g.transitions = std::move(inner.transitions);
  g.start = std::move(inner.start);
  g.stop = std::move(inner.stop);
  return g;
}

std::vector<int> viterbi_masked(const Params& params,
                                const Eigen::MatrixXd& emissions,
                                const std::vector<bool>& mask, int fill_tag) {
  const auto kept = mask_positions(emissions, mask);
  const std::vector<int> inner = viterbi(params, compress_rows(emissions, kept));
  std::vector<int> out(mask.size(), fill_tag);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    out[static_cast<std::size_t>(kept[k])] = inner[k];
  }
  return out;
}

}  // namespace measpipe::crf
