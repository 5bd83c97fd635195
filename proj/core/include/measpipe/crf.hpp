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

#ifndef MEASPIPE_CRF_HPP_
#define MEASPIPE_CRF_HPP_

#include <vector>

#include <Eigen/Dense>

namespace measpipe::crf {

// Linear-chain CRF parameters. `transitions(a, b)` scores moving from tag a
// to tag b; `start` and `stop` score the first and last tag of a sequence.
struct Params {
  Eigen::MatrixXd transitions;
  Eigen::VectorXd start;
  Eigen::VectorXd stop;

  static Params zeros(int num_tags);
  int num_tags() const { return static_cast<int>(start.size()); }
};

struct Gradients {
  Eigen::MatrixXd emissions;  // same shape as the input emissions
  Eigen::MatrixXd transitions;
  Eigen::VectorXd start;
  Eigen::VectorXd stop;
};

// Unnormalized log score of one tag sequence. `emissions` is (n, t); `tags`
// holds n indices in [0, t).
double sequence_score(const Params& params, const Eigen::MatrixXd& emissions,
                      const std::vector<int>& tags);

// log of the sum of exp(sequence_score) over all t^n sequences, computed by
// the forward recursion in log space (double precision throughout).
double log_partition(const Params& params, const Eigen::MatrixXd& emissions);

// Negative log likelihood: log_partition - sequence_score(gold).
double nll(const Params& params, const Eigen::MatrixXd& emissions,
           const std::vector<int>& tags);

// Analytic gradients of nll via forward-backward: marginals minus gold
// indicator counts.
Gradients nll_backward(const Params& params, const Eigen::MatrixXd& emissions,
                       const std::vector<int>& tags);

// Highest-scoring tag sequence. Ties are broken deterministically toward
// the lexicographically smallest sequence (lowest tag index at the earliest
// differing position).
std::vector<int> viterbi(const Params& params, const Eigen::MatrixXd& emissions);

// Masked wrappers: positions with mask=false are compressed out, the op runs
// on the remaining subsequence, and results are re-expanded. Masked positions
// decode to `fill_tag` and receive zero emission gradient; masked rows of
// `tags` are ignored.
double log_partition_masked(const Params& params,
                            const Eigen::MatrixXd& emissions,
                            const std::vector<bool>& mask);
double nll_masked(const Params& params, const Eigen::MatrixXd& emissions,
                  const std::vector<int>& tags, const std::vector<bool>& mask);
Gradients nll_backward_masked(const Params& params,
                              const Eigen::MatrixXd& emissions,
                              const std::vector<int>& tags,
                              const std::vector<bool>& mask);
std::vector<int> viterbi_masked(const Params& params,
                                const Eigen::MatrixXd& emissions,
                                const std::vector<bool>& mask, int fill_tag);

}  // namespace measpipe::crf

#endif  // MEASPIPE_CRF_HPP_
