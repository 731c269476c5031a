#pragma once

#include <string>
#include <vector>

#include "rgrl/autonet/tape.hpp"
#include "rgrl/rng.hpp"

namespace rgrl::autonet {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Matrix init_uniform(Index rows, Index cols, Index fan_in, Rng& rng);

/// y = act(x W + b), W: in x out.
class DenseLayer {
 public:
  DenseLayer(const std::string& name, int in, int out, Activation act, Rng& rng);

  Var forward(Tape& tape, Var x);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  int in() const { return static_cast<int>(weight.value.rows()); }
  int out() const { return static_cast<int>(weight.value.cols()); }

  Parameter weight;
  Parameter bias;
  Activation activation;
};

/// Graph convolution act(P H W) with no bias; P is applied per N-row block so
/// a batch of graphs can be stacked along the rows of H.
class GcnLayer {
 public:
  GcnLayer(const std::string& name, int in, int out, Activation act, Rng& rng);

  Var forward(Tape& tape, const Matrix& propagation, Var h);
  std::vector<Parameter*> parameters() { return {&weight}; }

  Parameter weight;
  Activation activation;
};

std::size_t param_count(const std::vector<Parameter*>& params);

template <typename Net>
  requires requires(Net& n) { n.parameters(); }
std::size_t param_count(Net& net) {
  return param_count(net.parameters());
}

/// target <- nu * online + (1 - nu) * target, parameter by parameter.
void soft_update(const std::vector<Parameter*>& target, const std::vector<Parameter*>& online, double nu);

}  // namespace rgrl::autonet
