#include "rgrl/autonet/layers.hpp"

#include <cmath>

namespace rgrl::autonet {

Matrix init_uniform(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

DenseLayer::DenseLayer(const std::string& name, int in, int out, Activation act, Rng& rng)
    : weight(name + ".weight", init_uniform(in, out, in, rng)),
      bias(name + ".bias", init_uniform(1, out, in, rng)),
      activation(act) {}

Var DenseLayer::forward(Tape& tape, Var x) {
  if (tape.value(x).cols() != weight.value.rows())
    throw DimensionError(weight.name + ": expected " + std::to_string(weight.value.rows()) +
                         " input columns, got " + std::to_string(tape.value(x).cols()));
  Var z = tape.add_row(tape.matmul(x, tape.parameter(weight)), tape.parameter(bias));
  return tape.activate(z, activation);
}

GcnLayer::GcnLayer(const std::string& name, int in, int out, Activation act, Rng& rng)
    : weight(name + ".weight", init_uniform(in, out, in, rng)), activation(act) {}

Var GcnLayer::forward(Tape& tape, const Matrix& propagation, Var h) {
  if (tape.value(h).cols() != weight.value.rows())
    throw DimensionError(weight.name + ": expected " + std::to_string(weight.value.rows()) +
                         " feature columns, got " + std::to_string(tape.value(h).cols()));
  Var ph = tape.propagate(propagation, h);
  return tape.activate(tape.matmul(ph, tape.parameter(weight)), activation);
}

std::size_t param_count(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

void soft_update(const std::vector<Parameter*>& target, const std::vector<Parameter*>& online, double nu) {
  if (target.size() != online.size()) throw DimensionError("soft_update: parameter lists differ");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target[i]->value;
    const auto& o = online[i]->value;
    if (t.rows() != o.rows() || t.cols() != o.cols())
      throw DimensionError("soft_update: shape mismatch at " + target[i]->name);
    if (nu == 1.0) t = o;
    else if (nu != 0.0) t = nu * o + (1.0 - nu) * t;
  }
}

}  // namespace rgrl::autonet
