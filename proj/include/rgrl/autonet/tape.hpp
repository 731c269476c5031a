#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgrl/matrix.hpp"

namespace rgrl::autonet {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A trainable tensor: values plus an accumulated gradient of the same shape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Activation { identity, relu, tanh, sigmoid };

/// Contiguous run of columns normalized together by group_softmax.
struct Group {
  int offset = 0;
  int length = 0;
};
/// Row r uses groups[r % groups.size()]; columns outside every group map to 0.
using RowGroups = std::vector<std::vector<Group>>;

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Records 2-D matrix operations for one reverse-mode pass.
///
/// Usage: build the forward graph, call backward() once on a 1x1 node, read
/// parameter gradients from the Parameters, then reset() before reuse. A
/// second backward() without reset() throws ContractError.
class Tape {
 public:
  Var constant(Matrix value);
  /// Records a read of `p`; gradients flow into p.grad on backward().
  Var parameter(Parameter& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds a 1 x C row to every row of `a`.
  Var add_row(Var a, Var bias);
  Var scale(Var a, double s);
  Var add_constant(Var a, const Matrix& c);
  Var activate(Var a, Activation act);
  Var group_softmax(Var a, const RowGroups& groups);
  /// Applies the N x N operator to each consecutive N-row block of `h`.
  Var propagate(const Matrix& op, Var h);
  Var concat_cols(Var a, Var b);
  Var reshape(Var a, Index rows, Index cols);
  /// Mean over all entries, 1 x 1.
  Var mean(Var a);
  /// mean((pred - target)^2), 1 x 1.
  Var mse(Var pred, const Matrix& target);

  void backward(Var loss);
  void reset();

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() loss w.r.t. this node (zero if unreached).
  Matrix grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    std::function<void(Tape&, const Matrix&)> back;
  };

  Var push(Matrix value, std::function<void(Tape&, const Matrix&)> back);
  void accumulate(std::size_t id, const Matrix& g);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace rgrl::autonet
