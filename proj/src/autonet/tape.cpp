#include "rgrl/autonet/tape.hpp"

#include <cmath>
#include <sstream>

namespace rgrl::autonet {

namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&, const Matrix&)> back) {
  if (backward_done_) throw ContractError("Tape: recording after backward(); call reset() first");
  nodes_.push_back({std::move(value), Matrix(), false, std::move(back)});
  return {nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  auto& n = nodes_[id];
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_.at(v.id);
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(Parameter& p) {
  Parameter* ptr = &p;
  return push(p.value, [ptr](Tape&, const Matrix& g) { ptr->grad += g; });
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) mismatch("matmul", av, bv);
  Matrix out = av * bv;
  return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g * t.value(b).transpose());
    t.accumulate(b.id, t.value(a).transpose() * g);
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) mismatch("add", av, bv);
  return push(av + bv, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var Tape::add_row(Var a, Var bias) {
  const Matrix& av = value(a);
  const Matrix& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) mismatch("add_row", av, bv);
  Matrix out = av.rowwise() + bv.row(0);
  return push(std::move(out), [a, bias](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(bias.id, g.colwise().sum());
  });
}

Var Tape::scale(Var a, double s) {
  return push(value(a) * s, [a, s](Tape& t, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var Tape::add_constant(Var a, const Matrix& c) {
  const Matrix& av = value(a);
  if (av.rows() != c.rows() || av.cols() != c.cols()) mismatch("add_constant", av, c);
  return push(av + c, [a](Tape& t, const Matrix& g) { t.accumulate(a.id, g); });
}

Var Tape::activate(Var a, Activation act) {
  const Matrix& x = value(a);
  switch (act) {
    case Activation::identity:
      return push(x, [a](Tape& t, const Matrix& g) { t.accumulate(a.id, g); });
    case Activation::relu: {
      Matrix y = x.cwiseMax(0.0);
      return push(std::move(y), [a](Tape& t, const Matrix& g) {
        const Matrix& xv = t.value(a);
        t.accumulate(a.id, (xv.array() > 0.0).select(g.array(), 0.0).matrix());
      });
    }
    case Activation::tanh: {
      Matrix y = x.array().tanh().matrix();
      const std::size_t self = nodes_.size();
      return push(std::move(y), [a, self](Tape& t, const Matrix& g) {
        const Matrix& yv = t.nodes_[self].value;
        t.accumulate(a.id, (g.array() * (1.0 - yv.array().square())).matrix());
      });
    }
    case Activation::sigmoid: {
      Matrix y = (1.0 / (1.0 + (-x.array()).exp())).matrix();
      const std::size_t self = nodes_.size();
      return push(std::move(y), [a, self](Tape& t, const Matrix& g) {
        const Matrix& yv = t.nodes_[self].value;
        t.accumulate(a.id, (g.array() * yv.array() * (1.0 - yv.array())).matrix());
      });
    }
  }
  throw std::logic_error("Tape::activate: unknown activation");
}

Var Tape::group_softmax(Var a, const RowGroups& groups) {
  const Matrix& x = value(a);
  if (groups.empty()) throw DimensionError("group_softmax: no row groups given");
  for (const auto& row : groups)
    for (const auto& grp : row)
      if (grp.offset < 0 || grp.length < 1 || grp.offset + grp.length > x.cols())
        throw DimensionError("group_softmax: group exceeds the column range");
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (const auto& grp : groups[static_cast<std::size_t>(r) % groups.size()]) {
      double mx = x(r, grp.offset);
      for (int k = 1; k < grp.length; ++k) mx = std::max(mx, x(r, grp.offset + k));
      double sum = 0.0;
      for (int k = 0; k < grp.length; ++k) {
        const double e = std::exp(x(r, grp.offset + k) - mx);
        y(r, grp.offset + k) = e;
        sum += e;
      }
      for (int k = 0; k < grp.length; ++k) y(r, grp.offset + k) /= sum;
    }
  }
  const std::size_t self = nodes_.size();
  return push(std::move(y), [a, self, groups](Tape& t, const Matrix& g) {
    const Matrix& yv = t.nodes_[self].value;
    Matrix dx = Matrix::Zero(yv.rows(), yv.cols());
    for (Index r = 0; r < yv.rows(); ++r) {
      for (const auto& grp : groups[static_cast<std::size_t>(r) % groups.size()]) {
        double dot = 0.0;
        for (int k = 0; k < grp.length; ++k) dot += yv(r, grp.offset + k) * g(r, grp.offset + k);
        for (int k = 0; k < grp.length; ++k)
          dx(r, grp.offset + k) = yv(r, grp.offset + k) * (g(r, grp.offset + k) - dot);
      }
    }
    t.accumulate(a.id, dx);
  });
}

Var Tape::propagate(const Matrix& op, Var h) {
  const Matrix& hv = value(h);
  const Index n = op.rows();
  if (op.cols() != n || n == 0 || hv.rows() % n != 0) mismatch("propagate", op, hv);
  Matrix out(hv.rows(), hv.cols());
  for (Index b = 0; b < hv.rows(); b += n) out.middleRows(b, n).noalias() = op * hv.middleRows(b, n);
  return push(std::move(out), [op, h, n](Tape& t, const Matrix& g) {
    Matrix dh(g.rows(), g.cols());
    for (Index b = 0; b < g.rows(); b += n) dh.middleRows(b, n).noalias() = op.transpose() * g.middleRows(b, n);
    t.accumulate(h.id, dh);
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.rows() != bv.rows()) mismatch("concat_cols", av, bv);
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const Index ac = av.cols();
  const Index bc = bv.cols();
  return push(std::move(out), [a, b, ac, bc](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.leftCols(ac));
    t.accumulate(b.id, g.rightCols(bc));
  });
}

Var Tape::reshape(Var a, Index rows, Index cols) {
  const Matrix& av = value(a);
  if (rows * cols != av.size())
    throw DimensionError("reshape: " + shape(av) + " cannot become " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
  const Index r0 = av.rows();
  const Index c0 = av.cols();
  return push(std::move(out), [a, r0, c0](Tape& t, const Matrix& g) {
    t.accumulate(a.id, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var Tape::mean(Var a) {
  const Matrix& av = value(a);
  if (av.size() == 0) throw DimensionError("mean: empty input");
  Matrix out(1, 1);
  out(0, 0) = av.mean();
  const auto count = static_cast<double>(av.size());
  const Index r = av.rows();
  const Index c = av.cols();
  return push(std::move(out), [a, count, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a.id, Matrix::Constant(r, c, g(0, 0) / count));
  });
}

Var Tape::mse(Var pred, const Matrix& target) {
  const Matrix& pv = value(pred);
  if (pv.rows() != target.rows() || pv.cols() != target.cols()) mismatch("mse", pv, target);
  if (pv.size() == 0) throw DimensionError("mse: empty input");
  Matrix diff = pv - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / static_cast<double>(diff.size());
  const auto count = static_cast<double>(diff.size());
  return push(std::move(out), [pred, diff, count](Tape& t, const Matrix& g) {
    t.accumulate(pred.id, diff * (2.0 * g(0, 0) / count));
  });
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("Tape::backward: already called; reset() the tape first");
  const auto& l = nodes_.at(loss.id);
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw ContractError("Tape::backward: loss must be a 1x1 scalar node");
  backward_done_ = true;
  for (auto& n : nodes_) n.has_grad = false;
  accumulate(loss.id, Matrix::Ones(1, 1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.has_grad || !n.back) continue;
    n.back(*this, n.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace rgrl::autonet
