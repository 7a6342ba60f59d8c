#include "groupvae/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace groupvae::ad {

namespace {

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow for large |x|.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

const Mat& Value::val() const { return tape->node(idx).value; }
const Mat& Value::grad() const { return tape->node(idx).grad; }
double Value::scalar() const {
  const Mat& v = val();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("Value::scalar: node is not 1x1");
  }
  return v(0, 0);
}

Value Tape::emplace(Mat value, bool requires_grad, int a, int b,
                    std::function<void(Tape&, int)> backfn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.a = a;
  n.b = b;
  n.backfn = std::move(backfn);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(const Mat& v) { return emplace(v, true, -1, -1, nullptr); }

Value Tape::constant(const Mat& v) { return emplace(v, false, -1, -1, nullptr); }

Value Tape::constant_scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(m);
}

void Tape::backward(Value root) {
  if (root.tape != this) {
    throw std::invalid_argument("Tape::backward: value from another tape");
  }
  const Mat& rv = nodes_[root.idx].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw std::invalid_argument("Tape::backward: root must be 1x1");
  }
  for (int i = 0; i <= root.idx; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
  }
  if (!nodes_[root.idx].requires_grad) return;  // loss independent of leaves
  nodes_[root.idx].grad(0, 0) = 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backfn) n.backfn(*this, i);
  }
}

void Tape::clear() { nodes_.clear(); }

namespace {

// Accumulate g into the gradient of node i, skipping constants.
inline void accum(Tape& t, int i, const Mat& g) {
  Tape::Node& n = t.node(i);
  if (n.requires_grad) n.grad += g;
}

inline bool needs_grad(const Tape& t, int i) {
  return t.node(i).requires_grad;
}

inline Value binary(Value a, Value b, Mat value,
                    std::function<void(Tape&, int)> backfn) {
  if (a.tape != b.tape) {
    throw std::invalid_argument("autodiff: operands from different tapes");
  }
  const bool rg = needs_grad(*a.tape, a.idx) || needs_grad(*b.tape, b.idx);
  return a.tape->emplace(std::move(value), rg, a.idx, b.idx,
                         rg ? std::move(backfn) : nullptr);
}

inline Value unary(Value a, Mat value, std::function<void(Tape&, int)> backfn) {
  const bool rg = needs_grad(*a.tape, a.idx);
  return a.tape->emplace(std::move(value), rg, a.idx, -1,
                         rg ? std::move(backfn) : nullptr);
}

}  // namespace

Value matmul(Value a, Value b) {
  const Mat& av = a.val();
  const Mat& bv = b.val();
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch");
  }
  return binary(a, b, av * bv, [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    const Mat& g = n.grad;
    if (needs_grad(t, n.a)) t.node(n.a).grad.noalias() += g * t.node(n.b).value.transpose();
    if (needs_grad(t, n.b)) t.node(n.b).grad.noalias() += t.node(n.a).value.transpose() * g;
  });
}

Value add(Value a, Value b) {
  check_same_shape(a.val(), b.val(), "add");
  return binary(a, b, a.val() + b.val(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad);
    accum(t, n.b, n.grad);
  });
}

Value sub(Value a, Value b) {
  check_same_shape(a.val(), b.val(), "sub");
  return binary(a, b, a.val() - b.val(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad);
    accum(t, n.b, -n.grad);
  });
}

Value mul(Value a, Value b) {
  check_same_shape(a.val(), b.val(), "mul");
  return binary(a, b, a.val().cwiseProduct(b.val()), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad.cwiseProduct(t.node(n.b).value));
    accum(t, n.b, n.grad.cwiseProduct(t.node(n.a).value));
  });
}

Value div(Value a, Value b) {
  check_same_shape(a.val(), b.val(), "div");
  return binary(a, b, a.val().cwiseQuotient(b.val()), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    const Mat& bv = t.node(n.b).value;
    accum(t, n.a, n.grad.cwiseQuotient(bv));
    accum(t, n.b, -n.grad.cwiseProduct(n.value).cwiseQuotient(bv));
  });
}

Value add_rowvec(Value a, Value b) {
  const Mat& av = a.val();
  const Mat& bv = b.val();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw std::invalid_argument("add_rowvec: expected 1 x cols(a) row vector");
  }
  Mat out = av;
  out.rowwise() += bv.row(0);
  return binary(a, b, std::move(out), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad);
    accum(t, n.b, n.grad.colwise().sum());
  });
}

Value scale(Value a, double c) {
  return unary(a, a.val() * c, [c](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad * c);
  });
}

Value add_scalar(Value a, double c) {
  return unary(a, (a.val().array() + c).matrix(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad);
  });
}

Value neg(Value a) {
  return unary(a, -a.val(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, -n.grad);
  });
}

Value relu(Value a) {
  return unary(a, a.val().cwiseMax(0.0), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    const Mat mask = (t.node(n.a).value.array() > 0.0).cast<double>().matrix();
    accum(t, n.a, n.grad.cwiseProduct(mask));
  });
}

Value exp(Value a) {
  return unary(a, a.val().array().exp().matrix(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad.cwiseProduct(n.value));
  });
}

Value log(Value a) {
  return unary(a, a.val().array().log().matrix(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, n.grad.cwiseQuotient(t.node(n.a).value));
  });
}

Value square(Value a) {
  return unary(a, a.val().array().square().matrix(), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    accum(t, n.a, 2.0 * n.grad.cwiseProduct(t.node(n.a).value));
  });
}

Value softplus(Value a) {
  return unary(a, a.val().unaryExpr(&softplus_scalar), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    const Mat s = t.node(n.a).value.unaryExpr(&sigmoid_scalar);
    accum(t, n.a, n.grad.cwiseProduct(s));
  });
}

Value clamp(Value a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
  return unary(a, a.val().cwiseMax(lo).cwiseMin(hi), [lo, hi](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    const Eigen::ArrayXXd x = t.node(n.a).value.array();
    const Mat mask = ((x >= lo) && (x <= hi)).cast<double>().matrix();
    accum(t, n.a, n.grad.cwiseProduct(mask));
  });
}

Value slice_cols(Value a, int begin, int len) {
  const Mat& av = a.val();
  if (begin < 0 || len < 0 || begin + len > av.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  return unary(a, av.middleCols(begin, len), [begin, len](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    Tape::Node& in = t.node(n.a);
    if (in.requires_grad) in.grad.middleCols(begin, len) += n.grad;
  });
}

Value sum_all(Value a) {
  Mat s(1, 1);
  s(0, 0) = a.val().sum();
  return unary(a, std::move(s), [](Tape& t, int i) {
    Tape::Node& n = t.node(i);
    Tape::Node& in = t.node(n.a);
    if (in.requires_grad) in.grad.array() += n.grad(0, 0);
  });
}

}  // namespace groupvae::ad
