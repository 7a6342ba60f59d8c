#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace groupvae::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid until Tape::clear().
struct Value {
  Tape* tape = nullptr;
  int idx = -1;

  const Mat& val() const;
  const Mat& grad() const;
  double scalar() const;
};

// Reverse-mode tape over dense matrices. Operations append nodes; backward()
// walks the tape in reverse creation order and accumulates gradients into
// every node that (transitively) depends on a leaf.
//
// The graph is rebuilt per loss evaluation; clear() keeps node storage so the
// training loop does not reallocate every step.
class Tape {
 public:
  Value leaf(const Mat& v);       // gradient-tracked input (parameters)
  Value constant(const Mat& v);   // untracked input (data, noise, masks)
  Value constant_scalar(double v);

  // Backpropagate from a 1x1 node.
  void backward(Value root);

  void clear();

  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&, int)> backfn;  // accumulates into input grads
    int a = -1, b = -1;                      // input indices, if any
  };

  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Value emplace(Mat value, bool requires_grad, int a, int b,
                std::function<void(Tape&, int)> backfn);

 private:
  std::vector<Node> nodes_;
};

// --- primitive operations -------------------------------------------------

Value matmul(Value a, Value b);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  // elementwise
Value div(Value a, Value b);  // elementwise
Value add_rowvec(Value a, Value b);  // broadcast 1xD row onto BxD
Value scale(Value a, double c);
Value add_scalar(Value a, double c);
Value neg(Value a);
Value relu(Value a);
Value exp(Value a);
Value log(Value a);
Value square(Value a);
Value softplus(Value a);  // log(1 + e^x), numerically stable
Value clamp(Value a, double lo, double hi);  // gradient zero outside [lo, hi]
Value slice_cols(Value a, int begin, int len);
Value sum_all(Value a);  // -> 1x1

}  // namespace groupvae::ad
