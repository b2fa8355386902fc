#pragma once

#include <memory>
#include <vector>

#include "sosvae/tensor.hpp"

namespace sosvae {

// Reverse-mode tape. Forward values are computed eagerly as nodes are
// recorded; gradient() walks the tape backwards and emits the adjoint
// computation as ordinary nodes on the same tape. Because every backward
// rule is itself expressed in recorded ops, the result of gradient() can be
// differentiated again, which is what the second-order decoder update needs.
//
// Single-threaded per graph instance; tensors are immutable once recorded.

enum class Op {
  Constant,
  Leaf,
  Add,
  Sub,
  Neg,
  Mul,
  Div,
  Scale,       // k * a
  AddScalar,   // a + k
  Exp,
  Log,
  Softplus,
  Sigmoid,
  Relu,
  ReluMask,    // 1[a > 0]; derivative defined as zero (a.e. exact)
  Square,
  MatMul,
  Transpose,
  SumAll,
  ExpandScalar,   // scalar -> full tensor of shape (aux0, aux1)/rank aux2
  RowSum,         // (B,C) -> (B)
  ColSum,         // (B,C) -> (C)
  ExpandRows,     // (C), B copies -> (B,C)
  ExpandCols,     // (B), C copies -> (B,C)
  RowLogSumExp,   // (B,C) -> (B)
  GatherLabel,    // (B,C), labels -> (B): out_i = a[i, labels[i]]
  ScatterLabel,   // (B), labels, C -> (B,C)
  GatherCols,     // (B,p), idx -> (B,k)
  ScatterCols,    // (B,k), idx, p -> (B,p)
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Constant;
  int a = -1, b = -1;
  double k = 0.0;                                   // scalar payload
  std::shared_ptr<const std::vector<int>> idx;      // labels / column indices
  int aux0 = 0, aux1 = 0, aux2 = 0;                 // shape payloads
  Tensor value;
  bool requires_grad = false;
};

class Graph;

struct Var {
  Graph* g = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const { return g != nullptr && id >= 0; }
};

class Graph {
 public:
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[id]; }
  const Tensor& value(int id) const { return nodes_[id].value; }

  // Overwrite a leaf's value (graph must be replayed afterwards to refresh
  // dependents). Used by replay() tests and the finite-difference oracle.
  void set_leaf(int id, Tensor value);

  // Recompute every non-leaf node from the recorded operations, in tape
  // order. Replaying with identical leaf values reproduces all forward
  // values bit-identically.
  void replay();

  int record(Node n);

 private:
  std::vector<Node> nodes_;
  friend struct Var;
};

// Forward kernel shared by eager recording and replay().
Tensor eval_node(const Graph& g, const Node& n);

// --- op builders -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var relu_mask(Var a);
Var square(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var expand_rows(Var v, std::size_t rows);
Var expand_cols(Var v, std::size_t cols);
Var row_logsumexp(Var a);
Var gather_label(Var a, std::shared_ptr<const std::vector<int>> labels);
Var scatter_label(Var v, std::shared_ptr<const std::vector<int>> labels, std::size_t classes);
Var gather_cols(Var a, std::shared_ptr<const std::vector<int>> cols);
Var scatter_cols(Var a, std::shared_ptr<const std::vector<int>> cols, std::size_t width);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);

// X @ W^T + b broadcast over rows; the affine layer everywhere.
Var affine(Var x, Var w, Var b);
// Per-sample cross entropy: logsumexp(logits_i) - logits_i[label_i], length B.
Var softmax_cross_entropy(Var logits, std::shared_ptr<const std::vector<int>> labels);
Var log_softmax(Var logits);

// Reverse-mode gradients of a scalar loss. Returns one Var per wrt entry, in
// order; leaves with no path to the loss get explicit zero tensors. The
// returned Vars live on the same graph and may be composed further and
// differentiated again.
std::vector<Var> gradient(Var loss, const std::vector<Var>& wrt);

}  // namespace sosvae
