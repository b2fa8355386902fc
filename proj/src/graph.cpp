#include "sosvae/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sosvae {

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MatMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double stable_softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

[[noreturn]] void shape_error(const char* what, const Tensor& a) {
  throw std::invalid_argument(std::string(what) + ": bad shape " + a.shape_str());
}

[[noreturn]] void shape_error(const char* what, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

Tensor map_unary(const Tensor& a, double (*f)(double)) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Neg: return "neg";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::ReluMask: return "relu_mask";
    case Op::Square: return "square";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::SumAll: return "sum";
    case Op::ExpandScalar: return "expand_scalar";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::ExpandRows: return "expand_rows";
    case Op::ExpandCols: return "expand_cols";
    case Op::RowLogSumExp: return "row_logsumexp";
    case Op::GatherLabel: return "gather_label";
    case Op::ScatterLabel: return "scatter_label";
    case Op::GatherCols: return "gather_cols";
    case Op::ScatterCols: return "scatter_cols";
  }
  return "?";
}

const Tensor& Var::value() const { return g->value(id); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var{this, record(std::move(n))};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  n.requires_grad = false;
  return Var{this, record(std::move(n))};
}

int Graph::record(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

void Graph::set_leaf(int id, Tensor value) {
  Node& n = nodes_[id];
  if (n.op != Op::Leaf && n.op != Op::Constant)
    throw std::invalid_argument("set_leaf: node is not a leaf");
  if (!n.value.same_shape(value)) shape_error("set_leaf", n.value, value);
  n.value = std::move(value);
}

void Graph::replay() {
  for (Node& n : nodes_) {
    if (n.op == Op::Leaf || n.op == Op::Constant) continue;
    n.value = eval_node(*this, n);
  }
}

Tensor eval_node(const Graph& g, const Node& n) {
  auto A = [&]() -> const Tensor& { return g.value(n.a); };
  auto B = [&]() -> const Tensor& { return g.value(n.b); };

  switch (n.op) {
    case Op::Constant:
    case Op::Leaf:
      return n.value;

    case Op::Add: {
      if (!A().same_shape(B())) shape_error("add", A(), B());
      Tensor out = A();
      const auto& b = B().data();
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b[i];
      return out;
    }
    case Op::Sub: {
      if (!A().same_shape(B())) shape_error("sub", A(), B());
      Tensor out = A();
      const auto& b = B().data();
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b[i];
      return out;
    }
    case Op::Neg: {
      Tensor out = A();
      for (double& v : out.data()) v = -v;
      return out;
    }
    case Op::Mul: {
      if (!A().same_shape(B())) shape_error("mul", A(), B());
      Tensor out = A();
      const auto& b = B().data();
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b[i];
      return out;
    }
    case Op::Div: {
      if (!A().same_shape(B())) shape_error("div", A(), B());
      Tensor out = A();
      const auto& b = B().data();
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] /= b[i];
      return out;
    }
    case Op::Scale: {
      Tensor out = A();
      for (double& v : out.data()) v *= n.k;
      return out;
    }
    case Op::AddScalar: {
      Tensor out = A();
      for (double& v : out.data()) v += n.k;
      return out;
    }
    case Op::Exp:
      return map_unary(A(), [](double v) { return std::exp(v); });
    case Op::Log: {
      Tensor out = A();
      for (double& v : out.data()) {
        if (v <= 0.0) throw std::domain_error("log: non-positive input");
        v = std::log(v);
      }
      return out;
    }
    case Op::Softplus:
      return map_unary(A(), [](double v) { return stable_softplus(v); });
    case Op::Sigmoid:
      return map_unary(A(), [](double v) { return stable_sigmoid(v); });
    case Op::Relu:
      return map_unary(A(), [](double v) { return v > 0 ? v : 0.0; });
    case Op::ReluMask:
      return map_unary(A(), [](double v) { return v > 0 ? 1.0 : 0.0; });
    case Op::Square:
      return map_unary(A(), [](double v) { return v * v; });

    case Op::MatMul: {
      const Tensor& a = A();
      const Tensor& b = B();
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
      Tensor out = Tensor::zeros({a.rows(), b.cols()});
      MatMap ma(a.data().data(), a.rows(), a.cols());
      MatMap mb(b.data().data(), b.rows(), b.cols());
      MatMapMut mo(out.data().data(), out.rows(), out.cols());
      mo.noalias() = ma * mb;
      return out;
    }
    case Op::Transpose: {
      const Tensor& a = A();
      if (a.rank() != 2) shape_error("transpose", a);
      Tensor out = Tensor::zeros({a.cols(), a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      return out;
    }
    case Op::SumAll: {
      double s = 0.0;
      for (double v : A().data()) s += v;
      return Tensor::scalar(s);
    }
    case Op::ExpandScalar: {
      double v = A().scalar_value();
      if (n.aux2 == 0) return Tensor::scalar(v);
      if (n.aux2 == 1) return Tensor::full({static_cast<std::size_t>(n.aux0)}, v);
      return Tensor::full({static_cast<std::size_t>(n.aux0), static_cast<std::size_t>(n.aux1)}, v);
    }
    case Op::RowSum: {
      const Tensor& a = A();
      if (a.rank() != 2) shape_error("row_sum", a);
      Tensor out = Tensor::zeros({a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a.at(i, j);
        out.at(i) = s;
      }
      return out;
    }
    case Op::ColSum: {
      const Tensor& a = A();
      if (a.rank() != 2) shape_error("col_sum", a);
      Tensor out = Tensor::zeros({a.cols()});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j) += a.at(i, j);
      return out;
    }
    case Op::ExpandRows: {
      const Tensor& v = A();
      if (v.rank() != 1) shape_error("expand_rows", v);
      std::size_t rows = static_cast<std::size_t>(n.aux0);
      Tensor out = Tensor::zeros({rows, v.size()});
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < v.size(); ++j) out.at(i, j) = v.at(j);
      return out;
    }
    case Op::ExpandCols: {
      const Tensor& v = A();
      if (v.rank() != 1) shape_error("expand_cols", v);
      std::size_t cols = static_cast<std::size_t>(n.aux0);
      Tensor out = Tensor::zeros({v.size(), cols});
      for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = v.at(i);
      return out;
    }
    case Op::RowLogSumExp: {
      const Tensor& a = A();
      if (a.rank() != 2) shape_error("row_logsumexp", a);
      Tensor out = Tensor::zeros({a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double m = a.at(i, 0);
        for (std::size_t j = 1; j < a.cols(); ++j) m = std::max(m, a.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += std::exp(a.at(i, j) - m);
        out.at(i) = m + std::log(s);
      }
      return out;
    }
    case Op::GatherLabel: {
      const Tensor& a = A();
      if (a.rank() != 2 || n.idx->size() != a.rows()) shape_error("gather_label", a);
      Tensor out = Tensor::zeros({a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        int c = (*n.idx)[i];
        if (c < 0 || static_cast<std::size_t>(c) >= a.cols())
          throw std::invalid_argument("gather_label: label out of range");
        out.at(i) = a.at(i, static_cast<std::size_t>(c));
      }
      return out;
    }
    case Op::ScatterLabel: {
      const Tensor& v = A();
      if (v.rank() != 1 || n.idx->size() != v.size()) shape_error("scatter_label", v);
      std::size_t classes = static_cast<std::size_t>(n.aux0);
      Tensor out = Tensor::zeros({v.size(), classes});
      for (std::size_t i = 0; i < v.size(); ++i)
        out.at(i, static_cast<std::size_t>((*n.idx)[i])) = v.at(i);
      return out;
    }
    case Op::GatherCols: {
      const Tensor& a = A();
      if (a.rank() != 2) shape_error("gather_cols", a);
      const auto& idx = *n.idx;
      Tensor out = Tensor::zeros({a.rows(), idx.size()});
      for (std::size_t j = 0; j < idx.size(); ++j)
        if (idx[j] < 0 || static_cast<std::size_t>(idx[j]) >= a.cols())
          throw std::invalid_argument("gather_cols: index out of range");
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j)
          out.at(i, j) = a.at(i, static_cast<std::size_t>(idx[j]));
      return out;
    }
    case Op::ScatterCols: {
      const Tensor& a = A();
      if (a.rank() != 2) shape_error("scatter_cols", a);
      const auto& idx = *n.idx;
      if (idx.size() != a.cols()) shape_error("scatter_cols", a);
      std::size_t width = static_cast<std::size_t>(n.aux0);
      Tensor out = Tensor::zeros({a.rows(), width});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j)
          out.at(i, static_cast<std::size_t>(idx[j])) = a.at(i, j);
      return out;
    }
  }
  throw std::logic_error("eval_node: unhandled op");
}

namespace {

Var record_op(Graph* g, Op op, int a, int b, double k = 0.0,
              std::shared_ptr<const std::vector<int>> idx = nullptr, int aux0 = 0, int aux1 = 0,
              int aux2 = 0) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.k = k;
  n.idx = std::move(idx);
  n.aux0 = aux0;
  n.aux1 = aux1;
  n.aux2 = aux2;
  n.requires_grad = (a >= 0 && g->node(a).requires_grad) || (b >= 0 && g->node(b).requires_grad);
  n.value = eval_node(*g, n);
  return Var{g, g->record(std::move(n))};
}

Graph* same_graph(Var a, Var b) {
  if (a.g != b.g) throw std::invalid_argument("op on vars from different graphs");
  return a.g;
}

}  // namespace

Var add(Var a, Var b) { return record_op(same_graph(a, b), Op::Add, a.id, b.id); }
Var sub(Var a, Var b) { return record_op(same_graph(a, b), Op::Sub, a.id, b.id); }
Var neg(Var a) { return record_op(a.g, Op::Neg, a.id, -1); }
Var mul(Var a, Var b) { return record_op(same_graph(a, b), Op::Mul, a.id, b.id); }
Var div(Var a, Var b) { return record_op(same_graph(a, b), Op::Div, a.id, b.id); }
Var scale(Var a, double k) { return record_op(a.g, Op::Scale, a.id, -1, k); }
Var add_scalar(Var a, double k) { return record_op(a.g, Op::AddScalar, a.id, -1, k); }
Var exp(Var a) { return record_op(a.g, Op::Exp, a.id, -1); }
Var log(Var a) { return record_op(a.g, Op::Log, a.id, -1); }
Var softplus(Var a) { return record_op(a.g, Op::Softplus, a.id, -1); }
Var sigmoid(Var a) { return record_op(a.g, Op::Sigmoid, a.id, -1); }
Var relu(Var a) { return record_op(a.g, Op::Relu, a.id, -1); }
Var relu_mask(Var a) { return record_op(a.g, Op::ReluMask, a.id, -1); }
Var square(Var a) { return record_op(a.g, Op::Square, a.id, -1); }
Var matmul(Var a, Var b) { return record_op(same_graph(a, b), Op::MatMul, a.id, b.id); }
Var transpose(Var a) { return record_op(a.g, Op::Transpose, a.id, -1); }
Var sum(Var a) { return record_op(a.g, Op::SumAll, a.id, -1); }

Var mean(Var a) {
  std::size_t n = a.value().size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) { return record_op(a.g, Op::RowSum, a.id, -1); }
Var col_sum(Var a) { return record_op(a.g, Op::ColSum, a.id, -1); }

Var expand_rows(Var v, std::size_t rows) {
  return record_op(v.g, Op::ExpandRows, v.id, -1, 0.0, nullptr, static_cast<int>(rows));
}
Var expand_cols(Var v, std::size_t cols) {
  return record_op(v.g, Op::ExpandCols, v.id, -1, 0.0, nullptr, static_cast<int>(cols));
}
Var row_logsumexp(Var a) { return record_op(a.g, Op::RowLogSumExp, a.id, -1); }

Var gather_label(Var a, std::shared_ptr<const std::vector<int>> labels) {
  return record_op(a.g, Op::GatherLabel, a.id, -1, 0.0, std::move(labels));
}
Var scatter_label(Var v, std::shared_ptr<const std::vector<int>> labels, std::size_t classes) {
  return record_op(v.g, Op::ScatterLabel, v.id, -1, 0.0, std::move(labels),
                   static_cast<int>(classes));
}
Var gather_cols(Var a, std::shared_ptr<const std::vector<int>> cols) {
  return record_op(a.g, Op::GatherCols, a.id, -1, 0.0, std::move(cols));
}
Var scatter_cols(Var a, std::shared_ptr<const std::vector<int>> cols, std::size_t width) {
  return record_op(a.g, Op::ScatterCols, a.id, -1, 0.0, std::move(cols), static_cast<int>(width));
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator-(Var a) { return neg(a); }

Var affine(Var x, Var w, Var b) {
  Var z = matmul(x, transpose(w));
  return add(z, expand_rows(b, z.value().rows()));
}

Var softmax_cross_entropy(Var logits, std::shared_ptr<const std::vector<int>> labels) {
  return sub(row_logsumexp(logits), gather_label(logits, std::move(labels)));
}

Var log_softmax(Var logits) {
  return sub(logits, expand_cols(row_logsumexp(logits), logits.value().cols()));
}

namespace {

Var expand_scalar_like(Var s, const Tensor& like) {
  int rank = static_cast<int>(like.rank());
  int d0 = rank >= 1 ? static_cast<int>(like.shape()[0]) : 0;
  int d1 = rank == 2 ? static_cast<int>(like.shape()[1]) : 0;
  return record_op(s.g, Op::ExpandScalar, s.id, -1, 0.0, nullptr, d0, d1, rank);
}

// Emit adjoint contributions of node `id` given its adjoint `g_out`.
// `acc(input, v)` accumulates v into the adjoint of `input`.
template <typename Acc>
void backprop_node(Graph& g, int id, Var g_out, Acc&& acc) {
  const Node nd = g.node(id);  // copy: recording may reallocate the tape
  Var a{&g, nd.a}, b{&g, nd.b};
  const bool need_a = nd.a >= 0 && g.node(nd.a).requires_grad;
  const bool need_b = nd.b >= 0 && g.node(nd.b).requires_grad;
  Var out{&g, id};

  switch (nd.op) {
    case Op::Constant:
    case Op::Leaf:
      return;
    case Op::Add:
      if (need_a) acc(nd.a, g_out);
      if (need_b) acc(nd.b, g_out);
      return;
    case Op::Sub:
      if (need_a) acc(nd.a, g_out);
      if (need_b) acc(nd.b, neg(g_out));
      return;
    case Op::Neg:
      if (need_a) acc(nd.a, neg(g_out));
      return;
    case Op::Mul:
      if (need_a) acc(nd.a, mul(g_out, b));
      if (need_b) acc(nd.b, mul(g_out, a));
      return;
    case Op::Div:
      if (need_a) acc(nd.a, div(g_out, b));
      if (need_b) acc(nd.b, neg(div(mul(g_out, out), b)));
      return;
    case Op::Scale:
      if (need_a) acc(nd.a, scale(g_out, nd.k));
      return;
    case Op::AddScalar:
      if (need_a) acc(nd.a, g_out);
      return;
    case Op::Exp:
      if (need_a) acc(nd.a, mul(g_out, out));
      return;
    case Op::Log:
      if (need_a) acc(nd.a, div(g_out, a));
      return;
    case Op::Softplus:
      if (need_a) acc(nd.a, mul(g_out, sigmoid(a)));
      return;
    case Op::Sigmoid:
      // y(1-y)
      if (need_a) acc(nd.a, mul(g_out, mul(out, add_scalar(neg(out), 1.0))));
      return;
    case Op::Relu:
      if (need_a) acc(nd.a, mul(g_out, relu_mask(a)));
      return;
    case Op::ReluMask:
      return;  // derivative zero almost everywhere
    case Op::Square:
      if (need_a) acc(nd.a, mul(g_out, scale(a, 2.0)));
      return;
    case Op::MatMul:
      if (need_a) acc(nd.a, matmul(g_out, transpose(b)));
      if (need_b) acc(nd.b, matmul(transpose(a), g_out));
      return;
    case Op::Transpose:
      if (need_a) acc(nd.a, transpose(g_out));
      return;
    case Op::SumAll:
      if (need_a) acc(nd.a, expand_scalar_like(g_out, a.value()));
      return;
    case Op::ExpandScalar:
      if (need_a) acc(nd.a, sum(g_out));
      return;
    case Op::RowSum:
      if (need_a) acc(nd.a, expand_cols(g_out, a.value().cols()));
      return;
    case Op::ColSum:
      if (need_a) acc(nd.a, expand_rows(g_out, a.value().rows()));
      return;
    case Op::ExpandRows:
      if (need_a) acc(nd.a, col_sum(g_out));
      return;
    case Op::ExpandCols:
      if (need_a) acc(nd.a, row_sum(g_out));
      return;
    case Op::RowLogSumExp:
      // d lse / d a = softmax(a) row-wise
      if (need_a) {
        Var soft = exp(sub(a, expand_cols(out, a.value().cols())));
        acc(nd.a, mul(expand_cols(g_out, a.value().cols()), soft));
      }
      return;
    case Op::GatherLabel:
      if (need_a) acc(nd.a, scatter_label(g_out, nd.idx, a.value().cols()));
      return;
    case Op::ScatterLabel:
      if (need_a) acc(nd.a, gather_label(g_out, nd.idx));
      return;
    case Op::GatherCols:
      if (need_a) acc(nd.a, scatter_cols(g_out, nd.idx, a.value().cols()));
      return;
    case Op::ScatterCols:
      if (need_a) acc(nd.a, gather_cols(g_out, nd.idx));
      return;
  }
  throw std::logic_error(std::string("gradient: no rule for op ") + op_name(nd.op));
}

}  // namespace

std::vector<Var> gradient(Var loss, const std::vector<Var>& wrt) {
  Graph& g = *loss.g;
  if (!loss.value().is_scalar())
    throw std::invalid_argument("gradient: loss must be scalar, got " + loss.value().shape_str());
  for (const Var& w : wrt)
    if (w.g != &g) throw std::invalid_argument("gradient: wrt var from different graph");

  const int n = loss.id + 1;
  std::vector<int> adj(n, -1);
  adj[loss.id] = g.constant(Tensor::scalar(1.0)).id;

  auto acc = [&](int input, Var v) {
    if (input >= n) throw std::logic_error("gradient: adjoint for future node");
    adj[input] = adj[input] < 0 ? v.id : add(Var{&g, adj[input]}, v).id;
  };

  for (int i = loss.id; i >= 0; --i) {
    if (adj[i] < 0 || !g.node(i).requires_grad) continue;
    backprop_node(g, i, Var{&g, adj[i]}, acc);
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id < n && adj[w.id] >= 0)
      out.push_back(Var{&g, adj[w.id]});
    else
      out.push_back(g.constant(Tensor::zeros(w.value().shape())));
  }
  return out;
}

}  // namespace sosvae
