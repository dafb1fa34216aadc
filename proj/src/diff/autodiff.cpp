// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "emert/error.hpp"
#include "emert/kernels.hpp"

namespace emert::diff {
namespace {

thread_local bool g_grad_enabled = true;

Var make(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  if (!value.all_finite()) throw NumericalError("non-finite value produced by graph op");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (g_grad_enabled && any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

// Shape after reinterpreting rank-1 tensors as rows.
Shape as_matrix(const Tensor& t) { return {t.rows(), t.cols()}; }

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->grad = Tensor(node->value.shape());
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& loss) {
  if (!loss) throw ContractError("backward on empty Var");
  if (loss.value().size() != 1)
    throw ContractError("backward requires a scalar loss, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  if (k != b.value().rows())
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  Tensor out = Tensor::zeros(m, n);
  kernels::gemm_nn(m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
  return make(std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      kernels::gemm_nt(m, k, n, self.grad.ptr(), pb.value.ptr(), pa.ensure_grad().ptr());
    if (pb.requires_grad)
      kernels::gemm_tn(k, n, m, pa.value.ptr(), self.grad.ptr(), pb.ensure_grad().ptr());
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  kernels::axpy(out.size(), 1.0, b.value().ptr(), out.ptr());
  return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) kernels::axpy(self.grad.size(), 1.0, self.grad.ptr(), p->ensure_grad().ptr());
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  kernels::axpy(out.size(), -1.0, b.value().ptr(), out.ptr());
  return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) kernels::axpy(self.grad.size(), 1.0, self.grad.ptr(), pa.ensure_grad().ptr());
    if (pb.requires_grad) kernels::axpy(self.grad.size(), -1.0, self.grad.ptr(), pb.ensure_grad().ptr());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  kernels::mul_inplace(out.size(), b.value().ptr(), out.ptr());
  return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const std::size_t n = self.grad.size();
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (bias.value().size() != n)
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " vs input " +
                         shape_string(x.shape()));
  Tensor out = x.value();
  for (std::size_t i = 0; i < m; ++i) kernels::axpy(n, 1.0, bias.value().ptr(), out.ptr() + i * n);
  return make(std::move(out), {x.node(), bias.node()}, [m, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) kernels::axpy(m * n, 1.0, self.grad.ptr(), px.ensure_grad().ptr());
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) kernels::axpy(n, 1.0, self.grad.ptr() + i * n, g.ptr());
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return make(std::move(out), {x.node()}, [factor](Node& self) {
    kernels::axpy(self.grad.size(), factor, self.grad.ptr(), self.parents[0]->ensure_grad().ptr());
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make(std::move(out), {x.node()}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  return make(std::move(out), {x.node()}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return make(std::move(out), {x.node()}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make(Tensor::scalar(s), {x.node()}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    const double up = self.grad[0];
    for (double& v : g.data()) v += up;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var softmax_rows(const Var& x) {
  Tensor out = softmax(x.value(), 1);
  const std::size_t m = out.rows(), n = out.cols();
  return make(std::move(out), {x.node()}, [m, n](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.ptr() + i * n;
      const double* gy = self.grad.ptr() + i * n;
      const double dotp = kernels::dot(n, y, gy);
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dotp);
    }
  });
}

Var grad_reverse(const Var& x, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ParameterError("grad_reverse lambda must be a finite value >= 0, got " +
                         std::to_string(lambda));
  return make(x.value(), {x.node()}, [lambda](Node& self) {
    kernels::axpy(self.grad.size(), -lambda, self.grad.ptr(), self.parents[0]->ensure_grad().ptr());
  });
}

Var detach(const Var& x) { return constant(x.value()); }

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (begin >= end || end > n)
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape()));
  const std::size_t w = end - begin;
  Tensor out = Tensor::zeros(m, w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.value().ptr() + i * n + begin, w, out.ptr() + i * w);
  return make(std::move(out), {x.node()}, [m, n, w, begin](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      kernels::axpy(w, 1.0, self.grad.ptr() + i * w, g.ptr() + i * n + begin);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    if (p.value().rows() != m)
      throw DimensionError("concat_cols row mismatch: " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    widths.push_back(p.value().cols());
    total += widths.back();
    parents.push_back(p.node());
  }
  Tensor out = Tensor::zeros(m, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].value().ptr() + i * widths[k], widths[k], out.ptr() + i * total + off);
    off += widths[k];
  }
  return make(std::move(out), std::move(parents), [m, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        Tensor& g = p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          kernels::axpy(widths[k], 1.0, self.grad.ptr() + i * total + off, g.ptr() + i * widths[k]);
      }
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t n = parts[0].value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    if (p.value().cols() != n)
      throw DimensionError("concat_rows column mismatch: " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    sizes.push_back(p.value().size());
    total += p.value().rows();
    parents.push_back(p.node());
  }
  Tensor out = Tensor::zeros(total, n);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().ptr(), p.value().size(), out.ptr() + off);
    off += p.value().size();
  }
  return make(std::move(out), std::move(parents), [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) kernels::axpy(sizes[k], 1.0, self.grad.ptr() + off, p.ensure_grad().ptr());
      off += sizes[k];
    }
  });
}

Var gather_rows(const Var& x, std::vector<std::size_t> index) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  Tensor out = Tensor::zeros(index.size(), n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= m)
      throw DimensionError("gather_rows index " + std::to_string(index[i]) + " out of range for " +
                           shape_string(x.shape()));
    std::copy_n(x.value().ptr() + index[i] * n, n, out.ptr() + i * n);
  }
  return make(std::move(out), {x.node()}, [n, index = std::move(index)](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < index.size(); ++i)
      kernels::axpy(n, 1.0, self.grad.ptr() + i * n, g.ptr() + index[i] * n);
  });
}

Var group_mean(const Var& x, std::size_t groups, std::size_t group_len) {
  const std::size_t n = x.value().cols();
  if (groups * group_len != x.value().rows() || group_len == 0)
    throw DimensionError("group_mean: " + std::to_string(groups) + " x " +
                         std::to_string(group_len) + " rows do not tile " + shape_string(x.shape()));
  const double inv = 1.0 / static_cast<double>(group_len);
  Tensor out = Tensor::zeros(groups, n);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t t = 0; t < group_len; ++t)
      kernels::axpy(n, inv, x.value().ptr() + (g * group_len + t) * n, out.ptr() + g * n);
  return make(std::move(out), {x.node()}, [groups, group_len, n, inv](Node& self) {
    Tensor& gr = self.parents[0]->ensure_grad();
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t t = 0; t < group_len; ++t)
        kernels::axpy(n, inv, self.grad.ptr() + g * n, gr.ptr() + (g * group_len + t) * n);
  });
}

Var group_shift(const Var& x, std::size_t groups, std::size_t group_len, int offset) {
  const std::size_t n = x.value().cols();
  if (groups * group_len != x.value().rows())
    throw DimensionError("group_shift: blocks do not tile " + shape_string(x.shape()));
  Tensor out = Tensor::zeros(x.value().rows(), n);
  const long len = static_cast<long>(group_len);
  for (std::size_t g = 0; g < groups; ++g)
    for (long t = 0; t < len; ++t) {
      const long src = t - offset;
      if (src < 0 || src >= len) continue;
      std::copy_n(x.value().ptr() + (g * group_len + src) * n, n,
                  out.ptr() + (g * group_len + t) * n);
    }
  return make(std::move(out), {x.node()}, [groups, group_len, n, offset, len](Node& self) {
    Tensor& gr = self.parents[0]->ensure_grad();
    for (std::size_t g = 0; g < groups; ++g)
      for (long t = 0; t < len; ++t) {
        const long src = t - offset;
        if (src < 0 || src >= len) continue;
        kernels::axpy(n, 1.0, self.grad.ptr() + (g * group_len + t) * n,
                      gr.ptr() + (g * group_len + src) * n);
      }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (gamma.value().size() != n || beta.value().size() != n)
    throw DimensionError("layer_norm affine parameters must have " + std::to_string(n) + " entries");
  Tensor xhat = Tensor::zeros(m, n);
  std::vector<double> inv_std(m);
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.value().ptr() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat.at(i, j) = (row[j] - mu) * inv_std[i];
      out.at(i, j) = xhat.at(i, j) * gamma.value()[j] + beta.value()[j];
    }
  }
  return make(std::move(out), {x.node(), gamma.node(), beta.node()},
              [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                Node& px = *self.parents[0];
                Node& pg = *self.parents[1];
                Node& pb = *self.parents[2];
                if (pg.requires_grad || pb.requires_grad) {
                  Tensor& gg = pg.ensure_grad();
                  Tensor& gb = pb.ensure_grad();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      gg[j] += self.grad.at(i, j) * xhat.at(i, j);
                      gb[j] += self.grad.at(i, j);
                    }
                }
                if (!px.requires_grad) return;
                Tensor& gx = px.ensure_grad();
                const double dn = static_cast<double>(n);
                std::vector<double> dxhat(n);
                for (std::size_t i = 0; i < m; ++i) {
                  double s1 = 0.0, s2 = 0.0;
                  for (std::size_t j = 0; j < n; ++j) {
                    dxhat[j] = self.grad.at(i, j) * pg.value[j];
                    s1 += dxhat[j];
                    s2 += dxhat[j] * xhat.at(i, j);
                  }
                  for (std::size_t j = 0; j < n; ++j)
                    gx.at(i, j) += inv_std[i] * (dxhat[j] - s1 / dn - xhat.at(i, j) * s2 / dn);
                }
              });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const std::size_t m = logits.value().rows(), k = logits.value().cols();
  if (targets.size() != m)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(logits.shape()));
  Tensor probs = softmax(Tensor(as_matrix(logits.value()), logits.value().storage()), 1);
  std::vector<int> tgt(targets.begin(), targets.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= k)
      throw ParameterError("cross_entropy target " + std::to_string(tgt[i]) + " outside [0," +
                           std::to_string(k) + ")");
    // log-sum-exp form keeps large margins exact
    const double* row = logits.value().ptr() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    loss += mx + std::log(z) - row[tgt[i]];
  }
  loss /= static_cast<double>(m);
  return make(Tensor::scalar(loss), {logits.node()},
              [m, k, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
                Tensor& g = self.parents[0]->ensure_grad();
                const double up = self.grad[0] / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < k; ++j) {
                    const double onehot = static_cast<int>(j) == tgt[i] ? 1.0 : 0.0;
                    g[i * k + j] += up * (probs[i * k + j] - onehot);
                  }
              });
}

Var huber(const Var& pred, const Tensor& target, double delta) {
  if (pred.value().size() != target.size())
    throw DimensionError("huber shape mismatch: " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  if (!(delta > 0.0)) throw ParameterError("huber delta must be positive");
  const std::size_t m = pred.value().rows();
  double loss = 0.0;
  Tensor slope(pred.shape());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.value()[i] - target[i];
    const double a = std::abs(d);
    loss += a <= delta ? 0.5 * d * d : delta * (a - 0.5 * delta);
    slope[i] = std::clamp(d, -delta, delta);
  }
  loss /= static_cast<double>(m);
  return make(Tensor::scalar(loss), {pred.node()}, [m, slope = std::move(slope)](Node& self) {
    kernels::axpy(slope.size(), self.grad[0] / static_cast<double>(m), slope.ptr(),
                  self.parents[0]->ensure_grad().ptr());
  });
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t tq,
              std::size_t tk, std::size_t heads, Tensor* weights) {
  const std::size_t d = q.value().cols();
  if (k.value().cols() != d || v.value().cols() != d)
    throw DimensionError("attention width mismatch: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  if (q.value().rows() != batch * tq || k.value().rows() != batch * tk ||
      v.value().rows() != batch * tk)
    throw DimensionError("attention row counts do not match batch/token layout");
  if (heads == 0 || d % heads != 0)
    throw DimensionError("attention width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* Q = q.value().ptr();
  const double* K = k.value().ptr();
  const double* V = v.value().ptr();

  Tensor probs = Tensor::zeros(batch * heads * tq, tk);
  Tensor out = Tensor::zeros(batch * tq, d);
  std::vector<double> scores(tk);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < tq; ++i) {
        const double* qi = Q + (b * tq + i) * d + h * dh;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < tk; ++j) {
          scores[j] = kernels::dot(dh, qi, K + (b * tk + j) * d + h * dh) * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < tk; ++j) z += (scores[j] = std::exp(scores[j] - mx));
        double* p = probs.ptr() + ((b * heads + h) * tq + i) * tk;
        double* oi = out.ptr() + (b * tq + i) * d + h * dh;
        for (std::size_t j = 0; j < tk; ++j) {
          p[j] = scores[j] / z;
          kernels::axpy(dh, p[j], V + (b * tk + j) * d + h * dh, oi);
        }
      }
  if (weights != nullptr) *weights = probs;

  return make(std::move(out), {q.node(), k.node(), v.node()},
              [=, probs = std::move(probs)](Node& self) {
                Node& pq = *self.parents[0];
                Node& pk = *self.parents[1];
                Node& pv = *self.parents[2];
                const double* Qv = pq.value.ptr();
                const double* Kv = pk.value.ptr();
                const double* Vv = pv.value.ptr();
                double* gq = pq.requires_grad ? pq.ensure_grad().ptr() : nullptr;
                double* gk = pk.requires_grad ? pk.ensure_grad().ptr() : nullptr;
                double* gv = pv.requires_grad ? pv.ensure_grad().ptr() : nullptr;
                std::vector<double> dp(tk), ds(tk);
                for (std::size_t b = 0; b < batch; ++b)
                  for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t i = 0; i < tq; ++i) {
                      const double* gi = self.grad.ptr() + (b * tq + i) * d + h * dh;
                      const double* p = probs.ptr() + ((b * heads + h) * tq + i) * tk;
                      double pdp = 0.0;
                      for (std::size_t j = 0; j < tk; ++j) {
                        dp[j] = kernels::dot(dh, gi, Vv + (b * tk + j) * d + h * dh);
                        pdp += p[j] * dp[j];
                        if (gv) kernels::axpy(dh, p[j], gi, gv + (b * tk + j) * d + h * dh);
                      }
                      for (std::size_t j = 0; j < tk; ++j) ds[j] = p[j] * (dp[j] - pdp) * inv_sqrt;
                      for (std::size_t j = 0; j < tk; ++j) {
                        if (gq)
                          kernels::axpy(dh, ds[j], Kv + (b * tk + j) * d + h * dh,
                                        gq + (b * tq + i) * d + h * dh);
                        if (gk)
                          kernels::axpy(dh, ds[j], Qv + (b * tq + i) * d + h * dh,
                                        gk + (b * tk + j) * d + h * dh);
                      }
                    }
              });
}

}  // namespace emert::diff
