#include "sensorfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sensorfuse/errors.hpp"

namespace sensorfuse::ad {

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 30) return x;
  if (x < -30) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

// ---------------------------------------------------------------------------
// Param / registry

Param::Param(std::string name, int rows, int cols, std::size_t index)
    : name_(std::move(name)), rows_(rows), cols_(cols), index_(index),
      value_(static_cast<std::size_t>(rows) * cols, 0.0) {}

Param& ParamRegistry::add(std::string name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw ShapeError("parameter '" + name + "' has empty shape");
  if (index_.count(name) != 0) {
    throw ContractViolation("duplicate parameter name '" + name + "'");
  }
  const std::size_t idx = params_.size();
  index_.emplace(name, idx);
  params_.push_back(std::make_unique<Param>(std::move(name), rows, cols, idx));
  return *params_.back();
}

Param& ParamRegistry::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter '" + std::string(name) + "'");
  return *params_[it->second];
}

const Param& ParamRegistry::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter '" + std::string(name) + "'");
  return *params_[it->second];
}

const Param* ParamRegistry::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

std::size_t ParamRegistry::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void init_xavier(Param& p, std::mt19937_64& rng, double gain) {
  const double a = gain * std::sqrt(6.0 / (p.rows() + p.cols()));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : p.value()) v = dist(rng);
}

void init_constant(Param& p, double value) { std::fill(p.value().begin(), p.value().end(), value); }

Gradients zero_gradients(const ParamRegistry& registry) {
  Gradients g(registry.count());
  for (const auto& p : registry) g[p->index()].assign(p->size(), 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Var / Tape

int Var::rows() const { return tape_->node(id_).rows; }
int Var::cols() const { return tape_->node(id_).cols; }
std::span<const double> Var::value() const { return tape_->node(id_).value; }
double Var::item() const {
  const auto& n = tape_->node(id_);
  if (n.value.size() != 1) throw ShapeError("item() on non-scalar");
  return n.value[0];
}

Var Tape::constant(int rows, int cols, std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("constant: value count does not match shape");
  }
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::zeros(int rows, int cols) {
  return constant(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0));
}

Var Tape::param(const Param& p) {
  auto it = param_leaf_.find(&p);
  if (it != param_leaf_.end()) return Var(this, it->second);
  Node n;
  n.rows = p.rows();
  n.cols = p.cols();
  n.value = p.value();
  n.needs_grad = record_;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_leaf_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::make(int rows, int cols, std::vector<double> value, std::initializer_list<Var> parents,
               std::function<void(Tape&, const Node&)> backward) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (nodes_[p.id()].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::span<double> Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (!record_) throw ContractViolation("backward on a non-recording tape");
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward root must be 1x1");
  grad(root.id())[0] = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n);
  }
}

void Tape::accumulate(Gradients& out) const {
  for (const auto& [param, id] : param_leaf_) {
    const Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    auto& dst = out.at(param->index());
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul_nt(Var x, Var w) {
  const int n = x.rows(), k = x.cols(), m = w.rows();
  if (w.cols() != k) throw ShapeError("matmul_nt: inner dimension mismatch");
  auto xv = x.value();
  auto wv = w.value();
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* xi = xv.data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < m; ++j) {
      const double* wj = wv.data() + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += xi[t] * wj[t];
      out[static_cast<std::size_t>(i) * m + j] = s;
    }
  }
  const int xid = x.id(), wid = w.id();
  return x.tape().make(n, m, std::move(out), {x, w}, [=](Tape& tp, const Node& self) {
    const auto& g = self.grad;
    const auto& xval = tp.node(xid).value;
    const auto& wval = tp.node(wid).value;
    if (tp.node(xid).needs_grad) {
      auto gx = tp.grad(xid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double gij = g[static_cast<std::size_t>(i) * m + j];
          if (gij == 0.0) continue;
          const double* wj = wval.data() + static_cast<std::size_t>(j) * k;
          double* gxi = gx.data() + static_cast<std::size_t>(i) * k;
          for (int t = 0; t < k; ++t) gxi[t] += gij * wj[t];
        }
    }
    if (tp.node(wid).needs_grad) {
      auto gw = tp.grad(wid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double gij = g[static_cast<std::size_t>(i) * m + j];
          if (gij == 0.0) continue;
          const double* xi = xval.data() + static_cast<std::size_t>(i) * k;
          double* gwj = gw.data() + static_cast<std::size_t>(j) * k;
          for (int t = 0; t < k; ++t) gwj[t] += gij * xi[t];
        }
    }
  });
}

Var add_row(Var a, Var row) {
  const int n = a.rows(), c = a.cols();
  if (row.rows() != 1 || row.cols() != c) throw ShapeError("add_row: row shape mismatch");
  std::vector<double> out(a.value().begin(), a.value().end());
  auto rv = row.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] += rv[j];
  const int aid = a.id(), rid = row.id();
  return a.tape().make(n, c, std::move(out), {a, row}, [=](Tape& tp, const Node& self) {
    if (tp.node(aid).needs_grad) {
      auto ga = tp.grad(aid);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (tp.node(rid).needs_grad) {
      auto gr = tp.grad(rid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) gr[j] += self.grad[static_cast<std::size_t>(i) * c + j];
    }
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul_nt(x, w), b); }

namespace {

template <class Fwd, class DA, class DB>
Var binary_elementwise(Var a, Var b, const char* name, Fwd fwd, DA da, DB db) {
  require_same_shape(a, b, name);
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const int aid = a.id(), bid = b.id();
  return a.tape().make(a.rows(), a.cols(), std::move(out), {a, b},
                       [=](Tape& tp, const Node& self) {
                         const auto& x = tp.node(aid).value;
                         const auto& y = tp.node(bid).value;
                         if (tp.node(aid).needs_grad) {
                           auto g = tp.grad(aid);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += self.grad[i] * da(x[i], y[i]);
                         }
                         if (tp.node(bid).needs_grad) {
                           auto g = tp.grad(bid);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += self.grad[i] * db(x[i], y[i]);
                         }
                       });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& v : out) v *= s;
  const int aid = a.id();
  return a.tape().make(a.rows(), a.cols(), std::move(out), {a}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var activate(Var x, Activation act) {
  if (act == Activation::kLinear) return x;
  auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (act) {
      case Activation::kTanh: out[i] = std::tanh(xv[i]); break;
      case Activation::kRelu: out[i] = xv[i] > 0 ? xv[i] : 0.0; break;
      case Activation::kSigmoid: out[i] = sigmoid(xv[i]); break;
      case Activation::kLinear: break;
    }
  }
  const int xid = x.id();
  return x.tape().make(x.rows(), x.cols(), std::move(out), {x}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(xid);
    const auto& in = tp.node(xid).value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      double d = 1.0;
      switch (act) {
        case Activation::kTanh: d = 1.0 - y * y; break;
        case Activation::kRelu: d = in[i] > 0 ? 1.0 : 0.0; break;
        case Activation::kSigmoid: d = y * (1.0 - y); break;
        case Activation::kLinear: break;
      }
      g[i] += d * self.grad[i];
    }
  });
}

Var mask_rows(Var x, std::span<const std::uint8_t> keep) {
  const int n = x.rows(), c = x.cols();
  if (static_cast<int>(keep.size()) != n) throw ShapeError("mask_rows: mask length mismatch");
  std::vector<double> out(x.value().begin(), x.value().end());
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  for (int i = 0; i < n; ++i)
    if (!k[i]) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i) * c, c, 0.0);
  const int xid = x.id();
  return x.tape().make(n, c, std::move(out), {x}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(xid);
    for (int i = 0; i < n; ++i) {
      if (!k[i]) continue;
      for (int j = 0; j < c; ++j) {
        const std::size_t at = static_cast<std::size_t>(i) * c + j;
        g[at] += self.grad[at];
      }
    }
  });
}

Var concat_cols(Var a, Var b) {
  const int n = a.rows(), ca = a.cols(), cb = b.cols();
  if (b.rows() != n) throw ShapeError("concat_cols: row mismatch");
  const int c = ca + cb;
  std::vector<double> out(static_cast<std::size_t>(n) * c);
  auto av = a.value();
  auto bv = b.value();
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i) * ca, ca,
                out.begin() + static_cast<std::ptrdiff_t>(i) * c);
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(i) * cb, cb,
                out.begin() + static_cast<std::ptrdiff_t>(i) * c + ca);
  }
  const int aid = a.id(), bid = b.id();
  return a.tape().make(n, c, std::move(out), {a, b}, [=](Tape& tp, const Node& self) {
    if (tp.node(aid).needs_grad) {
      auto g = tp.grad(aid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < ca; ++j)
          g[static_cast<std::size_t>(i) * ca + j] += self.grad[static_cast<std::size_t>(i) * c + j];
    }
    if (tp.node(bid).needs_grad) {
      auto g = tp.grad(bid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < cb; ++j)
          g[static_cast<std::size_t>(i) * cb + j] +=
              self.grad[static_cast<std::size_t>(i) * c + ca + j];
    }
  });
}

Var reshape(Var x, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != x.value().size()) {
    throw ShapeError("reshape: element count mismatch");
  }
  const int xid = x.id();
  return x.tape().make(rows, cols, std::vector<double>(x.value().begin(), x.value().end()), {x},
                       [=](Tape& tp, const Node& self) {
                         auto g = tp.grad(xid);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
}

Var gather(Var x, const SparseRows& map) {
  const int c = x.cols();
  const int in_rows = x.rows();
  for (int idx : map.index) {
    if (idx < 0 || idx >= in_rows) throw ShapeError("gather: index out of range");
  }
  auto xv = x.value();
  std::vector<double> out(static_cast<std::size_t>(map.rows) * c, 0.0);
  for (int r = 0; r < map.rows; ++r) {
    double* o = out.data() + static_cast<std::size_t>(r) * c;
    for (int e = map.row_begin(r); e < map.row_end(r); ++e) {
      const double w = map.weight[e];
      const double* src = xv.data() + static_cast<std::size_t>(map.index[e]) * c;
      for (int j = 0; j < c; ++j) o[j] += w * src[j];
    }
  }
  const int xid = x.id();
  const SparseRows* m = &map;
  return x.tape().make(map.rows, c, std::move(out), {x}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(xid);
    for (int r = 0; r < m->rows; ++r) {
      const double* go = self.grad.data() + static_cast<std::size_t>(r) * c;
      for (int e = m->row_begin(r); e < m->row_end(r); ++e) {
        const double w = m->weight[e];
        double* dst = g.data() + static_cast<std::size_t>(m->index[e]) * c;
        for (int j = 0; j < c; ++j) dst[j] += w * go[j];
      }
    }
  });
}

Var window_attention(Var q, Var k, Var v, Var fallback, const Windows& windows) {
  const int n = q.rows(), dk = q.cols(), dv = v.cols();
  if (k.cols() != dk) throw ShapeError("window_attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw ShapeError("window_attention: key/value row mismatch");
  if (fallback.rows() != n || fallback.cols() != dv) {
    throw ShapeError("window_attention: fallback shape mismatch");
  }
  if (windows.rows != n) throw ShapeError("window_attention: window count mismatch");
  for (int idx : windows.index) {
    if (idx < 0 || idx >= k.rows()) throw ShapeError("window_attention: window index out of range");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  auto qv = q.value();
  auto kv = k.value();
  auto vv = v.value();
  auto fv = fallback.value();
  std::vector<double> out(static_cast<std::size_t>(n) * dv, 0.0);
  auto probs = std::make_shared<std::vector<double>>(windows.index.size());
  for (int i = 0; i < n; ++i) {
    double* o = out.data() + static_cast<std::size_t>(i) * dv;
    const int b = windows.row_begin(i), e = windows.row_end(i);
    if (b == e) {
      std::copy_n(fv.data() + static_cast<std::size_t>(i) * dv, dv, o);
      continue;
    }
    const double* qi = qv.data() + static_cast<std::size_t>(i) * dk;
    double mx = -std::numeric_limits<double>::infinity();
    for (int t = b; t < e; ++t) {
      const double* kj = kv.data() + static_cast<std::size_t>(windows.index[t]) * dk;
      double s = 0.0;
      for (int c = 0; c < dk; ++c) s += qi[c] * kj[c];
      s *= inv_scale;
      (*probs)[t] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int t = b; t < e; ++t) {
      (*probs)[t] = std::exp((*probs)[t] - mx);
      z += (*probs)[t];
    }
    for (int t = b; t < e; ++t) {
      (*probs)[t] /= z;
      const double p = (*probs)[t];
      const double* vj = vv.data() + static_cast<std::size_t>(windows.index[t]) * dv;
      for (int c = 0; c < dv; ++c) o[c] += p * vj[c];
    }
  }
  const int qid = q.id(), kid = k.id(), vid = v.id(), fid = fallback.id();
  const Windows* w = &windows;
  return q.tape().make(n, dv, std::move(out), {q, k, v, fallback},
                       [=](Tape& tp, const Node& self) {
                         const auto& qval = tp.node(qid).value;
                         const auto& kval = tp.node(kid).value;
                         const auto& vval = tp.node(vid).value;
                         const bool gq = tp.node(qid).needs_grad;
                         const bool gk = tp.node(kid).needs_grad;
                         const bool gv = tp.node(vid).needs_grad;
                         const bool gf = tp.node(fid).needs_grad;
                         std::span<double> dq, dk_, dv_, df;
                         if (gq) dq = tp.grad(qid);
                         if (gk) dk_ = tp.grad(kid);
                         if (gv) dv_ = tp.grad(vid);
                         if (gf) df = tp.grad(fid);
                         std::vector<double> dlogit;
                         for (int i = 0; i < n; ++i) {
                           const double* go = self.grad.data() + static_cast<std::size_t>(i) * dv;
                           const int b = w->row_begin(i), e = w->row_end(i);
                           if (b == e) {
                             if (gf)
                               for (int c = 0; c < dv; ++c)
                                 df[static_cast<std::size_t>(i) * dv + c] += go[c];
                             continue;
                           }
                           dlogit.assign(e - b, 0.0);
                           double dot = 0.0;
                           for (int t = b; t < e; ++t) {
                             const std::size_t j = static_cast<std::size_t>(w->index[t]);
                             const double* vj = vval.data() + j * dv;
                             double dp = 0.0;
                             for (int c = 0; c < dv; ++c) dp += go[c] * vj[c];
                             dlogit[t - b] = dp;
                             dot += (*probs)[t] * dp;
                             if (gv) {
                               const double p = (*probs)[t];
                               for (int c = 0; c < dv; ++c) dv_[j * dv + c] += p * go[c];
                             }
                           }
                           const double* qi = qval.data() + static_cast<std::size_t>(i) * dk;
                           for (int t = b; t < e; ++t) {
                             const double dl = (*probs)[t] * (dlogit[t - b] - dot) * inv_scale;
                             if (dl == 0.0) continue;
                             const std::size_t j = static_cast<std::size_t>(w->index[t]);
                             if (gq) {
                               const double* kj = kval.data() + j * dk;
                               for (int c = 0; c < dk; ++c)
                                 dq[static_cast<std::size_t>(i) * dk + c] += dl * kj[c];
                             }
                             if (gk)
                               for (int c = 0; c < dk; ++c) dk_[j * dk + c] += dl * qi[c];
                           }
                         }
                       });
}

double gate_value(double pre) { return sigmoid(std::clamp(pre, -kGateClamp, kGateClamp)); }

Var gated_mix(Var base, Var cross, Var intra, Var gate_pre) {
  require_same_shape(base, cross, "gated_mix");
  require_same_shape(base, intra, "gated_mix");
  const int n = base.rows(), c = base.cols();
  if (gate_pre.rows() != 1 || gate_pre.cols() != c) throw ShapeError("gated_mix: gate shape");
  std::vector<double> g(c);
  for (int j = 0; j < c; ++j) g[j] = gate_value(gate_pre.value()[j]);
  auto bv = base.value();
  auto cv = cross.value();
  auto iv = intra.value();
  std::vector<double> out(bv.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const std::size_t at = static_cast<std::size_t>(i) * c + j;
      out[at] = bv[at] + g[j] * cv[at] + (1.0 - g[j]) * iv[at];
    }
  const int bid = base.id(), cid = cross.id(), iid = intra.id(), gid = gate_pre.id();
  return base.tape().make(n, c, std::move(out), {base, cross, intra, gate_pre},
                          [=](Tape& tp, const Node& self) {
                            if (tp.node(bid).needs_grad) {
                              auto d = tp.grad(bid);
                              for (std::size_t a = 0; a < d.size(); ++a) d[a] += self.grad[a];
                            }
                            if (tp.node(cid).needs_grad) {
                              auto d = tp.grad(cid);
                              for (int i = 0; i < n; ++i)
                                for (int j = 0; j < c; ++j) {
                                  const std::size_t at = static_cast<std::size_t>(i) * c + j;
                                  d[at] += g[j] * self.grad[at];
                                }
                            }
                            if (tp.node(iid).needs_grad) {
                              auto d = tp.grad(iid);
                              for (int i = 0; i < n; ++i)
                                for (int j = 0; j < c; ++j) {
                                  const std::size_t at = static_cast<std::size_t>(i) * c + j;
                                  d[at] += (1.0 - g[j]) * self.grad[at];
                                }
                            }
                            if (tp.node(gid).needs_grad) {
                              auto d = tp.grad(gid);
                              const auto& pre = tp.node(gid).value;
                              const auto& cval = tp.node(cid).value;
                              const auto& ival = tp.node(iid).value;
                              for (int j = 0; j < c; ++j) {
                                if (std::abs(pre[j]) >= kGateClamp) continue;
                                double acc = 0.0;
                                for (int i = 0; i < n; ++i) {
                                  const std::size_t at = static_cast<std::size_t>(i) * c + j;
                                  acc += self.grad[at] * (cval[at] - ival[at]);
                                }
                                d[j] += acc * g[j] * (1.0 - g[j]);
                              }
                            }
                          });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  const int xid = x.id();
  return x.tape().make(1, 1, {s}, {x}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(xid);
    for (double& v : g) v += self.grad[0];
  });
}

std::vector<double> softmax_rows(std::span<const double> logits, int rows, int cols) {
  std::vector<double> p(logits.begin(), logits.end());
  for (int i = 0; i < rows; ++i) {
    double* r = p.data() + static_cast<std::size_t>(i) * cols;
    const double mx = *std::max_element(r, r + cols);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    for (int j = 0; j < cols; ++j) r[j] /= z;
  }
  return p;
}

namespace {
constexpr double kProbFloor = 1e-12;
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets,
                          std::span<const double> weights) {
  const int n = logits.rows(), c = logits.cols();
  if (static_cast<int>(targets.size()) != n || static_cast<int>(weights.size()) != n) {
    throw ShapeError("softmax_cross_entropy: target/weight length mismatch");
  }
  auto p = std::make_shared<std::vector<double>>(softmax_rows(logits.value(), n, c));
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<std::uint8_t> clamped(n, 0);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (t[i] < 0 || t[i] >= c) throw ContractViolation("softmax_cross_entropy: bad target");
    const double pt = (*p)[static_cast<std::size_t>(i) * c + t[i]];
    if (pt < kProbFloor) clamped[i] = 1;
    loss += w[i] * -std::log(std::max(pt, kProbFloor));
  }
  const int lid = logits.id();
  return logits.tape().make(1, 1, {loss}, {logits}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(lid);
    for (int i = 0; i < n; ++i) {
      if (clamped[i]) continue;
      for (int j = 0; j < c; ++j) {
        const std::size_t at = static_cast<std::size_t>(i) * c + j;
        g[at] += self.grad[0] * w[i] * ((*p)[at] - (j == t[i] ? 1.0 : 0.0));
      }
    }
  });
}

Var focal_loss(Var logits, std::span<const double> targets, double alpha, double beta) {
  const auto xv = logits.value();
  if (targets.size() != xv.size()) throw ShapeError("focal_loss: target size mismatch");
  std::vector<double> t(targets.begin(), targets.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double p = sigmoid(xv[i]);
    const double log_p = -softplus(-xv[i]);
    const double log_1mp = -softplus(xv[i]);
    if (t[i] >= 1.0) {
      loss += -std::pow(1.0 - p, alpha) * log_p;
    } else {
      loss += -std::pow(1.0 - t[i], beta) * std::pow(p, alpha) * log_1mp;
    }
  }
  const int lid = logits.id();
  return logits.tape().make(1, 1, {loss}, {logits}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(lid);
    const auto& x = tp.node(lid).value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = sigmoid(x[i]);
      double d;
      if (t[i] >= 1.0) {
        const double log_p = -softplus(-x[i]);
        d = alpha * std::pow(1.0 - p, alpha) * p * log_p - std::pow(1.0 - p, alpha + 1.0);
      } else {
        const double log_1mp = -softplus(x[i]);
        const double wneg = std::pow(1.0 - t[i], beta);
        d = -wneg * (alpha * std::pow(p, alpha) * (1.0 - p) * log_1mp - std::pow(p, alpha + 1.0));
      }
      g[i] += self.grad[0] * d;
    }
  });
}

Var l1_loss(Var x, std::span<const double> targets) {
  const auto xv = x.value();
  if (targets.size() != xv.size()) throw ShapeError("l1_loss: target size mismatch");
  std::vector<double> sign(xv.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv[i] - targets[i];
    loss += std::abs(d);
    sign[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
  }
  const int xid = x.id();
  return x.tape().make(1, 1, {loss}, {x}, [=](Tape& tp, const Node& self) {
    auto g = tp.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * sign[i];
  });
}

}  // namespace sensorfuse::ad
