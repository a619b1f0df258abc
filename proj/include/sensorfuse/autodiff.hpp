#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every learned stage of the detector is expressed through these
// ops so one backward pass yields gradients for all registered parameters.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sensorfuse::ad {

/// Named, dense, row-major parameter tensor.
class Param {
 public:
  Param(std::string name, int rows, int cols, std::size_t index);

  const std::string& name() const { return name_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return value_.size(); }
  std::size_t index() const { return index_; }

  std::vector<double>& value() { return value_; }
  const std::vector<double>& value() const { return value_; }

 private:
  std::string name_;
  int rows_;
  int cols_;
  std::size_t index_;
  std::vector<double> value_;
};

/// Owns parameters in registration order; names are unique.
class ParamRegistry {
 public:
  ParamRegistry() = default;
  ParamRegistry(const ParamRegistry&) = delete;
  ParamRegistry& operator=(const ParamRegistry&) = delete;
  ParamRegistry(ParamRegistry&&) = default;
  ParamRegistry& operator=(ParamRegistry&&) = default;

  Param& add(std::string name, int rows, int cols);
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  const Param* find(std::string_view name) const;

  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const;
  Param& at(std::size_t i) { return *params_[i]; }
  const Param& at(std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Gradient buffers parallel to a registry (indexed by Param::index()).
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const ParamRegistry& registry);

/// Glorot-uniform fill treating rows as fan-out and cols as fan-in, times `gain`.
void init_xavier(Param& p, std::mt19937_64& rng, double gain = 1.0);
void init_constant(Param& p, double value);

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  int rows() const;
  int cols() const;
  std::span<const double> value() const;
  double item() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Compressed sparse rows with constant weights: out[r] = sum_j w_j * in[idx_j].
struct SparseRows {
  int rows = 0;
  std::vector<int> offsets{0};
  std::vector<int> index;
  std::vector<double> weight;

  void push(int idx, double w) {
    index.push_back(idx);
    weight.push_back(w);
  }
  void finish_row() {
    offsets.push_back(static_cast<int>(index.size()));
    ++rows;
  }
  int row_begin(int r) const { return offsets[r]; }
  int row_end(int r) const { return offsets[r + 1]; }
};

/// Per-query lists of context rows (empty list -> fallback row).
struct Windows {
  int rows = 0;
  std::vector<int> offsets{0};
  std::vector<int> index;

  void push(int idx) { index.push_back(idx); }
  void finish_row() {
    offsets.push_back(static_cast<int>(index.size()));
    ++rows;
  }
  int row_begin(int r) const { return offsets[r]; }
  int row_end(int r) const { return offsets[r + 1]; }
  bool empty_row(int r) const { return offsets[r] == offsets[r + 1]; }
};

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool needs_grad = false;
  const Param* param = nullptr;
  std::function<void(Tape&, const Node&)> backward;
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(int rows, int cols, std::vector<double> values);
  Var zeros(int rows, int cols);
  /// Leaf bound to a parameter; one leaf per parameter per tape.
  Var param(const Param& p);

  /// Generic node constructor used by ops. `parents` decides needs_grad.
  Var make(int rows, int cols, std::vector<double> value,
           std::initializer_list<Var> parents,
           std::function<void(Tape&, const Node&)> backward);

  const Node& node(int id) const { return nodes_[id]; }
  /// Gradient buffer of a node, allocated on first use.
  std::span<double> grad(int id);
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Seeds d(root)/d(root) = 1 and runs all backward closures.
  void backward(Var root);
  /// Adds parameter-leaf gradients into `out` (indexed by Param::index()).
  void accumulate(Gradients& out) const;

  /// Keeps an index structure alive for the lifetime of the tape. gather()
  /// and window_attention() reference their maps until backward() runs.
  template <class T>
  const T& retain(T obj) {
    auto holder = std::make_shared<T>(std::move(obj));
    const T& ref = *holder;
    retained_.push_back(std::move(holder));
    return ref;
  }

 private:
  bool record_;
  std::vector<std::shared_ptr<const void>> retained_;
  std::deque<Node> nodes_;
  std::map<const Param*, int> param_leaf_;
};

enum class Activation { kLinear, kTanh, kRelu, kSigmoid };

// Dense algebra.
Var matmul_nt(Var x, Var w);                // x[n,k] * w[m,k]^T -> [n,m]
Var linear(Var x, Var w, Var b);            // x w^T + b (b is [1,m])
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);                // broadcast [1,c]
Var activate(Var x, Activation act);
Var mask_rows(Var x, std::span<const std::uint8_t> keep);
Var concat_cols(Var a, Var b);
Var reshape(Var x, int rows, int cols);

// Sparse constant-weight gather: rows of the result are weighted sums of
// rows of `x`.
Var gather(Var x, const SparseRows& map);

/// Scaled dot-product attention restricted to per-query windows. Rows with
/// an empty window copy the corresponding row of `fallback`.
Var window_attention(Var q, Var k, Var v, Var fallback, const Windows& windows);

/// base + sigmoid(gate_pre) * cross + (1 - sigmoid(gate_pre)) * intra, with
/// the gate pre-activation clamped to +-kGateClamp.
inline constexpr double kGateClamp = 30.0;
double gate_value(double pre);
Var gated_mix(Var base, Var cross, Var intra, Var gate_pre);

// Reductions and losses (all return [1,1]).
Var sum(Var x);
Var softmax_cross_entropy(Var logits, std::span<const int> targets,
                          std::span<const double> weights);
/// Penalty-reduced focal loss on sigmoid(logits) against soft targets in
/// [0,1]; entries equal to 1 are positives.
Var focal_loss(Var logits, std::span<const double> targets, double alpha = 2.0,
               double beta = 4.0);
Var l1_loss(Var x, std::span<const double> targets);

/// Softmax of each row of a plain matrix (helper, no tape).
std::vector<double> softmax_rows(std::span<const double> logits, int rows, int cols);

}  // namespace sensorfuse::ad
