#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ken/tensor.hpp"

namespace ken {

struct TraceEntry {
  std::string site;  // dotted scope path active when the op ran
  std::string op;
  Shape shape;  // output shape

  bool operator==(const TraceEntry& o) const {
    return site == o.site && op == o.op && shape == o.shape;
  }
};

inline std::ostream& operator<<(std::ostream& os, const TraceEntry& e) {
  return os << e.site << ':' << e.op << shape_str(e.shape);
}

// Reverse-mode tape. Ops append nodes in execution order; backward walks the
// list once in reverse, accumulating gradients by summation, then drops the
// recorded graph.
class Tape {
 public:
  struct Node {
    std::string op;
    std::string site;
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void()> backward;
  };

  // When set, ops are recorded even if no input requires grad. Used to
  // capture complete computation traces for ablation diffing.
  bool record_all = false;

  void record(Node node) { nodes_.push_back(std::move(node)); }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  std::vector<TraceEntry> trace() const {
    std::vector<TraceEntry> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back({n.site, n.op, n.output->shape});
    return out;
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Gradients sum
  // over all paths. The recorded graph is cleared afterwards.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    bool on_graph = false;
    for (const auto& n : nodes_) {
      if (n.output == loss.impl()) {
        on_graph = true;
        break;
      }
    }
    if (!on_graph) throw Error("backward: loss tensor is not on the active graph");

    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward && !it->output->grad.empty()) it->backward();
    }
    clear();
  }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

inline Tape*& tls_tape() {
  thread_local Tape* t = nullptr;
  return t;
}

inline std::vector<std::string>& tls_scopes() {
  thread_local std::vector<std::string> s;
  return s;
}

}  // namespace detail

inline Tape* active_tape() { return detail::tls_tape(); }

// Installs a tape as the thread's recording target for its lifetime.
class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape) : prev_(detail::tls_tape()) { detail::tls_tape() = &tape; }
  ~TapeGuard() { detail::tls_tape() = prev_; }
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* prev_;
};

// Labels ops recorded while alive, e.g. TraceScope("ka"), TraceScope("s1")
// nest to the site "ka.s1".
class TraceScope {
 public:
  explicit TraceScope(std::string label) { detail::tls_scopes().push_back(std::move(label)); }
  ~TraceScope() { detail::tls_scopes().pop_back(); }
  TraceScope(const TraceScope&) = delete;
  TraceScope& operator=(const TraceScope&) = delete;

  static std::string current() {
    std::string out;
    for (const auto& s : detail::tls_scopes()) {
      if (!out.empty()) out += ".";
      out += s;
    }
    return out;
  }
};

}  // namespace ken
