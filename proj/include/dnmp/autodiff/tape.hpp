#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"

namespace dnmp::ad {

// Records differentiable operations in execution order so adjoints can be
// replayed in reverse. Tapes are rebuilt every forward pass.
//
// Ops record onto the tape that is active on the calling thread (see
// TapeScope). Several tapes may be alive on different threads at once; each
// keeps its own adjoint buffers, and leaf gradients only reach the shared
// parameter storage through accumulate_leaf_grads().
class Tape {
 public:
  // grad_in[k] is null when input k does not require grad.
  using BackwardFn = std::function<void(std::span<const double> grad_out,
                                        std::span<std::vector<double>* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn backward);

  // Propagates d(root)/d(.) through the tape. root must be a scalar produced
  // by an op recorded here. With accumulate=true the leaf adjoints are added
  // to the leaves' grad buffers immediately.
  void backward(const Tensor& root, bool accumulate = true);

  // Adds leaf adjoints from the last backward() into the leaves' grad buffers,
  // in first-use order. Idempotent per backward() call.
  void accumulate_leaf_grads();

  // Adjoint of any tensor seen on this tape (op output or leaf).
  std::span<const double> gradient(const Tensor& t) const;

  bool contains(const Tensor& t) const;
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::shared_ptr<TensorStorage> output;
    std::vector<std::shared_ptr<TensorStorage>> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const TensorStorage*, std::size_t> produced_;
  std::vector<std::shared_ptr<TensorStorage>> leaves_;
  std::unordered_map<const TensorStorage*, std::size_t> leaf_index_;
  std::vector<std::vector<double>> node_adjoints_;
  std::vector<std::vector<double>> leaf_adjoints_;
  bool pending_flush_ = false;
};

// The tape that ops on this thread record to, or null.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on this thread (inference, numeric probes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace dnmp::ad
