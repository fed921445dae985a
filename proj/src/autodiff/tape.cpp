#include "dnmp/autodiff/tape.hpp"

#include <stdexcept>

namespace dnmp::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn backward) {
  Node node;
  node.output = output.storage();
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) {
    const auto* key = in.id();
    if (in.requires_grad() && !produced_.contains(key) && !leaf_index_.contains(key)) {
      leaf_index_.emplace(key, leaves_.size());
      leaves_.push_back(in.storage());
    }
    node.inputs.push_back(in.storage());
  }
  produced_.emplace(output.id(), nodes_.size());
  nodes_.push_back(std::move(node));
}

bool Tape::contains(const Tensor& t) const {
  return produced_.contains(t.id()) || leaf_index_.contains(t.id());
}

void Tape::backward(const Tensor& root, bool accumulate) {
  if (!root.defined() || root.numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar root");
  }
  const auto it = produced_.find(root.id());
  if (it == produced_.end()) {
    throw std::invalid_argument("backward() root was not produced on this tape");
  }
  const std::size_t root_index = it->second;

  node_adjoints_.assign(nodes_.size(), {});
  leaf_adjoints_.assign(leaves_.size(), {});
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    leaf_adjoints_[i].assign(leaves_[i]->data.size(), 0.0);
  }
  node_adjoints_[root_index] = {1.0};

  std::vector<std::vector<double>*> grad_in;
  for (std::size_t i = root_index + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node_adjoints_[i].empty()) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto& in = node.inputs[k];
      if (!in->requires_grad) continue;
      const auto* key = in.get();
      if (auto p = produced_.find(key); p != produced_.end() && p->second < i) {
        auto& adj = node_adjoints_[p->second];
        if (adj.empty()) adj.assign(in->data.size(), 0.0);
        grad_in[k] = &adj;
      } else if (auto l = leaf_index_.find(key); l != leaf_index_.end()) {
        grad_in[k] = &leaf_adjoints_[l->second];
      }
    }
    node.backward(node_adjoints_[i], grad_in);
  }
  pending_flush_ = true;
  if (accumulate) accumulate_leaf_grads();
}

void Tape::accumulate_leaf_grads() {
  if (!pending_flush_) return;
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    auto& leaf = *leaves_[i];
    if (!leaf.requires_grad) continue;
    if (leaf.grad.size() != leaf.data.size()) leaf.grad.assign(leaf.data.size(), 0.0);
    const auto& adj = leaf_adjoints_[i];
    for (std::size_t j = 0; j < adj.size(); ++j) leaf.grad[j] += adj[j];
  }
  pending_flush_ = false;
}

std::span<const double> Tape::gradient(const Tensor& t) const {
  if (auto p = produced_.find(t.id()); p != produced_.end()) {
    if (p->second >= node_adjoints_.size() || node_adjoints_[p->second].empty()) {
      throw std::invalid_argument("tensor did not receive a gradient");
    }
    return node_adjoints_[p->second];
  }
  if (auto l = leaf_index_.find(t.id()); l != leaf_index_.end() && l->second < leaf_adjoints_.size()) {
    return leaf_adjoints_[l->second];
  }
  throw std::invalid_argument("tensor is not on this tape");
}

void Tape::clear() {
  nodes_.clear();
  produced_.clear();
  leaves_.clear();
  leaf_index_.clear();
  node_adjoints_.clear();
  leaf_adjoints_.clear();
  pending_flush_ = false;
}

}  // namespace dnmp::ad
