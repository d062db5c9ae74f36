#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "daevi/error.hpp"
#include "daevi/tensor.hpp"

namespace daevi {

// Reverse-mode tape. Every primitive that sees a tracked input appends one
// node in execution order; backward() replays the nodes in reverse, so each
// node's output gradient is fully accumulated before its closure runs.
// reset() bumps the generation, which atomically untracks every tensor bound
// to an earlier generation. Single-writer: one thread builds and replays a
// given tape.
template <typename T>
class Tape {
public:
    // Closure propagating the node's output gradient to its parents via
    // Tape::grad_buffer. Captures parent node ids and any saved values.
    using BackwardFn = std::function<void(Tape<T>&, const std::vector<T>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t generation() const { return generation_; }

    // Registers a leaf whose gradient survives backward().
    void watch(Tensor<T>& t) {
        if (t.tape_ == this && t.generation_ == generation_ && t.node_ >= 0) {
            nodes_[static_cast<std::size_t>(t.node_)].leaf = true;
            return;
        }
        if (t.tracked()) {
            throw ContractError("tensor is already tracked on another tape");
        }
        const int id = add_node(t.size(), nullptr, true);
        t.bind_node(this, id, generation_);
        t.set_requires_grad(true);
    }

    // Records the output of a primitive application.
    void record(Tensor<T>& out, BackwardFn fn) {
        const int id = add_node(out.size(), std::move(fn), false);
        out.bind_node(this, id, generation_);
    }

    // Gradient accumulation buffer for a node; nullptr for untracked parents
    // (id < 0). Allocates zero-filled on first touch.
    std::vector<T>* grad_buffer(int id) {
        if (id < 0) {
            return nullptr;
        }
        auto& slot = grads_[static_cast<std::size_t>(id)];
        if (!slot) {
            slot = std::make_unique<std::vector<T>>(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(id)].numel), T(0));
        }
        return slot.get();
    }

    // Reverse sweep from a scalar loss. Intermediate gradient buffers are
    // released as soon as their node has propagated; leaf buffers persist
    // until reset().
    void backward(const Tensor<T>& loss) {
        if (loss.tape() != this || loss.node() < 0) {
            throw ContractError("backward: loss is not recorded on this tape");
        }
        if (loss.size() != 1) {
            throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        }
        (*grad_buffer(loss.node()))[0] = T(1);
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            auto& slot = grads_[static_cast<std::size_t>(id)];
            if (!slot) {
                continue;
            }
            Node& node = nodes_[static_cast<std::size_t>(id)];
            if (node.fn) {
                node.fn(*this, *slot);
            }
            if (!node.leaf) {
                slot.reset();
            }
        }
    }

    bool has_grad(const Tensor<T>& t) const {
        return t.tape() == this && t.node() >= 0 &&
               grads_[static_cast<std::size_t>(t.node())] != nullptr;
    }

    // Gradient of the last backward() w.r.t. a watched tensor; zeros if the
    // leaf never participated.
    Tensor<T> grad(const Tensor<T>& t) const {
        if (t.tape() != this || t.node() < 0) {
            throw ContractError("grad: tensor is not tracked on this tape");
        }
        const auto& slot = grads_[static_cast<std::size_t>(t.node())];
        if (!slot) {
            return Tensor<T>(t.shape());
        }
        return Tensor<T>(t.shape(), *slot);
    }

    // Drops all nodes and gradients and invalidates every tensor bound to the
    // current generation.
    void reset() {
        nodes_.clear();
        grads_.clear();
        ++generation_;
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::int64_t numel;
        BackwardFn fn;
        bool leaf;
    };

    int add_node(std::int64_t numel, BackwardFn fn, bool leaf) {
        nodes_.push_back(Node{numel, std::move(fn), leaf});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::vector<std::unique_ptr<std::vector<T>>> grads_;
    std::uint64_t generation_ = 1;
};

template <typename T>
Tape<T>* Tensor<T>::tape() const {
    if (tape_ != nullptr && generation_ == tape_->generation() && node_ >= 0) {
        return tape_;
    }
    return nullptr;
}

// Resolves the common tape of a set of operands (nullptr when none tracked).
template <typename T>
inline Tape<T>* tape_of(const Tensor<T>& a) {
    return a.tape();
}

template <typename T, typename... Rest>
inline Tape<T>* tape_of(const Tensor<T>& a, const Rest&... rest) {
    Tape<T>* ta = a.tape();
    Tape<T>* tb = tape_of(rest...);
    if (ta && tb && ta != tb) {
        throw ContractError("operands are tracked on different tapes");
    }
    return ta ? ta : tb;
}

} // namespace daevi
