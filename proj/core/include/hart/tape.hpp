#pragma once

#include <functional>
#include <vector>

#include "hart/tensor.hpp"

namespace hart {

// Records the operations of one forward pass in execution order, which is a
// topological order by construction: every node's inputs were recorded (or
// are leaves) before the node itself. backward() replays the recorded rules
// once each, in reverse.
//
// A tape supports a single backward pass; build a fresh tape per step.
// Gradients accumulate additively into leaf tensors, so callers zero
// parameter gradients between steps.
class Tape {
public:
    Tape() = default;
    explicit Tape(bool recording) : recording_(recording) {}

    // When recording is off, ops run forward-only: no nodes, no gradient
    // buffers. Used for evaluation passes.
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    // Returns the id of the new node. `inputs` holds the node ids of the
    // operation's inputs (-1 for leaves/constants).
    int record(std::vector<int> inputs, std::function<void()> backward_rule);

    std::size_t node_count() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once,
    // newest first. Requires a scalar loss; a loss that never touched the
    // tape (a constant) is a no-op.
    void backward(const Tensor& loss);

    void clear() { nodes_.clear(); }

private:
    struct Node {
        std::vector<int> inputs;
        std::function<void()> backward_rule;
    };

    std::vector<Node> nodes_;
    bool recording_ = true;
};

// Free-function spelling of Tape::backward.
void backward(const Tensor& loss, Tape& tape);

}  // namespace hart
