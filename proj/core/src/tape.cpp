#include "hart/tape.hpp"

#include <stdexcept>

namespace hart {

int Tape::record(std::vector<int> inputs, std::function<void()> backward_rule) {
    const int id = static_cast<int>(nodes_.size());
    for (int in : inputs) {
        if (in >= id) throw std::logic_error("tape node input does not precede the node");
    }
    nodes_.push_back(Node{std::move(inputs), std::move(backward_rule)});
    return id;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                    loss.shape_string());
    }
    if (loss.node_id < 0) {
        // Constant loss: nothing reaches any parameter, gradients stay as-is.
        return;
    }
    if (static_cast<std::size_t>(loss.node_id) >= nodes_.size()) {
        throw std::invalid_argument("loss was not produced on this tape");
    }
    const_cast<Tensor&>(loss).grad()[0] += 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backward_rule) nodes_[i].backward_rule();
    }
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace hart
