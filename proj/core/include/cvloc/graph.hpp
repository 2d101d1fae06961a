#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cvloc/tensor.hpp"

namespace cvloc {

/// Tape of recorded operations. Ops append their backward closure as
/// they execute, so the node order is a topological order of the
/// forward graph by construction; backward() walks it in reverse.
class Graph {
  public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    /// Seeds d(loss)/d(loss) = 1 and runs every node's backward in
    /// reverse recording order. `loss` must be a scalar produced by an
    /// op recorded on this graph.
    void backward(Tensor loss);

    size_t node_count() const { return nodes_.size(); }

    /// Relu ops register their input here so gradient checking can
    /// detect kink crossings between perturbed forward passes.
    void note_relu_input(const Tensor& t) { relu_inputs_.push_back(t); }

    /// One bit per relu input element: 1 where the input was > 0.
    std::vector<uint8_t> relu_sign_mask() const;

  private:
    std::vector<std::function<void()>> nodes_;
    std::vector<Tensor> relu_inputs_;
};

}  // namespace cvloc
