#include "cvloc/graph.hpp"

#include "cvloc/errors.hpp"

namespace cvloc {

void Graph::backward(Tensor loss) {
    if (loss.size() != 1)
        throw ShapeError("backward() needs a scalar loss, got " + loss.shape_str());
    loss.grad()[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

std::vector<uint8_t> Graph::relu_sign_mask() const {
    std::vector<uint8_t> mask;
    for (const auto& t : relu_inputs_) {
        auto d = t.data();
        mask.reserve(mask.size() + d.size());
        for (float v : d) mask.push_back(v > 0.0f ? 1 : 0);
    }
    return mask;
}

}  // namespace cvloc
