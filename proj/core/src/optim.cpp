#include "cvloc/optim.hpp"

#include "cvloc/errors.hpp"

namespace cvloc {

SgdOptimizer::SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    // lr 0 is a valid "frozen" optimizer (useful for baselines)
    if (lr < 0.0) throw Error("SgdOptimizer: lr must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) throw Error("SgdOptimizer: momentum must be in [0,1)");
}

void SgdOptimizer::step(ParamStore& params) {
    const float lr = static_cast<float>(lr_);
    const float mu = static_cast<float>(momentum_);
    for (auto& [name, t] : params.entries()) {
        if (!t.has_grad())
            throw Error("SgdOptimizer: missing gradient for trainable entry '" + name + "'");
        auto g = t.grad();
        auto p = t.data();
        auto& v = velocity_[name];
        if (v.empty()) v.assign(p.size(), 0.0f);
        for (size_t i = 0; i < p.size(); ++i) {
            v[i] = mu * v[i] - lr * g[i];
            p[i] += v[i];
        }
    }
}

}  // namespace cvloc
