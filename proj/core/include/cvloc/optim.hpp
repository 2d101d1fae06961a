#pragma once

#include <map>
#include <string>
#include <vector>

#include "cvloc/param_store.hpp"

namespace cvloc {

/// SGD with classical momentum: v <- momentum*v - lr*g; p <- p + v.
/// Velocities start at zero on the first step for each entry.
class SgdOptimizer {
  public:
    SgdOptimizer(double lr, double momentum);

    /// Applies one update using each entry's gradient buffer.
    /// Throws if any entry has no gradient.
    void step(ParamStore& params);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

  private:
    double lr_;
    double momentum_;
    std::map<std::string, std::vector<float>> velocity_;
};

}  // namespace cvloc
