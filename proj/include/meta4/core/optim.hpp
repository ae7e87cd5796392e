#pragma once

#include <vector>

#include "meta4/core/tensor.hpp"

namespace meta4 {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Parameters are registered once; each step
// consumes the gradients accumulated on them since the last zero_grad().
class Adam {
   public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

    void step();
    void zero_grad();

    size_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    std::vector<Tensor>& params() { return params_; }

   private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    size_t step_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace meta4
