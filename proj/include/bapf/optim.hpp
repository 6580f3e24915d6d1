#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bapf/params.hpp"

namespace bapf {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed subset of named parameters.
/// Moments are kept in double.
class Adam {
public:
    Adam(AdamConfig cfg, std::vector<std::string> names);

    /// Applies one update from the current gradients; parameters without a
    /// gradient are left alone but still advance the shared step count.
    void step(ModelParams<float>& params);
    void zero_grad(ModelParams<float>& params) const;

    int64_t steps() const { return t_; }
    const std::vector<std::string>& names() const { return names_; }

    void save(std::ostream& out) const;
    void load(std::istream& in);

private:
    AdamConfig cfg_;
    std::vector<std::string> names_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace bapf
