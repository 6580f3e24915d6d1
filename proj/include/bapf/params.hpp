#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bapf/rng.hpp"
#include "bapf/tensor.hpp"

namespace bapf {

enum class Stage : uint8_t { Structure = 0, Texture = 1 };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view s);

/// Named parameter registry: the unit of checkpointing and weight transfer.
/// Iteration order is lexicographic by name.
template <typename T>
class ModelParams {
public:
    explicit ModelParams(Stage stage = Stage::Structure) : stage_(stage) {}

    Stage stage() const { return stage_; }
    void set_stage(Stage s) { stage_ = s; }

    /// Inserts or replaces a parameter; the tensor becomes a trainable leaf.
    void set(const std::string& name, Tensor<T> value);
    const Tensor<T>& at(const std::string& name) const;
    Tensor<T>& at(const std::string& name);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    bool has_prefix(std::string_view prefix) const;

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(std::string_view prefix) const;
    size_t size() const { return tensors_.size(); }
    /// Total scalar count of parameters whose name starts with `prefix`.
    int64_t element_count(std::string_view prefix = "") const;

    void zero_grad();
    void erase_prefix(std::string_view prefix);
    void set_trainable(bool value);

    const std::map<std::string, Tensor<T>>& entries() const { return tensors_; }

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out(stage_);
        for (const auto& [name, t] : tensors_) out.set(name, t.template cast<U>());
        return out;
    }

    /// Deep copy with fresh leaves.
    ModelParams clone() const;

private:
    Stage stage_;
    std::map<std::string, Tensor<T>> tensors_;
};

/// N(0, stddev) weights and, when `bias_channels` > 0, a zero bias: the
/// GAN-style initialization used for freshly created layers.
template <typename T>
void init_conv(ModelParams<T>& params, const std::string& prefix, const Shape& weight_shape, int64_t bias_channels, Rng& rng,
               double stddev = 0.02);

extern template class ModelParams<float>;
extern template class ModelParams<double>;

}  // namespace bapf
