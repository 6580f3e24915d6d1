#include "bapf/params.hpp"

#include <stdexcept>

namespace bapf {

std::string_view stage_name(Stage s) { return s == Stage::Structure ? "structure" : "texture"; }

Stage parse_stage(std::string_view s) {
    if (s == "structure") return Stage::Structure;
    if (s == "texture") return Stage::Texture;
    throw std::invalid_argument("unknown stage '" + std::string(s) + "'");
}

template <typename T>
void ModelParams<T>::set(const std::string& name, Tensor<T> value) {
    if (!value.is_leaf()) value = value.detach();
    value.set_requires_grad(true);
    tensors_[name] = std::move(value);
}

template <typename T>
const Tensor<T>& ModelParams<T>::at(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("missing parameter '" + name + "'");
    return it->second;
}

template <typename T>
Tensor<T>& ModelParams<T>::at(const std::string& name) {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("missing parameter '" + name + "'");
    return it->second;
}

template <typename T>
bool ModelParams<T>::has_prefix(std::string_view prefix) const {
    const auto it = tensors_.lower_bound(std::string(prefix));
    return it != tensors_.end() && std::string_view(it->first).starts_with(prefix);
}

template <typename T>
std::vector<std::string> ModelParams<T>::names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [name, _] : tensors_) out.push_back(name);
    return out;
}

template <typename T>
std::vector<std::string> ModelParams<T>::names_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tensors_)
        if (std::string_view(name).starts_with(prefix)) out.push_back(name);
    return out;
}

template <typename T>
int64_t ModelParams<T>::element_count(std::string_view prefix) const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors_)
        if (std::string_view(name).starts_with(prefix)) n += t.numel();
    return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
    for (auto& [_, t] : tensors_) t.zero_grad();
}

template <typename T>
void ModelParams<T>::erase_prefix(std::string_view prefix) {
    for (auto it = tensors_.begin(); it != tensors_.end();) {
        if (std::string_view(it->first).starts_with(prefix))
            it = tensors_.erase(it);
        else
            ++it;
    }
}

template <typename T>
void ModelParams<T>::set_trainable(bool value) {
    for (auto& [_, t] : tensors_) t.set_requires_grad(value);
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
    ModelParams out(stage_);
    for (const auto& [name, t] : tensors_) out.set(name, t.clone());
    return out;
}

template <typename T>
void init_conv(ModelParams<T>& params, const std::string& prefix, const Shape& weight_shape, int64_t bias_channels, Rng& rng,
               double stddev) {
    Rng local = rng.split(prefix);
    params.set(prefix + ".weight", local.normal_tensor<T>(weight_shape, stddev));
    if (bias_channels > 0) params.set(prefix + ".bias", Tensor<T>::zeros({bias_channels}));
}

template class ModelParams<float>;
template class ModelParams<double>;
template void init_conv(ModelParams<float>&, const std::string&, const Shape&, int64_t, Rng&, double);
template void init_conv(ModelParams<double>&, const std::string&, const Shape&, int64_t, Rng&, double);

}  // namespace bapf
