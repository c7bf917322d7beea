#include "fasw/nn.hpp"

#include <cmath>
#include <cstring>

#include "fasw/error.hpp"

namespace fasw::nn {

void ParamSet::add(std::string name, ad::Var param) {
    require(find(name) == nullptr, ErrorKind::config, "duplicate parameter name: " + name);
    entries_.emplace_back(std::move(name), std::move(param));
}

void ParamSet::append(const ParamSet& other) {
    for (const auto& [name, v] : other.entries_) add(name, v);
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.value().size();
    return n;
}

const ad::Var* ParamSet::find(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.first == name) return &e.second;
    }
    return nullptr;
}

std::vector<std::string> ParamSet::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
}

void ParamSet::zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
}

void ParamSet::set_trainable(bool on) {
    for (auto& e : entries_) e.second.set_requires_grad(on);
}

void ParamSet::copy_values_from(const ParamSet& other) {
    for (auto& [name, v] : entries_) {
        const ad::Var* src = other.find(name);
        require(src != nullptr, ErrorKind::config, "missing parameter in source set: " + name);
        require(src->shape() == v.shape(), ErrorKind::config, "shape mismatch for parameter " + name);
        v.mutable_value() = src->value();
    }
}

std::map<std::string, Tensor> ParamSet::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : entries_) out.emplace(name, v.value());
    return out;
}

void ParamSet::load(const std::map<std::string, Tensor>& values, bool allow_missing) {
    for (auto& [name, v] : entries_) {
        auto it = values.find(name);
        if (it == values.end()) {
            require(allow_missing, ErrorKind::config, "checkpoint lacks parameter " + name);
            continue;
        }
        require(it->second.shape() == v.shape(), ErrorKind::config,
                "checkpoint shape mismatch for " + name + ": " + shape_string(it->second.shape()) +
                    " vs " + shape_string(v.shape()));
        v.mutable_value() = it->second;
    }
}

std::uint64_t ParamSet::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, v] : entries_) {
        mix(name.data(), name.size());
        mix(v.value().data(), v.value().size() * sizeof(double));
    }
    return h;
}

Tensor init_uniform(Shape shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / std::max(1, fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride_, Rng& rng)
    : weight(init_uniform({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng), true),
      bias(Tensor({out_ch}, 0.0), true),
      stride(stride_),
      pad(kernel / 2) {
    require(in_ch > 0 && out_ch > 0 && kernel > 0 && stride_ > 0, ErrorKind::config,
            "conv2d: channels, kernel and stride must be positive");
}

ad::Var Conv2d::operator()(const ad::Var& x) const { return ad::conv2d(x, weight, bias, stride, pad); }

void Conv2d::register_params(ParamSet& set, const std::string& prefix) const {
    set.add(prefix + ".weight", weight);
    set.add(prefix + ".bias", bias);
}

Linear::Linear(int in, int out, Rng& rng)
    : weight(init_uniform({out, in}, in, rng), true), bias(Tensor({out}, 0.0), true) {
    require(in > 0 && out > 0, ErrorKind::config, "linear: sizes must be positive");
}

ad::Var Linear::operator()(const ad::Var& x) const { return ad::linear(x, weight, bias); }

void Linear::register_params(ParamSet& set, const std::string& prefix) const {
    set.add(prefix + ".weight", weight);
    set.add(prefix + ".bias", bias);
}

Adam::Adam(ParamSet params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require(lr >= 0.0 && std::isfinite(lr), ErrorKind::config, "learning rate must be finite and >= 0");
    for (const auto& e : params_.entries()) {
        m_.emplace_back(e.second.shape(), 0.0);
        v_.emplace_back(e.second.shape(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t k = 0;
    for (const auto& e : params_.entries()) {
        ad::Var p = e.second;
        const Tensor& g = p.node()->grad;
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        ++k;
        if (g.shape() != p.shape()) continue;  // no gradient reached this parameter
        Tensor& val = p.mutable_value();
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            val[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

}  // namespace fasw::nn
