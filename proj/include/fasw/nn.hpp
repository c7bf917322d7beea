#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fasw/autograd.hpp"
#include "fasw/ops.hpp"

namespace fasw::nn {

using Rng = std::mt19937_64;

/// Ordered collection of named trainable tensors. Vars are shared handles,
/// so a ParamSet views the parameters owned by a layer rather than copying.
class ParamSet {
public:
    void add(std::string name, ad::Var param);
    void append(const ParamSet& other);

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;
    const std::vector<std::pair<std::string, ad::Var>>& entries() const noexcept { return entries_; }

    const ad::Var* find(const std::string& name) const;
    std::vector<std::string> names() const;

    void zero_grad();
    void set_trainable(bool on);

    /// Copies values by name; both sets must hold the same names and shapes.
    void copy_values_from(const ParamSet& other);
    std::map<std::string, Tensor> snapshot() const;
    void load(const std::map<std::string, Tensor>& values, bool allow_missing = false);

    /// Order- and name-sensitive 64-bit FNV-1a digest over the raw bytes.
    std::uint64_t hash() const;

private:
    std::vector<std::pair<std::string, ad::Var>> entries_;
};

struct Conv2d {
    ad::Var weight;
    ad::Var bias;
    int stride = 1;
    int pad = 1;

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng);
    ad::Var operator()(const ad::Var& x) const;
    void register_params(ParamSet& set, const std::string& prefix) const;
    int in_channels() const { return weight.value().dim(1); }
    int out_channels() const { return weight.value().dim(0); }
};

struct Linear {
    ad::Var weight;
    ad::Var bias;

    Linear() = default;
    Linear(int in, int out, Rng& rng);
    ad::Var operator()(const ad::Var& x) const;
    void register_params(ParamSet& set, const std::string& prefix) const;
};

/// He-style uniform initialisation scaled by fan-in; biases start at zero.
Tensor init_uniform(Shape shape, int fan_in, Rng& rng);

class Adam {
public:
    Adam(ParamSet params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    const ParamSet& params() const { return params_; }

private:
    ParamSet params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace fasw::nn
