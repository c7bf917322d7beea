#include "fasw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fasw/error.hpp"

namespace fasw {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::protocol_violation: return "protocol_violation";
        case ErrorKind::schema: return "schema";
        case ErrorKind::data: return "data";
        case ErrorKind::input: return "input";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::pipeline: return "pipeline";
        case ErrorKind::metric: return "metric";
        case ErrorKind::export_error: return "export";
        case ErrorKind::infeasible: return "infeasible";
        case ErrorKind::usage: return "usage";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        require(d >= 0, ErrorKind::input, "negative tensor dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    require(data_.size() == shape_size(shape_), ErrorKind::input,
            "tensor data size does not match shape " + shape_string(shape_));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), ErrorKind::input,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_batch(int begin, int count) const {
    require(rank() >= 1 && begin >= 0 && begin + count <= shape_[0], ErrorKind::input,
            "batch slice out of range");
    const std::size_t stride = shape_[0] ? data_.size() / static_cast<std::size_t>(shape_[0]) : 0;
    Shape s = shape_;
    s[0] = count;
    std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
    return Tensor(std::move(s), std::move(v));
}

Tensor stack(std::span<const Tensor> items) {
    require(!items.empty(), ErrorKind::input, "stack of zero tensors");
    Shape s = items.front().shape();
    std::vector<double> v;
    v.reserve(items.size() * items.front().size());
    for (const Tensor& t : items) {
        require(t.shape() == s, ErrorKind::input,
                "stack: shape mismatch " + shape_string(t.shape()) + " vs " + shape_string(s));
        v.insert(v.end(), t.storage().begin(), t.storage().end());
    }
    s.insert(s.begin(), static_cast<int>(items.size()));
    return Tensor(std::move(s), std::move(v));
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.storage().begin(), t.storage().end(),
                       [](double x) { return std::isfinite(x); });
}

}  // namespace fasw
