#include "qvl/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "qvl/errors.hpp"

namespace qvl {

namespace {
std::atomic<bool> g_checked{true};
}

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(); }

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "}";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

static void validate_shape(const Shape& s) {
    for (auto d : s) {
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(s));
    }
}

Tensor Tensor::zeros(Shape shape) {
    validate_shape(shape);
    std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
    validate_shape(shape);
    if (g_checked.load() && !std::isfinite(value)) {
        throw ValidationError("tensor values must be finite");
    }
    std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), value);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("data size " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }
    if (g_checked.load()) {
        for (double v : data) {
            if (!std::isfinite(v)) throw ValidationError("tensor values must be finite");
        }
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::item() const {
    if (numel() != 1) throw NotScalarError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    validate_shape(new_shape);
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) + " changes element count");
    }
    return Tensor(std::move(new_shape), data_);
}

}  // namespace qvl
