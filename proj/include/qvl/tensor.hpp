#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qvl {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Toggles finite-value validation in the public Tensor factories. On by
// default; the training hot path keeps it on too (the cost is one pass over
// freshly created leaves, op outputs are not re-validated).
void set_checked_mode(bool on);
bool checked_mode();

// Dense row-major array of 64-bit reals. This one type carries activations,
// parameters, observations and gradients everywhere in the project.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    // Rank-2 accessor, row-major.
    double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

    double item() const;  // NotScalarError unless numel == 1

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    // Metadata-only view with identical flat contents.
    Tensor reshaped(Shape new_shape) const;

  private:
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {}

    Shape shape_;
    std::vector<double> data_;
};

}  // namespace qvl
