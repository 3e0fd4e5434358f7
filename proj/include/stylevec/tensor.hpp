#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stylevec/dtype.hpp"

namespace stylevec {

using Shape = std::vector<std::int64_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense, contiguous, row-major tensor. Immutable after construction; copies
/// share the underlying buffer.
class Tensor {
public:
    Tensor();
    Tensor(Dtype dtype, Shape shape, std::vector<std::byte> data);

    /// Encodes f32 values into `dtype` storage (round-to-nearest-even).
    static Tensor from_floats(std::span<const float> values, Shape shape, Dtype dtype = Dtype::F32);
    static Tensor zeros(Dtype dtype, Shape shape);

    Dtype dtype() const noexcept { return dtype_; }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t numel() const noexcept { return numel_; }
    std::span<const std::byte> bytes() const noexcept { return {data_->data(), data_->size()}; }

    /// Element `i` widened to f32 (exact for every supported dtype).
    float at(std::size_t i) const noexcept;
    std::vector<float> to_floats() const;

    /// Same buffer contents under a different shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool bit_equal(const Tensor& other) const noexcept;
    bool all_zero() const noexcept;

private:
    Dtype dtype_ = Dtype::F32;
    Shape shape_;
    std::size_t numel_ = 1;
    std::shared_ptr<const std::vector<std::byte>> data_;
};

// Numeric kernels. Every kernel is a pure function; arithmetic runs in f32
// and rounds back to the storage dtype, reductions accumulate in f64.
// A scaled step scale * x is formed in f64 and rounded once to f32.

Tensor elementwise_sub(const Tensor& a, const Tensor& b);

/// base + scale * delta. A scale of exactly 0 returns `base` unchanged.
Tensor axpy(const Tensor& base, const Tensor& delta, double scale);

/// (d x r) * (r x k) -> (d x k), F32 output.
Tensor matmul(const Tensor& b, const Tensor& a);

Tensor cast(const Tensor& t, Dtype target);

double frobenius_norm(const Tensor& t);

} // namespace stylevec
