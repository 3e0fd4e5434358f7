#include "stylevec/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "stylevec/error.hpp"

static_assert(std::endian::native == std::endian::little, "tensor buffers are stored little-endian");

namespace stylevec {

namespace {

inline float load(Dtype dtype, const std::byte* p, std::size_t i) noexcept {
    switch (dtype) {
    case Dtype::F32: {
        float v;
        std::memcpy(&v, p + 4 * i, 4);
        return v;
    }
    case Dtype::F16: {
        std::uint16_t h;
        std::memcpy(&h, p + 2 * i, 2);
        return half_bits_to_float(h);
    }
    case Dtype::BF16: {
        std::uint16_t h;
        std::memcpy(&h, p + 2 * i, 2);
        return bf16_bits_to_float(h);
    }
    }
    return 0.0f;
}

inline void store(Dtype dtype, std::byte* p, std::size_t i, float v) noexcept {
    switch (dtype) {
    case Dtype::F32:
        std::memcpy(p + 4 * i, &v, 4);
        break;
    case Dtype::F16: {
        const std::uint16_t h = float_to_half_bits(v);
        std::memcpy(p + 2 * i, &h, 2);
        break;
    }
    case Dtype::BF16: {
        const std::uint16_t h = float_to_bf16_bits(v);
        std::memcpy(p + 2 * i, &h, 2);
        break;
    }
    }
}

void require_conforming(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_to_string(a.shape()) + " vs " +
                                                  shape_to_string(b.shape()));
    }
    if (a.dtype() != b.dtype()) {
        throw Error(ErrorCode::DtypeMismatch, std::string(op) + ": " + std::string(dtype_name(a.dtype())) + " vs " +
                                                  std::string(dtype_name(b.dtype())));
    }
}

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw Error(ErrorCode::ShapeMismatch, "negative dimension in " + shape_to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<std::byte>>(4)) {}

Tensor::Tensor(Dtype dtype, Shape shape, std::vector<std::byte> data)
    : dtype_(dtype), shape_(std::move(shape)), numel_(shape_numel(shape_)) {
    if (data.size() != numel_ * byte_width(dtype_)) {
        throw Error(ErrorCode::ShapeMismatch, "buffer of " + std::to_string(data.size()) + " bytes does not match " +
                                                  std::string(dtype_name(dtype_)) + shape_to_string(shape_));
    }
    data_ = std::make_shared<const std::vector<std::byte>>(std::move(data));
}

Tensor Tensor::from_floats(std::span<const float> values, Shape shape, Dtype dtype) {
    if (values.size() != shape_numel(shape)) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::to_string(values.size()) + " values for shape " + shape_to_string(shape));
    }
    std::vector<std::byte> buf(values.size() * byte_width(dtype));
    for (std::size_t i = 0; i < values.size(); ++i) store(dtype, buf.data(), i, values[i]);
    return Tensor(dtype, std::move(shape), std::move(buf));
}

Tensor Tensor::zeros(Dtype dtype, Shape shape) {
    const auto n = shape_numel(shape);
    return Tensor(dtype, std::move(shape), std::vector<std::byte>(n * byte_width(dtype)));
}

float Tensor::at(std::size_t i) const noexcept { return load(dtype_, data_->data(), i); }

std::vector<float> Tensor::to_floats() const {
    std::vector<float> out(numel_);
    for (std::size_t i = 0; i < numel_; ++i) out[i] = load(dtype_, data_->data(), i);
    return out;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel_) {
        throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_to_string(shape_) + " to " +
                                                  shape_to_string(shape));
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
    return dtype_ == other.dtype_ && shape_ == other.shape_ &&
           (data_ == other.data_ || *data_ == *other.data_);
}

bool Tensor::all_zero() const noexcept {
    for (std::size_t i = 0; i < numel_; ++i) {
        if (load(dtype_, data_->data(), i) != 0.0f) return false;
    }
    return true;
}

Tensor elementwise_sub(const Tensor& a, const Tensor& b) {
    require_conforming(a, b, "elementwise_sub");
    const auto dtype = a.dtype();
    std::vector<std::byte> out(a.bytes().size());
    const auto* pa = a.bytes().data();
    const auto* pb = b.bytes().data();
    for (std::size_t i = 0; i < a.numel(); ++i) {
        store(dtype, out.data(), i, load(dtype, pa, i) - load(dtype, pb, i));
    }
    return Tensor(dtype, a.shape(), std::move(out));
}

Tensor axpy(const Tensor& base, const Tensor& delta, double scale) {
    require_conforming(base, delta, "axpy");
    if (!std::isfinite(scale)) {
        throw Error(ErrorCode::NonFiniteScale, "axpy scale " + std::to_string(scale));
    }
    if (scale == 0.0) return base;

    const auto dtype = base.dtype();
    std::vector<std::byte> out(base.bytes().size());
    const auto* pb = base.bytes().data();
    const auto* pd = delta.bytes().data();
    const auto width = byte_width(dtype);
    for (std::size_t i = 0; i < base.numel(); ++i) {
        // one rounding of the exact product keeps the coefficient at full precision
        const auto step = static_cast<float>(scale * static_cast<double>(load(dtype, pd, i)));
        if (step == 0.0f) {
            // x + 0 keeps x exactly, including -0.0
            std::memcpy(out.data() + i * width, pb + i * width, width);
        } else {
            store(dtype, out.data(), i, load(dtype, pb, i) + step);
        }
    }
    return Tensor(dtype, base.shape(), std::move(out));
}

Tensor matmul(const Tensor& b, const Tensor& a) {
    if (b.shape().size() != 2 || a.shape().size() != 2) {
        throw Error(ErrorCode::ShapeMismatch, "matmul needs rank-2 operands, got " + shape_to_string(b.shape()) +
                                                  " and " + shape_to_string(a.shape()));
    }
    const auto d = static_cast<std::size_t>(b.shape()[0]);
    const auto r = static_cast<std::size_t>(b.shape()[1]);
    const auto k = static_cast<std::size_t>(a.shape()[1]);
    if (static_cast<std::size_t>(a.shape()[0]) != r) {
        throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions " + shape_to_string(b.shape()) + " x " +
                                                  shape_to_string(a.shape()));
    }
    const auto lhs = b.to_floats();
    const auto rhs = a.to_floats();
    std::vector<float> out(d * k, 0.0f);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            float acc = 0.0f;
            for (std::size_t p = 0; p < r; ++p) acc += lhs[i * r + p] * rhs[p * k + j];
            out[i * k + j] = acc;
        }
    }
    return Tensor::from_floats(out, {static_cast<std::int64_t>(d), static_cast<std::int64_t>(k)}, Dtype::F32);
}

Tensor cast(const Tensor& t, Dtype target) {
    if (t.dtype() == target) return t;
    std::vector<std::byte> out(t.numel() * byte_width(target));
    const auto* p = t.bytes().data();
    for (std::size_t i = 0; i < t.numel(); ++i) store(target, out.data(), i, load(t.dtype(), p, i));
    return Tensor(target, t.shape(), std::move(out));
}

double frobenius_norm(const Tensor& t) {
    double acc = 0.0;
    const auto* p = t.bytes().data();
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double v = load(t.dtype(), p, i);
        acc += v * v;
    }
    return std::sqrt(acc);
}

} // namespace stylevec
