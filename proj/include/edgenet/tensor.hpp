#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "edgenet/error.hpp"

namespace edgenet {

// Element types a serialized tensor can carry. Arithmetic only ever happens
// in f32 or f64; f16 and i8 are storage formats widened on load.
enum class DType : uint8_t { F64 = 0, F32 = 1, F16 = 2, I8 = 3 };

inline size_t dtype_size(DType t) {
    switch (t) {
        case DType::F64: return 8;
        case DType::F32: return 4;
        case DType::F16: return 2;
        case DType::I8: return 1;
    }
    throw Error("unknown dtype");
}

inline const char* dtype_name(DType t) {
    switch (t) {
        case DType::F64: return "f64";
        case DType::F32: return "f32";
        case DType::F16: return "f16";
        case DType::I8: return "i8";
    }
    return "?";
}

// Affine int8 quantization parameters. dequant(zero_point) is exactly 0.
struct QuantParams {
    float scale = 1.0f;
    int32_t zero_point = 0;

    bool operator==(const QuantParams&) const = default;
};

// Ordered positive extents. Layout convention is row-major throughout:
// activations are N,H,W,C and convolution kernels are H,W,Cin,Cout.
struct Shape {
    std::vector<int64_t> dims;

    Shape() = default;
    Shape(std::initializer_list<int64_t> d) : dims(d) { validate(); }
    explicit Shape(std::vector<int64_t> d) : dims(std::move(d)) { validate(); }

    void validate() const {
        if (dims.empty()) throw ShapeError("shape must have at least one extent");
        for (int64_t d : dims) {
            if (d < 1) throw ShapeError("shape extent must be >= 1, got " + str());
        }
    }

    size_t rank() const { return dims.size(); }
    int64_t operator[](size_t i) const { return dims[i]; }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : dims) n *= d;
        return n;
    }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) os << ',';
            os << dims[i];
        }
        os << ']';
        return os.str();
    }
};

// Dense row-major n-dimensional array over a floating scalar type.
// Immutable from the consumer's perspective once built; forward/backward
// code treats tensors as values.
template <typename T>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_.numel()), fill) {}
    TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != shape_.numel()) {
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
        }
    }

    static TensorT full(Shape shape, T fill) { return TensorT(std::move(shape), fill); }

    bool empty() const { return data_.empty(); }
    const Shape& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(size_t i) const { return shape_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> flat() { return {data_.data(), data_.size()}; }
    std::span<const T> flat() const { return {data_.data(), data_.size()}; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Row-major flat offset of a coordinate.
    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            off = off * shape_[k] + i;
            ++k;
        }
        return off;
    }

    T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    const T& at(std::initializer_list<int64_t> idx) const {
        return data_[static_cast<size_t>(offset(idx))];
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    // Elementwise transform into a fresh tensor of identical shape.
    template <typename F>
    TensorT map(F f) const {
        TensorT out(shape_);
        for (size_t i = 0; i < data_.size(); ++i) out.data_[i] = f(data_[i]);
        return out;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_);
        for (size_t i = 0; i < data_.size(); ++i) out[static_cast<int64_t>(i)] = static_cast<U>(data_[i]);
        return out;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    TensorT reshaped(Shape s) const {
        if (s.numel() != numel()) {
            throw ShapeError("reshape " + shape_.str() + " -> " + s.str() + " changes element count");
        }
        TensorT out = *this;
        out.shape_ = std::move(s);
        return out;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorF64 = TensorT<double>;

// C[m,n] = A[m,k] * B[k,n]. The k-then-j loop order keeps the per-element
// accumulation order fixed, so results are bit-identical at any thread count.
template <typename T>
void matmul_raw(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    std::fill(c, c + m * n, T(0));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T aik = arow[kk];
            const T* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C[k,n] = A[m,k]^T * B[m,n], used for weight gradients.
template <typename T>
void matmul_tn_raw(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    std::fill(c, c + k * n, T(0));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < k; ++i) {
        T* crow = c + i * n;
        for (int64_t r = 0; r < m; ++r) {
            const T ari = a[r * k + i];
            const T* brow = b + r * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += ari * brow[j];
        }
    }
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2) {
        throw ShapeError("matmul requires rank-2 tensors, got " + a.shape().str() + " x " +
                         b.shape().str());
    }
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul inner dimensions disagree: " + a.shape().str() + " x " +
                         b.shape().str());
    }
    TensorT<T> c(Shape{a.dim(0), b.dim(1)});
    matmul_raw(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
    if (a.shape().rank() != 2) throw ShapeError("transpose2d requires rank 2, got " + a.shape().str());
    const int64_t m = a.dim(0), n = a.dim(1);
    TensorT<T> out(Shape{n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

} // namespace edgenet
