#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rb {

// Dense rank-4 tensor, (N, C, H, W) row-major, 32-bit floats.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, float fill = 0.0f);
    Tensor(Shape s, std::vector<float> values);

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, float v) { return Tensor(s, v); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    float& at(int n, int c, int h, int w) {
        return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    float at(int n, int c, int h, int w) const {
        return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    bool all_finite() const;

private:
    Shape shape_{};
    std::vector<float> data_;
};

// 2D spatial map, the value type for attention maps and binary masks.
struct Map2D {
    int h = 0, w = 0;
    std::vector<float> v;

    Map2D() = default;
    Map2D(int h_, int w_, float fill = 0.0f)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
    float at(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
};

// Elementwise product; b must match a's shape or be (1,1,H,W), broadcast over N and C.
Tensor elementwise_mul(const Tensor& a, const Tensor& b);

// Direct cross-correlation. weights is (Cout, Cin, K, K).
Tensor conv2d_forward(const Tensor& x, const Tensor& weights,
                      const std::vector<float>& bias, int stride, int pad);

struct Conv2dGrads {
    Tensor grad_x;
    Tensor grad_weights;
    std::vector<float> grad_bias;
};

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& x,
                            const Tensor& weights, int stride, int pad);

struct MaxPoolResult {
    Tensor out;
    // flat index into the input's spatial plane per output element
    std::vector<std::int32_t> argmax;
};

MaxPoolResult maxpool2d(const Tensor& x, int k, int stride);
Tensor maxpool2d_backward(const Tensor& grad_out, const MaxPoolResult& cache, Shape in_shape);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, Shape in_shape);

// out[i,j] = m[floor(i*h/out_h), floor(j*w/out_w)]
Map2D upsample_nearest(const Map2D& m, int out_h, int out_w);

} // namespace rb
