#include "rb/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rb {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor::Tensor(Shape s, float fill) : shape_(s), data_(s.count(), fill) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
        throw std::invalid_argument("Tensor: negative shape component " + s.str());
}

Tensor::Tensor(Shape s, std::vector<float> values) : shape_(s), data_(std::move(values)) {
    if (data_.size() != s.count())
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + s.str());
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) {
        Tensor out(sa);
        const float* pa = a.data();
        const float* pb = b.data();
        float* po = out.data();
        for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
        return out;
    }
    if (sb.n == 1 && sb.c == 1 && sb.h == sa.h && sb.w == sa.w) {
        Tensor out(sa);
        const std::size_t plane = static_cast<std::size_t>(sa.h) * sa.w;
        const float* pb = b.data();
        for (int n = 0; n < sa.n; ++n)
            for (int c = 0; c < sa.c; ++c) {
                const float* pa = a.data() + (static_cast<std::size_t>(n) * sa.c + c) * plane;
                float* po = out.data() + (static_cast<std::size_t>(n) * sa.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) po[i] = pa[i] * pb[i];
            }
        return out;
    }
    throw std::invalid_argument("elementwise_mul: shape " + sb.str() +
                                " is neither equal to " + sa.str() +
                                " nor a (1,1,H,W) broadcastable mask");
}

namespace {

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Unpacks x[n] into a (Cin*K*K) x (Hout*Wout) column matrix.
void im2col(const Tensor& x, int n, int k, int stride, int pad,
            int hout, int wout, float* col) {
    const Shape& s = x.shape();
    const std::size_t cols = static_cast<std::size_t>(hout) * wout;
    for (int c = 0; c < s.c; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* row = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * cols;
                for (int i = 0; i < hout; ++i) {
                    const int src_i = i * stride - pad + ki;
                    if (src_i < 0 || src_i >= s.h) {
                        for (int j = 0; j < wout; ++j) row[i * wout + j] = 0.0f;
                        continue;
                    }
                    for (int j = 0; j < wout; ++j) {
                        const int src_j = j * stride - pad + kj;
                        row[i * wout + j] = (src_j < 0 || src_j >= s.w)
                                                ? 0.0f
                                                : x.at(n, c, src_i, src_j);
                    }
                }
            }
        }
    }
}

// Scatters a column matrix back into grad_x[n], accumulating overlaps.
void col2im_add(const float* col, int k, int stride, int pad,
                int hout, int wout, Tensor& gx, int n) {
    const Shape& s = gx.shape();
    const std::size_t cols = static_cast<std::size_t>(hout) * wout;
    for (int c = 0; c < s.c; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* row = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * cols;
                for (int i = 0; i < hout; ++i) {
                    const int dst_i = i * stride - pad + ki;
                    if (dst_i < 0 || dst_i >= s.h) continue;
                    for (int j = 0; j < wout; ++j) {
                        const int dst_j = j * stride - pad + kj;
                        if (dst_j < 0 || dst_j >= s.w) continue;
                        gx.at(n, c, dst_i, dst_j) += row[i * wout + j];
                    }
                }
            }
        }
    }
}

void check_conv_args(const Tensor& x, const Tensor& w, int stride, int pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (ws.c != xs.c)
        throw std::invalid_argument("conv2d: input has " + std::to_string(xs.c) +
                                    " channels but weights expect " + std::to_string(ws.c));
    if (ws.h != ws.w)
        throw std::invalid_argument("conv2d: only square kernels supported, got " + ws.str());
    if (ws.h > xs.h + 2 * pad || ws.h > xs.w + 2 * pad)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(ws.h) +
                                    " larger than padded input " + xs.str());
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
}

} // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weights,
                      const std::vector<float>& bias, int stride, int pad) {
    check_conv_args(x, weights, stride, pad);
    const Shape& xs = x.shape();
    const Shape& ws = weights.shape();
    if (static_cast<int>(bias.size()) != ws.n)
        throw std::invalid_argument("conv2d: bias length must equal output channels");

    const int k = ws.h;
    const int hout = conv_out_dim(xs.h, k, stride, pad);
    const int wout = conv_out_dim(xs.w, k, stride, pad);
    Tensor out({xs.n, ws.n, hout, wout});

    const int kdim = ws.c * k * k;
    const int cols = hout * wout;
    std::vector<float> col(static_cast<std::size_t>(kdim) * cols);

    for (int n = 0; n < xs.n; ++n) {
        im2col(x, n, k, stride, pad, hout, wout, col.data());
        // out[n] = W(Cout x kdim) * col(kdim x cols)
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans,
                    ws.n, cols, kdim, 1.0f,
                    weights.data(), kdim, col.data(), cols,
                    0.0f, out.data() + static_cast<std::size_t>(n) * ws.n * cols, cols);
        for (int co = 0; co < ws.n; ++co) {
            float* po = out.data() + (static_cast<std::size_t>(n) * ws.n + co) * cols;
            const float b = bias[co];
            for (int i = 0; i < cols; ++i) po[i] += b;
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& x,
                            const Tensor& weights, int stride, int pad) {
    check_conv_args(x, weights, stride, pad);
    const Shape& xs = x.shape();
    const Shape& ws = weights.shape();
    const int k = ws.h;
    const int hout = conv_out_dim(xs.h, k, stride, pad);
    const int wout = conv_out_dim(xs.w, k, stride, pad);
    const Shape expect{xs.n, ws.n, hout, wout};
    if (!(grad_out.shape() == expect))
        throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                                    " does not match expected " + expect.str());

    Conv2dGrads g{Tensor(xs), Tensor(ws), std::vector<float>(ws.n, 0.0f)};

    const int kdim = ws.c * k * k;
    const int cols = hout * wout;
    std::vector<float> col(static_cast<std::size_t>(kdim) * cols);
    std::vector<float> gcol(static_cast<std::size_t>(kdim) * cols);

    for (int n = 0; n < xs.n; ++n) {
        const float* go = grad_out.data() + static_cast<std::size_t>(n) * ws.n * cols;
        im2col(x, n, k, stride, pad, hout, wout, col.data());
        // grad_W += go(Cout x cols) * col^T(cols x kdim)
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans,
                    ws.n, kdim, cols, 1.0f,
                    go, cols, col.data(), cols,
                    1.0f, g.grad_weights.data(), kdim);
        // gcol = W^T(kdim x Cout) * go(Cout x cols)
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
                    kdim, cols, ws.n, 1.0f,
                    weights.data(), kdim, go, cols,
                    0.0f, gcol.data(), cols);
        col2im_add(gcol.data(), k, stride, pad, hout, wout, g.grad_x, n);
        for (int co = 0; co < ws.n; ++co) {
            const float* p = go + static_cast<std::size_t>(co) * cols;
            float acc = 0.0f;
            for (int i = 0; i < cols; ++i) acc += p[i];
            g.grad_bias[co] += acc;
        }
    }
    return g;
}

MaxPoolResult maxpool2d(const Tensor& x, int k, int stride) {
    const Shape& s = x.shape();
    if (k > s.h || k > s.w)
        throw std::invalid_argument("maxpool2d: window " + std::to_string(k) +
                                    " larger than input " + s.str());
    if (stride < 1) throw std::invalid_argument("maxpool2d: stride must be >= 1");
    const int hout = (s.h - k) / stride + 1;
    const int wout = (s.w - k) / stride + 1;

    MaxPoolResult r{Tensor({s.n, s.c, hout, wout}), {}};
    r.argmax.resize(r.out.size());
    std::size_t oi = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int i = 0; i < hout; ++i)
                for (int j = 0; j < wout; ++j, ++oi) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_idx = 0;
                    for (int di = 0; di < k; ++di)
                        for (int dj = 0; dj < k; ++dj) {
                            const int si = i * stride + di;
                            const int sj = j * stride + dj;
                            const float v = x.at(n, c, si, sj);
                            // ties keep the first position in scan order
                            if (v > best) {
                                best = v;
                                best_idx = si * s.w + sj;
                            }
                        }
                    r.out.data()[oi] = best;
                    r.argmax[oi] = best_idx;
                }
    return r;
}

Tensor maxpool2d_backward(const Tensor& grad_out, const MaxPoolResult& cache, Shape in_shape) {
    if (grad_out.size() != cache.argmax.size())
        throw std::invalid_argument("maxpool2d_backward: grad_out does not match pooling cache");
    Tensor gx(in_shape);
    const Shape& os = grad_out.shape();
    const std::size_t plane = static_cast<std::size_t>(in_shape.h) * in_shape.w;
    std::size_t oi = 0;
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c) {
            float* gp = gx.data() + (static_cast<std::size_t>(n) * in_shape.c + c) * plane;
            for (int i = 0; i < os.h * os.w; ++i, ++oi)
                gp[cache.argmax[oi]] += grad_out.data()[oi];
        }
    return gx;
}

Tensor global_avg_pool(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.h < 1 || s.w < 1)
        throw std::invalid_argument("global_avg_pool: empty spatial extent " + s.str());
    Tensor out({s.n, s.c, 1, 1});
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float* p = x.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            float acc = 0.0f;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc / static_cast<float>(plane);
        }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, Shape in_shape) {
    const Shape& os = grad_out.shape();
    if (os.n != in_shape.n || os.c != in_shape.c || os.h != 1 || os.w != 1)
        throw std::invalid_argument("global_avg_pool_backward: grad shape " + os.str() +
                                    " does not match input " + in_shape.str());
    Tensor gx(in_shape);
    const std::size_t plane = static_cast<std::size_t>(in_shape.h) * in_shape.w;
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c) {
            const float g = grad_out.at(n, c, 0, 0) / static_cast<float>(plane);
            float* p = gx.data() + (static_cast<std::size_t>(n) * in_shape.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = g;
        }
    return gx;
}

Map2D upsample_nearest(const Map2D& m, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("upsample_nearest: zero-size target");
    if (out_h < m.h || out_w < m.w)
        throw std::invalid_argument("upsample_nearest: target smaller than source");
    Map2D out(out_h, out_w);
    for (int i = 0; i < out_h; ++i) {
        const int si = static_cast<int>(static_cast<std::int64_t>(i) * m.h / out_h);
        for (int j = 0; j < out_w; ++j) {
            const int sj = static_cast<int>(static_cast<std::int64_t>(j) * m.w / out_w);
            out.at(i, j) = m.at(si, sj);
        }
    }
    return out;
}

} // namespace rb
