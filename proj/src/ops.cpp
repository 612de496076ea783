#include "par/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "par/errors.hpp"
#include "par/rng.hpp"

namespace par::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                             " differ");
    }
}

template <typename T>
void record(const char* op, std::vector<NodePtr<T>> inputs, const Tensor<T>& out,
            typename GradientTape<T>::BackwardFn fn) {
    GradientTape<T>::active()->record(op, std::move(inputs), out.node(), std::move(fn));
}

// Gradient buffer of an operand, or nullptr when it takes no gradient.
template <typename T>
T* grad_or_null(const NodePtr<T>& node) {
    return node->requires_grad ? detail::grad_buffer(*node).data() : nullptr;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Tensor<T> result(a.shape(), std::move(out));
    if (detail::should_record<T>({&a, &b})) {
        auto an = a.node(), bn = b.node(), on = result.node();
        record<T>("add", {an, bn}, result, [an, bn, on] {
            const auto& g = on->grad;
            if (T* ga = grad_or_null(an)) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (T* gb = grad_or_null(bn)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Tensor<T> result(a.shape(), std::move(out));
    if (detail::should_record<T>({&a, &b})) {
        auto an = a.node(), bn = b.node(), on = result.node();
        record<T>("mul", {an, bn}, result, [an, bn, on] {
            const auto& g = on->grad;
            if (T* ga = grad_or_null(an)) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->values[i];
            }
            if (T* gb = grad_or_null(bn)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->values[i];
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    Tensor<T> result(a.shape(), std::move(out));
    if (detail::should_record<T>({&a})) {
        auto an = a.node(), on = result.node();
        record<T>("scale", {an}, result, [an, on, factor] {
            T* ga = grad_or_null(an);
            for (std::size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i] * factor;
        });
    }
    return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T total = 0;
    for (T v : a.values()) total += v;
    auto result = Tensor<T>::scalar(total);
    if (detail::should_record<T>({&a})) {
        auto an = a.node(), on = result.node();
        record<T>("sum", {an}, result, [an, on] {
            T* ga = grad_or_null(an);
            const T g = on->grad[0];
            for (std::size_t i = 0; i < an->values.size(); ++i) ga[i] += g;
        });
    }
    return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mask_multiply(const Tensor<T>& features, const Tensor<T>& mask, MaskCheck check) {
    const auto& fs = features.shape();
    const auto& ms = mask.shape();
    if (fs.size() < 3 || fs.size() > 4 || ms.size() != fs.size()) {
        throw DimensionError("mask_multiply: expected [N]xHxWxD features and a mask of equal rank, got " +
                             shape_str(fs) + " and " + shape_str(ms));
    }
    for (std::size_t i = 0; i + 1 < fs.size(); ++i) {
        if (fs[i] != ms[i]) {
            throw DimensionError("mask_multiply: spatial/batch dims differ: " + shape_str(fs) + " vs " +
                                 shape_str(ms));
        }
    }
    const std::size_t depth = fs.back();
    const std::size_t mask_depth = ms.back();
    if (mask_depth != 1 && mask_depth != depth) {
        throw DimensionError("mask_multiply: mask must have 1 or " + std::to_string(depth) + " channels, got " +
                             std::to_string(mask_depth));
    }
    auto mv = mask.values();
    if (check == MaskCheck::strict) {
        for (T v : mv) {
            if (v != T(0) && v != T(1)) throw ValidationError("mask_multiply: mask values must be exactly 0 or 1");
        }
    }
    auto fv = features.values();
    const std::size_t cells = features.numel() / depth;
    std::vector<T> out(features.numel());
    auto mask_at = [mask_depth, mv](std::size_t cell, std::size_t d) {
        return mask_depth == 1 ? mv[cell] : mv[cell * mask_depth + d];
    };
    for (std::size_t c = 0; c < cells; ++c) {
        for (std::size_t d = 0; d < depth; ++d) out[c * depth + d] = fv[c * depth + d] * mask_at(c, d);
    }
    Tensor<T> result(fs, std::move(out));
    if (detail::should_record<T>({&features})) {
        auto fn = features.node(), mn = mask.node(), on = result.node();
        // The mask node is captured as a constant and deliberately not listed as an input.
        record<T>("mask_multiply", {fn}, result, [fn, mn, on, cells, depth, mask_depth] {
            T* gf = grad_or_null(fn);
            const auto& g = on->grad;
            const auto& m = mn->values;
            for (std::size_t c = 0; c < cells; ++c) {
                for (std::size_t d = 0; d < depth; ++d) {
                    const T mval = mask_depth == 1 ? m[c] : m[c * mask_depth + d];
                    if (mval != T(0)) gf[c * depth + d] += g[c * depth + d] * mval;
                }
            }
        });
    }
    return result;
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ValidationError("conv2d: stride must be positive");
    if (kernel > extent + 2 * padding) {
        throw DimensionError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                             std::to_string(extent + 2 * padding));
    }
    return (extent + 2 * padding - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
    std::size_t batch, height, width, in_ch, kh, kw, out_ch, stride, pad, out_h, out_w;
    std::size_t rows() const { return batch * out_h * out_w; }
    std::size_t cols() const { return kh * kw * in_ch; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
    const std::size_t K = g.cols();
    std::size_t r = 0;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox, ++r) {
                T* dst = col + r * K;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        T* cell = dst + (ky * g.kw + kx) * g.in_ch;
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
                            ix >= static_cast<long>(g.width)) {
                            std::fill(cell, cell + g.in_ch, T(0));
                        } else {
                            const T* src = x + ((n * g.height + iy) * g.width + ix) * g.in_ch;
                            std::copy(src, src + g.in_ch, cell);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accumulate(const ConvGeometry& g, const T* col, T* dx) {
    const std::size_t K = g.cols();
    std::size_t r = 0;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox, ++r) {
                const T* src = col + r * K;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
                        const T* cell = src + (ky * g.kw + kx) * g.in_ch;
                        T* dst = dx + ((n * g.height + iy) * g.width + ix) * g.in_ch;
                        for (std::size_t c = 0; c < g.in_ch; ++c) dst[c] += cell[c];
                    }
                }
            }
        }
    }
}

// C[M x N] += A[M x K] * B[K x N], all row-major.
template <typename T>
void gemm_accumulate(std::size_t M, std::size_t K, std::size_t N, const T* __restrict A, const T* __restrict B,
                     T* __restrict C) {
    for (std::size_t i = 0; i < M; ++i) {
        T* crow = C + i * N;
        const T* arow = A + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const T a = arow[k];
            if (a == T(0)) continue;
            const T* brow = B + k * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[K x N] += A^T * B with A[M x K], B[M x N].
template <typename T>
void gemm_at_b_accumulate(std::size_t M, std::size_t K, std::size_t N, const T* __restrict A, const T* __restrict B,
                          T* __restrict C) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* arow = A + i * K;
        const T* brow = B + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T a = arow[k];
            if (a == T(0)) continue;
            T* crow = C + k * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M x K] += A * B^T with A[M x N], B[K x N].
template <typename T>
void gemm_a_bt_accumulate(std::size_t M, std::size_t K, std::size_t N, const T* __restrict A, const T* __restrict B,
                          T* __restrict C) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* arow = A + i * N;
        T* crow = C + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const T* brow = B + k * N;
            T acc = 0;
            for (std::size_t j = 0; j < N; ++j) acc += arow[j] * brow[j];
            crow[k] += acc;
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const std::optional<Tensor<T>>& bias,
                 std::size_t stride, std::size_t padding) {
    const bool batched = input.rank() == 4;
    if (input.rank() != 3 && !batched) {
        throw DimensionError("conv2d: input must be HxWxC or NxHxWxC, got " + shape_str(input.shape()));
    }
    if (kernels.rank() != 4) throw DimensionError("conv2d: kernels must be k x k x Cin x Cout");
    ConvGeometry g{};
    g.batch = batched ? input.dim(0) : 1;
    g.height = input.dim(batched ? 1 : 0);
    g.width = input.dim(batched ? 2 : 1);
    g.in_ch = input.dim(batched ? 3 : 2);
    g.kh = kernels.dim(0);
    g.kw = kernels.dim(1);
    g.out_ch = kernels.dim(3);
    if (kernels.dim(2) != g.in_ch) {
        throw DimensionError("conv2d: kernel expects " + std::to_string(kernels.dim(2)) + " input channels, input has " +
                             std::to_string(g.in_ch));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_ch)) {
        throw DimensionError("conv2d: bias must have " + std::to_string(g.out_ch) + " entries");
    }
    g.stride = stride;
    g.pad = padding;
    g.out_h = conv_output_extent(g.height, g.kh, stride, padding);
    g.out_w = conv_output_extent(g.width, g.kw, stride, padding);

    const std::size_t M = g.rows(), K = g.cols(), N = g.out_ch;
    auto col = std::make_shared<std::vector<T>>(M * K);
    im2col(g, input.values().data(), col->data());

    std::vector<T> out(M * N, T(0));
    if (bias) {
        auto bv = bias->values();
        for (std::size_t r = 0; r < M; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * N);
    }
    gemm_accumulate(M, K, N, col->data(), kernels.values().data(), out.data());

    Shape out_shape = batched ? Shape{g.batch, g.out_h, g.out_w, N} : Shape{g.out_h, g.out_w, N};
    Tensor<T> result(std::move(out_shape), std::move(out));

    const Tensor<T>* bias_ptr = bias ? &*bias : nullptr;
    if (detail::should_record<T>({&input, &kernels, bias_ptr})) {
        auto xn = input.node(), wn = kernels.node(), on = result.node();
        NodePtr<T> bn = bias ? bias->node() : nullptr;
        std::vector<NodePtr<T>> inputs{xn, wn};
        if (bn) inputs.push_back(bn);
        record<T>("conv2d", std::move(inputs), result, [g, col, xn, wn, bn, on] {
            const std::size_t M = g.rows(), K = g.cols(), N = g.out_ch;
            const T* gy = on->grad.data();
            if (T* gw = grad_or_null(wn)) gemm_at_b_accumulate(M, K, N, col->data(), gy, gw);
            if (bn) {
                if (T* gb = grad_or_null(bn)) {
                    for (std::size_t r = 0; r < M; ++r) {
                        for (std::size_t j = 0; j < N; ++j) gb[j] += gy[r * N + j];
                    }
                }
            }
            if (T* gx = grad_or_null(xn)) {
                std::vector<T> dcol(M * K, T(0));
                gemm_a_bt_accumulate(M, K, N, gy, wn->values.data(), dcol.data());
                col2im_accumulate(g, dcol.data(), gx);
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& features) {
    const bool batched = features.rank() == 4;
    if (features.rank() != 3 && !batched) {
        throw DimensionError("global_avg_pool: expected HxWxD or NxHxWxD, got " + shape_str(features.shape()));
    }
    const std::size_t batch = batched ? features.dim(0) : 1;
    const std::size_t depth = features.shape().back();
    const std::size_t cells = features.numel() / (batch * depth);
    auto fv = features.values();
    std::vector<T> out(batch * depth, T(0));
    const T inv = T(1) / static_cast<T>(cells);
    for (std::size_t n = 0; n < batch; ++n) {
        T* o = out.data() + n * depth;
        const T* f = fv.data() + n * cells * depth;
        for (std::size_t c = 0; c < cells; ++c) {
            for (std::size_t d = 0; d < depth; ++d) o[d] += f[c * depth + d];
        }
        for (std::size_t d = 0; d < depth; ++d) o[d] *= inv;
    }
    Tensor<T> result(batched ? Shape{batch, depth} : Shape{depth}, std::move(out));
    if (detail::should_record<T>({&features})) {
        auto fn = features.node(), on = result.node();
        record<T>("global_avg_pool", {fn}, result, [fn, on, batch, cells, depth, inv] {
            T* gf = grad_or_null(fn);
            const auto& g = on->grad;
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t c = 0; c < cells; ++c) {
                    for (std::size_t d = 0; d < depth; ++d) gf[(n * cells + c) * depth + d] += g[n * depth + d] * inv;
                }
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    const bool batched = x.rank() == 2;
    if ((x.rank() != 1 && !batched) || weights.rank() != 2 || bias.rank() != 1) {
        throw DimensionError("dense: expected x [N x] In, weights In x Out, bias Out");
    }
    const std::size_t batch = batched ? x.dim(0) : 1;
    const std::size_t in = x.shape().back();
    const std::size_t outw = weights.dim(1);
    if (weights.dim(0) != in || bias.dim(0) != outw) {
        throw DimensionError("dense: x " + shape_str(x.shape()) + ", weights " + shape_str(weights.shape()) +
                             ", bias " + shape_str(bias.shape()) + " do not agree");
    }
    std::vector<T> out(batch * outw);
    auto bv = bias.values();
    for (std::size_t n = 0; n < batch; ++n) std::copy(bv.begin(), bv.end(), out.begin() + n * outw);
    gemm_accumulate(batch, in, outw, x.values().data(), weights.values().data(), out.data());
    Tensor<T> result(batched ? Shape{batch, outw} : Shape{outw}, std::move(out));
    if (detail::should_record<T>({&x, &weights, &bias})) {
        auto xn = x.node(), wn = weights.node(), bn = bias.node(), on = result.node();
        record<T>("dense", {xn, wn, bn}, result, [xn, wn, bn, on, batch, in, outw] {
            const T* gy = on->grad.data();
            if (T* gw = grad_or_null(wn)) gemm_at_b_accumulate(batch, in, outw, xn->values.data(), gy, gw);
            if (T* gb = grad_or_null(bn)) {
                for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t j = 0; j < outw; ++j) gb[j] += gy[n * outw + j];
                }
            }
            if (T* gx = grad_or_null(xn)) gemm_a_bt_accumulate(batch, in, outw, gy, wn->values.data(), gx);
        });
    }
    return result;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    Tensor<T> result(x.shape(), std::move(out));
    if (detail::should_record<T>({&x})) {
        auto xn = x.node(), on = result.node();
        record<T>("relu", {xn}, result, [xn, on] {
            T* gx = grad_or_null(xn);
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                if (xn->values[i] > T(0)) gx[i] += on->grad[i];
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    constexpr T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    std::vector<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = xv[i];
        T s;
        if (v >= T(0)) {
            s = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            s = e / (T(1) + e);
        }
        out[i] = std::clamp(s, lo, hi);
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (detail::should_record<T>({&x})) {
        auto xn = x.node(), on = result.node();
        record<T>("sigmoid", {xn}, result, [xn, on] {
            T* gx = grad_or_null(xn);
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                const T s = on->values[i];
                gx[i] += on->grad[i] * s * (T(1) - s);
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
    return kind == Activation::relu ? relu(x) : sigmoid(x);
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                     Mode mode) {
    if (x.rank() < 2) throw DimensionError("batch_norm: input needs a batch axis and a channel axis");
    const std::size_t channels = x.shape().back();
    if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels} ||
        state.running_mean.size() != channels || state.running_var.size() != channels) {
        throw DimensionError("batch_norm: parameters do not match " + std::to_string(channels) + " channels");
    }
    const std::size_t rows = x.numel() / channels;
    const T eps = static_cast<T>(kBatchNormEpsilon);
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();

    std::vector<T> mean(channels, T(0)), inv_std(channels);
    if (mode == Mode::train) {
        if (x.dim(0) < 2) throw ValidationError("batch_norm: train mode needs a batch of at least 2");
        std::vector<T> var(channels, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < channels; ++c) mean[c] += xv[r * channels + c];
        }
        for (auto& m : mean) m /= static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < channels; ++c) {
                const T d = xv[r * channels + c] - mean[c];
                var[c] += d * d;
            }
        }
        const T momentum = static_cast<T>(kBatchNormMomentum);
        for (std::size_t c = 0; c < channels; ++c) {
            var[c] /= static_cast<T>(rows);
            inv_std[c] = T(1) / std::sqrt(var[c] + eps);
            state.running_mean[c] = momentum * state.running_mean[c] + (T(1) - momentum) * mean[c];
            state.running_var[c] = momentum * state.running_var[c] + (T(1) - momentum) * var[c];
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = T(1) / std::sqrt(state.running_var[c] + eps);
        }
    }

    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    std::vector<T> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            const T h = (xv[i] - mean[c]) * inv_std[c];
            (*xhat)[i] = h;
            out[i] = gv[c] * h + bv[c];
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (detail::should_record<T>({&x, &gamma, &beta})) {
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = result.node();
        const bool train = mode == Mode::train;
        record<T>("batch_norm", {xn, gn, bn}, result, [xn, gn, bn, on, xhat, inv_std, rows, channels, train] {
            const auto& gy = on->grad;
            std::vector<T> sum_dy(channels, T(0)), sum_dy_xhat(channels, T(0));
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t i = r * channels + c;
                    sum_dy[c] += gy[i];
                    sum_dy_xhat[c] += gy[i] * (*xhat)[i];
                }
            }
            if (T* gg = grad_or_null(gn)) {
                for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_dy_xhat[c];
            }
            if (T* gb = grad_or_null(bn)) {
                for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_dy[c];
            }
            if (T* gx = grad_or_null(xn)) {
                const auto& gamma_v = gn->values;
                const T inv_rows = T(1) / static_cast<T>(rows);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t i = r * channels + c;
                        if (train) {
                            gx[i] += gamma_v[c] * inv_std[c] *
                                     (gy[i] - inv_rows * sum_dy[c] - (*xhat)[i] * inv_rows * sum_dy_xhat[c]);
                        } else {
                            gx[i] += gamma_v[c] * inv_std[c] * gy[i];
                        }
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed, Mode mode) {
    if (!(p >= 0.0) || p >= 1.0) throw ValidationError("dropout: probability must lie in [0, 1)");
    if (mode == Mode::eval || p == 0.0) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    auto factors = std::make_shared<std::vector<T>>(x.numel());
    std::vector<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool keep = unit_interval(combine_seed(seed, i)) >= p;
        (*factors)[i] = keep ? keep_scale : T(0);
        out[i] = xv[i] * (*factors)[i];
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (detail::should_record<T>({&x})) {
        auto xn = x.node(), on = result.node();
        record<T>("dropout", {xn}, result, [xn, on, factors] {
            T* gx = grad_or_null(xn);
            for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += on->grad[i] * (*factors)[i];
        });
    }
    return result;
}

template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_last: nothing to concatenate");
    const std::size_t rank = parts.front().rank();
    if (rank != 1 && rank != 2) throw DimensionError("concat_last: parts must be rank 1 or 2");
    const std::size_t rows = rank == 2 ? parts.front().dim(0) : 1;
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank || (rank == 2 && p.dim(0) != rows)) {
            throw DimensionError("concat_last: part " + shape_str(p.shape()) + " does not align");
        }
        widths.push_back(p.shape().back());
        total += widths.back();
    }
    std::vector<T> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto v = parts[k].values();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(v.begin() + r * widths[k], v.begin() + (r + 1) * widths[k], out.begin() + r * total + offset);
        }
        offset += widths[k];
    }
    Tensor<T> result(rank == 2 ? Shape{rows, total} : Shape{total}, std::move(out));
    bool any = false;
    for (const auto& p : parts) any = any || detail::should_record<T>({&p});
    if (any) {
        std::vector<NodePtr<T>> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        auto on = result.node();
        record<T>("concat_last", nodes, result, [nodes, on, widths, rows, total] {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (T* gp = grad_or_null(nodes[k])) {
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < widths[k]; ++j) {
                            gp[r * widths[k] + j] += on->grad[r * total + offset + j];
                        }
                    }
                }
                offset += widths[k];
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    if (x.rank() != 1 && x.rank() != 2) throw DimensionError("slice_last: input must be rank 1 or 2");
    const std::size_t width = x.shape().back();
    if (begin >= end || end > width) {
        throw DimensionError("slice_last: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") of " + std::to_string(width));
    }
    const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
    const std::size_t w = end - begin;
    std::vector<T> out(rows * w);
    auto v = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(v.begin() + r * width + begin, v.begin() + r * width + end, out.begin() + r * w);
    }
    Tensor<T> result(x.rank() == 2 ? Shape{rows, w} : Shape{w}, std::move(out));
    if (detail::should_record<T>({&x})) {
        auto xn = x.node(), on = result.node();
        record<T>("slice_last", {xn}, result, [xn, on, rows, width, begin, w] {
            T* gx = grad_or_null(xn);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < w; ++j) gx[r * width + begin + j] += on->grad[r * w + j];
            }
        });
    }
    return result;
}

#define PAR_INSTANTIATE_OPS(T)                                                                                       \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> scale(const Tensor<T>&, T);                                                                   \
    template Tensor<T> sum(const Tensor<T>&);                                                                        \
    template Tensor<T> mean(const Tensor<T>&);                                                                       \
    template Tensor<T> mask_multiply(const Tensor<T>&, const Tensor<T>&, MaskCheck);                                 \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&, std::size_t,      \
                              std::size_t);                                                                          \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                                            \
    template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> relu(const Tensor<T>&);                                                                       \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                                    \
    template Tensor<T> activation(const Tensor<T>&, Activation);                                                     \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, Mode);   \
    template Tensor<T> dropout(const Tensor<T>&, double, std::uint64_t, Mode);                                       \
    template Tensor<T> concat_last(const std::vector<Tensor<T>>&);                                                   \
    template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);

PAR_INSTANTIATE_OPS(float)
PAR_INSTANTIATE_OPS(double)

#undef PAR_INSTANTIATE_OPS

}  // namespace par::ops
