#ifndef OBJSEARCH_NN_HPP
#define OBJSEARCH_NN_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "objsearch/error.hpp"
#include "objsearch/rng.hpp"

/// Minimal dense-network substrate: named parameter tensors, dense layers with
/// hand-written backward passes, elementwise nonlinearities and SGD.
namespace objsearch::nn {

struct Tensor {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const noexcept { return data.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

using ParamId = std::size_t;

/// Ordered collection of named tensors. Shapes are fixed once added.
class ParamStore {
public:
    ParamId add(std::string name, std::size_t rows, std::size_t cols) {
        for (const auto& t : tensors_)
            if (t.name == name) throw ShapeError("duplicate tensor name '" + name + "'");
        tensors_.push_back({std::move(name), rows, cols, std::vector<double>(rows * cols, 0.0)});
        return tensors_.size() - 1;
    }

    Tensor& operator[](ParamId id) { return tensors_[id]; }
    const Tensor& operator[](ParamId id) const { return tensors_[id]; }

    ParamId find(std::string_view name) const {
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            if (tensors_[i].name == name) return i;
        throw UnknownIdError("no tensor named '" + std::string(name) + "'");
    }

    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
    std::size_t count() const noexcept { return tensors_.size(); }

    std::size_t numel() const noexcept {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    std::vector<double> flat() const {
        std::vector<double> out;
        out.reserve(numel());
        for (const auto& t : tensors_) out.insert(out.end(), t.data.begin(), t.data.end());
        return out;
    }

    void assign_flat(std::span<const double> values) {
        if (values.size() != numel())
            throw ShapeError("flat assignment of " + std::to_string(values.size()) + " values into " +
                             std::to_string(numel()) + " parameters");
        std::size_t off = 0;
        for (auto& t : tensors_) {
            std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.data.begin());
            off += t.size();
        }
    }

    /// Same names and shapes, all zeros.
    ParamStore zeros_like() const {
        ParamStore z;
        for (const auto& t : tensors_) z.tensors_.push_back({t.name, t.rows, t.cols, std::vector<double>(t.size(), 0.0)});
        return z;
    }

    void set_zero() {
        for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), 0.0);
    }

    bool same_shape(const ParamStore& other) const {
        if (other.tensors_.size() != tensors_.size()) return false;
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            if (tensors_[i].rows != other.tensors_[i].rows || tensors_[i].cols != other.tensors_[i].cols)
                return false;
        return true;
    }

    /// Name of the first tensor holding a non-finite value, or empty.
    std::string first_non_finite() const {
        for (const auto& t : tensors_)
            for (double v : t.data)
                if (!std::isfinite(v)) return t.name;
        return {};
    }

    void add_scaled(const ParamStore& other, double scale) {
        if (!same_shape(other)) throw ShapeError("add_scaled: parameter shapes differ");
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            for (std::size_t j = 0; j < tensors_[i].size(); ++j)
                tensors_[i].data[j] += scale * other.tensors_[i].data[j];
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& t : tensors_)
            for (double v : t.data) s += v * v;
        return s;
    }

    friend bool operator==(const ParamStore&, const ParamStore&) = default;

private:
    std::vector<Tensor> tensors_;
};

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Tensor& weight, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(weight.rows + weight.cols));
    for (double& w : weight.data) w = rng.uniform(-a, a);
}

/// Fully connected layer y = W x + b, W stored row-major as (out x in).
struct Dense {
    ParamId weight = 0;
    ParamId bias = 0;
    std::size_t in = 0;
    std::size_t out = 0;

    static Dense create(ParamStore& params, const std::string& name, std::size_t in, std::size_t out) {
        Dense d;
        d.weight = params.add(name + ".weight", out, in);
        d.bias = params.add(name + ".bias", out, 1);
        d.in = in;
        d.out = out;
        return d;
    }

    void forward(const ParamStore& params, std::span<const double> x, std::span<double> y) const {
        if (x.size() != in || y.size() != out)
            throw ShapeError("dense forward: expected " + std::to_string(in) + " -> " + std::to_string(out) +
                             ", got " + std::to_string(x.size()) + " -> " + std::to_string(y.size()));
        const Tensor& w = params[weight];
        const Tensor& b = params[bias];
        for (std::size_t o = 0; o < out; ++o) {
            const double* row = w.data.data() + o * in;
            double acc = b.data[o];
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
            y[o] = acc;
        }
    }

    /// Accumulates dW, db into `grads`; writes dx when `dx` is non-empty.
    void backward(const ParamStore& params, std::span<const double> x, std::span<const double> dy,
                  ParamStore& grads, std::span<double> dx) const {
        if (x.size() != in || dy.size() != out || (!dx.empty() && dx.size() != in))
            throw ShapeError("dense backward: shape mismatch");
        Tensor& gw = grads[weight];
        Tensor& gb = grads[bias];
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dy[o];
            if (g == 0.0) continue;
            double* row = gw.data.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) row[i] += g * x[i];
            gb.data[o] += g;
        }
        if (dx.empty()) return;
        const Tensor& w = params[weight];
        std::fill(dx.begin(), dx.end(), 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dy[o];
            if (g == 0.0) continue;
            const double* row = w.data.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
        }
    }
};

inline void relu(std::span<const double> pre, std::span<double> out) {
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

/// dx = dy where the pre-activation was positive, else 0.
inline void relu_backward(std::span<const double> pre, std::span<const double> dy, std::span<double> dx) {
    for (std::size_t i = 0; i < pre.size(); ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline void softmax(std::span<const double> logits, std::span<double> out) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
}

inline void log_softmax(std::span<const double> logits, std::span<double> out) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    const double lse = m + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

/// Shannon entropy in nats, with 0 ln 0 taken as 0.
inline double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

/// p <- p - lr * g. Rejects non-finite gradients before touching `params`.
inline void sgd_step(ParamStore& params, const ParamStore& grads, double lr) {
    if (!params.same_shape(grads)) throw ShapeError("sgd_step: gradient shapes differ from parameters");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("sgd_step: learning rate must be finite and >= 0");
    if (auto bad = grads.first_non_finite(); !bad.empty())
        throw NonFiniteError("sgd_step: non-finite gradient in tensor '" + bad + "'");
    params.add_scaled(grads, -lr);
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping. max_norm <= 0 disables clipping.
inline double clip_grad_norm(ParamStore& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (max_norm > 0.0 && norm > max_norm) {
        ParamStore scaled = grads.zeros_like();
        scaled.add_scaled(grads, max_norm / norm);
        grads = std::move(scaled);
    }
    return norm;
}

} // namespace objsearch::nn

#endif // OBJSEARCH_NN_HPP
