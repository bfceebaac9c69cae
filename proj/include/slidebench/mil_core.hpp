#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slidebench/dataset_store.hpp"

namespace slidebench {

enum class ModelKind { SlideAve, SlideMax, ABMIL };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Dense row-major matrix.
template <typename T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
    T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
    bool operator==(const Matrix&) const = default;
};

/// Non-owning N x D instance matrix.
template <typename T>
struct BagView {
    const T* data = nullptr;
    int rows = 0;
    int cols = 0;

    BagView() = default;
    BagView(const T* d, int r, int c) : data(d), rows(r), cols(c) {}
    BagView(const Matrix<T>& m) : data(m.data.data()), rows(m.rows), cols(m.cols) {}  // NOLINT(implicit)
    const T* row(int r) const { return data + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
};

inline BagView<float> bag_view(const FeatureBag& bag) {
    return {bag.features.data(), static_cast<int>(bag.rows), static_cast<int>(bag.dim)};
}

/// Linear task head: C x D weights plus C biases (C = 1 for regression).
template <typename T>
struct HeadParams {
    Matrix<T> W;
    std::vector<T> b;
    bool operator==(const HeadParams&) const = default;
};

/// Backbone (gated attention for ABMIL, nothing for the pooling baselines)
/// plus one head per task.
template <typename T>
struct MILParams {
    ModelKind kind = ModelKind::ABMIL;
    int dim = 0;     ///< D
    int hidden = 0;  ///< L (0 for pooling models)
    Matrix<T> V;     ///< L x D, tanh branch
    Matrix<T> U;     ///< L x D, sigmoid gate
    std::vector<T> w;  ///< L, attention score
    std::vector<HeadParams<T>> heads;

    /// Every trainable tensor in canonical order: V, U, w, then W_h, b_h per head.
    std::vector<std::span<T>> tensors();
    std::vector<std::span<const T>> tensors() const;
    /// Same structure, every entry zero.
    MILParams zeros_like() const;
    bool operator==(const MILParams&) const = default;
};

template <typename T>
std::vector<T> pool_ave(BagView<T> bag);
template <typename T>
std::vector<T> pool_max(BagView<T> bag);

/// Numerically stable softmax (max subtracted first).
template <typename T>
std::vector<T> softmax(std::span<const T> scores);

/// Intermediates kept for the backward pass.
template <typename T>
struct ForwardPass {
    std::vector<T> z;       ///< pooled D vector
    std::vector<T> a;       ///< attention (ABMIL only)
    std::vector<T> scores;  ///< pre-softmax attention scores
    Matrix<T> tanh_v;       ///< N x L, tanh(V h_k)
    Matrix<T> gate_u;       ///< N x L, sigmoid(U h_k)
    std::vector<std::vector<T>> outputs;  ///< one per head
};

/// Pools the bag with the model's backbone and evaluates every head.
///
/// ABMIL uses gated attention:
///   score_k = w . (tanh(V h_k) * sigmoid(U h_k)),  a = softmax(score),
///   z = sum_k a_k h_k,  output_h = W_h z + b_h.
template <typename T>
ForwardPass<T> forward(BagView<T> bag, const MILParams<T>& params);

template <typename T>
std::vector<T> head_forward(const HeadParams<T>& head, std::span<const T> z);

/// Single-head view of the ABMIL forward pass.
template <typename T>
struct AbmilOutput {
    std::vector<T> output;
    std::vector<T> attention;
    std::vector<T> pooled;
};

template <typename T>
AbmilOutput<T> abmil_forward(BagView<T> bag, const MILParams<T>& params, std::size_t head);

template <typename T>
struct LossGrad {
    T loss{};
    std::vector<T> grad;
};

/// -log softmax(logits)[label]; gradient softmax - onehot.
template <typename T>
LossGrad<T> loss_ce(std::span<const T> logits, int label);

/// (pred - target)^2; gradient 2 (pred - target).
template <typename T>
LossGrad<T> loss_mse(T pred, T target);

/// Exact gradients of sum_h <upstream_h, output_h> with respect to every
/// parameter. An empty upstream vector means the head has no label; its
/// gradients stay exactly zero.
template <typename T>
MILParams<T> backward(BagView<T> bag, const MILParams<T>& params, const ForwardPass<T>& fwd,
                      const std::vector<std::vector<T>>& upstream);

template <typename T>
MILParams<T> abmil_backward(BagView<T> bag, const MILParams<T>& params, std::size_t head, std::span<const T> upstream);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;  ///< decoupled
};

template <typename T>
struct AdamState {
    AdamConfig config;
    std::int64_t t = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    explicit AdamState(const MILParams<T>& params, AdamConfig cfg = {});
};

/// Bias-corrected Adam with decoupled weight decay:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps) + lr * wd * p.
template <typename T>
void adam_step(MILParams<T>& params, const MILParams<T>& grads, AdamState<T>& state);

/// Fresh parameters, one head per task. Entries ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// drawn from CounterRng(seed) in tensor order.
template <typename T>
MILParams<T> build_model(const std::vector<TaskConfig>& tasks, int dim, int hidden, ModelKind kind, std::uint64_t seed);

template <typename To, typename From>
MILParams<To> cast_params(const MILParams<From>& p) {
    auto cast_vec = [](const std::vector<From>& v) { return std::vector<To>(v.begin(), v.end()); };
    auto cast_mat = [&](const Matrix<From>& m) {
        Matrix<To> out;
        out.rows = m.rows;
        out.cols = m.cols;
        out.data = cast_vec(m.data);
        return out;
    };
    MILParams<To> out;
    out.kind = p.kind;
    out.dim = p.dim;
    out.hidden = p.hidden;
    out.V = cast_mat(p.V);
    out.U = cast_mat(p.U);
    out.w = cast_vec(p.w);
    for (const auto& h : p.heads) out.heads.push_back({cast_mat(h.W), cast_vec(h.b)});
    return out;
}

}  // namespace slidebench
