#include "slidebench/mil_core.hpp"

#include <algorithm>
#include <cmath>

#include "slidebench/error.hpp"
#include "slidebench/rng.hpp"

namespace slidebench {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::SlideAve: return "SlideAve";
        case ModelKind::SlideMax: return "SlideMax";
        case ModelKind::ABMIL: return "ABMIL";
    }
    return "ABMIL";
}

ModelKind parse_model_kind(const std::string& name) {
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "slideave" || lower == "ave" || lower == "mean") return ModelKind::SlideAve;
    if (lower == "slidemax" || lower == "max") return ModelKind::SlideMax;
    if (lower == "abmil") return ModelKind::ABMIL;
    fail(ErrorCode::InvalidArgument, "unknown model '" + name + "' (expected SlideAve, SlideMax or ABMIL)");
}

template <typename T>
std::vector<std::span<T>> MILParams<T>::tensors() {
    std::vector<std::span<T>> out{std::span<T>(V.data), std::span<T>(U.data), std::span<T>(w)};
    for (auto& h : heads) {
        out.emplace_back(h.W.data);
        out.emplace_back(h.b);
    }
    return out;
}

template <typename T>
std::vector<std::span<const T>> MILParams<T>::tensors() const {
    std::vector<std::span<const T>> out{std::span<const T>(V.data), std::span<const T>(U.data), std::span<const T>(w)};
    for (const auto& h : heads) {
        out.emplace_back(h.W.data);
        out.emplace_back(h.b);
    }
    return out;
}

template <typename T>
MILParams<T> MILParams<T>::zeros_like() const {
    MILParams out = *this;
    for (auto t : out.tensors()) std::fill(t.begin(), t.end(), T{});
    return out;
}

namespace {

template <typename T>
void require_bag(BagView<T> bag, int dim) {
    if (bag.rows < 1) fail(ErrorCode::EmptyBag, "bag has no instances");
    if (bag.cols != dim) fail(ErrorCode::ShapeMismatch, "bag width " + std::to_string(bag.cols) + " != model dim " + std::to_string(dim));
    const std::size_t n = static_cast<std::size_t>(bag.rows) * static_cast<std::size_t>(bag.cols);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(bag.data[i])) fail(ErrorCode::NonFiniteInput, "bag contains non-finite values");
    }
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
std::vector<T> pool_ave(BagView<T> bag) {
    if (bag.rows < 1) fail(ErrorCode::EmptyBag, "bag has no instances");
    std::vector<T> out(static_cast<std::size_t>(bag.cols), T{});
    for (int k = 0; k < bag.rows; ++k) {
        const T* r = bag.row(k);
        for (int d = 0; d < bag.cols; ++d) out[static_cast<std::size_t>(d)] += r[d];
    }
    for (auto& v : out) v /= static_cast<T>(bag.rows);
    return out;
}

template <typename T>
std::vector<T> pool_max(BagView<T> bag) {
    if (bag.rows < 1) fail(ErrorCode::EmptyBag, "bag has no instances");
    std::vector<T> out(bag.row(0), bag.row(0) + bag.cols);
    for (int k = 1; k < bag.rows; ++k) {
        const T* r = bag.row(k);
        for (int d = 0; d < bag.cols; ++d) out[static_cast<std::size_t>(d)] = std::max(out[static_cast<std::size_t>(d)], r[d]);
    }
    return out;
}

template <typename T>
std::vector<T> softmax(std::span<const T> scores) {
    if (scores.empty()) fail(ErrorCode::EmptyBag, "softmax over no scores");
    const T mx = *std::max_element(scores.begin(), scores.end());
    std::vector<T> out(scores.size());
    T sum{};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

template <typename T>
std::vector<T> head_forward(const HeadParams<T>& head, std::span<const T> z) {
    std::vector<T> out(head.b);
    for (int c = 0; c < head.W.rows; ++c) {
        const T* wr = head.W.row(c);
        T acc{};
        for (int d = 0; d < head.W.cols; ++d) acc += wr[d] * z[static_cast<std::size_t>(d)];
        out[static_cast<std::size_t>(c)] += acc;
    }
    return out;
}

template <typename T>
ForwardPass<T> forward(BagView<T> bag, const MILParams<T>& params) {
    require_bag(bag, params.dim);
    ForwardPass<T> f;
    switch (params.kind) {
        case ModelKind::SlideAve: f.z = pool_ave(bag); break;
        case ModelKind::SlideMax: f.z = pool_max(bag); break;
        case ModelKind::ABMIL: {
            const int n = bag.rows, hidden = params.hidden, dim = params.dim;
            f.tanh_v = Matrix<T>(n, hidden);
            f.gate_u = Matrix<T>(n, hidden);
            f.scores.assign(static_cast<std::size_t>(n), T{});
            for (int k = 0; k < n; ++k) {
                const T* h = bag.row(k);
                T score{};
                for (int l = 0; l < hidden; ++l) {
                    const T* vr = params.V.row(l);
                    const T* ur = params.U.row(l);
                    T pv{}, pu{};
                    for (int d = 0; d < dim; ++d) {
                        pv += vr[d] * h[d];
                        pu += ur[d] * h[d];
                    }
                    const T t = std::tanh(pv);
                    const T g = sigmoid(pu);
                    f.tanh_v(k, l) = t;
                    f.gate_u(k, l) = g;
                    score += params.w[static_cast<std::size_t>(l)] * (t * g);
                }
                f.scores[static_cast<std::size_t>(k)] = score;
            }
            f.a = softmax<T>(f.scores);
            f.z.assign(static_cast<std::size_t>(dim), T{});
            for (int k = 0; k < n; ++k) {
                const T* h = bag.row(k);
                const T ak = f.a[static_cast<std::size_t>(k)];
                for (int d = 0; d < dim; ++d) f.z[static_cast<std::size_t>(d)] += ak * h[d];
            }
            break;
        }
    }
    for (const auto& head : params.heads) f.outputs.push_back(head_forward<T>(head, f.z));
    return f;
}

template <typename T>
AbmilOutput<T> abmil_forward(BagView<T> bag, const MILParams<T>& params, std::size_t head) {
    if (params.kind != ModelKind::ABMIL) fail(ErrorCode::InvalidArgument, "abmil_forward on a pooling model");
    if (head >= params.heads.size()) fail(ErrorCode::InvalidArgument, "no such head");
    auto f = forward(bag, params);
    return {std::move(f.outputs[head]), std::move(f.a), std::move(f.z)};
}

template <typename T>
LossGrad<T> loss_ce(std::span<const T> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) fail(ErrorCode::InvalidArgument, "label out of range");
    const T mx = *std::max_element(logits.begin(), logits.end());
    T sum{};
    for (T v : logits) sum += std::exp(v - mx);
    const T log_z = mx + std::log(sum);
    LossGrad<T> out;
    out.loss = log_z - logits[static_cast<std::size_t>(label)];
    out.grad.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) out.grad[c] = std::exp(logits[c] - log_z);
    out.grad[static_cast<std::size_t>(label)] -= T(1);
    return out;
}

template <typename T>
LossGrad<T> loss_mse(T pred, T target) {
    const T diff = pred - target;
    return {diff * diff, {T(2) * diff}};
}

template <typename T>
MILParams<T> backward(BagView<T> bag, const MILParams<T>& params, const ForwardPass<T>& fwd,
                      const std::vector<std::vector<T>>& upstream) {
    if (upstream.size() != params.heads.size()) fail(ErrorCode::InvalidArgument, "one upstream gradient per head required");
    require_bag(bag, params.dim);
    MILParams<T> g = params.zeros_like();
    const int dim = params.dim;

    std::vector<T> gz(static_cast<std::size_t>(dim), T{});
    for (std::size_t h = 0; h < params.heads.size(); ++h) {
        const auto& up = upstream[h];
        if (up.empty()) continue;
        const auto& head = params.heads[h];
        if (up.size() != head.b.size()) fail(ErrorCode::InvalidArgument, "upstream width differs from head width");
        auto& gh = g.heads[h];
        for (int c = 0; c < head.W.rows; ++c) {
            const T u = up[static_cast<std::size_t>(c)];
            gh.b[static_cast<std::size_t>(c)] = u;
            for (int d = 0; d < dim; ++d) {
                gh.W(c, d) = u * fwd.z[static_cast<std::size_t>(d)];
                gz[static_cast<std::size_t>(d)] += head.W(c, d) * u;
            }
        }
    }
    if (params.kind != ModelKind::ABMIL) return g;

    const int n = bag.rows, hidden = params.hidden;
    std::vector<T> ga(static_cast<std::size_t>(n), T{});
    T weighted{};
    for (int k = 0; k < n; ++k) {
        const T* h = bag.row(k);
        T acc{};
        for (int d = 0; d < dim; ++d) acc += h[d] * gz[static_cast<std::size_t>(d)];
        ga[static_cast<std::size_t>(k)] = acc;
        weighted += fwd.a[static_cast<std::size_t>(k)] * acc;
    }
    for (int k = 0; k < n; ++k) {
        const T gs = fwd.a[static_cast<std::size_t>(k)] * (ga[static_cast<std::size_t>(k)] - weighted);
        const T* h = bag.row(k);
        for (int l = 0; l < hidden; ++l) {
            const T t = fwd.tanh_v(k, l);
            const T s = fwd.gate_u(k, l);
            g.w[static_cast<std::size_t>(l)] += gs * (t * s);
            const T gated = gs * params.w[static_cast<std::size_t>(l)];
            const T g_pre_v = gated * s * (T(1) - t * t);
            const T g_pre_u = gated * t * s * (T(1) - s);
            for (int d = 0; d < dim; ++d) {
                g.V(l, d) += g_pre_v * h[d];
                g.U(l, d) += g_pre_u * h[d];
            }
        }
    }
    return g;
}

template <typename T>
MILParams<T> abmil_backward(BagView<T> bag, const MILParams<T>& params, std::size_t head, std::span<const T> upstream) {
    if (head >= params.heads.size()) fail(ErrorCode::InvalidArgument, "no such head");
    const auto fwd = forward(bag, params);
    std::vector<std::vector<T>> ups(params.heads.size());
    ups[head].assign(upstream.begin(), upstream.end());
    return backward(bag, params, fwd, ups);
}

template <typename T>
AdamState<T>::AdamState(const MILParams<T>& params, AdamConfig cfg) : config(cfg) {
    for (auto t : params.tensors()) {
        m.emplace_back(t.size(), T{});
        v.emplace_back(t.size(), T{});
    }
}

template <typename T>
void adam_step(MILParams<T>& params, const MILParams<T>& grads, AdamState<T>& state) {
    auto ps = params.tensors();
    auto gs = grads.tensors();
    if (ps.size() != gs.size() || ps.size() != state.m.size()) fail(ErrorCode::ShapeMismatch, "adam: parameter/gradient structure differs");
    const auto& c = state.config;
    ++state.t;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i].size() != gs[i].size() || ps[i].size() != state.m[i].size()) fail(ErrorCode::ShapeMismatch, "adam: tensor size differs");
        for (std::size_t j = 0; j < ps[i].size(); ++j) {
            const double g = static_cast<double>(gs[i][j]);
            const double m = c.beta1 * static_cast<double>(state.m[i][j]) + (1.0 - c.beta1) * g;
            const double v = c.beta2 * static_cast<double>(state.v[i][j]) + (1.0 - c.beta2) * g * g;
            state.m[i][j] = static_cast<T>(m);
            state.v[i][j] = static_cast<T>(v);
            const double p = static_cast<double>(ps[i][j]);
            const double step = c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps) + c.lr * c.weight_decay * p;
            ps[i][j] = static_cast<T>(p - step);
        }
    }
}

template <typename T>
MILParams<T> build_model(const std::vector<TaskConfig>& tasks, int dim, int hidden, ModelKind kind, std::uint64_t seed) {
    if (tasks.empty()) fail(ErrorCode::InvalidArgument, "a model needs at least one task");
    if (dim < 1) fail(ErrorCode::InvalidArgument, "feature dimension must be positive");
    if (kind == ModelKind::ABMIL && hidden < 1) fail(ErrorCode::InvalidArgument, "attention hidden size must be positive");
    MILParams<T> p;
    p.kind = kind;
    p.dim = dim;
    p.hidden = kind == ModelKind::ABMIL ? hidden : 0;
    p.V = Matrix<T>(p.hidden, dim);
    p.U = Matrix<T>(p.hidden, dim);
    p.w.assign(static_cast<std::size_t>(p.hidden), T{});
    for (const auto& task : tasks) {
        const int c = static_cast<int>(task.output_width());
        p.heads.push_back({Matrix<T>(c, dim), std::vector<T>(static_cast<std::size_t>(c), T{})});
    }

    CounterRng rng(seed);
    auto fill = [&](std::span<T> t, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : t) v = static_cast<T>(rng.uniform(-bound, bound));
    };
    fill(p.V.data, dim);
    fill(p.U.data, dim);
    fill(p.w, std::max(1, p.hidden));
    for (auto& h : p.heads) {
        fill(h.W.data, dim);
        fill(h.b, dim);
    }
    return p;
}

#define SLIDEBENCH_INSTANTIATE(T)                                                                                   \
    template struct MILParams<T>;                                                                                  \
    template struct AdamState<T>;                                                                                  \
    template std::vector<T> pool_ave(BagView<T>);                                                                  \
    template std::vector<T> pool_max(BagView<T>);                                                                  \
    template std::vector<T> softmax(std::span<const T>);                                                           \
    template std::vector<T> head_forward(const HeadParams<T>&, std::span<const T>);                                \
    template ForwardPass<T> forward(BagView<T>, const MILParams<T>&);                                              \
    template AbmilOutput<T> abmil_forward(BagView<T>, const MILParams<T>&, std::size_t);                           \
    template LossGrad<T> loss_ce(std::span<const T>, int);                                                         \
    template LossGrad<T> loss_mse(T, T);                                                                           \
    template MILParams<T> backward(BagView<T>, const MILParams<T>&, const ForwardPass<T>&,                         \
                                   const std::vector<std::vector<T>>&);                                            \
    template MILParams<T> abmil_backward(BagView<T>, const MILParams<T>&, std::size_t, std::span<const T>);        \
    template void adam_step(MILParams<T>&, const MILParams<T>&, AdamState<T>&);                                    \
    template MILParams<T> build_model(const std::vector<TaskConfig>&, int, int, ModelKind, std::uint64_t);

SLIDEBENCH_INSTANTIATE(float)
SLIDEBENCH_INSTANTIATE(double)

#undef SLIDEBENCH_INSTANTIATE

}  // namespace slidebench
