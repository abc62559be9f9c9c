#include "hart/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace hart::ops {

namespace {

bool tracked(const Tape& tape, const Tensor& t) { return tape.recording() && t.requires_grad(); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                    " vs " + b.shape_string());
    }
}

std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

// c[m x n] += a[m x k] . b[k x n]
void mm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x k] += a[m x n] . b^T  where b is [k x n]
void mm_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * n;
            double acc = 0.0;
            for (int l = 0; l < n; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

// c[k x n] += a^T . b  where a is [m x k], b is [m x n]
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (tracked(tape, a) || tracked(tape, b)) {
        out.set_requires_grad(true);
        Tensor ca = a, cb = b, co = out;
        out.node_id = tape.record({a.node_id, b.node_id}, [ca, cb, co]() mutable {
            const auto& g = co.grad();
            if (ca.requires_grad()) {
                auto& ga = ca.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (cb.requires_grad()) {
                auto& gb = cb.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (tracked(tape, a) || tracked(tape, b)) {
        out.set_requires_grad(true);
        Tensor ca = a, cb = b, co = out;
        out.node_id = tape.record({a.node_id, b.node_id}, [ca, cb, co]() mutable {
            const auto& g = co.grad();
            if (ca.requires_grad()) {
                auto& ga = ca.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (cb.requires_grad()) {
                auto& gb = cb.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (tracked(tape, a) || tracked(tape, b)) {
        out.set_requires_grad(true);
        Tensor ca = a, cb = b, co = out;
        out.node_id = tape.record({a.node_id, b.node_id}, [ca, cb, co]() mutable {
            const auto& g = co.grad();
            if (ca.requires_grad()) {
                auto& ga = ca.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * cb.data()[i];
            }
            if (cb.requires_grad()) {
                auto& gb = cb.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ca.data()[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
    if (tracked(tape, a)) {
        out.set_requires_grad(true);
        Tensor ca = a, co = out;
        out.node_id = tape.record({a.node_id}, [ca, co, s]() mutable {
            const auto& g = co.grad();
            auto& ga = ca.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        });
    }
    return out;
}

Tensor add_broadcast(Tape& tape, const Tensor& x, const Tensor& p) {
    const auto& xs = x.shape();
    const auto& ps = p.shape();
    bool suffix = ps.size() <= xs.size();
    if (suffix) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (ps[ps.size() - 1 - i] != xs[xs.size() - 1 - i]) suffix = false;
        }
    }
    if (!suffix) {
        throw std::invalid_argument("add_broadcast: " + p.shape_string() +
                                    " is not a trailing-shape of " + x.shape_string());
    }
    Tensor out = Tensor::zeros(xs);
    const std::size_t n = out.size();
    const std::size_t sp = p.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] + p.data()[i % sp];
    if (tracked(tape, x) || tracked(tape, p)) {
        out.set_requires_grad(true);
        Tensor cx = x, cp = p, co = out;
        out.node_id = tape.record({x.node_id, p.node_id}, [cx, cp, co, sp]() mutable {
            const auto& g = co.grad();
            if (cx.requires_grad()) {
                auto& gx = cx.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (cp.requires_grad()) {
                auto& gp = cp.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gp[i % sp] += g[i];
            }
        });
    }
    return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    const auto bad = [&] {
        return std::invalid_argument("matmul: shape mismatch " + a.shape_string() + " x " +
                                     b.shape_string());
    };
    if (as.size() < 2 || bs.size() < 2) throw bad();

    if (bs.size() == 2) {
        // [... x m x k] . [k x n]
        const int k = as.back();
        const int n = bs[1];
        if (bs[0] != k) throw bad();
        const int rows = static_cast<int>(numel(as)) / k;
        std::vector<int> out_shape = as;
        out_shape.back() = n;
        Tensor out = Tensor::zeros(out_shape);
        mm_nn_acc(a.data().data(), b.data().data(), out.data().data(), rows, k, n);
        if (tracked(tape, a) || tracked(tape, b)) {
            out.set_requires_grad(true);
            Tensor ca = a, cb = b, co = out;
            out.node_id = tape.record({a.node_id, b.node_id}, [ca, cb, co, rows, k, n]() mutable {
                if (ca.requires_grad()) {
                    mm_nt_acc(co.grad().data(), cb.data().data(), ca.grad().data(), rows, n, k);
                }
                if (cb.requires_grad()) {
                    mm_tn_acc(ca.data().data(), co.grad().data(), cb.grad().data(), rows, k, n);
                }
            });
        }
        return out;
    }

    // Batched: equal leading dims, contract the last two axes.
    if (as.size() != bs.size()) throw bad();
    for (std::size_t i = 0; i + 2 < as.size(); ++i) {
        if (as[i] != bs[i]) throw bad();
    }
    const int m = as[as.size() - 2];
    const int k = as.back();
    if (bs[bs.size() - 2] != k) throw bad();
    const int n = bs.back();
    std::vector<int> out_shape = as;
    out_shape[out_shape.size() - 1] = n;
    const std::size_t batch = numel(as) / (static_cast<std::size_t>(m) * k);
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t s = 0; s < batch; ++s) {
        mm_nn_acc(a.data().data() + s * m * k, b.data().data() + s * k * n,
                  out.data().data() + s * m * n, m, k, n);
    }
    if (tracked(tape, a) || tracked(tape, b)) {
        out.set_requires_grad(true);
        Tensor ca = a, cb = b, co = out;
        out.node_id = tape.record({a.node_id, b.node_id}, [ca, cb, co, batch, m, k, n]() mutable {
            for (std::size_t s = 0; s < batch; ++s) {
                const double* g = co.grad().data() + s * m * n;
                if (ca.requires_grad()) {
                    mm_nt_acc(g, cb.data().data() + s * k * n, ca.grad().data() + s * m * k, m, n,
                              k);
                }
                if (cb.requires_grad()) {
                    mm_tn_acc(ca.data().data() + s * m * k, g, cb.grad().data() + s * k * n, m, k,
                              n);
                }
            }
        });
    }
    return out;
}

Tensor transpose_last2(Tape& tape, const Tensor& x) {
    const auto& xs = x.shape();
    if (xs.size() < 2) {
        throw std::invalid_argument("transpose_last2 needs >= 2 dims, got " + x.shape_string());
    }
    const int r = xs[xs.size() - 2];
    const int c = xs.back();
    std::vector<int> out_shape = xs;
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    const std::size_t batch = numel(xs) / (static_cast<std::size_t>(r) * c);
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t s = 0; s < batch; ++s) {
        const double* src = x.data().data() + s * r * c;
        double* dst = out.data().data() + s * r * c;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) dst[static_cast<std::size_t>(j) * r + i] = src[static_cast<std::size_t>(i) * c + j];
        }
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co, batch, r, c]() mutable {
            auto& gx = cx.grad();
            const auto& g = co.grad();
            for (std::size_t s = 0; s < batch; ++s) {
                const double* gsrc = g.data() + s * r * c;
                double* gdst = gx.data() + s * r * c;
                for (int i = 0; i < r; ++i) {
                    for (int j = 0; j < c; ++j) {
                        gdst[static_cast<std::size_t>(i) * c + j] += gsrc[static_cast<std::size_t>(j) * r + i];
                    }
                }
            }
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& x, std::vector<int> new_shape) {
    Tensor out = Tensor::from_data(std::move(new_shape), x.data());
    if (out.size() != x.size()) {
        throw std::invalid_argument("reshape: element count changed, " + x.shape_string() +
                                    " -> " + out.shape_string());
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co]() mutable {
            auto& gx = cx.grad();
            const auto& g = co.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

namespace {

void permute_0213_copy(const double* src, double* dst, int d0, int d1, int d2, int d3) {
    for (int i = 0; i < d0; ++i) {
        for (int j = 0; j < d1; ++j) {
            for (int k = 0; k < d2; ++k) {
                const double* s = src + (((static_cast<std::size_t>(i) * d1 + j) * d2 + k) * d3);
                double* d = dst + (((static_cast<std::size_t>(i) * d2 + k) * d1 + j) * d3);
                for (int l = 0; l < d3; ++l) d[l] = s[l];
            }
        }
    }
}

}  // namespace

Tensor permute_0213(Tape& tape, const Tensor& x) {
    const auto& xs = x.shape();
    if (xs.size() != 4) {
        throw std::invalid_argument("permute_0213 needs a 4-d tensor, got " + x.shape_string());
    }
    Tensor out = Tensor::zeros({xs[0], xs[2], xs[1], xs[3]});
    permute_0213_copy(x.data().data(), out.data().data(), xs[0], xs[1], xs[2], xs[3]);
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        const int d0 = xs[0], d1 = xs[1], d2 = xs[2], d3 = xs[3];
        out.node_id = tape.record({x.node_id}, [cx, co, d0, d1, d2, d3]() mutable {
            // inverse permutation is the same axis swap
            std::vector<double> tmp(co.grad().size());
            permute_0213_copy(co.grad().data(), tmp.data(), d0, d2, d1, d3);
            auto& gx = cx.grad();
            for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        });
    }
    return out;
}

Tensor softmax(Tape& tape, const Tensor& x) {
    const int d = x.shape().back();
    const std::size_t slices = x.size() / d;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t s = 0; s < slices; ++s) {
        const double* xi = x.data().data() + s * d;
        double* yi = out.data().data() + s * d;
        double m = xi[0];
        for (int i = 1; i < d; ++i) m = std::max(m, xi[i]);
        double sum = 0.0;
        for (int i = 0; i < d; ++i) {
            yi[i] = std::exp(xi[i] - m);
            sum += yi[i];
        }
        for (int i = 0; i < d; ++i) yi[i] /= sum;
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co, slices, d]() mutable {
            auto& gx = cx.grad();
            for (std::size_t s = 0; s < slices; ++s) {
                const double* y = co.data().data() + s * d;
                const double* g = co.grad().data() + s * d;
                double dot = 0.0;
                for (int i = 0; i < d; ++i) dot += g[i] * y[i];
                double* gxi = gx.data() + s * d;
                for (int i = 0; i < d; ++i) gxi[i] += y[i] * (g[i] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    const int d = x.shape().back();
    if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d) {
        throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) +
                                    "], got " + gain.shape_string() + " and " +
                                    bias.shape_string());
    }
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
    const std::size_t slices = x.size() / d;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t s = 0; s < slices; ++s) {
        const double* xi = x.data().data() + s * d;
        double* yi = out.data().data() + s * d;
        double mu = 0.0;
        for (int i = 0; i < d; ++i) mu += xi[i];
        mu /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) var += (xi[i] - mu) * (xi[i] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int i = 0; i < d; ++i) yi[i] = gain.data()[i] * ((xi[i] - mu) * inv) + bias.data()[i];
    }
    if (tracked(tape, x) || tracked(tape, gain) || tracked(tape, bias)) {
        Tensor cx = x, cg = gain, cb = bias;
        Tensor co = out;
        out.set_requires_grad(true);
        co = out;
        out.node_id = tape.record(
            {x.node_id, gain.node_id, bias.node_id}, [cx, cg, cb, co, slices, d, eps]() mutable {
                const auto& g = co.grad();
                for (std::size_t s = 0; s < slices; ++s) {
                    const double* xi = cx.data().data() + s * d;
                    const double* gi = g.data() + s * d;
                    double mu = 0.0;
                    for (int i = 0; i < d; ++i) mu += xi[i];
                    mu /= d;
                    double var = 0.0;
                    for (int i = 0; i < d; ++i) var += (xi[i] - mu) * (xi[i] - mu);
                    var /= d;
                    const double inv = 1.0 / std::sqrt(var + eps);

                    if (cg.requires_grad() || cb.requires_grad()) {
                        for (int i = 0; i < d; ++i) {
                            if (cg.requires_grad()) cg.grad()[i] += gi[i] * ((xi[i] - mu) * inv);
                            if (cb.requires_grad()) cb.grad()[i] += gi[i];
                        }
                    }
                    if (cx.requires_grad()) {
                        double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
                        for (int i = 0; i < d; ++i) {
                            const double dxhat = gi[i] * cg.data()[i];
                            sum_dxhat += dxhat;
                            sum_dxhat_xc += dxhat * (xi[i] - mu);
                        }
                        const double dvar = -0.5 * sum_dxhat_xc * inv * inv * inv;
                        double sum_xc = 0.0;
                        for (int i = 0; i < d; ++i) sum_xc += xi[i] - mu;
                        const double dmu = -inv * sum_dxhat - 2.0 * dvar * sum_xc / d;
                        double* gxi = cx.grad().data() + s * d;
                        for (int i = 0; i < d; ++i) {
                            const double dxhat = gi[i] * cg.data()[i];
                            gxi[i] += dxhat * inv + dvar * 2.0 * (xi[i] - mu) / d + dmu / d;
                        }
                    }
                }
            });
    }
    return out;
}

namespace {
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;
}  // namespace

Tensor gelu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        const double u = kGeluC0 * (v + kGeluC1 * v * v * v);
        out.data()[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co]() mutable {
            auto& gx = cx.grad();
            const auto& g = co.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = cx.data()[i];
                const double u = kGeluC0 * (v + kGeluC1 * v * v * v);
                const double t = std::tanh(u);
                const double du = kGeluC0 * (1.0 + 3.0 * kGeluC1 * v * v);
                gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co]() mutable {
            auto& gx = cx.grad();
            const auto& g = co.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = co.data()[i];
                gx[i] += g[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must be in [0, 1)");
    }
    if (!training || rate == 0.0) return x;
    if (!rng) throw std::logic_error("dropout: training mode needs an rng");
    const double inv = 1.0 / (1.0 - rate);
    std::vector<double> coef(x.size());
    for (std::size_t i = 0; i < coef.size(); ++i) coef[i] = rng->uniform() < rate ? 0.0 : inv;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < coef.size(); ++i) out.data()[i] = x.data()[i] * coef[i];
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id =
            tape.record({x.node_id}, [cx, co, coef = std::move(coef)]() mutable {
                auto& gx = cx.grad();
                const auto& g = co.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * coef[i];
            });
    }
    return out;
}

namespace {

void require_3d(const char* op, const Tensor& x) {
    if (x.ndim() != 3) {
        throw std::invalid_argument(std::string(op) + " needs a 3-d tensor, got " +
                                    x.shape_string());
    }
}

}  // namespace

Tensor mean_axis1(Tape& tape, const Tensor& x) {
    require_3d("mean_axis1", x);
    const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
    Tensor out = Tensor::zeros({B, D});
    for (int b = 0; b < B; ++b) {
        for (int t = 0; t < T; ++t) {
            const double* row = x.data().data() + (static_cast<std::size_t>(b) * T + t) * D;
            double* o = out.data().data() + static_cast<std::size_t>(b) * D;
            for (int d = 0; d < D; ++d) o[d] += row[d];
        }
    }
    for (double& v : out.data()) v /= T;
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co, B, T, D]() mutable {
            auto& gx = cx.grad();
            const auto& g = co.grad();
            for (int b = 0; b < B; ++b) {
                const double* go = g.data() + static_cast<std::size_t>(b) * D;
                for (int t = 0; t < T; ++t) {
                    double* gr = gx.data() + (static_cast<std::size_t>(b) * T + t) * D;
                    for (int d = 0; d < D; ++d) gr[d] += go[d] / T;
                }
            }
        });
    }
    return out;
}

Tensor max_axis1(Tape& tape, const Tensor& x) {
    require_3d("max_axis1", x);
    const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
    Tensor out = Tensor::zeros({B, D});
    std::vector<int> argmax(static_cast<std::size_t>(B) * D, 0);
    for (int b = 0; b < B; ++b) {
        for (int d = 0; d < D; ++d) {
            double best = x.at(b, 0, d);
            int best_t = 0;
            for (int t = 1; t < T; ++t) {
                const double v = x.at(b, t, d);
                if (v > best) {
                    best = v;
                    best_t = t;
                }
            }
            out.at(b, d) = best;
            argmax[static_cast<std::size_t>(b) * D + d] = best_t;
        }
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id =
            tape.record({x.node_id}, [cx, co, B, T, D, argmax = std::move(argmax)]() mutable {
                auto& gx = cx.grad();
                const auto& g = co.grad();
                for (int b = 0; b < B; ++b) {
                    for (int d = 0; d < D; ++d) {
                        const int t = argmax[static_cast<std::size_t>(b) * D + d];
                        gx[(static_cast<std::size_t>(b) * T + t) * D + d] +=
                            g[static_cast<std::size_t>(b) * D + d];
                    }
                }
            });
    }
    return out;
}

Tensor slice_axis1(Tape& tape, const Tensor& x, int t) {
    require_3d("slice_axis1", x);
    const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
    if (t < 0 || t >= T) throw std::out_of_range("slice_axis1: index out of range");
    Tensor out = Tensor::zeros({B, D});
    for (int b = 0; b < B; ++b) {
        for (int d = 0; d < D; ++d) out.at(b, d) = x.at(b, t, d);
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co, B, T, D, t]() mutable {
            auto& gx = cx.grad();
            const auto& g = co.grad();
            for (int b = 0; b < B; ++b) {
                for (int d = 0; d < D; ++d) {
                    gx[(static_cast<std::size_t>(b) * T + t) * D + d] +=
                        g[static_cast<std::size_t>(b) * D + d];
                }
            }
        });
    }
    return out;
}

Tensor concat_last(Tape& tape, const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    bool ok = as.size() == bs.size() && !as.empty();
    if (ok) {
        for (std::size_t i = 0; i + 1 < as.size(); ++i) ok = ok && as[i] == bs[i];
    }
    if (!ok) {
        throw std::invalid_argument("concat_last: incompatible shapes " + a.shape_string() +
                                    " and " + b.shape_string());
    }
    const int p = as.back(), q = bs.back();
    std::vector<int> out_shape = as;
    out_shape.back() = p + q;
    const std::size_t rows = numel(as) / p;
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.data().data() + r * (p + q);
        const double* pa = a.data().data() + r * p;
        const double* pb = b.data().data() + r * q;
        std::copy(pa, pa + p, o);
        std::copy(pb, pb + q, o + p);
    }
    if (tracked(tape, a) || tracked(tape, b)) {
        out.set_requires_grad(true);
        Tensor ca = a, cb = b, co = out;
        out.node_id = tape.record({a.node_id, b.node_id}, [ca, cb, co, rows, p, q]() mutable {
            const auto& g = co.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* go = g.data() + r * (p + q);
                if (ca.requires_grad()) {
                    double* ga = ca.grad().data() + r * p;
                    for (int i = 0; i < p; ++i) ga[i] += go[i];
                }
                if (cb.requires_grad()) {
                    double* gb = cb.grad().data() + r * q;
                    for (int i = 0; i < q; ++i) gb[i] += go[p + i];
                }
            }
        });
    }
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::vector<int> indices) {
    if (x.ndim() != 2) {
        throw std::invalid_argument("gather_rows needs a 2-d tensor, got " + x.shape_string());
    }
    const int N = x.dim(0), D = x.dim(1);
    for (int idx : indices) {
        if (idx < 0 || idx >= N) throw std::out_of_range("gather_rows: row index out of range");
    }
    const int M = static_cast<int>(indices.size());
    Tensor out = Tensor::zeros({M, D});
    for (int m = 0; m < M; ++m) {
        const double* src = x.data().data() + static_cast<std::size_t>(indices[m]) * D;
        std::copy(src, src + D, out.data().data() + static_cast<std::size_t>(m) * D);
    }
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id =
            tape.record({x.node_id}, [cx, co, D, M, indices = std::move(indices)]() mutable {
                auto& gx = cx.grad();
                const auto& g = co.grad();
                for (int m = 0; m < M; ++m) {
                    double* dst = gx.data() + static_cast<std::size_t>(indices[m]) * D;
                    const double* src = g.data() + static_cast<std::size_t>(m) * D;
                    for (int d = 0; d < D; ++d) dst[d] += src[d];
                }
            });
    }
    return out;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co]() mutable {
            const double g = co.grad()[0];
            auto& gx = cx.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor mean_all(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    const double n = static_cast<double>(x.size());
    Tensor out = Tensor::scalar(s / n);
    if (tracked(tape, x)) {
        out.set_requires_grad(true);
        Tensor cx = x, co = out;
        out.node_id = tape.record({x.node_id}, [cx, co, n]() mutable {
            const double g = co.grad()[0] / n;
            auto& gx = cx.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor l2_loss(Tape& tape, const Tensor& y, const Tensor& target) {
    require_same_shape("l2_loss", y, target);
    const double batch = y.ndim() >= 2 ? static_cast<double>(y.dim(0)) : 1.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y.data()[i] - target.data()[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / batch);
    if (tracked(tape, y) || tracked(tape, target)) {
        out.set_requires_grad(true);
        Tensor cy = y, ct = target, co = out;
        out.node_id = tape.record({y.node_id, target.node_id}, [cy, ct, co, batch]() mutable {
            const double g = co.grad()[0];
            for (std::size_t i = 0; i < cy.size(); ++i) {
                const double d = 2.0 * (cy.data()[i] - ct.data()[i]) / batch * g;
                if (cy.requires_grad()) cy.grad()[i] += d;
                if (ct.requires_grad()) ct.grad()[i] -= d;
            }
        });
    }
    return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) {
        throw std::invalid_argument("cross_entropy: logits must be 2-d, got " +
                                    logits.shape_string());
    }
    const int B = logits.dim(0), C = logits.dim(1);
    if (static_cast<int>(labels.size()) != B) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(B));
    }
    for (int l : labels) {
        if (l < 0 || l >= C) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                        " out of range [0, " + std::to_string(C) + ")");
        }
    }
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
        const double* row = logits.data().data() + static_cast<std::size_t>(b) * C;
        double m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += std::exp(row[c] - m);
        acc += m + std::log(sum) - row[labels[b]];
    }
    Tensor out = Tensor::scalar(acc / B);
    if (tracked(tape, logits)) {
        out.set_requires_grad(true);
        Tensor cl = logits, co = out;
        out.node_id = tape.record({logits.node_id}, [cl, co, labels, B, C]() mutable {
            const double g = co.grad()[0];
            auto& gx = cl.grad();
            for (int b = 0; b < B; ++b) {
                const double* row = cl.data().data() + static_cast<std::size_t>(b) * C;
                double m = row[0];
                for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
                double sum = 0.0;
                for (int c = 0; c < C; ++c) sum += std::exp(row[c] - m);
                double* gr = gx.data() + static_cast<std::size_t>(b) * C;
                for (int c = 0; c < C; ++c) {
                    const double p = std::exp(row[c] - m) / sum;
                    gr[c] += g * (p - (c == labels[b] ? 1.0 : 0.0)) / B;
                }
            }
        });
    }
    return out;
}

bool GradCheckReport::all_below(double tol) const { return worst < tol; }

GradCheckReport finite_diff_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> params,
                                  double step) {
    for (Tensor& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) analytic.push_back(p.grad());

    GradCheckReport report;
    report.max_rel_err.assign(params.size(), 0.0);
    report.worst_index.assign(params.size(), 0);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double v = p.data()[i];
            p.data()[i] = v + step;
            Tape tp(false);
            const double lp = f(tp).value();
            p.data()[i] = v - step;
            Tape tm(false);
            const double lm = f(tm).value();
            p.data()[i] = v;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[pi][i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (rel > report.max_rel_err[pi]) {
                report.max_rel_err[pi] = rel;
                report.worst_index[pi] = i;
            }
            report.worst = std::max(report.worst, rel);
        }
    }
    return report;
}

}  // namespace hart::ops
