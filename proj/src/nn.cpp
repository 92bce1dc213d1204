#include "leaky/nn.hpp"

#include <algorithm>

namespace leaky::nn {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), ErrorKind::validation, "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void scale(std::vector<double>& a, double s) {
    for (double& v : a) v *= s;
}

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    require(x.size() == y.size(), ErrorKind::validation, "axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double l2_normalize(const std::vector<double>& x, std::vector<double>& y) {
    const double n = std::max(norm2(x), 1e-12);
    y.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / n;
    return n;
}

void l2_normalize_backward(const std::vector<double>& x, double norm,
                           const std::vector<double>& gy, std::vector<double>& gx) {
    // d(x/n)/dx = (I - y y^T) / n with y = x/n
    const double inv = 1.0 / norm;
    const double proj = dot(x, gy) * inv * inv;
    gx.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        gx[i] = inv * gy[i] - (proj * inv) * x[i];
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm2(a), nb = norm2(b);
    require(na > 1e-12 && nb > 1e-12, ErrorKind::numerical,
            "cosine of near-zero vector");
    return dot(a, b) / (na * nb);
}

double ParamSet::grad_norm() const {
    double s = 0.0;
    for (const auto& p : items)
        for (double g : *p.grad) s += g * g;
    return std::sqrt(s);
}

void Conv2d::init(int cin_, int cout_, int k_, int stride_, int pad_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    pad = pad_;
    const std::size_t n = static_cast<std::size_t>(cout) * cin * k * k;
    w.resize(n);
    gw.assign(n, 0.0);
    b.assign(cout, 0.0);
    gb.assign(cout, 0.0);
    const double std_dev = std::sqrt(2.0 / (cin * k * k));
    for (double& v : w) v = std_dev * rng.normal();
}

void Conv2d::forward(const double* x, int h, int w_, double* y) const {
    const int oh = out_h(h), ow = out_w(w_);
    for (int co = 0; co < cout; ++co) {
        double* yo = y + static_cast<std::size_t>(co) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) yo[i] = b[co];
        for (int ci = 0; ci < cin; ++ci) {
            const double* xi = x + static_cast<std::size_t>(ci) * h * w_;
            const double* wk = w.data() + ((static_cast<std::size_t>(co) * cin + ci) * k * k);
            for (int oy = 0; oy < oh; ++oy) {
                const int iy0 = oy * stride - pad;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    const double* xrow = xi + static_cast<std::size_t>(iy) * w_;
                    double* yrow = yo + static_cast<std::size_t>(oy) * ow;
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wk[ky * k + kx];
                        if (wv == 0.0) continue;
                        const int ix0 = -pad + kx;
                        int ox_lo = 0, ox_hi = ow;
                        // keep ix = ox*stride + ix0 inside [0, w)
                        while (ox_lo < ow && ox_lo * stride + ix0 < 0) ++ox_lo;
                        while (ox_hi > ox_lo && (ox_hi - 1) * stride + ix0 >= w_) --ox_hi;
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                            yrow[ox] += wv * xrow[ox * stride + ix0];
                    }
                }
            }
        }
    }
}

void Conv2d::backward(const double* x, int h, int w_, const double* gy, double* gx,
                      bool train) {
    const int oh = out_h(h), ow = out_w(w_);
    for (int co = 0; co < cout; ++co) {
        const double* gyo = gy + static_cast<std::size_t>(co) * oh * ow;
        if (train) {
            double sb = 0.0;
            for (int i = 0; i < oh * ow; ++i) sb += gyo[i];
            gb[co] += sb;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* xi = x + static_cast<std::size_t>(ci) * h * w_;
            double* gxi = gx ? gx + static_cast<std::size_t>(ci) * h * w_ : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int oy = 0; oy < oh; ++oy) {
                const int iy0 = oy * stride - pad;
                const double* gyrow = gyo + static_cast<std::size_t>(oy) * ow;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    const double* xrow = xi + static_cast<std::size_t>(iy) * w_;
                    double* gxrow = gxi ? gxi + static_cast<std::size_t>(iy) * w_ : nullptr;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix0 = -pad + kx;
                        int ox_lo = 0, ox_hi = ow;
                        while (ox_lo < ow && ox_lo * stride + ix0 < 0) ++ox_lo;
                        while (ox_hi > ox_lo && (ox_hi - 1) * stride + ix0 >= w_) --ox_hi;
                        const double wv = w[wbase + ky * k + kx];
                        double gwv = 0.0;
                        for (int ox = ox_lo; ox < ox_hi; ++ox) {
                            const double g = gyrow[ox];
                            gwv += g * xrow[ox * stride + ix0];
                            if (gxrow) gxrow[ox * stride + ix0] += wv * g;
                        }
                        if (train) gw[wbase + ky * k + kx] += gwv;
                    }
                }
            }
        }
    }
}

void Conv2d::register_params(const std::string& prefix, ParamSet& set) {
    set.add(prefix + ".w", w, gw);
    set.add(prefix + ".b", b, gb);
}

void Dense::init(int in_, int out_, Rng& rng) {
    in = in_;
    out = out_;
    w.resize(static_cast<std::size_t>(in) * out);
    gw.assign(w.size(), 0.0);
    b.assign(out, 0.0);
    gb.assign(out, 0.0);
    const double std_dev = std::sqrt(1.0 / in);
    for (double& v : w) v = std_dev * rng.normal();
}

void Dense::forward(const double* x, double* y) const {
    for (int o = 0; o < out; ++o) {
        const double* wr = w.data() + static_cast<std::size_t>(o) * in;
        double s = b[o];
        for (int i = 0; i < in; ++i) s += wr[i] * x[i];
        y[o] = s;
    }
}

void Dense::backward(const double* x, const double* gy, double* gx, bool train) {
    if (gx)
        for (int i = 0; i < in; ++i) gx[i] = 0.0;
    for (int o = 0; o < out; ++o) {
        const double g = gy[o];
        const double* wr = w.data() + static_cast<std::size_t>(o) * in;
        if (train) {
            double* gwr = gw.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) gwr[i] += g * x[i];
            gb[o] += g;
        }
        if (gx)
            for (int i = 0; i < in; ++i) gx[i] += g * wr[i];
    }
}

void Dense::register_params(const std::string& prefix, ParamSet& set) {
    set.add(prefix + ".w", w, gw);
    set.add(prefix + ".b", b, gb);
}

void AdamW::step(ParamSet& params) {
    if (m_.size() != params.items.size()) {
        m_.assign(params.items.size(), {});
        v_.assign(params.items.size(), {});
        for (std::size_t i = 0; i < params.items.size(); ++i) {
            m_[i].assign(params.items[i].value->size(), 0.0);
            v_[i].assign(params.items[i].value->size(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.items.size(); ++i) {
        auto& p = params.items[i];
        const bool decay = weight_decay > 0 && p.name.size() >= 2 &&
                           p.name.compare(p.name.size() - 2, 2, ".b") != 0 &&
                           p.name != "logit_scale";
        for (std::size_t j = 0; j < p.value->size(); ++j) {
            const double g = (*p.grad)[j];
            m_[i][j] = beta1 * m_[i][j] + (1 - beta1) * g;
            v_[i][j] = beta2 * v_[i][j] + (1 - beta2) * g * g;
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            double& value = (*p.value)[j];
            if (decay) value -= lr * weight_decay * value;
            value -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

double clip_grad_norm(ParamSet& params, double max_norm) {
    const double n = params.grad_norm();
    if (max_norm > 0 && n > max_norm) {
        const double s = max_norm / n;
        for (auto& p : params.items)
            for (double& g : *p.grad) g *= s;
    }
    return n;
}

}  // namespace leaky::nn
