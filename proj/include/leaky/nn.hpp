#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "leaky/common.hpp"
#include "leaky/rng.hpp"

namespace leaky::nn {

// Hand-rolled layers with explicit backward passes. Everything is double
// precision so finite-difference gradient checks resolve cleanly.

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
void scale(std::vector<double>& a, double s);
void axpy(double a, const std::vector<double>& x, std::vector<double>& y);

// y = x / ||x||; returns the norm. backward maps gy -> gx.
double l2_normalize(const std::vector<double>& x, std::vector<double>& y);
void l2_normalize_backward(const std::vector<double>& x, double norm,
                           const std::vector<double>& gy, std::vector<double>& gx);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct Param {
    std::string name;
    std::vector<double>* value;
    std::vector<double>* grad;
};

struct ParamSet {
    std::vector<Param> items;

    void add(const std::string& name, std::vector<double>& value,
             std::vector<double>& grad) {
        items.push_back({name, &value, &grad});
    }
    void zero_grad() {
        for (auto& p : items) std::fill(p.grad->begin(), p.grad->end(), 0.0);
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : items) n += p.value->size();
        return n;
    }
    double grad_norm() const;
};

struct Conv2d {
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
    std::vector<double> w, b, gw, gb;

    void init(int cin_, int cout_, int k_, int stride_, int pad_, Rng& rng);
    int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }
    int out_w(int w_) const { return (w_ + 2 * pad - k) / stride + 1; }

    void forward(const double* x, int h, int w_, double* y) const;
    // gx may be null when input gradients are not needed; param gradients
    // accumulate into gw/gb when train is true.
    void backward(const double* x, int h, int w_, const double* gy, double* gx,
                  bool train);
    void register_params(const std::string& prefix, ParamSet& set);
};

struct Dense {
    int in = 0, out = 0;
    std::vector<double> w, b, gw, gb;  // w is out x in, row-major

    void init(int in_, int out_, Rng& rng);
    void forward(const double* x, double* y) const;
    void backward(const double* x, const double* gy, double* gx, bool train);
    void register_params(const std::string& prefix, ParamSet& set);
};

inline void tanh_forward(std::vector<double>& x) {
    for (double& v : x) v = std::tanh(v);
}
// y is the tanh output; grad is rewritten in place.
inline void tanh_backward(const std::vector<double>& y, std::vector<double>& g) {
    for (std::size_t i = 0; i < y.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
}

// Decoupled weight decay Adam. Decay is skipped for parameters whose name
// ends in ".b" or equals "logit_scale".
struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void step(ParamSet& params);
    void reset() {
        m_.clear();
        v_.clear();
        t_ = 0;
    }

  private:
    std::vector<std::vector<double>> m_, v_;
    long long t_ = 0;
};

// Clips the gradient set to a global L2 norm; returns the pre-clip norm.
double clip_grad_norm(ParamSet& params, double max_norm);

}  // namespace leaky::nn
