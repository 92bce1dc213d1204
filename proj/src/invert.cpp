#include "leaky/invert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "leaky/csv.hpp"
#include "leaky/nn.hpp"
#include "leaky/rng.hpp"

namespace leaky::inversion {

double tv_loss(const Image& x, Image* grad, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (grad) *grad = Image(x.h, x.w, x.c);
    if (x.h < 2 && x.w < 2) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double total = 0.0;
    for (int ch = 0; ch < x.c; ++ch) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                if (y + 1 < x.h) {
                    const double d = x.at(ch, y + 1, xx) - x.at(ch, y, xx);
                    total += std::abs(d);
                    if (grad && d != 0.0) {
                        const double s = d > 0 ? 1.0 : -1.0;
                        grad->at(ch, y + 1, xx) += s;
                        grad->at(ch, y, xx) -= s;
                    }
                }
                if (xx + 1 < x.w) {
                    const double d = x.at(ch, y, xx + 1) - x.at(ch, y, xx);
                    total += std::abs(d);
                    if (grad && d != 0.0) {
                        const double s = d > 0 ? 1.0 : -1.0;
                        grad->at(ch, y, xx + 1) += s;
                        grad->at(ch, y, xx) -= s;
                    }
                }
            }
        }
    }
    return total;
}

Objective inversion_objective(const tower::EncoderParams& params, const Image& x,
                              const std::vector<double>& target, double lambda,
                              Image* grad) {
    const double tnorm = nn::norm2(target);
    require(tnorm > 1e-8, ErrorKind::validation,
            "inversion_objective: degenerate (near-zero) target embedding");
    std::vector<double> that(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) that[i] = target[i] / tnorm;

    tower::ImageCache cache;
    const auto emb = tower::encode_image_cached(params, x, cache);
    require(emb.size() == that.size(), ErrorKind::validation,
            "inversion_objective: target dimension mismatch");

    Objective obj;
    obj.cos_term = 1.0 - nn::dot(emb, that);

    Image tv_grad;
    obj.tv_term = tv_loss(x, grad ? &tv_grad : nullptr);
    obj.loss = obj.cos_term + lambda * obj.tv_term;

    if (grad) {
        std::vector<double> g_emb(emb.size());
        for (std::size_t i = 0; i < emb.size(); ++i) g_emb[i] = -that[i];
        tower::encode_image_backward(const_cast<tower::EncoderParams&>(params), x,
                                     cache, g_emb, grad, false);
        for (std::size_t i = 0; i < grad->data.size(); ++i)
            grad->data[i] += lambda * tv_grad.data[i];
    }
    return obj;
}

std::vector<double> make_target(TargetMode mode, const std::vector<double>& u_t,
                                const align::AlignmentMap* map) {
    if (mode == TargetMode::baseline) return u_t;
    require(map != nullptr, ErrorKind::config,
            "make_target: aligned mode requires an alignment map");
    return align::apply_map(*map, u_t);
}

namespace {
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

InversionTrace invert(const tower::EncoderParams& params,
                      const std::vector<double>& target, const InvertConfig& cfg,
                      std::uint64_t seed) {
    require(cfg.epochs >= 1 && cfg.lr > 0 && cfg.lambda_tv >= 0, ErrorKind::config,
            "invert: invalid config");
    const int h = params.image.h, w = params.image.w, c = params.image.c;

    // Unconstrained logits squashed through a sigmoid keep every iterate in
    // [0,1] without projections.
    std::vector<double> logits(static_cast<std::size_t>(h) * w * c, 0.0);
    if (cfg.init == "gaussian_noise") {
        Rng rng = substream(seed, "invert.init");
        for (double& v : logits) v = rng.normal();
    } else if (cfg.init == "constant_gray") {
        // logits stay 0 -> pixels 0.5
    } else {
        fail(ErrorKind::config, "invert: unknown init '" + cfg.init + "'");
    }
    std::vector<double> grad_logits(logits.size(), 0.0);

    nn::ParamSet pixel_params;
    pixel_params.add("pixels", logits, grad_logits);
    nn::AdamW opt;
    opt.lr = cfg.lr;
    opt.weight_decay = 0.0;

    InversionTrace trace;
    trace.best_loss = std::numeric_limits<double>::infinity();

    Image x(h, w, c);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < logits.size(); ++i) x.data[i] = sigmoid(logits[i]);

        Image gx;
        const Objective obj = inversion_objective(params, x, target, cfg.lambda_tv, &gx);
        const double gnorm_x = std::sqrt(std::inner_product(
            gx.data.begin(), gx.data.end(), gx.data.begin(), 0.0));

        TraceRow row{obj.loss, obj.cos_term, obj.tv_term, gnorm_x};
        trace.rows.push_back(row);

        if (!std::isfinite(obj.loss)) {
            trace.aborted = true;
            trace.final_image = x;
            if (!std::isfinite(trace.best_loss)) {
                trace.best_image = x;
                trace.best_loss = obj.loss;
            }
            return trace;
        }
        if (obj.loss < trace.best_loss) {
            trace.best_loss = obj.loss;
            trace.best_image = x;
        }

        // Chain through the sigmoid, then clip.
        for (std::size_t i = 0; i < logits.size(); ++i)
            grad_logits[i] = gx.data[i] * x.data[i] * (1.0 - x.data[i]);
        if (cfg.clip_mode == "per_element") {
            for (double& g : grad_logits)
                g = std::clamp(g, -cfg.clip_norm, cfg.clip_norm);
        } else {
            nn::clip_grad_norm(pixel_params, cfg.clip_norm);
        }
        opt.step(pixel_params);
    }

    for (std::size_t i = 0; i < logits.size(); ++i) x.data[i] = sigmoid(logits[i]);
    trace.final_image = x;
    return trace;
}

std::string trace_csv(const InversionTrace& trace) {
    Table t;
    t.schema = "leakyclip.inversion_trace.v1";
    t.header = {"epoch", "loss", "cos_term", "tv_term", "grad_norm"};
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const auto& r = trace.rows[i];
        t.add_row({fmt_int(static_cast<long long>(i)), fmt_double(r.loss),
                   fmt_double(r.cos_term), fmt_double(r.tv_term),
                   fmt_double(r.grad_norm)});
    }
    return t.to_csv();
}

}  // namespace leaky::inversion
