#pragma once

#include "helpers.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace fairalloc::testing {

/// Relative error ||analytic - numeric|| / max(||numeric||, 1e-12) of the
/// gradient w.r.t. the logits z of one loss term, by central differences.
using WeightLoss = std::function<double(const std::vector<double>& w, std::vector<double>* gw)>;

inline double logit_gradient_error(const WeightLoss& loss, const std::vector<double>& z, double eta,
                                   double step = 1e-5) {
    const auto w = grad::weights_from_logits(z, eta);
    std::vector<double> g(w.size(), 0.0);
    loss(w, &g);
    grad::chain_to_logits(g, w, eta);
    double num = 0.0, den = 0.0;
    auto zp = z;
    for (std::size_t q = 0; q < z.size(); ++q) {
        zp[q] = z[q] + step;
        const double up = loss(grad::weights_from_logits(zp, eta), nullptr);
        zp[q] = z[q] - step;
        const double down = loss(grad::weights_from_logits(zp, eta), nullptr);
        zp[q] = z[q];
        const double fd = (up - down) / (2.0 * step);
        num += (g[q] - fd) * (g[q] - fd);
        den += fd * fd;
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

struct GradCheck {
    double util = 0.0, util_tau = 0.0, card = 0.0, prod = 0.0, bin = 0.0;
    double worst() const { return std::max({util, util_tau, card, prod, bin}); }
};

/// Gradient errors of the four loss terms on a random 10x10 instance with
/// gamma 1, alpha 0.5 and logits placed away from every kink.
inline GradCheck check_loss_gradients(std::uint64_t seed) {
    const auto inst = random_instance(seed, 10, 10, 3);
    FairnessParams p;
    p.k = 3;
    p.gamma = 1.0;
    p.alpha = 0.5;
    p.objective = Objective::CVaR;
    const auto ctx = grad::LossContext::make(inst, p);
    const double eta = 0.7;
    rng::Stream s(rng::substream(seed, std::uint64_t{0x6664}));

    // resample until no group loss sits near tau and no column sum near p_min
    std::vector<double> z(100);
    double tau = 0.0;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        for (double& v : z) v = 4.0 * s.uniform() - 2.5;
        const auto w = grad::weights_from_logits(z, eta);
        const auto L = ctx.group_losses(w);
        tau = L[0] + 0.3 * (L[1] - L[0]);
        bool ok = true;
        for (double l : L) ok = ok && std::abs(l - tau) > 1e-3;
        for (double c : grad::col_sums(ctx, w)) ok = ok && std::abs(c - ctx.p_min) > 1e-3;
        if (ok) break;
    }

    GradCheck out;
    out.util = logit_gradient_error(
        [&](const std::vector<double>& w, std::vector<double>* gw) { return grad::util_loss(ctx, w, tau, gw); }, z,
        eta);
    {
        const auto w = grad::weights_from_logits(z, eta);
        double gtau = 0.0;
        grad::util_loss(ctx, w, tau, nullptr, &gtau);
        const double h = 1e-5;
        const double fd = (grad::util_loss(ctx, w, tau + h) - grad::util_loss(ctx, w, tau - h)) / (2 * h);
        out.util_tau = std::abs(gtau - fd) / std::max(std::abs(fd), 1e-12);
    }
    out.card = logit_gradient_error(
        [&](const std::vector<double>& w, std::vector<double>* gw) { return grad::card_loss(ctx, w, gw); }, z, eta);
    out.prod = logit_gradient_error(
        [&](const std::vector<double>& w, std::vector<double>* gw) { return grad::prod_loss(ctx, w, gw); }, z, eta);
    out.bin = logit_gradient_error(
        [&](const std::vector<double>& w, std::vector<double>* gw) { return grad::bin_loss(w, gw); }, z, eta);
    return out;
}

} // namespace fairalloc::testing
