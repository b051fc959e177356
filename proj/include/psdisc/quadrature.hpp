#pragma once

#include <cmath>
#include <limits>
#include <algorithm>
#include <vector>
#include <sstream>
#include <vector>

#include "psdisc/errors.hpp"

namespace psdisc {

struct QuadOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-300;  // floor only; relative tolerance is the contract
    int max_segments = 4000;
    int initial_segments = 8;
};

namespace detail {

// Gauss-Kronrod 7-15 nodes on [-1,1] (positive half; symmetric).
inline constexpr double kKronrodNodes[8] = {
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329};

inline constexpr double kKronrodWeights[8] = {
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970};

// Embedded Gauss-7 weights, aligned with Kronrod nodes 0,2,4,6.
inline constexpr double kGaussWeights[4] = {
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082};

template <class F>
inline void gk15(const F& f, double a, double b, double& kronrod, double& err) {
    const double h = 0.5 * (b - a);
    const double c = 0.5 * (a + b);
    const double f0 = f(c);
    double resk = kKronrodWeights[0] * f0;
    double resg = kGaussWeights[0] * f0;
    for (int j = 1; j < 8; ++j) {
        const double dx = h * kKronrodNodes[j];
        const double fsum = f(c - dx) + f(c + dx);
        resk += kKronrodWeights[j] * fsum;
        if (j % 2 == 0) resg += kGaussWeights[j / 2] * fsum;
    }
    kronrod = resk * h;
    err = std::abs((resk - resg) * h);
    if (std::isnan(kronrod)) err = std::numeric_limits<double>::infinity();
}

struct Segment {
    double a, b, val, err;
    bool operator<(const Segment& o) const { return err < o.err; }
};

}  // namespace detail

// Globally adaptive Gauss-Kronrod: repeatedly bisect the segment with the
// largest error estimate. Throws numeric_error with diagnostics when the
// segment budget is exhausted before the tolerance is met. The common path
// (initial panels already below tolerance) performs no heap work.
template <class F>
inline double integrate(const F& f, double a, double b, const QuadOptions& opt = {}) {
    const int init = std::max(1, opt.initial_segments);
    std::vector<detail::Segment> segs;
    segs.reserve(static_cast<std::size_t>(init) + 64);
    double total_val = 0.0;
    double total_err = 0.0;
    for (int s = 0; s < init; ++s) {
        detail::Segment seg{a + (b - a) * s / init, a + (b - a) * (s + 1) / init, 0.0, 0.0};
        detail::gk15(f, seg.a, seg.b, seg.val, seg.err);
        total_val += seg.val;
        total_err += seg.err;
        segs.push_back(seg);
    }
    if (total_err <= std::max(opt.abs_tol, opt.rel_tol * std::abs(total_val))) {
        if (std::isnan(total_val))
            throw numeric_error("quadrature produced NaN; integrand is not finite on the domain");
        return total_val;
    }

    std::make_heap(segs.begin(), segs.end());
    while (total_err > std::max(opt.abs_tol, opt.rel_tol * std::abs(total_val))) {
        if (static_cast<int>(segs.size()) >= opt.max_segments) {
            std::ostringstream msg;
            msg << "quadrature did not converge on [" << a << "," << b << "]: estimate "
                << total_val << ", error " << total_err << " after " << segs.size()
                << " segments";
            throw numeric_error(msg.str());
        }
        std::pop_heap(segs.begin(), segs.end());
        const detail::Segment worst = segs.back();
        segs.pop_back();
        total_val -= worst.val;
        total_err -= worst.err;
        const double mid = 0.5 * (worst.a + worst.b);
        for (int half = 0; half < 2; ++half) {
            detail::Segment seg{half == 0 ? worst.a : mid, half == 0 ? mid : worst.b, 0.0, 0.0};
            detail::gk15(f, seg.a, seg.b, seg.val, seg.err);
            total_val += seg.val;
            total_err += seg.err;
            segs.push_back(seg);
            std::push_heap(segs.begin(), segs.end());
        }
        // Guard against error estimates that cannot shrink (non-finite values).
        if (!std::isfinite(total_val) && !std::isnan(total_val)) break;
    }
    if (std::isnan(total_val))
        throw numeric_error("quadrature produced NaN; integrand is not finite on the domain");
    return total_val;
}

// Integral over (a, +inf) via the rational map x = a + t/(1-t).
template <class F>
inline double integrate_to_inf(const F& f, double a, const QuadOptions& opt = {}) {
    auto g = [&](double t) {
        const double om = 1.0 - t;
        const double x = a + t / om;
        return f(x) / (om * om);
    };
    return integrate(g, 0.0, 1.0, opt);
}

}  // namespace psdisc
