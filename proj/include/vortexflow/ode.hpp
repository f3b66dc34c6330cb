#pragma once

// Dormand-Prince 8(5,3) with embedded error estimators and PI step control.
// Coefficients follow Hairer, Norsett & Wanner, "Solving ODEs I".

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

namespace vortexflow::ode {

template <std::size_t N>
using State = std::array<double, N>;

struct Options {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_init = 0.0;  // 0 selects an automatic first step
    double h_max = std::numeric_limits<double>::infinity();
    double h_min = 1e-14;
    long max_steps = 100'000'000;
    double safety = 0.9;
    double fac_min = 0.333;  // smallest step ratio
    double fac_max = 6.0;    // largest step ratio
    double beta = 0.04;      // PI stabilisation
};

enum class Status { completed, stopped, step_underflow, max_steps, rhs_failure };

struct Stats {
    long steps = 0;
    long rejected = 0;
    long rhs_evals = 0;
    double h_next = 0.0;  // proposed size for a continuation run
};

/// Data of one accepted step, enough for cubic Hermite dense output.
template <std::size_t N>
struct Step {
    double t0, t1;
    State<N> y0, y1, f0, f1;
};

/// Cubic Hermite interpolation inside an accepted step.
template <std::size_t N>
State<N> hermite(const Step<N>& s, double t) {
    const double h = s.t1 - s.t0;
    const double th = (t - s.t0) / h;
    const double h00 = (1 + 2 * th) * (1 - th) * (1 - th);
    const double h10 = th * (1 - th) * (1 - th);
    const double h01 = th * th * (3 - 2 * th);
    const double h11 = th * th * (th - 1);
    State<N> out;
    for (std::size_t i = 0; i < N; ++i)
        out[i] = h00 * s.y0[i] + h10 * h * s.f0[i] + h01 * s.y1[i] + h11 * h * s.f1[i];
    return out;
}

namespace detail {

struct Tableau {
    static constexpr double c2 = 0.526001519587677318785587544488e-01;
    static constexpr double c3 = 0.789002279381515978178381316732e-01;
    static constexpr double c4 = 0.118350341907227396726757197510e+00;
    static constexpr double c5 = 0.281649658092772603273242802490e+00;
    static constexpr double c6 = 0.333333333333333333333333333333e+00;
    static constexpr double c7 = 0.25e+00;
    static constexpr double c8 = 0.307692307692307692307692307692e+00;
    static constexpr double c9 = 0.651282051282051282051282051282e+00;
    static constexpr double c10 = 0.6e+00;
    static constexpr double c11 = 0.857142857142857142857142857142e+00;

    static constexpr double b1 = 5.42937341165687622380535766363e-2;
    static constexpr double b6 = 4.45031289275240888144113950566e0;
    static constexpr double b7 = 1.89151789931450038304281599044e0;
    static constexpr double b8 = -5.8012039600105847814672114227e0;
    static constexpr double b9 = 3.1116436695781989440891606237e-1;
    static constexpr double b10 = -1.52160949662516078556178806805e-1;
    static constexpr double b11 = 2.01365400804030348374776537501e-1;
    static constexpr double b12 = 4.47106157277725905176885569043e-2;

    static constexpr double a21 = 5.26001519587677318785587544488e-2;
    static constexpr double a31 = 1.97250569845378994544595329183e-2;
    static constexpr double a32 = 5.91751709536136983633785987549e-2;
    static constexpr double a41 = 2.95875854768068491816892993775e-2;
    static constexpr double a43 = 8.87627564304205475450678981324e-2;
    static constexpr double a51 = 2.41365134159266685502369798665e-1;
    static constexpr double a53 = -8.84549479328286085344864962717e-1;
    static constexpr double a54 = 9.24834003261792003115737966543e-1;
    static constexpr double a61 = 3.7037037037037037037037037037e-2;
    static constexpr double a64 = 1.70828608729473871279604482173e-1;
    static constexpr double a65 = 1.25467687566822425016691814123e-1;
    static constexpr double a71 = 3.7109375e-2;
    static constexpr double a74 = 1.70252211019544039314978060272e-1;
    static constexpr double a75 = 6.02165389804559606850219397283e-2;
    static constexpr double a76 = -1.7578125e-2;
    static constexpr double a81 = 3.70920001185047927108779319836e-2;
    static constexpr double a84 = 1.70383925712239993810214054705e-1;
    static constexpr double a85 = 1.07262030446373284651809199168e-1;
    static constexpr double a86 = -1.53194377486244017527936158236e-2;
    static constexpr double a87 = 8.27378916381402288758473766002e-3;
    static constexpr double a91 = 6.24110958716075717114429577812e-1;
    static constexpr double a94 = -3.36089262944694129406857109825e0;
    static constexpr double a95 = -8.68219346841726006818189891453e-1;
    static constexpr double a96 = 2.75920996994467083049415600797e1;
    static constexpr double a97 = 2.01540675504778934086186788979e1;
    static constexpr double a98 = -4.34898841810699588477366255144e1;
    static constexpr double a101 = 4.77662536438264365890433908527e-1;
    static constexpr double a104 = -2.48811461997166764192642586468e0;
    static constexpr double a105 = -5.90290826836842996371446475743e-1;
    static constexpr double a106 = 2.12300514481811942347288949897e1;
    static constexpr double a107 = 1.52792336328824235832596922938e1;
    static constexpr double a108 = -3.32882109689848629194453265587e1;
    static constexpr double a109 = -2.03312017085086261358222928593e-2;
    static constexpr double a111 = -9.3714243008598732571704021658e-1;
    static constexpr double a114 = 5.18637242884406370830023853209e0;
    static constexpr double a115 = 1.09143734899672957818500254654e0;
    static constexpr double a116 = -8.14978701074692612513997267357e0;
    static constexpr double a117 = -1.85200656599969598641566180701e1;
    static constexpr double a118 = 2.27394870993505042818970056734e1;
    static constexpr double a119 = 2.49360555267965238987089396762e0;
    static constexpr double a1110 = -3.0467644718982195003823669022e0;
    static constexpr double a121 = 2.27331014751653820792359768449e0;
    static constexpr double a124 = -1.05344954667372501984066689879e1;
    static constexpr double a125 = -2.00087205822486249909675718444e0;
    static constexpr double a126 = -1.79589318631187989172765950534e1;
    static constexpr double a127 = 2.79488845294199600508499808837e1;
    static constexpr double a128 = -2.85899827713502369474065508674e0;
    static constexpr double a129 = -8.87285693353062954433549289258e0;
    static constexpr double a1210 = 1.23605671757943030647266201528e1;
    static constexpr double a1211 = 6.43392746015763530355970484046e-1;

    static constexpr double bhh1 = 0.244094488188976377952755905512e+00;
    static constexpr double bhh2 = 0.733846688281611857341361741547e+00;
    static constexpr double bhh3 = 0.220588235294117647058823529412e-01;
    static constexpr double er1 = 0.1312004499419488073250102996e-01;
    static constexpr double er6 = -0.1225156446376204440720569753e+01;
    static constexpr double er7 = -0.4957589496572501915214079952e+00;
    static constexpr double er8 = 0.1664377182454986536961530415e+01;
    static constexpr double er9 = -0.3503288487499736816886487290e+00;
    static constexpr double er10 = 0.3341791187130174790297318841e+00;
    static constexpr double er11 = 0.8192320648511571246570742613e-01;
    static constexpr double er12 = -0.2235530786388629525884427845e-01;
};

}  // namespace detail

/// Integrates y' = f(t, y) from t0 to t_end (t_end > t0).
///
/// rhs(t, y, dydt) returns false when the field cannot be evaluated; the
/// step is then shrunk.  cap(t, y) bounds the next step size.  observe(step)
/// is called after every accepted step and returns false to stop early.
template <std::size_t N, class Rhs, class Cap, class Observer>
Status integrate(Rhs&& rhs, double t0, State<N>& y, double t_end, const Options& opt, Cap&& cap,
                 Observer&& observe, Stats* stats_out = nullptr) {
    using T = detail::Tableau;
    Stats stats;
    double h = opt.h_init;
    auto finish = [&](Status s) {
        stats.h_next = h;
        if (stats_out) *stats_out = stats;
        return s;
    };
    double t = t0;
    State<N> k1{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, k8{}, k9{}, k10{}, ytmp{}, ynew{}, fnew{};
    if (!rhs(t, y, k1)) return finish(Status::rhs_failure);
    ++stats.rhs_evals;

    auto err_scale = [&](std::size_t i, const State<N>& a, const State<N>& b) {
        return opt.atol + opt.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
    };

    if (h <= 0.0) {
        // Hairer's starting-step heuristic, first-order part only.
        double dn = 0.0, fn = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sk = err_scale(i, y, y);
            dn += (y[i] / sk) * (y[i] / sk);
            fn += (k1[i] / sk) * (k1[i] / sk);
        }
        h = (dn <= 1e-10 || fn <= 1e-10) ? 1e-6 : 0.01 * std::sqrt(dn / fn);
    }
    h = std::min({h, opt.h_max, t_end - t});
    double fac_old = 1e-4;
    const double expo1 = 1.0 / 8.0 - opt.beta * 0.2;

    while (t < t_end) {
        if (stats.steps >= opt.max_steps) return finish(Status::max_steps);
        h = std::min({h, opt.h_max, cap(t, y)});
        bool last = false;
        if (t + 1.01 * h >= t_end) {
            h = t_end - t;
            last = true;
        }
        if (h < opt.h_min) return finish(Status::step_underflow);

        bool ok = true;
        auto stage = [&](double c, State<N>& out) {
            if (ok && !rhs(t + c * h, ytmp, out)) ok = false;
            ++stats.rhs_evals;
        };
        for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * T::a21 * k1[i];
        stage(T::c2, k2);
        for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * (T::a31 * k1[i] + T::a32 * k2[i]);
        stage(T::c3, k3);
        for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * (T::a41 * k1[i] + T::a43 * k3[i]);
        stage(T::c4, k4);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a51 * k1[i] + T::a53 * k3[i] + T::a54 * k4[i]);
        stage(T::c5, k5);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a61 * k1[i] + T::a64 * k4[i] + T::a65 * k5[i]);
        stage(T::c6, k6);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a71 * k1[i] + T::a74 * k4[i] + T::a75 * k5[i] + T::a76 * k6[i]);
        stage(T::c7, k7);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a81 * k1[i] + T::a84 * k4[i] + T::a85 * k5[i] + T::a86 * k6[i] +
                                  T::a87 * k7[i]);
        stage(T::c8, k8);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a91 * k1[i] + T::a94 * k4[i] + T::a95 * k5[i] + T::a96 * k6[i] +
                                  T::a97 * k7[i] + T::a98 * k8[i]);
        stage(T::c9, k9);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a101 * k1[i] + T::a104 * k4[i] + T::a105 * k5[i] + T::a106 * k6[i] +
                                  T::a107 * k7[i] + T::a108 * k8[i] + T::a109 * k9[i]);
        stage(T::c10, k10);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a111 * k1[i] + T::a114 * k4[i] + T::a115 * k5[i] + T::a116 * k6[i] +
                                  T::a117 * k7[i] + T::a118 * k8[i] + T::a119 * k9[i] + T::a1110 * k10[i]);
        stage(T::c11, k2);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (T::a121 * k1[i] + T::a124 * k4[i] + T::a125 * k5[i] + T::a126 * k6[i] +
                                  T::a127 * k7[i] + T::a128 * k8[i] + T::a129 * k9[i] +
                                  T::a1210 * k10[i] + T::a1211 * k2[i]);
        stage(1.0, k3);

        if (!ok) {
            ++stats.rejected;
            h *= 0.25;
            continue;
        }

        double err = 0.0, err2 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double inc = T::b1 * k1[i] + T::b6 * k6[i] + T::b7 * k7[i] + T::b8 * k8[i] +
                               T::b9 * k9[i] + T::b10 * k10[i] + T::b11 * k2[i] + T::b12 * k3[i];
            ynew[i] = y[i] + h * inc;
            const double sk = 1.0 / err_scale(i, y, ynew);
            const double e3 = (inc - T::bhh1 * k1[i] - T::bhh2 * k9[i] - T::bhh3 * k3[i]) * sk;
            const double e5 = (T::er1 * k1[i] + T::er6 * k6[i] + T::er7 * k7[i] + T::er8 * k8[i] +
                               T::er9 * k9[i] + T::er10 * k10[i] + T::er11 * k2[i] + T::er12 * k3[i]) *
                              sk;
            err2 += e3 * e3;
            err += e5 * e5;
        }
        double deno = err + 0.01 * err2;
        if (deno <= 0.0) deno = 1.0;
        err = std::abs(h) * err * std::sqrt(1.0 / (deno * N));
        if (!std::isfinite(err)) {
            ++stats.rejected;
            h *= 0.25;
            continue;
        }

        double fac = std::pow(err, expo1) * std::pow(fac_old, -opt.beta) / opt.safety;
        fac = std::clamp(fac, 1.0 / opt.fac_max, 1.0 / opt.fac_min);
        const double h_new = h / fac;

        if (err <= 1.0) {
            if (!rhs(t + h, ynew, fnew)) {
                ++stats.rejected;
                h *= 0.25;
                continue;
            }
            ++stats.rhs_evals;
            fac_old = std::max(err, 1e-4);
            ++stats.steps;
            Step<N> step{t, last ? t_end : t + h, y, ynew, k1, fnew};
            t = step.t1;
            y = ynew;
            k1 = fnew;
            if (!observe(step)) return finish(Status::stopped);
            h = h_new;
        } else {
            ++stats.rejected;
            h = h / std::min(1.0 / opt.fac_min, std::pow(err, expo1) / opt.safety);
        }
    }
    return finish(Status::completed);
}

}  // namespace vortexflow::ode
