#include "nlhomog/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace nlhomog {

const char* to_string(Algorithm a) {
    return a == Algorithm::accelerated_gradient ? "accelerated_gradient" : "nonlinear_cg";
}

Algorithm parse_algorithm(const std::string& name) {
    if (name == "accelerated_gradient") return Algorithm::accelerated_gradient;
    if (name == "nonlinear_cg") return Algorithm::nonlinear_cg;
    throw ConfigError("optimizer.algorithm: unknown algorithm '" + name + "'");
}

OptimizerOptions OptimizerOptions::defaults_for(double p) {
    OptimizerOptions o;
    o.tol_grad = p == 2.0 ? 1e-8 : 1e-6;
    return o;
}

void OptimizerOptions::validate() const {
    if (!(tol_grad > 0.0)) throw ConfigError("optimizer.tol_grad must be positive");
    if (max_iter < 1) throw ConfigError("optimizer.max_iter must be >= 1");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("optimizer: shrink factor must lie in (0,1)");
    if (!(sufficient_decrease > 0.0 && sufficient_decrease < 0.5))
        throw ConfigError("optimizer: sufficient-decrease constant must lie in (0,1/2)");
    if (restart_every < 0) throw ConfigError("optimizer.restart_every must be >= 0");
}

double weighted_norm(std::span<const double> v, double cell_volume) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s * cell_volume);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b, double cell_volume) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * cell_volume;
}

/// Energy differences below this are rounding noise; acceptance then relies on gradients.
double noise(double e) { return kEnergyResolution * std::max(std::abs(e), std::numeric_limits<double>::min()); }

/// Evaluation bookkeeping shared by both algorithms.
class Driver {
public:
    Driver(const Objective& obj, OptimizerStats& stats) : obj_(obj), stats_(stats) {}

    double energy(std::span<const double> x) {
        ++stats_.energy_evals;
        return obj_.energy(x);
    }

    /// Energy and projected gradient at x.
    double both(std::span<const double> x, std::span<double> g) {
        ++stats_.gradient_evals;
        ++stats_.energy_evals;
        double e = 0.0;
        if (obj_.value_and_gradient) {
            e = obj_.value_and_gradient(x, g);
        } else {
            obj_.gradient(x, g);
            e = obj_.energy(x);
        }
        obj_.gauge(g);
        return e;
    }

    /// out = P g (identity without a preconditioner), gauged.
    void precondition(std::span<const double> g, std::span<double> out) {
        if (obj_.precondition) {
            obj_.precondition(g, out);
            obj_.gauge(out);
        } else {
            std::copy(g.begin(), g.end(), out.begin());
        }
    }

    void check(double e, std::span<const double> g, const std::vector<double>& last, double step, int it) {
        bool finite = std::isfinite(e);
        for (double v : g) finite = finite && std::isfinite(v);
        if (finite) return;
        std::ostringstream os;
        os << "optimizer: non-finite energy or gradient at iteration " << it << " (step " << step << ", energy " << e
           << ")";
        throw OptimizerAbort(os.str(), last, step, it);
    }

private:
    const Objective& obj_;
    OptimizerStats& stats_;
};

bool all_finite(std::span<const double> g) {
    for (double v : g)
        if (!std::isfinite(v)) return false;
    return true;
}

MinimizeResult run_accelerated(const Objective& obj, std::vector<double> x, const OptimizerOptions& opts) {
    MinimizeResult res;
    OptimizerStats& st = res.stats;
    Driver drv(obj, st);
    const double vol = obj.cell_volume;
    const std::size_t N = x.size();

    obj.gauge(x);
    std::vector<double> gx(N), y = x, gy(N), py(N), xprev(N), trial(N), gtrial(N), diff(N), pdiff(N);
    double Ex = drv.both(x, gx);
    drv.check(Ex, gx, x, 0.0, 0);
    const double E_init = Ex;
    const std::vector<double> x_init = x;
    double gnorm = weighted_norm(gx, vol);
    const double g_init = gnorm;
    double Ey = Ex;
    gy = gx;
    double t = 1.0;
    double step = obj.precondition ? 0.8 : 1.0;
    int since_restart = 0;

    auto restart = [&] {
        ++st.restarts;
        t = 1.0;
        y = x;
        Ey = Ex;
        gy = gx;
        since_restart = 0;
    };

    while (gnorm > opts.tol_grad && st.iterations < opts.max_iter) {
        drv.precondition(gy, py);
        const double gy2 = dot(gy, py, vol);
        double Etrial = 0.0;
        bool have_grad = false;
        bool accepted = false;
        step = std::min(step * 1.25, 1e12);
        while (step > 1e-300) {
            for (std::size_t i = 0; i < N; ++i) trial[i] = y[i] - step * py[i];
            obj.gauge(trial);
            Etrial = drv.energy(trial);
            if (std::isfinite(Etrial) && Etrial <= Ey - opts.sufficient_decrease * step * gy2) {
                accepted = true;
                break;
            }
            if (std::isfinite(Etrial) && Etrial <= Ey + noise(Ey)) {
                // decrease below energy resolution: accept when the step is short against the local curvature
                Etrial = drv.both(trial, gtrial);
                if (all_finite(gtrial)) {
                    for (std::size_t i = 0; i < N; ++i) diff[i] = gtrial[i] - gy[i];
                    drv.precondition(diff, pdiff);
                    if (dot(diff, pdiff, vol) <= gy2) {
                        accepted = have_grad = true;
                        break;
                    }
                }
            }
            step *= opts.shrink;
        }
        if (!accepted) {
            drv.check(Etrial, gy, x, step, st.iterations);
            st.message = "line search stalled at machine precision";
            break;
        }
        if (Etrial > Ex + noise(Ex)) {
            // momentum overshoot: restart from the last accepted point
            if (since_restart == 0) {
                st.message = "no descent from the last accepted point";
                break;
            }
            restart();
            continue;
        }
        ++st.iterations;
        ++since_restart;
        xprev.swap(x);
        x.swap(trial);
        Ex = Etrial;
        if (have_grad) {
            gx = gtrial;
        } else {
            drv.both(x, gx);
        }
        drv.check(Ex, gx, xprev, step, st.iterations);
        gnorm = weighted_norm(gx, vol);
        if (gnorm <= opts.tol_grad) break;

        double progress = 0.0;
        for (std::size_t i = 0; i < N; ++i) progress += gy[i] * (x[i] - xprev[i]);
        const bool forced = opts.restart_every > 0 && since_restart >= opts.restart_every;
        if (progress > 0.0 || forced) {
            restart();
            continue;
        }
        const double tnext = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / tnext;
        t = tnext;
        for (std::size_t i = 0; i < N; ++i) y[i] = x[i] + beta * (x[i] - xprev[i]);
        obj.gauge(y);
        Ey = drv.both(y, gy);
        drv.check(Ey, gy, x, step, st.iterations);
    }

    if (Ex > E_init) {
        // never return anything worse than the starting point
        x = x_init;
        Ex = E_init;
        gnorm = g_init;
    }
    st.grad_norm = gnorm;
    st.converged = gnorm <= opts.tol_grad;
    st.last_step = step;
    if (!st.converged && st.message.empty()) st.message = "max_iter reached";
    res.value = Ex;
    res.minimizer = std::move(x);
    return res;
}

MinimizeResult run_nonlinear_cg(const Objective& obj, std::vector<double> x, const OptimizerOptions& opts) {
    MinimizeResult res;
    OptimizerStats& st = res.stats;
    Driver drv(obj, st);
    const double vol = obj.cell_volume;
    const std::size_t N = x.size();

    obj.gauge(x);
    std::vector<double> g(N), s(N), snew(N), d(N), trial(N), gt(N), best(N), gbest(N);
    double E = drv.both(x, g);
    drv.check(E, g, x, 0.0, 0);
    double gnorm = weighted_norm(g, vol);
    drv.precondition(g, s);
    for (std::size_t i = 0; i < N; ++i) d[i] = -s[i];
    double alpha = obj.precondition ? 1.0 : (gnorm > 0.0 ? 1.0 / gnorm : 1.0);
    int since_restart = 0;

    while (gnorm > opts.tol_grad && st.iterations < opts.max_iter) {
        double slope = dot(g, d, vol);
        if (!(slope < 0.0)) {
            for (std::size_t i = 0; i < N; ++i) d[i] = -s[i];
            slope = dot(g, d, vol);
            ++st.restarts;
        }
        // secant search on phi'(a) = <g(x + a d), d>; exact in two evaluations for quadratics
        double alo = 0.0, dlo = slope, ahi = std::numeric_limits<double>::infinity();
        double a = alpha;
        double Ebest = std::numeric_limits<double>::infinity(), abest = 0.0;
        bool accepted = false;
        for (int tries = 0; tries < 40 && a > 1e-300; ++tries) {
            for (std::size_t i = 0; i < N; ++i) trial[i] = x[i] + a * d[i];
            obj.gauge(trial);
            const double Ea = drv.both(trial, gt);
            const bool finite = std::isfinite(Ea) && all_finite(gt);
            const double da = finite ? dot(gt, d, vol) : 0.0;
            const bool no_rise = finite && Ea <= E + noise(E);
            if (no_rise && (Ea <= E + opts.sufficient_decrease * a * slope || Ea < E) && Ea < Ebest) {
                Ebest = Ea;
                abest = a;
                best.swap(trial);
                gbest.swap(gt);
                if (std::abs(da) <= kCurvatureTolerance * std::abs(slope)) {
                    accepted = true;
                    break;
                }
            } else if (no_rise && std::abs(da) <= kCurvatureTolerance * std::abs(slope) && Ebest > E + noise(E)) {
                // flat to rounding and line-stationary
                Ebest = Ea;
                abest = a;
                best.swap(trial);
                gbest.swap(gt);
                accepted = true;
                break;
            }
            double next = 0.0;
            const double sec = finite && da > dlo ? alo - dlo * (a - alo) / (da - dlo) : 0.0;
            if (finite && no_rise && da < 0.0) {
                alo = a;
                dlo = da;
                next = sec > a ? std::min(sec, 8.0 * a) : 4.0 * a;
                if (std::isfinite(ahi)) next = std::min(next, alo + 0.9 * (ahi - alo));
            } else {
                ahi = a;
                next = sec > alo ? std::clamp(sec, alo + 0.1 * (a - alo), alo + 0.9 * (a - alo)) : alo + opts.shrink * (a - alo);
            }
            a = next;
        }
        if (!accepted && !(Ebest < E + noise(E) && std::isfinite(Ebest))) {
            drv.check(E, g, x, a, st.iterations);
            st.message = "line search stalled at machine precision";
            break;
        }
        x.swap(best);
        E = Ebest;
        alpha = abest;
        ++st.iterations;
        ++since_restart;
        const double gs = dot(g, s, vol);
        drv.precondition(gbest, snew);
        double beta = 0.0;
        for (std::size_t i = 0; i < N; ++i) beta += snew[i] * (gbest[i] - g[i]);
        beta = std::max(0.0, beta * vol / gs);
        if (opts.restart_every > 0 && since_restart >= opts.restart_every) {
            beta = 0.0;
            since_restart = 0;
            ++st.restarts;
        }
        g.swap(gbest);
        s.swap(snew);
        gnorm = weighted_norm(g, vol);
        for (std::size_t i = 0; i < N; ++i) d[i] = -s[i] + beta * d[i];
    }

    st.grad_norm = gnorm;
    st.converged = gnorm <= opts.tol_grad;
    st.last_step = alpha;
    if (!st.converged && st.message.empty()) st.message = "max_iter reached";
    res.value = E;
    res.minimizer = std::move(x);
    return res;
}

} // namespace

MinimizeResult minimize(const Objective& objective, std::vector<double> init, const OptimizerOptions& opts) {
    opts.validate();
    if (!objective.energy || !objective.gradient || !objective.gauge)
        throw ConfigError("minimize: energy, gradient and gauge callbacks are required");
    if (opts.algorithm == Algorithm::nonlinear_cg) return run_nonlinear_cg(objective, std::move(init), opts);
    return run_accelerated(objective, std::move(init), opts);
}

double grad_check(const Objective& objective, std::span<const double> point, double step, std::uint64_t seed,
                  int directions) {
    if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");
    const std::size_t N = point.size();
    const double vol = objective.cell_volume;
    std::vector<double> g(N), dir(N), plus(N), minus(N);
    objective.gradient(point, g);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < directions; ++k) {
        for (double& v : dir) v = normal(rng);
        objective.gauge(dir);
        const double len = weighted_norm(dir, vol);
        if (len == 0.0) continue;
        for (double& v : dir) v /= len;
        for (std::size_t i = 0; i < N; ++i) {
            plus[i] = point[i] + step * dir[i];
            minus[i] = point[i] - step * dir[i];
        }
        const double fd = (objective.energy(plus) - objective.energy(minus)) / (2.0 * step);
        const double an = dot(g, dir, vol);
        const double scale = std::max(std::abs(fd), std::abs(an));
        if (scale == 0.0) continue;
        worst = std::max(worst, std::abs(fd - an) / scale);
    }
    return worst;
}

} // namespace nlhomog
