#include "nlhomog/cell_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nlhomog/parallel.hpp"
#include "nlhomog/preconditioner.hpp"

namespace nlhomog {

const char* to_string(Regime r) {
    switch (r) {
    case Regime::local: return "local";
    case Regime::nonlocal: return "nonlocal";
    case Regime::supercritical: return "supercritical";
    }
    return "?";
}

Regime parse_regime(const std::string& name) {
    if (name == "local") return Regime::local;
    if (name == "nonlocal") return Regime::nonlocal;
    if (name == "supercritical") return Regime::supercritical;
    throw ConfigError("cell.regime: unknown regime '" + name + "'");
}

namespace {

void check_shapes(const Matrix& M, const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad,
                  int grid_dim) {
    const int d = grid_dim;
    if (kernel.dim() != d || quad.dim != d || density.dim() != d)
        throw ConfigError("kernel, quadrature, density and grid dimensions must agree");
    if (M.rows != density.target_dim() || M.cols != d)
        throw ConfigError("M must be " + std::to_string(density.target_dim()) + "x" + std::to_string(d));
}

void check_truncation(const Kernel& kernel, const XiQuadrature& quad) {
    if (quad.T < kernel.lower_ball().r0)
        throw ConfigError("quadrature radius T = " + std::to_string(quad.T) + " is below r0 = " +
                          std::to_string(kernel.lower_ball().r0));
    if (quad.T * quad.T < static_cast<double>(quad.dim) * (1.0 - 1e-12))
        throw ConfigError("quadrature radius T = " + std::to_string(quad.T) + " does not contain the unit cube");
}

double power(double r, double p) { return p == 2.0 ? r * r : std::pow(r, p); }

double euclid(const double* z, int m) {
    if (m == 1) return std::abs(z[0]);
    double s = 0.0;
    for (int c = 0; c < m; ++c) s += z[c] * z[c];
    return std::sqrt(s);
}

DensitySpec constant_density(const DensitySpec& like, double c) {
    const int d = like.dim();
    return DensitySpec::separable(CoefficientField::constant(d, c), CoefficientField::constant(d, 1.0), like.p(),
                                  like.target_dim());
}

} // namespace

void CellProblem::validate() const {
    check_shapes(M, density, kernel, quad, grid.dim());
    check_truncation(kernel, quad);
    opts.validate();
    if (regime == Regime::nonlocal) {
        if (!(lambda > 0.0)) throw ConfigError("cell.lambda must be positive in the nonlocal regime");
        if (grid.h() > lambda / kResolveFactor * (1.0 + 1e-12))
            throw ConfigError("grid.n = " + std::to_string(grid.n()) + " does not resolve lambda = " +
                              std::to_string(lambda) + " (need h <= lambda/16)");
    }
}

std::string CellResult::flag_string() const {
    std::string s;
    for (const auto& f : flags) s += (s.empty() ? "" : "|") + f;
    return s;
}

// ---------------------------------------------------------------------------

struct CellEnergy::Impl {
    Regime regime;
    double lambda;
    int m;
    int d;
    TorusGrid grid;
    double vol;
    double p;
    DensitySpec density;
    XiSamples xi;
    std::vector<double> affine;           // M xi_k, m per sample
    std::vector<ShiftStencil> shifts;     // nonlocal only
    bool separable;
    std::vector<double> coef_x;           // a(x_i), or a(x_i) b(x_i) in the local regime
    std::vector<std::vector<double>> coef_y; // b(x_i + lambda xi_k) when b varies (nonlocal)
    double coef_b = 1.0;                  // constant b

    Impl(const CellProblem& prob, const DensitySpec& dens)
        : regime(prob.regime), lambda(prob.lambda), m(dens.target_dim()), d(prob.grid.dim()), grid(prob.grid),
          vol(prob.grid.cell_volume()), p(dens.p()), density(dens), xi(sample_kernel(prob.kernel, prob.quad)) {
        if (regime == Regime::supercritical) throw ConfigError("CellEnergy: the supercritical regime has no cell energy");
        check_shapes(prob.M, dens, prob.kernel, prob.quad, d);
        const std::size_t K = xi.size();
        affine.resize(K * static_cast<std::size_t>(m));
        for (std::size_t k = 0; k < K; ++k) apply(prob.M, xi.xi[k], &affine[k * static_cast<std::size_t>(m)]);

        const SeparablePower* sep = dens.separable_form();
        separable = sep != nullptr;
        const std::size_t N = grid.size();
        if (regime == Regime::nonlocal) {
            shifts.reserve(K);
            for (std::size_t k = 0; k < K; ++k) shifts.emplace_back(grid, Point{lambda * xi.xi[k][0], lambda * xi.xi[k][1]});
        }
        if (!separable) return;
        coef_x.resize(N);
        for (std::size_t i = 0; i < N; ++i) {
            const Point x = grid.coord(i);
            coef_x[i] = regime == Regime::local ? sep->a(x) * sep->b(x) : sep->a(x);
        }
        if (regime == Regime::nonlocal) {
            if (sep->b.is_constant()) {
                coef_b = sep->b.lower();
            } else {
                coef_y.assign(K, std::vector<double>(N));
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t i = 0; i < N; ++i) {
                        const Point x = grid.coord(i);
                        coef_y[k][i] = sep->b(Point{x[0] + lambda * xi.xi[k][0], x[1] + lambda * xi.xi[k][1]});
                    }
            }
        }
    }

    Point second_point(std::size_t k, std::size_t i) const {
        const Point x = grid.coord(i);
        if (regime == Regime::local) return x;
        return {wrap_unit(x[0] + lambda * xi.xi[k][0]), wrap_unit(x[1] + lambda * xi.xi[k][1])};
    }

    /// f and (optionally) weight * df/dz at pair (k, i) with difference quotient z.
    double integrand(std::size_t k, std::size_t i, const double* z, double* dz, double weight) const {
        if (separable) {
            double c = coef_x[i];
            if (regime == Regime::nonlocal) c *= coef_y.empty() ? coef_b : coef_y[k][i];
            const double r = euclid(z, m);
            if (dz) {
                const double s = r == 0.0 ? 0.0 : weight * c * p * (p == 2.0 ? 1.0 : std::pow(r, p - 2.0));
                for (int q = 0; q < m; ++q) dz[q] = s * z[q];
            }
            return c * power(r, p);
        }
        const Point x = grid.coord(i);
        const Point y = second_point(k, i);
        std::span<const double> zs(z, static_cast<std::size_t>(m));
        if (dz) {
            std::span<double> g(dz, static_cast<std::size_t>(m));
            density_grad_z(density, x, y, zs, g);
            for (double& v : g) v *= weight;
        }
        return density_eval(density, x, y, zs);
    }

    [[noreturn]] void fail(std::size_t k, std::size_t i) const {
        std::ostringstream os;
        os << "non-finite energy contribution at quadrature sample k=" << k << ", node i=" << i;
        throw NumericalError(os.str());
    }

    double evaluate(std::span<const double> v, double* grad) const {
        if (v.size() != grid.size() * static_cast<std::size_t>(m))
            throw ConfigError("cell energy: field has the wrong size");
        return regime == Regime::nonlocal ? evaluate_nonlocal(v, grad) : evaluate_local(v, grad);
    }

    double evaluate_nonlocal(std::span<const double> v, double* grad) const {
        const std::size_t N = grid.size(), mm = static_cast<std::size_t>(m), NM = N * mm, K = xi.size();
        const double inv = 1.0 / lambda;
        std::vector<double> partial(kReductionChunks, 0.0);
        std::vector<std::vector<double>> gparts(grad ? kReductionChunks : 0);
        for_each_chunk(K, kReductionChunks, [&](ChunkRange r) {
            std::vector<double> sv(NM), q, tq;
            std::vector<double>* g = nullptr;
            if (grad) {
                q.resize(NM);
                tq.resize(NM);
                gparts[r.index].assign(NM, 0.0);
                g = &gparts[r.index];
            }
            std::vector<double> z(mm);
            double acc = 0.0;
            for (std::size_t k = r.begin; k < r.end; ++k) {
                shifts[k].apply(v, sv, m);
                const double* mk = &affine[k * mm];
                const double wk = xi.weight[k];
                double sum = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    for (std::size_t c = 0; c < mm; ++c) z[c] = mk[c] + (sv[i * mm + c] - v[i * mm + c]) * inv;
                    sum += integrand(k, i, z.data(), grad ? &q[i * mm] : nullptr, wk * inv);
                }
                if (!std::isfinite(sum))
                    for (std::size_t i = 0; i < N; ++i) {
                        for (std::size_t c = 0; c < mm; ++c) z[c] = mk[c] + (sv[i * mm + c] - v[i * mm + c]) * inv;
                        if (!std::isfinite(integrand(k, i, z.data(), nullptr, 0.0))) fail(k, i);
                    }
                acc += wk * (sum * vol);
                if (grad) {
                    shifts[k].apply_transpose(q, tq, m);
                    for (std::size_t t = 0; t < NM; ++t) (*g)[t] += tq[t] - q[t];
                }
            }
            partial[r.index] = acc;
        });
        double total = 0.0;
        for (double s : partial) total += s;
        if (grad) {
            std::fill(grad, grad + NM, 0.0);
            for (const auto& g : gparts)
                for (std::size_t t = 0; t < NM; ++t) grad[t] += g[t];
        }
        return total;
    }

    double evaluate_local(std::span<const double> v, double* grad) const {
        const int n = grid.n();
        const std::size_t N = grid.size(), mm = static_cast<std::size_t>(m), dd = static_cast<std::size_t>(d),
                          K = xi.size(), block = mm * dd;
        const double inv_h = static_cast<double>(n);
        const auto nn = static_cast<std::size_t>(n);
        auto neighbour = [&](std::size_t node, std::size_t a, bool forward) -> std::size_t {
            if (d == 1) return forward ? (node + 1) % nn : (node + nn - 1) % nn;
            const std::size_t i = node / nn, j = node % nn;
            if (a == 0) return (forward ? (i + 1) % nn : (i + nn - 1) % nn) * nn + j;
            return i * nn + (forward ? (j + 1) % nn : (j + nn - 1) % nn);
        };
        // full gradient M + grad v per node
        std::vector<double> G(N * block);
        std::vector<double> Mflat(block);
        for (std::size_t c = 0; c < mm; ++c)
            for (std::size_t a = 0; a < dd; ++a) {
                double mca = 0.0;
                // affine rows are M xi for unit xi; recover M from the first samples is fragile, so store it
                mca = Mrow(c, a);
                Mflat[c * dd + a] = mca;
            }
        for (std::size_t node = 0; node < N; ++node)
            for (std::size_t c = 0; c < mm; ++c)
                for (std::size_t a = 0; a < dd; ++a)
                    G[node * block + c * dd + a] =
                        Mflat[c * dd + a] + (v[neighbour(node, a, true) * mm + c] - v[node * mm + c]) * inv_h;

        std::vector<double> partial(kReductionChunks, 0.0);
        std::vector<std::vector<double>> pparts(grad ? kReductionChunks : 0);
        for_each_chunk(K, kReductionChunks, [&](ChunkRange r) {
            std::vector<double> z(mm), dz(mm);
            std::vector<double>* P = nullptr;
            if (grad) {
                pparts[r.index].assign(N * block, 0.0);
                P = &pparts[r.index];
            }
            double acc = 0.0;
            for (std::size_t k = r.begin; k < r.end; ++k) {
                const Point& e = xi.xi[k];
                const double wk = xi.weight[k];
                double sum = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double* Gi = &G[i * block];
                    for (std::size_t c = 0; c < mm; ++c) {
                        double s = Gi[c * dd] * e[0];
                        if (dd == 2) s += Gi[c * dd + 1] * e[1];
                        z[c] = s;
                    }
                    sum += integrand(k, i, z.data(), grad ? dz.data() : nullptr, wk);
                    if (grad)
                        for (std::size_t c = 0; c < mm; ++c)
                            for (std::size_t a = 0; a < dd; ++a) (*P)[i * block + c * dd + a] += dz[c] * e[a];
                }
                if (!std::isfinite(sum)) fail(k, 0);
                acc += wk * (sum * vol);
            }
            partial[r.index] = acc;
        });
        double total = 0.0;
        for (double s : partial) total += s;
        if (grad) {
            std::vector<double> P(N * block, 0.0);
            for (const auto& part : pparts)
                for (std::size_t t = 0; t < P.size(); ++t) P[t] += part[t];
            for (std::size_t node = 0; node < N; ++node)
                for (std::size_t c = 0; c < mm; ++c) {
                    double s = 0.0;
                    for (std::size_t a = 0; a < dd; ++a)
                        s += P[neighbour(node, a, false) * block + c * dd + a] - P[node * block + c * dd + a];
                    grad[node * mm + c] = s * inv_h;
                }
        }
        return total;
    }

    /// Riesz Hessian symbol of the constant-coefficient quadratic energy (a = b = 1, p = 2).
    std::vector<double> symbol() const {
        const int n = grid.n();
        const auto modes = FourierPreconditioner::half_spectrum(grid);
        std::vector<double> cs(static_cast<std::size_t>(n)), sn(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) {
            const double a = 2.0 * std::acos(-1.0) * t / n;
            cs[static_cast<std::size_t>(t)] = std::cos(a);
            sn[static_cast<std::size_t>(t)] = std::sin(a);
        }
        std::vector<double> sym(modes.size(), 0.0);
        for (std::size_t k = 0; k < xi.size(); ++k) {
            const double wk = xi.weight[k];
            for (std::size_t q = 0; q < modes.size(); ++q) {
                const auto& j = modes[q];
                double re = 0.0, im = 0.0;
                if (regime == Regime::nonlocal) {
                    for (const auto& term : shifts[k].terms()) {
                        const long long ph = (static_cast<long long>(j[0]) * term.offset[0] +
                                              static_cast<long long>(j[1]) * term.offset[1]) % n;
                        re += term.weight * cs[static_cast<std::size_t>(ph)];
                        im += term.weight * sn[static_cast<std::size_t>(ph)];
                    }
                    re = (re - 1.0) / lambda;
                    im /= lambda;
                } else {
                    for (int a = 0; a < d; ++a) {
                        const auto ja = static_cast<std::size_t>(j[static_cast<std::size_t>(a)]);
                        re += xi.xi[k][static_cast<std::size_t>(a)] * (cs[ja] - 1.0) * n;
                        im += xi.xi[k][static_cast<std::size_t>(a)] * sn[ja] * n;
                    }
                }
                sym[q] += 2.0 * wk * (re * re + im * im);
            }
        }
        return sym;
    }

    std::shared_ptr<FourierPreconditioner> preconditioner;
    bool use_preconditioner = false;
    Matrix M_;
    double Mrow(std::size_t c, std::size_t a) const { return M_(static_cast<int>(c), static_cast<int>(a)); }
};

CellEnergy::CellEnergy(const CellProblem& prob) : CellEnergy(prob, prob.density) {}

CellEnergy::CellEnergy(const CellProblem& prob, const DensitySpec& density)
    : impl_(std::make_unique<Impl>(prob, density)) {
    impl_->M_ = prob.M;
    impl_->use_preconditioner = prob.opts.precondition;
}

CellEnergy::~CellEnergy() = default;
CellEnergy::CellEnergy(CellEnergy&&) noexcept = default;
CellEnergy& CellEnergy::operator=(CellEnergy&&) noexcept = default;

double CellEnergy::energy(std::span<const double> v) const { return impl_->evaluate(v, nullptr); }

void CellEnergy::gradient(std::span<const double> v, std::span<double> grad) const {
    impl_->evaluate(v, grad.data());
}

double CellEnergy::value_and_gradient(std::span<const double> v, std::span<double> grad) const {
    return impl_->evaluate(v, grad.data());
}

std::size_t CellEnergy::unknowns() const { return impl_->grid.size() * static_cast<std::size_t>(impl_->m); }

namespace {

void mean_zero_inplace(std::span<double> v, std::size_t nodes, int m) {
    const auto mm = static_cast<std::size_t>(m);
    for (std::size_t c = 0; c < mm; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) s += v[i * mm + c];
        const double mu = s / static_cast<double>(nodes);
        for (std::size_t i = 0; i < nodes; ++i) v[i * mm + c] -= mu;
    }
}

} // namespace

Objective CellEnergy::objective() const {
    const Impl* im = impl_.get();
    Objective o;
    o.energy = [im](std::span<const double> v) { return im->evaluate(v, nullptr); };
    o.gradient = [im](std::span<const double> v, std::span<double> g) { im->evaluate(v, g.data()); };
    o.value_and_gradient = [im](std::span<const double> v, std::span<double> g) { return im->evaluate(v, g.data()); };
    const std::size_t nodes = im->grid.size();
    const int m = im->m;
    o.gauge = [nodes, m](std::span<double> v) { mean_zero_inplace(v, nodes, m); };
    o.cell_volume = im->vol;
    if (impl_->use_preconditioner) {
        if (!impl_->preconditioner)
            impl_->preconditioner = std::make_shared<FourierPreconditioner>(im->grid, m, im->symbol());
        auto pre = impl_->preconditioner;
        o.precondition = [pre](std::span<const double> in, std::span<double> out) { pre->apply(in, out); };
    }
    return o;
}

double energy_nonlocal(const PeriodicField& v, const CellProblem& prob) {
    if (prob.regime != Regime::nonlocal) throw ConfigError("energy_nonlocal: problem regime is not nonlocal");
    if (!(v.grid == prob.grid)) throw ConfigError("energy_nonlocal: field grid differs from the problem grid");
    return CellEnergy(prob).energy(v.values);
}

double energy_local(const PeriodicField& v, const CellProblem& prob) {
    if (prob.regime != Regime::local) throw ConfigError("energy_local: problem regime is not local");
    if (!(v.grid == prob.grid)) throw ConfigError("energy_local: field grid differs from the problem grid");
    return CellEnergy(prob).energy(v.values);
}

// ---------------------------------------------------------------------------

double eval_supercritical(const Matrix& M, const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad,
                          const TorusGrid& grid) {
    check_shapes(M, density, kernel, quad, grid.dim());
    const XiSamples xi = sample_kernel(kernel, quad);
    const int m = density.target_dim();
    std::vector<double> z(static_cast<std::size_t>(m));

    if (const SeparablePower* sep = density.separable_form()) {
        double sa = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const Point x = grid.coord(i);
            sa += sep->a(x);
            sb += sep->b(x);
        }
        double moment = 0.0;
        for (std::size_t k = 0; k < xi.size(); ++k) {
            apply(M, xi.xi[k], z.data());
            moment += xi.weight[k] * power(euclid(z.data(), m), sep->p);
        }
        return (sa * grid.cell_volume()) * (sb * grid.cell_volume()) * moment;
    }

    const int cap = grid.dim() == 1 ? 128 : 64;
    const TorusGrid g(grid.dim(), std::min(grid.n(), cap));
    const double vol = g.cell_volume();
    double total = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) {
        apply(M, xi.xi[k], z.data());
        double sum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < g.size(); ++j) sum += density_eval(density, g.coord(i), g.coord(j), z);
        total += xi.weight[k] * (sum * vol * vol);
    }
    return total;
}

// ---------------------------------------------------------------------------

CellResult solve_cell(const CellProblem& prob) {
    prob.validate();
    CellResult res;
    res.minimizer = PeriodicField(prob.grid, prob.density.target_dim());
    if (!prob.density.y_continuous()) res.flags.push_back("y_discontinuous");

    if (prob.regime == Regime::supercritical) {
        res.value = eval_supercritical(prob.M, prob.density, prob.kernel, prob.quad, prob.grid);
        res.affine_upper = res.value;
        res.jensen_lower = eval_supercritical(prob.M, constant_density(prob.density, prob.density.alpha()),
                                              prob.kernel, prob.quad, prob.grid);
        res.growth_upper = eval_supercritical(prob.M, constant_density(prob.density, prob.density.beta()), prob.kernel,
                                              prob.quad, prob.grid);
        res.converged = true;
        return res;
    }

    const CellEnergy energy(prob);
    const std::vector<double> zero(energy.unknowns(), 0.0);
    res.affine_upper = energy.energy(zero);
    res.jensen_lower = CellEnergy(prob, constant_density(prob.density, prob.density.alpha())).energy(zero);
    res.growth_upper = CellEnergy(prob, constant_density(prob.density, prob.density.beta())).energy(zero);

    MinimizeResult mr = minimize(energy.objective(), zero, prob.opts);
    res.value = mr.value;
    res.minimizer.values = std::move(mr.minimizer);
    res.iterations = mr.stats.iterations;
    res.grad_norm = mr.stats.grad_norm;
    res.converged = mr.stats.converged;
    if (!res.converged) res.flags.push_back("not_converged");
    if (!res.bounds_hold()) res.flags.push_back("bounds_violated");
    return res;
}

// ---------------------------------------------------------------------------

RelaxedResult relaxed_supercritical(const Matrix& M, const DensitySpec& density, const Kernel& kernel,
                                    const XiQuadrature& quad, int n, const OptimizerOptions& opts) {
    const TorusGrid grid(kernel.dim(), n);
    check_shapes(M, density, kernel, quad, grid.dim());
    const XiSamples xi = sample_kernel(kernel, quad);
    const int m = density.target_dim();
    const std::size_t mm = static_cast<std::size_t>(m), Nx = grid.size(), K = xi.size(), NM = Nx * Nx * mm;
    const double vol = grid.cell_volume() * grid.cell_volume();

    std::vector<double> affine(K * mm);
    for (std::size_t k = 0; k < K; ++k) apply(M, xi.xi[k], &affine[k * mm]);

    // f(x_i, x_i + y_j, .) coefficients on the product grid
    const SeparablePower* sep = density.separable_form();
    std::vector<double> coef;
    if (sep) {
        coef.resize(Nx * Nx);
        for (std::size_t i = 0; i < Nx; ++i) {
            const Point x = grid.coord(i);
            for (std::size_t j = 0; j < Nx; ++j) {
                const Point y = grid.coord(j);
                coef[i * Nx + j] = sep->a(x) * sep->b(Point{x[0] + y[0], x[1] + y[1]});
            }
        }
    }

    auto evaluate = [&, p = density.p()](std::span<const double> V, double* grad) {
        std::vector<double> partial(kReductionChunks, 0.0);
        std::vector<std::vector<double>> gparts(grad ? kReductionChunks : 0);
        for_each_chunk(K, kReductionChunks, [&](ChunkRange r) {
            std::vector<double> z(mm), dz(mm);
            if (grad) gparts[r.index].assign(NM, 0.0);
            double acc = 0.0;
            for (std::size_t k = r.begin; k < r.end; ++k) {
                const double* mk = &affine[k * mm];
                const double wk = xi.weight[k];
                double sum = 0.0;
                for (std::size_t ij = 0; ij < Nx * Nx; ++ij) {
                    for (std::size_t c = 0; c < mm; ++c) z[c] = V[ij * mm + c] + mk[c];
                    if (sep) {
                        const double rr = euclid(z.data(), m);
                        sum += coef[ij] * power(rr, p);
                        if (grad && rr > 0.0) {
                            const double s = wk * coef[ij] * p * (p == 2.0 ? 1.0 : std::pow(rr, p - 2.0));
                            for (std::size_t c = 0; c < mm; ++c) gparts[r.index][ij * mm + c] += s * z[c];
                        }
                    } else {
                        const Point x = grid.coord(ij / Nx), y = grid.coord(ij % Nx);
                        const Point xy{wrap_unit(x[0] + y[0]), wrap_unit(x[1] + y[1])};
                        sum += density_eval(density, x, xy, z);
                        if (grad) {
                            density_grad_z(density, x, xy, z, dz);
                            for (std::size_t c = 0; c < mm; ++c) gparts[r.index][ij * mm + c] += wk * dz[c];
                        }
                    }
                }
                if (!std::isfinite(sum)) throw NumericalError("relaxed energy: non-finite contribution at sample " +
                                                              std::to_string(k));
                acc += wk * (sum * vol);
            }
            partial[r.index] = acc;
        });
        double total = 0.0;
        for (double s : partial) total += s;
        if (grad) {
            std::fill(grad, grad + NM, 0.0);
            for (const auto& g : gparts)
                for (std::size_t t = 0; t < NM; ++t) grad[t] += g[t];
        }
        return total;
    };

    Objective obj;
    obj.energy = [&](std::span<const double> V) { return evaluate(V, nullptr); };
    obj.gradient = [&](std::span<const double> V, std::span<double> g) { evaluate(V, g.data()); };
    obj.value_and_gradient = [&](std::span<const double> V, std::span<double> g) { return evaluate(V, g.data()); };
    obj.gauge = [&](std::span<double> V) {
        // zero x-mean for every y
        for (std::size_t j = 0; j < Nx; ++j)
            for (std::size_t c = 0; c < mm; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < Nx; ++i) s += V[(i * Nx + j) * mm + c];
                const double mu = s / static_cast<double>(Nx);
                for (std::size_t i = 0; i < Nx; ++i) V[(i * Nx + j) * mm + c] -= mu;
            }
    };
    obj.cell_volume = vol;

    RelaxedResult res;
    res.n = n;
    res.first_moment = xi.first_moment();
    res.mass = xi.mass();
    std::vector<double> zero(NM, 0.0);
    res.F0 = evaluate(zero, nullptr);
    MinimizeResult mr = minimize(obj, zero, opts);
    res.inf_value = mr.value;
    res.gap = res.F0 - res.inf_value;
    res.V = std::move(mr.minimizer);
    res.iterations = mr.stats.iterations;
    res.grad_norm = mr.stats.grad_norm;
    res.converged = mr.stats.converged;
    if (!res.converged) res.flags.push_back("not_converged");
    return res;
}

// ---------------------------------------------------------------------------

double euler_lagrange_residual(const CellResult& result, const CellProblem& prob) {
    const SeparablePower* sep = prob.density.separable_form();
    if (prob.regime == Regime::supercritical) throw ConfigError("euler_lagrange_residual: no cell problem at lambda = inf");
    if (!sep || sep->p != 2.0 || prob.density.target_dim() != 1 || !sep->b.is_constant() || sep->b.lower() != 1.0)
        throw ConfigError("euler_lagrange_residual: requires p = 2, m = 1 and f = a(x)|z|^2");
    if (!(result.minimizer.grid == prob.grid)) throw ConfigError("euler_lagrange_residual: grid mismatch");

    const TorusGrid& grid = prob.grid;
    const XiSamples xi = sample_kernel(prob.kernel, prob.quad);
    const AffineField u{prob.M, result.minimizer};
    std::vector<double> a(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) a[i] = sep->a(grid.coord(i));

    PeriodicField residual(grid, 1);
    if (prob.regime == Regime::nonlocal) {
        for (std::size_t k = 0; k < xi.size(); ++k) {
            PeriodicField q = shift_diff(u, xi.xi[k], prob.lambda);
            for (std::size_t i = 0; i < grid.size(); ++i) q.values[i] *= a[i];
            const PeriodicField t = shift_diff_adjoint(q, xi.xi[k], prob.lambda);
            for (std::size_t i = 0; i < grid.size(); ++i) residual.values[i] += xi.weight[k] * t.values[i];
        }
    } else {
        // sum_k w_k rho_k D^T [a (grad u . xi_k) xi_k]
        const std::vector<double> G = discrete_gradient(u);
        const int d = grid.dim();
        const auto n = static_cast<std::size_t>(grid.n());
        std::vector<double> P(grid.size() * static_cast<std::size_t>(d), 0.0);
        for (std::size_t k = 0; k < xi.size(); ++k) {
            const Point& e = xi.xi[k];
            for (std::size_t i = 0; i < grid.size(); ++i) {
                double s = G[i * static_cast<std::size_t>(d)] * e[0];
                if (d == 2) s += G[i * 2 + 1] * e[1];
                for (int ax = 0; ax < d; ++ax)
                    P[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(ax)] +=
                        xi.weight[k] * a[i] * s * e[static_cast<std::size_t>(ax)];
            }
        }
        for (std::size_t node = 0; node < grid.size(); ++node) {
            double s = 0.0;
            if (d == 1) {
                s = P[(node + n - 1) % n] - P[node];
            } else {
                const std::size_t i = node / n, j = node % n;
                s = P[(((i + n - 1) % n) * n + j) * 2] - P[node * 2] + P[(i * n + (j + n - 1) % n) * 2 + 1] -
                    P[node * 2 + 1];
            }
            residual.values[node] = s * static_cast<double>(n);
        }
    }
    residual = project_mean_zero(residual);
    return std::sqrt(inner(residual, residual));
}

// ---------------------------------------------------------------------------

int MeshPolicy::grid_for(double lambda) const {
    if (!(lambda > 0.0)) return 0;
    long long n = n_min;
    while (1.0 / static_cast<double>(n) > lambda / resolve_factor * (1.0 + 1e-12)) {
        n *= 2;
        if (n > n_max) return 0;
    }
    return n > n_max ? 0 : static_cast<int>(n);
}

LambdaSweep sweep(const std::vector<double>& lambdas, const Matrix& M, const DensitySpec& density, const Kernel& kernel,
                  const XiQuadrature& quad, const MeshPolicy& policy, const OptimizerOptions& opts) {
    if (!std::is_sorted(lambdas.begin(), lambdas.end())) throw ConfigError("sweep.lambdas must be sorted ascending");
    for (double l : lambdas)
        if (!(l > 0.0)) throw ConfigError("sweep.lambdas must be positive");

    LambdaSweep out;
    for (double lambda : lambdas) {
        SweepEntry e;
        e.lambda = lambda;
        e.quad = quad.descriptor();
        const int n = policy.grid_for(lambda);
        if (n == 0) {
            e.resolved = false;
            e.flags.push_back("unresolved");
            out.entries.push_back(std::move(e));
            continue;
        }
        CellProblem prob{Regime::nonlocal, lambda, M, density, kernel, quad, TorusGrid(kernel.dim(), n), opts};
        const CellResult r = solve_cell(prob);
        e.value = r.value;
        e.jensen_lower = r.jensen_lower;
        e.affine_upper = r.affine_upper;
        e.grid_n = n;
        e.grad_norm = r.grad_norm;
        e.iterations = r.iterations;
        e.flags = r.flags;
        out.entries.push_back(std::move(e));
    }
    CellProblem local{Regime::local, 0.0, M, density, kernel, quad, TorusGrid(kernel.dim(), policy.n_local), opts};
    out.f0 = solve_cell(local).value;
    out.finf = eval_supercritical(M, density, kernel, quad, TorusGrid(kernel.dim(), policy.n_sup));
    return out;
}

} // namespace nlhomog
