#include "nlhomog/gamma_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <sstream>

#include "nlhomog/parallel.hpp"
#include "nlhomog/preconditioner.hpp"

namespace nlhomog {

DomainGrid::DomainGrid(int dim, int n) : dim_(dim), n_(n) {
    if (dim != 1 && dim != 2) throw ConfigError("domain grid: dimension must be 1 or 2");
    if (n < 2) throw ConfigError("domain grid: n must be >= 2");
}

Point DomainGrid::coord(std::size_t node) const {
    const double h = this->h();
    if (dim_ == 1) return {(static_cast<double>(node) + 0.5) * h, 0.0};
    const auto n = static_cast<std::size_t>(n_);
    return {(static_cast<double>(node / n) + 0.5) * h, (static_cast<double>(node % n) + 0.5) * h};
}

double DomainGrid::boundary_distance(std::size_t node) const {
    const Point x = coord(node);
    double d = std::min(x[0], 1.0 - x[0]);
    if (dim_ == 2) d = std::min({d, x[1], 1.0 - x[1]});
    return d;
}

int domain_grid_for(double eps, double delta) {
    if (!(eps > 0.0 && delta > 0.0)) throw ConfigError("eps and delta must be positive");
    const double hmax = std::min(eps, delta) / 8.0;
    long long n = 2;
    while (1.0 / static_cast<double>(n) > hmax * (1.0 + 1e-12)) {
        n *= 2;
        if (n > (1LL << 30)) throw ConfigError("eps/delta too small for any grid");
    }
    return static_cast<int>(n);
}

void EpsDeltaSchedule::validate() const {
    if (entries.empty()) throw ConfigError("schedule: no entries");
    if (!(lambda >= 0.0)) throw ConfigError("schedule.lambda must be >= 0 (or inf)");
    for (const auto& [e, d] : entries)
        if (!(e > 0.0 && d > 0.0)) throw ConfigError("schedule: eps and delta must be positive");
    for (std::size_t j = 1; j < entries.size(); ++j) {
        if (!(entries[j].first < entries[j - 1].first)) throw ConfigError("schedule.eps must be strictly decreasing");
        if (!(entries[j].second < entries[j - 1].second))
            throw ConfigError("schedule.delta must be strictly decreasing");
    }
    constexpr double slack = 0.1;
    std::vector<double> r;
    for (const auto& [e, d] : entries) r.push_back(e / d);
    for (std::size_t j = 1; j < r.size(); ++j) {
        bool ok = true;
        if (lambda == 0.0) {
            ok = r[j] <= r[j - 1] * (1.0 + slack);
        } else if (std::isinf(lambda)) {
            ok = r[j] >= r[j - 1] / (1.0 + slack);
        } else {
            ok = std::abs(r[j] - lambda) <= std::abs(r[j - 1] - lambda) + slack * lambda;
        }
        if (!ok) {
            std::ostringstream os;
            os << "schedule: eps/delta = " << r[j] << " at entry " << j << " moves away from lambda = " << lambda;
            throw ConfigError(os.str());
        }
    }
    if (std::isfinite(lambda) && lambda > 0.0 && std::abs(r.back() - lambda) > slack * lambda) {
        std::ostringstream os;
        os << "schedule: final eps/delta = " << r.back() << " is not within 10% of lambda = " << lambda;
        throw ConfigError(os.str());
    }
    if (r.size() >= 2 && lambda == 0.0 && !(r.back() < r.front()))
        throw ConfigError("schedule: eps/delta does not decrease toward lambda = 0");
    if (r.size() >= 2 && std::isinf(lambda) && !(r.back() > r.front()))
        throw ConfigError("schedule: eps/delta does not increase toward lambda = inf");
}

namespace {

double power(double r, double p) { return p == 2.0 ? r * r : std::pow(r, p); }

/// Larger Hessians are not factorized; the solver then runs unpreconditioned.
constexpr std::size_t kMaxPreconditionerEntries = 40'000'000;

/// F on a domain grid with gradient in u (Riesz representative under h^d sum).
class DomainEnergy {
public:
    DomainEnergy(const DomainGrid& grid, double eps, double delta, const DensitySpec& density, const Kernel& kernel,
                 const XiQuadrature& quad)
        : grid_(grid), eps_(eps), delta_(delta), density_(density), xi_(sample_kernel(kernel, quad)) {
        if (!(eps > 0.0 && delta > 0.0)) throw ConfigError("eps and delta must be positive");
        if (eps >= 1.0) throw ConfigError("eps = " + std::to_string(eps) + " is not below the domain size 1");
        if (density.target_dim() != 1) throw ConfigError("domain simulation supports scalar fields only (m = 1)");
        if (density.dim() != grid.dim() || kernel.dim() != grid.dim() || quad.dim != grid.dim())
            throw ConfigError("kernel, quadrature, density and domain dimensions must agree");
        sep_ = density.separable_form();
        if (sep_) {
            coef_x_.resize(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) coef_x_[i] = sep_->a(scaled(grid.coord(i)));
            b_const_ = sep_->b.is_constant();
            b_value_ = sep_->b.lower();
        }
    }

    double evaluate(std::span<const double> u, double* grad) const {
        const std::size_t N = grid_.size(), K = xi_.size();
        if (u.size() != N) throw ConfigError("domain energy: field has the wrong size");
        const double vol = grid_.cell_volume();
        std::vector<double> partial(kReductionChunks, 0.0);
        std::vector<std::vector<double>> gparts(grad ? kReductionChunks : 0);
        for_each_chunk(K, kReductionChunks, [&](ChunkRange r) {
            if (grad) gparts[r.index].assign(N, 0.0);
            double acc = 0.0;
            for (std::size_t k = r.begin; k < r.end; ++k) {
                const double wk = xi_.weight[k];
                const double sum = sweep_sample(k, u, grad ? gparts[r.index].data() : nullptr, wk);
                acc += wk * (sum * vol);
            }
            partial[r.index] = acc;
        });
        double total = 0.0;
        for (double s : partial) total += s;
        if (grad) {
            std::fill(grad, grad + N, 0.0);
            for (const auto& g : gparts)
                for (std::size_t t = 0; t < N; ++t) grad[t] += g[t];
        }
        return total;
    }

    /// Riesz Hessian of the constant-coefficient quadratic energy (a = b = 1, p = 2).
    std::vector<SparseEntry> hessian_entries() const {
        std::vector<SparseEntry> out;
        const int n = grid_.n();
        const double h = grid_.h(), inv = 1.0 / eps_;
        const auto nn = static_cast<std::size_t>(n);
        std::array<std::pair<int, double>, 5> row{};
        for (std::size_t k = 0; k < xi_.size(); ++k) {
            const Point& xi = xi_.xi[k];
            const double wk = 2.0 * xi_.weight[k];
            const double off0 = eps_ * xi[0] / h, off1 = eps_ * xi[1] / h;
            for (std::size_t node = 0; node < grid_.size(); ++node) {
                const Point x = grid_.coord(node);
                const Point y{x[0] + eps_ * xi[0], x[1] + eps_ * xi[1]};
                if (!(y[0] > 0.0 && y[0] < 1.0)) continue;
                int len = 0;
                if (grid_.dim() == 1) {
                    const double s0 = static_cast<double>(node) + off0;
                    const int j = std::clamp(static_cast<int>(std::floor(s0)), 0, n - 2);
                    const double t = s0 - j;
                    row[0] = {j, (1.0 - t) * inv};
                    row[1] = {j + 1, t * inv};
                    len = 2;
                } else {
                    if (!(y[1] > 0.0 && y[1] < 1.0)) continue;
                    const double s0 = static_cast<double>(node / nn) + off0, s1 = static_cast<double>(node % nn) + off1;
                    const int j0 = std::clamp(static_cast<int>(std::floor(s0)), 0, n - 2);
                    const int j1 = std::clamp(static_cast<int>(std::floor(s1)), 0, n - 2);
                    const double t0 = s0 - j0, t1 = s1 - j1;
                    const int c00 = j0 * n + j1;
                    row[0] = {c00, (1.0 - t0) * (1.0 - t1) * inv};
                    row[1] = {c00 + 1, (1.0 - t0) * t1 * inv};
                    row[2] = {c00 + n, t0 * (1.0 - t1) * inv};
                    row[3] = {c00 + n + 1, t0 * t1 * inv};
                    len = 4;
                }
                row[static_cast<std::size_t>(len++)] = {static_cast<int>(node), -inv};
                for (int a = 0; a < len; ++a)
                    for (int b = 0; b < len; ++b)
                        out.push_back({row[static_cast<std::size_t>(a)].first, row[static_cast<std::size_t>(b)].first,
                                       wk * row[static_cast<std::size_t>(a)].second *
                                           row[static_cast<std::size_t>(b)].second});
            }
        }
        return out;
    }

    std::size_t pair_count_estimate() const { return xi_.size() * grid_.size(); }

private:
    Point scaled(const Point& x) const { return {x[0] / delta_, x[1] / delta_}; }

    double integrand(std::size_t i, const Point& x, const Point& y, double z, double* dz) const {
        if (sep_) {
            const double c = coef_x_[i] * (b_const_ ? b_value_ : sep_->b(scaled(y)));
            const double r = std::abs(z);
            if (dz) *dz = r == 0.0 ? 0.0 : c * sep_->p * (sep_->p == 2.0 ? z : std::pow(r, sep_->p - 2.0) * z);
            return c * power(r, sep_->p);
        }
        const double zz[1] = {z};
        if (dz) {
            double g[1] = {0.0};
            density_grad_z(density_, scaled(x), scaled(y), zz, g);
            *dz = g[0];
        }
        return density_eval(density_, scaled(x), scaled(y), zz);
    }

    /// Sum over i in I_k of f(...); scatters wk * df/dz * dz/du into grad when given.
    double sweep_sample(std::size_t k, std::span<const double> u, double* grad, double wk) const {
        const int n = grid_.n();
        const double h = grid_.h();
        const Point& xi = xi_.xi[k];
        const double inv = 1.0 / eps_;
        const double off0 = eps_ * xi[0] / h, off1 = eps_ * xi[1] / h;
        double sum = 0.0;
        auto locate = [n](int idx, double off, int& j, double& t) {
            const double s = idx + off;
            j = std::clamp(static_cast<int>(std::floor(s)), 0, n - 2);
            t = s - j;
        };
        if (grid_.dim() == 1) {
            for (int i = 0; i < n; ++i) {
                const Point x = grid_.coord(static_cast<std::size_t>(i));
                const Point y{x[0] + eps_ * xi[0], 0.0};
                if (!(y[0] > 0.0 && y[0] < 1.0)) continue;
                int j = 0;
                double t = 0.0;
                locate(i, off0, j, t);
                const double target = (1.0 - t) * u[static_cast<std::size_t>(j)] + t * u[static_cast<std::size_t>(j) + 1];
                const double z = (target - u[static_cast<std::size_t>(i)]) * inv;
                double dz = 0.0;
                const double f = integrand(static_cast<std::size_t>(i), x, y, z, grad ? &dz : nullptr);
                if (!std::isfinite(f)) fail(k, static_cast<std::size_t>(i));
                sum += f;
                if (grad) {
                    const double q = wk * dz * inv;
                    grad[j] += (1.0 - t) * q;
                    grad[j + 1] += t * q;
                    grad[i] -= q;
                }
            }
            return sum;
        }
        const auto nn = static_cast<std::size_t>(n);
        for (int i0 = 0; i0 < n; ++i0)
            for (int i1 = 0; i1 < n; ++i1) {
                const std::size_t node = static_cast<std::size_t>(i0) * nn + static_cast<std::size_t>(i1);
                const Point x = grid_.coord(node);
                const Point y{x[0] + eps_ * xi[0], x[1] + eps_ * xi[1]};
                if (!(y[0] > 0.0 && y[0] < 1.0 && y[1] > 0.0 && y[1] < 1.0)) continue;
                int j0 = 0, j1 = 0;
                double t0 = 0.0, t1 = 0.0;
                locate(i0, off0, j0, t0);
                locate(i1, off1, j1, t1);
                const std::size_t c00 = static_cast<std::size_t>(j0) * nn + static_cast<std::size_t>(j1);
                const std::size_t c01 = c00 + 1, c10 = c00 + nn, c11 = c00 + nn + 1;
                const double w00 = (1.0 - t0) * (1.0 - t1), w01 = (1.0 - t0) * t1, w10 = t0 * (1.0 - t1),
                             w11 = t0 * t1;
                const double target = w00 * u[c00] + w01 * u[c01] + w10 * u[c10] + w11 * u[c11];
                const double z = (target - u[node]) * inv;
                double dz = 0.0;
                const double f = integrand(node, x, y, z, grad ? &dz : nullptr);
                if (!std::isfinite(f)) fail(k, node);
                sum += f;
                if (grad) {
                    const double q = wk * dz * inv;
                    grad[c00] += w00 * q;
                    grad[c01] += w01 * q;
                    grad[c10] += w10 * q;
                    grad[c11] += w11 * q;
                    grad[node] -= q;
                }
            }
        return sum;
    }

    [[noreturn]] static void fail(std::size_t k, std::size_t i) {
        std::ostringstream os;
        os << "non-finite domain energy contribution at quadrature sample k=" << k << ", node i=" << i;
        throw NumericalError(os.str());
    }

    DomainGrid grid_;
    double eps_;
    double delta_;
    DensitySpec density_;
    XiSamples xi_;
    const SeparablePower* sep_ = nullptr;
    std::vector<double> coef_x_;
    bool b_const_ = true;
    double b_value_ = 1.0;
};

std::vector<double> affine_nodes(const DomainGrid& grid, const Matrix& M) {
    std::vector<double> u(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) apply(M, grid.coord(i), &u[i]);
    return u;
}

} // namespace

double assemble_F(std::span<const double> u, const DomainGrid& grid, double eps, double delta,
                  const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad) {
    return DomainEnergy(grid, eps, delta, density, kernel, quad).evaluate(u, nullptr);
}

BoundaryResult minimize_with_boundary(double eps, double delta, const Matrix& M, double layer_factor,
                                      const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad,
                                      const OptimizerOptions& opts, int grid_n) {
    if (!(layer_factor > 0.0)) throw ConfigError("boundary layer factor must be positive");
    if (!(layer_factor * eps < 0.25))
        throw ConfigError("boundary layer T*eps = " + std::to_string(layer_factor * eps) + " leaves no interior (need < 1/4)");
    if (M.rows != 1 || M.cols != density.dim()) throw ConfigError("M must be 1x" + std::to_string(density.dim()));
    const int n = grid_n > 0 ? grid_n : domain_grid_for(eps, delta);
    const DomainGrid grid(density.dim(), n);
    const DomainEnergy energy(grid, eps, delta, density, kernel, quad);

    BoundaryResult res;
    res.grid_n = n;
    const std::vector<double> ux = affine_nodes(grid, M);
    res.frozen.resize(grid.size());
    const double layer = layer_factor * eps;
    for (std::size_t i = 0; i < grid.size(); ++i) res.frozen[i] = grid.boundary_distance(i) <= layer ? 1 : 0;
    res.affine_value = energy.evaluate(ux, nullptr);

    const std::vector<char>& frozen = res.frozen;
    auto to_u = [&ux](std::span<const double> w) {
        std::vector<double> u(ux.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = ux[i] + w[i];
        return u;
    };
    Objective obj;
    obj.energy = [&](std::span<const double> w) { return energy.evaluate(to_u(w), nullptr); };
    obj.gradient = [&](std::span<const double> w, std::span<double> g) { energy.evaluate(to_u(w), g.data()); };
    obj.value_and_gradient = [&](std::span<const double> w, std::span<double> g) {
        return energy.evaluate(to_u(w), g.data());
    };
    obj.gauge = [&frozen](std::span<double> w) {
        for (std::size_t i = 0; i < w.size(); ++i)
            if (frozen[i]) w[i] = 0.0;
    };
    obj.cell_volume = grid.cell_volume();
    std::shared_ptr<SparsePreconditioner> pre;
    if (opts.precondition && energy.pair_count_estimate() * (grid.dim() == 1 ? 9 : 25) <= kMaxPreconditionerEntries) {
        pre = std::make_shared<SparsePreconditioner>(static_cast<int>(grid.size()), energy.hessian_entries(), frozen);
        obj.precondition = [pre](std::span<const double> in, std::span<double> out) { pre->apply(in, out); };
    }

    MinimizeResult mr = minimize(obj, std::vector<double>(grid.size(), 0.0), opts);
    res.value = mr.value;
    res.u.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) res.u[i] = frozen[i] ? ux[i] : ux[i] + mr.minimizer[i];
    res.iterations = mr.stats.iterations;
    res.grad_norm = mr.stats.grad_norm;
    res.converged = mr.stats.converged;
    if (!res.converged) res.flags.push_back("not_converged");
    return res;
}

const GammaEntry* GammaRun::last_solved() const {
    for (auto it = entries.rbegin(); it != entries.rend(); ++it)
        if (!it->skipped) return &*it;
    return nullptr;
}

double cell_reference(double lambda, const Matrix& M, const DensitySpec& density, const Kernel& kernel,
                      const XiQuadrature& quad, const OptimizerOptions& opts, const MeshPolicy& reference_mesh,
                      std::string* source) {
    const int d = density.dim();
    if (std::isinf(lambda)) {
        if (source) *source = "supercritical";
        return eval_supercritical(M, density, kernel, quad, TorusGrid(d, reference_mesh.n_sup));
    }
    if (lambda == 0.0) {
        if (source) *source = "local";
        return solve_cell(CellProblem{Regime::local, 0.0, M, density, kernel, quad, TorusGrid(d, reference_mesh.n_local), opts})
            .value;
    }
    const int n = reference_mesh.grid_for(lambda);
    if (n == 0)
        throw ConfigError("reference cell problem at lambda = " + std::to_string(lambda) + " exceeds the mesh cap");
    if (source) *source = "nonlocal";
    return solve_cell(CellProblem{Regime::nonlocal, lambda, M, density, kernel, quad, TorusGrid(d, n), opts}).value;
}

GammaRun run_schedule(const EpsDeltaSchedule& schedule, const Matrix& M, const DensitySpec& density,
                      const Kernel& kernel, const XiQuadrature& quad, const OptimizerOptions& opts,
                      const MeshPolicy& reference_mesh, const GammaOptions& gopts) {
    schedule.validate();
    const double layer = gopts.layer_factor > 0.0 ? gopts.layer_factor : quad.T;
    GammaRun run;
    run.schedule = schedule;
    run.M = M;
    run.reference = cell_reference(schedule.lambda, M, density, kernel, quad, opts, reference_mesh, &run.reference_source);

    for (std::size_t e = 0; e < schedule.entries.size(); ++e) {
        GammaEntry g;
        g.j = schedule.first_index + static_cast<int>(e);
        g.eps = schedule.entries[e].first;
        g.delta = schedule.entries[e].second;
        g.grid_n = domain_grid_for(g.eps, g.delta);
        if (!(layer * g.eps < 0.25)) {
            g.skipped = true;
            g.flags.push_back("layer_too_wide");
        } else if (g.grid_n > gopts.n_max) {
            g.skipped = true;
            g.flags.push_back("exceeds_n_max");
        }
        if (!g.skipped) {
            const BoundaryResult r =
                minimize_with_boundary(g.eps, g.delta, M, layer, density, kernel, quad, opts, g.grid_n);
            g.min_value = r.value;
            g.normalized = r.value; // |Omega| = 1
            g.rel_dev = std::abs(g.normalized - run.reference) / (run.reference != 0.0 ? std::abs(run.reference) : 1.0);
            g.iterations = r.iterations;
            g.grad_norm = r.grad_norm;
            g.converged = r.converged;
            g.flags.insert(g.flags.end(), r.flags.begin(), r.flags.end());
        }
        run.entries.push_back(std::move(g));
    }
    return run;
}

} // namespace nlhomog
