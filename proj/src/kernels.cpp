#include "nlhomog/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace nlhomog {

const char* to_string(Integrability c) {
    return c == Integrability::integrable ? "integrable" : "non-integrable";
}

Kernel::Kernel(std::string name, int dim, EvalFn eval, std::optional<double> support_radius, LowerBall lower,
               bool origin_singular, Integrability integrable_class)
    : name_(std::move(name)), dim_(dim), eval_(std::move(eval)), support_radius_(support_radius), lower_(lower),
      origin_singular_(origin_singular), integrable_class_(integrable_class) {
    if (dim_ != 1 && dim_ != 2) throw ConfigError("kernel: dimension must be 1 or 2, got " + std::to_string(dim_));
    if (!(lower_.c0 > 0.0) || !(lower_.r0 > 0.0)) throw ConfigError("kernel: lower ball needs c0 > 0 and r0 > 0");
}

namespace {

void require_radius(double r, const char* what) {
    if (!(r > 0.0)) throw ConfigError(std::string(what) + ": radius must be positive");
}

} // namespace

Kernel box_kernel(int dim, double radius) {
    require_radius(radius, "box kernel");
    auto eval = [dim, radius](const Point& xi) {
        for (int a = 0; a < dim; ++a)
            if (std::abs(xi[static_cast<std::size_t>(a)]) > radius) return 0.0;
        return 1.0;
    };
    return Kernel("box", dim, eval, radius * std::sqrt(static_cast<double>(dim)), {1.0, radius}, false,
                  Integrability::integrable);
}

Kernel disk_kernel(int dim, double radius) {
    require_radius(radius, "disk kernel");
    auto eval = [dim, radius](const Point& xi) { return norm(xi, dim) < radius ? 1.0 : 0.0; };
    return Kernel("disk", dim, eval, radius, {1.0, radius}, false, Integrability::integrable);
}

Kernel one_sided_kernel(double r0, double radius) {
    require_radius(radius, "one-sided kernel");
    require_radius(r0, "one-sided kernel");
    auto eval = [r0, radius](const Point& xi) { return (xi[0] >= -r0 && xi[0] <= radius) ? 1.0 : 0.0; };
    return Kernel("onesided", 1, eval, std::max(r0, radius), {1.0, r0}, false, Integrability::integrable);
}

Kernel exp_kernel(int dim, double r0) {
    require_radius(r0, "exp kernel");
    auto eval = [dim](const Point& xi) { return std::exp(-norm(xi, dim)); };
    return Kernel("exp", dim, eval, std::nullopt, {std::exp(-r0), r0}, false, Integrability::integrable);
}

Kernel inv_norm_kernel(int dim, double radius) {
    require_radius(radius, "invnorm kernel");
    auto eval = [dim, radius](const Point& xi) {
        const double r = norm(xi, dim);
        if (r >= radius) return 0.0;
        if (r == 0.0) return std::numeric_limits<double>::infinity();
        return std::pow(r, -dim);
    };
    return Kernel("invnorm", dim, eval, radius, {std::pow(radius, -dim), radius}, true,
                  Integrability::non_integrable);
}

Kernel zero_kernel(int dim) {
    // Metadata is nominal; (rho1) fails by construction.
    return Kernel("zero", dim, [](const Point&) { return 0.0; }, 1.0, {1.0, 1.0}, false,
                  Integrability::integrable);
}

Kernel tabulated_kernel(int dim, std::vector<Point> points, std::vector<double> values, LowerBall lower) {
    if (points.size() != values.size() || points.empty())
        throw ConfigError("tabulated kernel: need equally many points and values (at least one)");
    double reach = 0.0, spacing = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        reach = std::max(reach, norm(points[i], dim));
        if (values[i] < 0.0) throw ConfigError("tabulated kernel: negative value in row " + std::to_string(i));
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
        Point d{points[i][0] - points[i - 1][0], points[i][1] - points[i - 1][1]};
        const double s = norm(d, dim);
        if (s > 0.0) spacing = std::min(spacing, s);
    }
    const double tol = std::isfinite(spacing) ? 0.25 * spacing : 1e-9;
    auto eval = [dim, points = std::move(points), values = std::move(values), tol](const Point& xi) {
        double best = std::numeric_limits<double>::infinity();
        double value = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            Point d{points[i][0] - xi[0], points[i][1] - xi[1]};
            const double r = norm(d, dim);
            if (r < best) {
                best = r;
                value = values[i];
            }
        }
        return best <= tol ? value : 0.0;
    };
    return Kernel("table", dim, eval, reach + tol, lower, false, Integrability::integrable);
}

Kernel load_tabulated_kernel(const std::string& path, int dim, LowerBall lower) {
    std::ifstream in(path);
    if (!in) throw ConfigError("kernel.table: cannot open '" + path + "'");
    std::vector<Point> points;
    std::vector<double> values;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> cols;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                cols.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (points.empty()) continue; // header
            throw ConfigError("kernel.table: non-numeric row " + std::to_string(row) + " in '" + path + "'");
        }
        if (cols.size() != static_cast<std::size_t>(dim + 1))
            throw ConfigError("kernel.table: row " + std::to_string(row) + " needs " + std::to_string(dim + 1) +
                              " columns");
        Point p{cols[0], dim == 2 ? cols[1] : 0.0};
        points.push_back(p);
        values.push_back(cols[static_cast<std::size_t>(dim)]);
    }
    return tabulated_kernel(dim, std::move(points), std::move(values), lower);
}

Kernel make_library_kernel(const std::string& name, int dim, double radius, double r0) {
    if (name == "box") return box_kernel(dim, radius);
    if (name == "disk") return disk_kernel(dim, radius);
    if (name == "onesided") {
        if (dim != 1) throw ConfigError("kernel.name=onesided is only defined for dim 1");
        return one_sided_kernel(r0, radius);
    }
    if (name == "exp") return exp_kernel(dim, r0);
    if (name == "invnorm") return inv_norm_kernel(dim, radius);
    if (name == "zero") return zero_kernel(dim);
    throw ConfigError("kernel.name: unknown kernel '" + name + "'");
}

// ---------------------------------------------------------------------------
// Quadrature

double XiQuadrature::weight_sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

double XiQuadrature::ball_volume() const { return dim == 1 ? 2.0 * T : std::numbers::pi * T * T; }

std::string XiQuadrature::descriptor() const {
    std::ostringstream os;
    os << "d" << dim << "T" << T << "b" << grading.base_cells_per_axis << "g" << grading.levels;
    return os.str();
}

namespace {

struct Cell {
    Point center;
    double half;
};

double distance_to_origin(const Cell& c, int dim) {
    Point gap{0.0, 0.0};
    for (int a = 0; a < dim; ++a) {
        const auto i = static_cast<std::size_t>(a);
        gap[i] = std::max(0.0, std::abs(c.center[i]) - c.half);
    }
    return norm(gap, dim);
}

} // namespace

XiQuadrature build_quadrature(int dim, double T, int base_cells_per_axis, int grading_levels) {
    if (dim != 1 && dim != 2) throw ConfigError("quadrature: dimension must be 1 or 2");
    if (!(T > 0.0)) throw ConfigError("quadrature: T must be positive");
    if (base_cells_per_axis < 4) throw ConfigError("quadrature: base_cells_per_axis must be >= 4");
    if (grading_levels < 0) throw ConfigError("quadrature: grading_levels must be >= 0");

    const double h = 2.0 * T / base_cells_per_axis;
    std::vector<Cell> cells;
    for (int i = 0; i < base_cells_per_axis; ++i) {
        const double cx = -T + (i + 0.5) * h;
        if (dim == 1) {
            cells.push_back({{cx, 0.0}, 0.5 * h});
            continue;
        }
        for (int j = 0; j < base_cells_per_axis; ++j) {
            const double cy = -T + (j + 0.5) * h;
            if (std::hypot(cx, cy) < T) cells.push_back({{cx, cy}, 0.5 * h});
        }
    }

    const double refine_radius = 0.25 * T;
    for (int level = 1; level <= grading_levels; ++level) {
        const double radius = refine_radius / std::ldexp(1.0, level - 1);
        std::vector<Cell> next;
        next.reserve(cells.size());
        for (const Cell& c : cells) {
            if (distance_to_origin(c, dim) >= radius) {
                next.push_back(c);
                continue;
            }
            const double q = 0.5 * c.half;
            if (dim == 1) {
                next.push_back({{c.center[0] - q, 0.0}, q});
                next.push_back({{c.center[0] + q, 0.0}, q});
            } else {
                for (int sx : {-1, 1})
                    for (int sy : {-1, 1}) next.push_back({{c.center[0] + sx * q, c.center[1] + sy * q}, q});
            }
        }
        cells = std::move(next);
    }

    // Lexicographic order keeps node lists reproducible and easy to inspect.
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        return a.center[0] != b.center[0] ? a.center[0] < b.center[0] : a.center[1] < b.center[1];
    });

    XiQuadrature q;
    q.dim = dim;
    q.T = T;
    q.grading = {base_cells_per_axis, grading_levels, refine_radius};
    q.declared_volume_tol = dim == 1 ? 1e-3 : std::max(1e-3, 2.0 * std::pow(h / T, 1.5));
    q.nodes.reserve(cells.size());
    q.weights.reserve(cells.size());
    for (const Cell& c : cells) {
        q.nodes.push_back(c.center);
        q.weights.push_back(std::pow(2.0 * c.half, dim));
    }
    return q;
}

double XiSamples::mass() const {
    double s = 0.0;
    for (double w : weight) s += w;
    return s;
}

Point XiSamples::first_moment() const {
    Point m{0.0, 0.0};
    for (std::size_t k = 0; k < xi.size(); ++k) {
        m[0] += weight[k] * xi[k][0];
        m[1] += weight[k] * xi[k][1];
    }
    return m;
}

namespace {

std::string describe_node(std::size_t k, const Point& xi, int dim) {
    std::ostringstream os;
    os << "node " << k << " at (" << xi[0];
    if (dim == 2) os << ", " << xi[1];
    os << ")";
    return os.str();
}

} // namespace

XiSamples sample_kernel(const Kernel& kernel, const XiQuadrature& quad) {
    if (kernel.dim() != quad.dim)
        throw ConfigError("kernel dimension " + std::to_string(kernel.dim()) + " does not match quadrature dimension " +
                          std::to_string(quad.dim));
    XiSamples s;
    s.dim = quad.dim;
    for (std::size_t k = 0; k < quad.size(); ++k) {
        const double rho = kernel(quad.nodes[k]);
        if (!std::isfinite(rho))
            throw NumericalError("kernel '" + kernel.name() + "' is not finite at quadrature " +
                                 describe_node(k, quad.nodes[k], quad.dim) + "; regrade or cap the kernel");
        if (rho < 0.0)
            throw NumericalError("kernel '" + kernel.name() + "' is negative at quadrature " +
                                 describe_node(k, quad.nodes[k], quad.dim));
        const double w = quad.weights[k] * rho;
        if (w == 0.0) continue;
        s.xi.push_back(quad.nodes[k]);
        s.weight.push_back(w);
    }
    return s;
}

Moments p_moment(const Kernel& kernel, double p, const XiQuadrature& quad) {
    if (!(p > 1.0)) throw ConfigError("p_moment: p must exceed 1");
    const XiSamples s = sample_kernel(kernel, quad);
    Moments m;
    for (std::size_t k = 0; k < s.size(); ++k) {
        m.kappa_full += s.weight[k] * std::pow(norm(s.xi[k], s.dim), p);
        m.kappa_dir += s.weight[k] * std::pow(std::abs(s.xi[k][0]), p);
    }
    return m;
}

Truncation truncate(const Kernel& kernel, double T, double p, int tail_probe) {
    const LowerBall lb = kernel.lower_ball();
    if (T < lb.r0)
        throw ConfigError("truncate: T = " + std::to_string(T) + " is below the lower-ball radius r0 = " +
                          std::to_string(lb.r0));
    if (tail_probe < 1) throw ConfigError("truncate: tail_probe must be >= 1");

    double tail = 0.0;
    const auto support = kernel.support_radius();
    if (!support || *support > T) {
        const int dim = kernel.dim();
        const double dr = 3.0 * T / tail_probe;
        for (int s = 0; s < tail_probe; ++s) {
            const double r = T + (s + 0.5) * dr;
            const double rp = std::pow(r, p);
            if (dim == 1) {
                tail += (kernel({r, 0.0}) + kernel({-r, 0.0})) * rp * dr;
                continue;
            }
            const double dth = 2.0 * std::numbers::pi / tail_probe;
            for (int t = 0; t < tail_probe; ++t) {
                const double th = (t + 0.5) * dth;
                tail += kernel({r * std::cos(th), r * std::sin(th)}) * rp * r * dr * dth;
            }
        }
    }

    const int dim = kernel.dim();
    auto inner = [kernel, T, dim](const Point& xi) { return norm(xi, dim) < T ? kernel(xi) : 0.0; };
    const double radius = support ? std::min(*support, T) : T;
    Kernel cut(kernel.name(), dim, inner, radius, lb, kernel.origin_singular(), kernel.integrable_class());
    return {std::move(cut), tail};
}

AssumptionReport check_assumptions(const Kernel& kernel, double p, const XiQuadrature& quad) {
    AssumptionReport report;
    const LowerBall lb = kernel.lower_ball();
    const int dim = quad.dim;

    auto mass_of = [&](const XiQuadrature& q) {
        double m = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) m += q.weights[k] * kernel(q.nodes[k]);
        return m;
    };

    double rho1_min = std::numeric_limits<double>::infinity();
    bool any_inner = false;
    for (std::size_t k = 0; k < quad.size(); ++k) {
        const Point& xi = quad.nodes[k];
        const double rho = kernel(xi);
        const double radius = norm(xi, dim);
        if (radius < lb.r0) {
            any_inner = true;
            rho1_min = std::min(rho1_min, rho);
        }
        const double mirrored = kernel({-xi[0], -xi[1]});
        const double defect = (std::isfinite(rho) && std::isfinite(mirrored)) ? std::abs(rho - mirrored)
                              : (rho == mirrored ? 0.0 : std::numeric_limits<double>::infinity());
        report.symmetry_defect = std::max(report.symmetry_defect, defect);
        report.p_moment += quad.weights[k] * rho * std::pow(radius, p);
    }
    report.rho1_min = any_inner ? rho1_min : 0.0;
    report.rho1_ok = any_inner && rho1_min >= lb.c0;

    report.mass = mass_of(quad);
    const XiQuadrature refined =
        build_quadrature(dim, quad.T, quad.grading.base_cells_per_axis, quad.grading.levels + kMassProbeLevels);
    report.mass_refined = mass_of(refined);
    report.mass_diverges = !std::isfinite(report.mass) || !std::isfinite(report.mass_refined) ||
                      (report.mass > 0.0 && report.mass_refined / report.mass > kMassDivergenceRatio);
    return report;
}

} // namespace nlhomog
