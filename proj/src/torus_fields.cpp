#include "nlhomog/torus_fields.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace nlhomog {

TorusGrid::TorusGrid(int dim, int n) : dim_(dim), n_(n) {
    if (dim_ != 1 && dim_ != 2) throw ConfigError("grid.dim must be 1 or 2");
    if (n_ < 2) throw ConfigError("grid.n must be >= 2");
}

Point TorusGrid::coord(std::size_t node) const {
    const double h = 1.0 / n_;
    if (dim_ == 1) return {static_cast<double>(node) * h, 0.0};
    const auto n = static_cast<std::size_t>(n_);
    return {static_cast<double>(node / n) * h, static_cast<double>(node % n) * h};
}

PeriodicField::PeriodicField(TorusGrid g, int components)
    : grid(g), m(components), values(g.size() * static_cast<std::size_t>(components), 0.0) {
    if (m < 1) throw ConfigError("field: component count must be >= 1");
}

PeriodicField::PeriodicField(TorusGrid g, int components, std::vector<double> v)
    : grid(g), m(components), values(std::move(v)) {
    if (m < 1) throw ConfigError("field: component count must be >= 1");
    if (values.size() != grid.size() * static_cast<std::size_t>(m))
        throw ConfigError("field: expected " + std::to_string(grid.size() * static_cast<std::size_t>(m)) +
                          " values, got " + std::to_string(values.size()));
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kLatticeSnap = 1e-12;

struct AxisSplit {
    int offset;    // in [0, n)
    double frac;   // in [0, 1)
};

AxisSplit split_axis(double displacement, int n) {
    const double pos = displacement * n;
    double base = std::floor(pos);
    double frac = pos - base;
    if (frac < kLatticeSnap) frac = 0.0;
    if (frac > 1.0 - kLatticeSnap) {
        frac = 0.0;
        base += 1.0;
    }
    auto off = static_cast<long long>(base) % n;
    if (off < 0) off += n;
    return {static_cast<int>(off), frac};
}

} // namespace

ShiftStencil::ShiftStencil(const TorusGrid& grid, const Point& displacement) : grid_(grid) {
    const int n = grid.n();
    const AxisSplit ax = split_axis(displacement[0], n);
    std::vector<std::pair<int, double>> xs{{ax.offset, 1.0 - ax.frac}};
    if (ax.frac > 0.0) xs.emplace_back((ax.offset + 1) % n, ax.frac);
    if (grid.dim() == 1) {
        for (auto [o, w] : xs) terms_.push_back({{o, 0}, w});
        return;
    }
    const AxisSplit ay = split_axis(displacement[1], n);
    std::vector<std::pair<int, double>> ys{{ay.offset, 1.0 - ay.frac}};
    if (ay.frac > 0.0) ys.emplace_back((ay.offset + 1) % n, ay.frac);
    for (auto [ox, wx] : xs)
        for (auto [oy, wy] : ys) terms_.push_back({{ox, oy}, wx * wy});
}

void ShiftStencil::apply(std::span<const double> in, std::span<double> out, int m) const { run(in, out, m, false); }

void ShiftStencil::apply_transpose(std::span<const double> in, std::span<double> out, int m) const {
    run(in, out, m, true);
}

void ShiftStencil::run(std::span<const double> in, std::span<double> out, int m, bool transpose) const {
    const int n = grid_.n();
    const auto mm = static_cast<std::size_t>(m);
    std::fill(out.begin(), out.end(), 0.0);
    for (const Term& t : terms_) {
        int ox = transpose ? (n - t.offset[0]) % n : t.offset[0];
        int oy = transpose ? (n - t.offset[1]) % n : t.offset[1];
        const double w = t.weight;
        if (grid_.dim() == 1) {
            // out[i] += w * in[i + ox mod n], split to avoid a modulo per node
            const int split = n - ox;
            for (int i = 0; i < split; ++i)
                for (std::size_t c = 0; c < mm; ++c)
                    out[static_cast<std::size_t>(i) * mm + c] += w * in[static_cast<std::size_t>(i + ox) * mm + c];
            for (int i = split; i < n; ++i)
                for (std::size_t c = 0; c < mm; ++c)
                    out[static_cast<std::size_t>(i) * mm + c] += w * in[static_cast<std::size_t>(i + ox - n) * mm + c];
            continue;
        }
        for (int i = 0; i < n; ++i) {
            const int si = i + ox < n ? i + ox : i + ox - n;
            for (int j = 0; j < n; ++j) {
                const int sj = j + oy < n ? j + oy : j + oy - n;
                const std::size_t dst = (static_cast<std::size_t>(i) * n + j) * mm;
                const std::size_t src = (static_cast<std::size_t>(si) * n + sj) * mm;
                for (std::size_t c = 0; c < mm; ++c) out[dst + c] += w * in[src + c];
            }
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<double> sample(const AffineField& field, const Point& point) {
    const PeriodicField& v = field.periodic;
    const int m = v.m;
    std::vector<double> out(static_cast<std::size_t>(m));
    apply(field.M, point, out.data());
    const int n = v.grid.n();
    auto locate = [n](double x) {
        const double pos = wrap_unit(x) * n;
        int i = static_cast<int>(std::floor(pos));
        double t = pos - i;
        if (i >= n) i -= n;
        return std::pair<int, double>{i, t};
    };
    auto [i0, tx] = locate(point[0]);
    const int i1 = (i0 + 1) % n;
    if (v.grid.dim() == 1) {
        for (int c = 0; c < m; ++c)
            out[static_cast<std::size_t>(c)] +=
                (1.0 - tx) * v.at(static_cast<std::size_t>(i0), c) + tx * v.at(static_cast<std::size_t>(i1), c);
        return out;
    }
    auto [j0, ty] = locate(point[1]);
    const int j1 = (j0 + 1) % n;
    auto node = [n](int i, int j) { return static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j); };
    for (int c = 0; c < m; ++c)
        out[static_cast<std::size_t>(c)] += (1.0 - tx) * (1.0 - ty) * v.at(node(i0, j0), c) +
                                            tx * (1.0 - ty) * v.at(node(i1, j0), c) +
                                            (1.0 - tx) * ty * v.at(node(i0, j1), c) + tx * ty * v.at(node(i1, j1), c);
    return out;
}

PeriodicField shift_diff(const AffineField& field, const Point& xi, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("shift_diff: lambda must be positive");
    const PeriodicField& v = field.periodic;
    const int m = v.m;
    if (field.M.rows != m || field.M.cols != v.grid.dim()) throw ConfigError("shift_diff: M has the wrong shape");
    std::vector<double> affine(static_cast<std::size_t>(m));
    apply(field.M, xi, affine.data());

    ShiftStencil S(v.grid, {lambda * xi[0], lambda * xi[1]});
    PeriodicField out(v.grid, m);
    S.apply(v.values, out.values, m);
    const double inv = 1.0 / lambda;
    for (std::size_t i = 0; i < v.grid.size(); ++i)
        for (int c = 0; c < m; ++c) out.at(i, c) = affine[static_cast<std::size_t>(c)] + (out.at(i, c) - v.at(i, c)) * inv;
    return out;
}

PeriodicField shift_diff_adjoint(const PeriodicField& field, const Point& xi, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("shift_diff_adjoint: lambda must be positive");
    ShiftStencil S(field.grid, {lambda * xi[0], lambda * xi[1]});
    PeriodicField out(field.grid, field.m);
    S.apply_transpose(field.values, out.values, field.m);
    const double inv = 1.0 / lambda;
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = (out.values[k] - field.values[k]) * inv;
    return out;
}

std::vector<double> discrete_gradient(const AffineField& field) {
    const PeriodicField& v = field.periodic;
    const int m = v.m, d = v.grid.dim(), n = v.grid.n();
    if (field.M.rows != m || field.M.cols != d) throw ConfigError("discrete_gradient: M has the wrong shape");
    const double inv_h = static_cast<double>(n);
    const auto block = static_cast<std::size_t>(m * d);
    std::vector<double> grad(v.grid.size() * block);
    for (std::size_t node = 0; node < v.grid.size(); ++node) {
        std::array<std::size_t, 2> next{};
        if (d == 1) {
            next[0] = (node + 1) % static_cast<std::size_t>(n);
        } else {
            const std::size_t i = node / static_cast<std::size_t>(n), j = node % static_cast<std::size_t>(n);
            next[0] = ((i + 1) % static_cast<std::size_t>(n)) * static_cast<std::size_t>(n) + j;
            next[1] = i * static_cast<std::size_t>(n) + (j + 1) % static_cast<std::size_t>(n);
        }
        for (int c = 0; c < m; ++c)
            for (int a = 0; a < d; ++a)
                grad[node * block + static_cast<std::size_t>(c * d + a)] =
                    field.M(c, a) + (v.at(next[static_cast<std::size_t>(a)], c) - v.at(node, c)) * inv_h;
    }
    return grad;
}

std::vector<double> mean(const PeriodicField& field) {
    std::vector<double> mu(static_cast<std::size_t>(field.m), 0.0);
    for (std::size_t i = 0; i < field.grid.size(); ++i)
        for (int c = 0; c < field.m; ++c) mu[static_cast<std::size_t>(c)] += field.at(i, c);
    for (double& x : mu) x *= field.grid.cell_volume();
    return mu;
}

PeriodicField project_mean_zero(const PeriodicField& field) {
    PeriodicField out = field;
    const std::vector<double> mu = mean(field);
    for (std::size_t i = 0; i < field.grid.size(); ++i)
        for (int c = 0; c < field.m; ++c) out.at(i, c) -= mu[static_cast<std::size_t>(c)];
    return out;
}

double inner(const PeriodicField& u, const PeriodicField& w) {
    if (!(u.grid == w.grid) || u.m != w.m) throw ConfigError("inner: fields live on different grids");
    double s = 0.0;
    for (std::size_t k = 0; k < u.values.size(); ++k) s += u.values[k] * w.values[k];
    return s * u.grid.cell_volume();
}

// ---------------------------------------------------------------------------

void write_field_csv(const std::string& path, const AffineField& field) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.precision(17);
    const PeriodicField& v = field.periodic;
    out << v.grid.dim() << "," << v.grid.n() << "," << v.m;
    for (double x : field.M.data) out << "," << x;
    out << "\n";
    for (std::size_t i = 0; i < v.grid.size(); ++i) {
        for (int c = 0; c < v.m; ++c) out << (c ? "," : "") << v.at(i, c);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

AffineField read_field_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open field file '" + path + "'");
    auto parse_line = [&path](const std::string& line) {
        std::vector<double> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                cols.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("field file '" + path + "': not a number: '" + cell + "'");
            }
        }
        return cols;
    };
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("field file '" + path + "' is empty");
    const auto head = parse_line(line);
    if (head.size() < 4) throw ConfigError("field file '" + path + "': malformed header");
    const int d = static_cast<int>(head[0]), n = static_cast<int>(head[1]), m = static_cast<int>(head[2]);
    TorusGrid grid(d, n);
    if (head.size() != static_cast<std::size_t>(3 + m * d))
        throw ConfigError("field file '" + path + "': header needs " + std::to_string(m * d) + " entries of M");
    Matrix M(m, d, std::vector<double>(head.begin() + 3, head.end()));
    std::vector<double> values;
    values.reserve(grid.size() * static_cast<std::size_t>(m));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto row = parse_line(line);
        if (row.size() != static_cast<std::size_t>(m)) throw ConfigError("field file '" + path + "': bad row width");
        values.insert(values.end(), row.begin(), row.end());
    }
    return {std::move(M), PeriodicField(grid, m, std::move(values))};
}

} // namespace nlhomog
