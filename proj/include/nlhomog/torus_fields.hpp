#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "nlhomog/common.hpp"

namespace nlhomog {

/// Uniform grid on the unit torus: nodes x_i = i h, i in {0..n-1}^d, h = 1/n.
class TorusGrid {
public:
    TorusGrid(int dim, int n);

    int dim() const { return dim_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    double cell_volume() const { return dim_ == 1 ? h() : h() * h(); }
    std::size_t size() const { return dim_ == 1 ? static_cast<std::size_t>(n_) : static_cast<std::size_t>(n_) * n_; }
    Point coord(std::size_t node) const;

    bool operator==(const TorusGrid& o) const { return dim_ == o.dim_ && n_ == o.n_; }

private:
    int dim_;
    int n_;
};

/// m-vector per node, node-major (components contiguous), periodic indexing.
struct PeriodicField {
    TorusGrid grid;
    int m = 1;
    std::vector<double> values;

    PeriodicField(TorusGrid g, int components);
    PeriodicField(TorusGrid g, int components, std::vector<double> v);

    double& at(std::size_t node, int c) { return values[node * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)]; }
    double at(std::size_t node, int c) const {
        return values[node * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)];
    }
};

/// u = M x + v with v Q1-periodic.
struct AffineField {
    Matrix M;
    PeriodicField periodic;
};

/**
 * Periodic multilinear interpolation at a fixed displacement s:
 * (S v)(x_i) = v(x_i + s).  At most 2^d terms; a displacement that is an exact
 * multiple of h collapses to a single cyclic shift.
 */
class ShiftStencil {
public:
    ShiftStencil(const TorusGrid& grid, const Point& displacement);

    /// out = S in (node-major, m components).
    void apply(std::span<const double> in, std::span<double> out, int m) const;
    /// out = S^T in.
    void apply_transpose(std::span<const double> in, std::span<double> out, int m) const;

    struct Term {
        std::array<int, 2> offset; // in [0, n)
        double weight;
    };
    const std::vector<Term>& terms() const { return terms_; }
    bool lattice_aligned() const { return terms_.size() == 1; }

private:
    void run(std::span<const double> in, std::span<double> out, int m, bool transpose) const;

    TorusGrid grid_;
    std::vector<Term> terms_;
};

/// M * point + multilinear periodic interpolation of the periodic part.
std::vector<double> sample(const AffineField& field, const Point& point);

/// Node i receives M xi + (v(x_i + lambda xi) - v(x_i)) / lambda.
PeriodicField shift_diff(const AffineField& field, const Point& xi, double lambda);

/// Transpose of v -> (S v - v)/lambda under <u,w> = h^d sum u.w (the affine slot contributes nothing).
PeriodicField shift_diff_adjoint(const PeriodicField& field, const Point& xi, double lambda);

/// Forward differences plus M; node-major, each node an m x d row-major block.
std::vector<double> discrete_gradient(const AffineField& field);

PeriodicField project_mean_zero(const PeriodicField& field);

/// Per-component discrete mean h^d sum v.
std::vector<double> mean(const PeriodicField& field);

/// h^d sum_i u_i . w_i
double inner(const PeriodicField& u, const PeriodicField& w);

/// Header line "d,n,m,M_00,...", then one line of m values per node (first axis slowest).
void write_field_csv(const std::string& path, const AffineField& field);
AffineField read_field_csv(const std::string& path);

} // namespace nlhomog
