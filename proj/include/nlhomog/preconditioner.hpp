#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nlhomog/torus_fields.hpp"

namespace nlhomog {

/**
 * Inverse of a translation-invariant operator on the torus, applied per component in
 * Fourier space. The symbol lives on the real-to-complex half spectrum
 * (n/2+1 entries in 1D, n*(n/2+1) in 2D, last axis halved); the zero mode maps to 0,
 * so outputs are mean-zero.
 */
class FourierPreconditioner {
public:
    FourierPreconditioner(const TorusGrid& grid, int m, std::vector<double> symbol);
    ~FourierPreconditioner();
    FourierPreconditioner(FourierPreconditioner&&) noexcept;
    FourierPreconditioner& operator=(FourierPreconditioner&&) noexcept;

    void apply(std::span<const double> in, std::span<double> out) const;

    /// Half-spectrum frequencies (theta_0, theta_1) in [0, 2 pi), in symbol order.
    static std::vector<std::array<int, 2>> half_spectrum(const TorusGrid& grid);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct SparseEntry {
    int row;
    int col;
    double value;
};

/**
 * Inverse of a sparse symmetric positive definite matrix restricted to the free
 * coordinates (frozen[i] == 0); frozen coordinates map to 0.
 */
class SparsePreconditioner {
public:
    SparsePreconditioner(int size, const std::vector<SparseEntry>& entries, const std::vector<char>& frozen);
    ~SparsePreconditioner();
    SparsePreconditioner(SparsePreconditioner&&) noexcept;
    SparsePreconditioner& operator=(SparsePreconditioner&&) noexcept;

    void apply(std::span<const double> in, std::span<double> out) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace nlhomog
