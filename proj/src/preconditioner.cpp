#include "nlhomog/preconditioner.hpp"

#include <fftw3.h>

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <mutex>

namespace nlhomog {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

struct FourierPreconditioner::Impl {
    TorusGrid grid;
    int m;
    std::vector<double> inv_symbol;
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    Impl(const TorusGrid& g, int comps, std::vector<double> symbol) : grid(g), m(comps) {
        const int n = grid.n();
        const std::size_t half = grid.dim() == 1 ? static_cast<std::size_t>(n / 2 + 1)
                                                 : static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
        if (symbol.size() != half) throw ConfigError("preconditioner: symbol has the wrong size");
        inv_symbol.resize(half);
        const double scale = 1.0 / static_cast<double>(grid.size()); // FFTW transforms are unnormalized
        double top = 0.0;
        for (double v : symbol) {
            if (!std::isfinite(v) || v < 0.0) throw NumericalError("preconditioner: symbol must be finite and >= 0");
            top = std::max(top, v);
        }
        // modes the operator cannot see carry no gradient either; a floor keeps the map invertible
        const double floor = 1e-14 * top;
        for (std::size_t j = 1; j < half; ++j) inv_symbol[j] = top > 0.0 ? scale / std::max(symbol[j], floor) : 0.0;
        real = fftw_alloc_real(grid.size());
        spec = fftw_alloc_complex(half);
        std::lock_guard lock(planner_mutex());
        if (grid.dim() == 1) {
            forward = fftw_plan_dft_r2c_1d(n, real, spec, FFTW_ESTIMATE);
            backward = fftw_plan_dft_c2r_1d(n, spec, real, FFTW_ESTIMATE);
        } else {
            forward = fftw_plan_dft_r2c_2d(n, n, real, spec, FFTW_ESTIMATE);
            backward = fftw_plan_dft_c2r_2d(n, n, spec, real, FFTW_ESTIMATE);
        }
    }

    ~Impl() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
        fftw_free(real);
        fftw_free(spec);
    }

    void apply(std::span<const double> in, std::span<double> out) {
        const std::size_t N = grid.size(), mm = static_cast<std::size_t>(m);
        for (std::size_t c = 0; c < mm; ++c) {
            for (std::size_t i = 0; i < N; ++i) real[i] = in[i * mm + c];
            fftw_execute(forward);
            for (std::size_t j = 0; j < inv_symbol.size(); ++j) {
                spec[j][0] *= inv_symbol[j];
                spec[j][1] *= inv_symbol[j];
            }
            fftw_execute(backward);
            for (std::size_t i = 0; i < N; ++i) out[i * mm + c] = real[i];
        }
    }
};

FourierPreconditioner::FourierPreconditioner(const TorusGrid& grid, int m, std::vector<double> symbol)
    : impl_(std::make_unique<Impl>(grid, m, std::move(symbol))) {}
FourierPreconditioner::~FourierPreconditioner() = default;
FourierPreconditioner::FourierPreconditioner(FourierPreconditioner&&) noexcept = default;
FourierPreconditioner& FourierPreconditioner::operator=(FourierPreconditioner&&) noexcept = default;

void FourierPreconditioner::apply(std::span<const double> in, std::span<double> out) const { impl_->apply(in, out); }

std::vector<std::array<int, 2>> FourierPreconditioner::half_spectrum(const TorusGrid& grid) {
    const int n = grid.n();
    std::vector<std::array<int, 2>> modes;
    if (grid.dim() == 1) {
        for (int j = 0; j <= n / 2; ++j) modes.push_back({j, 0});
    } else {
        for (int j0 = 0; j0 < n; ++j0)
            for (int j1 = 0; j1 <= n / 2; ++j1) modes.push_back({j0, j1});
    }
    return modes;
}

struct SparsePreconditioner::Impl {
    std::vector<int> free_index; // full -> reduced, -1 if frozen
    int reduced = 0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    mutable Eigen::VectorXd rhs;
};

SparsePreconditioner::SparsePreconditioner(int size, const std::vector<SparseEntry>& entries,
                                           const std::vector<char>& frozen)
    : impl_(std::make_unique<Impl>()) {
    if (frozen.size() != static_cast<std::size_t>(size)) throw ConfigError("preconditioner: mask has the wrong size");
    impl_->free_index.assign(static_cast<std::size_t>(size), -1);
    for (int i = 0; i < size; ++i)
        if (!frozen[static_cast<std::size_t>(i)]) impl_->free_index[static_cast<std::size_t>(i)] = impl_->reduced++;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(entries.size());
    for (const auto& e : entries) {
        const int r = impl_->free_index[static_cast<std::size_t>(e.row)];
        const int c = impl_->free_index[static_cast<std::size_t>(e.col)];
        if (r >= 0 && c >= 0) trip.emplace_back(r, c, e.value);
    }
    Eigen::SparseMatrix<double> A(impl_->reduced, impl_->reduced);
    A.setFromTriplets(trip.begin(), trip.end());
    impl_->solver.compute(A);
    if (impl_->solver.info() != Eigen::Success) throw NumericalError("preconditioner: factorization failed");
    impl_->rhs.resize(impl_->reduced);
}

SparsePreconditioner::~SparsePreconditioner() = default;
SparsePreconditioner::SparsePreconditioner(SparsePreconditioner&&) noexcept = default;
SparsePreconditioner& SparsePreconditioner::operator=(SparsePreconditioner&&) noexcept = default;

void SparsePreconditioner::apply(std::span<const double> in, std::span<double> out) const {
    const auto& idx = impl_->free_index;
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] >= 0) impl_->rhs[idx[i]] = in[i];
    const Eigen::VectorXd x = impl_->solver.solve(impl_->rhs);
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = idx[i] >= 0 ? x[idx[i]] : 0.0;
}

} // namespace nlhomog
