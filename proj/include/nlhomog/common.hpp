#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlhomog {

inline constexpr const char* kVersion = "0.3.0";

/// Points in R^d for d <= 2; unused trailing coordinates are zero.
using Point = std::array<double, 2>;

/// Thrown for invalid arguments or violated preconditions (exit code 1 at the CLI).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces a non-finite value (exit code 2 at the CLI).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major m x d matrix; used for the macroscopic gradient M.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r * c), fill) {}
    Matrix(int r, int c, std::vector<double> values);

    static Matrix scalar(double s) { return Matrix(1, 1, s); }

    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r * cols + c)]; }
    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r * cols + c)]; }

    Matrix scaled(double t) const;
    double frobenius_norm() const;
    bool is_zero() const;
};

/// out = M * xi (length rows).
void apply(const Matrix& M, const Point& xi, double* out);

double norm(const Point& x, int dim);

/// Fractional part in [0, 1).
double wrap_unit(double x);

} // namespace nlhomog
