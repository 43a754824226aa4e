#include "nlhomog/common.hpp"

#include <cmath>

namespace nlhomog {

Matrix::Matrix(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (r < 1 || c < 1 || data.size() != static_cast<std::size_t>(r * c))
        throw ConfigError("matrix: expected " + std::to_string(r) + "x" + std::to_string(c) + " entries, got " +
                          std::to_string(data.size()));
}

Matrix Matrix::scaled(double t) const {
    Matrix out = *this;
    for (auto& v : out.data) v *= t;
    return out;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
}

bool Matrix::is_zero() const {
    for (double v : data)
        if (v != 0.0) return false;
    return true;
}

void apply(const Matrix& M, const Point& xi, double* out) {
    for (int r = 0; r < M.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < M.cols; ++c) s += M(r, c) * xi[static_cast<std::size_t>(c)];
        out[r] = s;
    }
}

double norm(const Point& x, int dim) {
    return dim == 1 ? std::abs(x[0]) : std::hypot(x[0], x[1]);
}

double wrap_unit(double x) {
    double f = x - std::floor(x);
    // x slightly below an integer can round up to exactly 1
    return f >= 1.0 ? 0.0 : f;
}

} // namespace nlhomog
