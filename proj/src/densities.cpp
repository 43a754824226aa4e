#include "nlhomog/densities.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace nlhomog {

CoefficientField::CoefficientField(int dim, int cells_per_axis, std::vector<double> values)
    : dim_(dim), cells_(cells_per_axis), values_(std::move(values)) {
    if (dim_ != 1 && dim_ != 2) throw ConfigError("coefficient field: dimension must be 1 or 2");
    if (cells_ < 1) throw ConfigError("coefficient field: cells_per_axis must be >= 1");
    const std::size_t expected = dim_ == 1 ? static_cast<std::size_t>(cells_) : static_cast<std::size_t>(cells_ * cells_);
    if (values_.size() != expected)
        throw ConfigError("coefficient field: expected " + std::to_string(expected) + " cell values, got " +
                          std::to_string(values_.size()));
    lo_ = *std::min_element(values_.begin(), values_.end());
    hi_ = *std::max_element(values_.begin(), values_.end());
    if (!(lo_ > 0.0) || !std::isfinite(hi_)) throw ConfigError("coefficient field: values must be positive and finite");
}

CoefficientField CoefficientField::constant(int dim, double c) {
    return CoefficientField(dim, 1, std::vector<double>(1, c));
}

CoefficientField CoefficientField::two_phase(int dim, double high, double low) {
    if (dim == 1) return CoefficientField(1, 2, {high, low});
    return CoefficientField(2, 2, {high, high, low, low});
}

CoefficientField CoefficientField::load_csv(const std::string& path, int dim, int cells_per_axis) {
    std::ifstream in(path);
    if (!in) throw ConfigError("coefficient file: cannot open '" + path + "'");
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("coefficient file '" + path + "': not a number: '" + cell + "'");
            }
        }
    }
    return CoefficientField(dim, cells_per_axis, std::move(values));
}

namespace {

int cell_index(double x, int cells) {
    const auto i = static_cast<int>(std::floor(x * cells)) % cells;
    return i < 0 ? i + cells : i;
}

} // namespace

double CoefficientField::operator()(const Point& x) const {
    const int i = cell_index(x[0], cells_);
    if (dim_ == 1) return values_[static_cast<std::size_t>(i)];
    const int j = cell_index(x[1], cells_);
    return values_[static_cast<std::size_t>(i * cells_ + j)];
}

double CoefficientField::mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
}

const char* to_string(GrowthMode g) { return g == GrowthMode::strict ? "strict" : "affine"; }

DensitySpec::DensitySpec(std::variant<SeparablePower, GeneralConvex> form, int dim, int m)
    : form_(std::move(form)), dim_(dim), m_(m) {
    if (m_ < 1) throw ConfigError("density: target dimension m must be >= 1");
    if (!(p() > 1.0)) throw ConfigError("density.p must exceed 1");
}

DensitySpec DensitySpec::separable(CoefficientField a, CoefficientField b, double p, int target_dim) {
    if (a.dim() != b.dim()) throw ConfigError("density: a and b must share the space dimension");
    const int dim = a.dim();
    return DensitySpec(SeparablePower{std::move(a), std::move(b), p}, dim, target_dim);
}

DensitySpec DensitySpec::general(GeneralConvex g, int dim, int target_dim) {
    if (!g.value || !g.zgrad) throw ConfigError("density: general integrand needs value and gradient callbacks");
    if (!(g.alpha > 0.0) || g.beta < g.alpha) throw ConfigError("density: need 0 < alpha <= beta");
    return DensitySpec(std::move(g), dim, target_dim);
}

double DensitySpec::p() const {
    return std::visit([](const auto& f) { return f.p; }, form_);
}

double DensitySpec::alpha() const {
    if (const auto* s = separable_form()) return s->a.lower() * s->b.lower();
    return general_form()->alpha;
}

double DensitySpec::beta() const {
    if (const auto* s = separable_form()) return s->a.upper() * s->b.upper();
    return general_form()->beta;
}

GrowthMode DensitySpec::growth_mode() const {
    if (const auto* g = general_form()) return g->growth_mode;
    return GrowthMode::strict;
}

bool DensitySpec::y_continuous() const {
    if (const auto* s = separable_form()) return s->b.is_constant();
    return true;
}

std::string DensitySpec::describe() const {
    std::ostringstream os;
    os.precision(17);
    auto field = [&os](const char* tag, const CoefficientField& c) {
        os << tag << "[" << c.cells_per_axis() << ":";
        for (std::size_t i = 0; i < c.values().size(); ++i) os << (i ? "," : "") << c.values()[i];
        os << "]";
    };
    if (const auto* s = separable_form()) {
        os << "separable;d=" << dim_ << ";m=" << m_ << ";p=" << s->p << ";";
        field("a", s->a);
        field(";b", s->b);
    } else {
        const auto* g = general_form();
        os << "general:" << g->label << ";d=" << dim_ << ";m=" << m_ << ";p=" << g->p << ";alpha=" << g->alpha
           << ";beta=" << g->beta << ";growth=" << to_string(g->growth_mode);
    }
    return os.str();
}

namespace {

double euclid(std::span<const double> z) {
    if (z.size() == 1) return std::abs(z[0]);
    double s = 0.0;
    for (double v : z) s += v * v;
    return std::sqrt(s);
}

double power(double r, double p) { return p == 2.0 ? r * r : std::pow(r, p); }

} // namespace

double density_eval(const DensitySpec& spec, const Point& x, const Point& y, std::span<const double> z) {
    if (const auto* s = spec.separable_form()) return s->a(x) * s->b(y) * power(euclid(z), s->p);
    return spec.general_form()->value(x, y, z);
}

void density_grad_z(const DensitySpec& spec, const Point& x, const Point& y, std::span<const double> z,
                    std::span<double> grad) {
    if (const auto* s = spec.separable_form()) {
        const double r = euclid(z);
        if (r == 0.0) {
            std::fill(grad.begin(), grad.end(), 0.0);
            return;
        }
        const double scale = s->a(x) * s->b(y) * s->p * (s->p == 2.0 ? 1.0 : std::pow(r, s->p - 2.0));
        for (std::size_t c = 0; c < z.size(); ++c) grad[c] = scale * z[c];
        return;
    }
    spec.general_form()->zgrad(x, y, z, grad);
}

namespace {

struct Sampler {
    std::mt19937_64 rng;
    std::uniform_real_distribution<double> unit{0.0, 1.0};

    explicit Sampler(std::uint64_t seed) : rng(seed) {}
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(rng); }
    Point point(int dim, double lo, double hi) {
        Point p{uniform(lo, hi), 0.0};
        if (dim == 2) p[1] = uniform(lo, hi);
        return p;
    }
};

} // namespace

double check_H1(const Kernel& kernel, const DensitySpec& spec, int sample_count, std::uint64_t seed) {
    if (sample_count < 1) throw ConfigError("check_H1: sample_count must be >= 1");
    const int dim = kernel.dim();
    const int m = spec.target_dim();
    const double reach = kernel.support_radius().value_or(4.0);
    Sampler s(seed);
    std::vector<double> z(static_cast<std::size_t>(m)), zneg(z.size());
    double defect = 0.0;
    for (int k = 0; k < sample_count; ++k) {
        const Point xi = s.point(dim, -reach, reach);
        const Point x = s.point(dim, 0.0, 1.0);
        const Point y = s.point(dim, 0.0, 1.0);
        for (std::size_t c = 0; c < z.size(); ++c) {
            z[c] = s.uniform(-2.0, 2.0);
            zneg[c] = -z[c];
        }
        const double lhs = kernel(xi) * density_eval(spec, x, y, z);
        const double rhs = kernel({-xi[0], -xi[1]}) * density_eval(spec, x, y, zneg);
        defect = std::max(defect, std::abs(lhs - rhs));
    }
    return defect;
}

DensityReport validate_density(const DensitySpec& spec, const Kernel& kernel, int sample_count, std::uint64_t seed) {
    DensityReport r;
    r.y_continuous = spec.y_continuous();
    r.kernel_compatible =
        spec.growth_mode() == GrowthMode::strict || kernel.integrable_class() == Integrability::integrable;
    const int dim = spec.dim();
    const int m = spec.target_dim();
    const double p = spec.p(), alpha = spec.alpha(), beta = spec.beta();
    Sampler s(seed);
    std::vector<double> z1(static_cast<std::size_t>(m)), z2(z1.size()), zm(z1.size());
    for (int k = 0; k < sample_count; ++k) {
        const Point x = s.point(dim, 0.0, 1.0);
        const Point y = s.point(dim, 0.0, 1.0);
        for (std::size_t c = 0; c < z1.size(); ++c) {
            z1[c] = s.uniform(-3.0, 3.0);
            z2[c] = s.uniform(-3.0, 3.0);
            zm[c] = 0.5 * (z1[c] + z2[c]);
        }
        const double f1 = density_eval(spec, x, y, z1);
        const double f2 = density_eval(spec, x, y, z2);
        const double fm = density_eval(spec, x, y, zm);
        const double zp = power(euclid(z1), p);
        const double upper = spec.growth_mode() == GrowthMode::strict ? beta * zp : beta * (1.0 + zp);
        const double scale = std::max(1.0, upper);
        r.growth_violation = std::max(r.growth_violation, (f1 - upper) / scale);
        r.growth_violation = std::max(r.growth_violation, (alpha * zp - f1) / scale);
        r.convexity_violation =
            std::max(r.convexity_violation, (fm - 0.5 * (f1 + f2)) / std::max(1.0, 0.5 * (f1 + f2)));
    }
    return r;
}

} // namespace nlhomog
