#include "safl/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace safl {

namespace {

void require_same_size(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size())
        throw Error("vector length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

}  // namespace

bool ParamVector::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

ParamVector& ParamVector::operator+=(const ParamVector& o) {
    require_same_size(*this, o);
    for (std::size_t j = 0; j < values_.size(); ++j) values_[j] += o.values_[j];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
    require_same_size(*this, o);
    for (std::size_t j = 0; j < values_.size(); ++j) values_[j] -= o.values_[j];
    return *this;
}

ParamVector& ParamVector::operator*=(double s) noexcept {
    for (auto& x : values_) x *= s;
    return *this;
}

void ParamVector::axpy(double s, const ParamVector& o) {
    require_same_size(*this, o);
    for (std::size_t j = 0; j < values_.size(); ++j) values_[j] += s * o.values_[j];
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator-(ParamVector a) { return a *= -1.0; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }
ParamVector operator*(ParamVector a, double s) { return a *= s; }

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_size(a, b);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
    return acc;
}

void require_finite(const ParamVector& v, const char* what) {
    if (!v.all_finite()) throw Error(what);
}

double l2_norm(const ParamVector& v) {
    require_finite(v);
    // Scale by the largest magnitude so huge attack vectors do not overflow.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double acc = 0.0;
    for (double x : v) {
        const double y = x / scale;
        acc += y * y;
    }
    return scale * std::sqrt(acc);
}

ParamVector coordinate_median(std::span<const ParamVector> vs) {
    if (vs.empty()) throw Error("coordinate_median: empty input");
    const std::size_t d = vs.front().size();
    for (const auto& v : vs)
        if (v.size() != d) throw Error("coordinate_median: mismatched lengths");

    const std::size_t n = vs.size();
    ParamVector out(d);
    std::vector<double> column(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) column[i] = vs[i][j];
        const auto mid = column.begin() + static_cast<std::ptrdiff_t>(n / 2);
        std::nth_element(column.begin(), mid, column.end());
        if (n % 2 == 1) {
            out[j] = *mid;
        } else {
            const double upper = *mid;
            const double lower = *std::max_element(column.begin(), mid);
            out[j] = lower + 0.5 * (upper - lower);
        }
    }
    return out;
}

ParamVector coordinate_mean(std::span<const ParamVector> vs) {
    if (vs.empty()) throw Error("coordinate_mean: empty input");
    ParamVector out(vs.front().size());
    for (const auto& v : vs) out += v;
    out *= 1.0 / static_cast<double>(vs.size());
    return out;
}

double percentile(std::span<const double> values, double alpha) {
    if (values.empty()) throw Error("percentile: empty input");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("percentile: alpha must lie in (0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(sorted.size())));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    const auto it = sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(sorted.begin(), it, sorted.end());
    return *it;
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw Error("DenseMatrix: rows and cols must be positive");
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : DenseMatrix(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size()) {
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != cols_) throw Error("DenseMatrix: ragged initializer");
        std::size_t c = 0;
        for (double x : row) (*this)(r, c++) = x;
        ++r;
    }
}

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const {
    if (x.size() != cols_) throw Error("DenseMatrix::multiply: length mismatch");
    std::vector<double> y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) y[r] += (*this)(r, c) * x[c];
    return y;
}

std::vector<double> solve_dense(const DenseMatrix& m, std::span<const double> rhs, double ridge) {
    const std::size_t k = m.rows();
    if (m.cols() != k) throw Error("solve_dense: matrix is not square");
    if (rhs.size() != k) throw Error("solve_dense: rhs length mismatch");
    if (ridge < 0.0) throw Error("solve_dense: negative ridge");

    DenseMatrix a = m;
    for (std::size_t i = 0; i < k; ++i) a(i, i) += ridge;
    std::vector<double> x(rhs.begin(), rhs.end());

    // Doolittle elimination with row pivoting, applied to x in place.
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < k; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (!(std::abs(a(pivot, col)) >= 1e-12)) throw Error("singular system");
        if (pivot != col) {
            for (std::size_t c = 0; c < k; ++c) std::swap(a(col, c), a(pivot, c));
            std::swap(x[col], x[pivot]);
        }
        for (std::size_t r = col + 1; r < k; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < k; ++c) a(r, c) -= f * a(col, c);
            x[r] -= f * x[col];
        }
    }
    for (std::size_t i = k; i-- > 0;) {
        double acc = x[i];
        for (std::size_t c = i + 1; c < k; ++c) acc -= a(i, c) * x[c];
        x[i] = acc / a(i, i);
    }
    return x;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RngStream RngStream::split(std::uint64_t key) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(key + 0x632be59bd9b4e019ULL)));
}

double RngStream::uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

std::size_t RngStream::uniform_index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
}

double RngStream::normal(double mean, double std) {
    if (std == 0.0) return mean;
    return std::normal_distribution<double>(mean, std)(engine_);
}

ParamVector gaussian_sample(RngStream& rng, double mean, double std, std::size_t d) {
    if (!(std >= 0.0)) throw Error("gaussian_sample: negative standard deviation");
    ParamVector out(d, mean);
    if (std == 0.0) return out;
    std::normal_distribution<double> dist(mean, std);
    for (auto& x : out) x = dist(rng.engine());
    return out;
}

}  // namespace safl
