#include "kao/grid.hpp"

#include <cmath>
#include <string>

namespace kao {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

Grid::Grid(std::vector<int64_t> shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Grid::Grid(std::vector<int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw DomainError("Grid: shape does not match data length");
}

float& Grid::at(int64_t c, int64_t y, int64_t x) {
    const int64_t h = shape_[shape_.size() - 2], w = shape_.back();
    return data_[static_cast<size_t>((c * h + y) * w + x)];
}

float Grid::at(int64_t c, int64_t y, int64_t x) const {
    const int64_t h = shape_[shape_.size() - 2], w = shape_.back();
    return data_[static_cast<size_t>((c * h + y) * w + x)];
}

bool Grid::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Grid::require_finite(const char* who) const {
    if (!all_finite()) throw NumericError(std::string(who) + ": non-finite value in grid");
}

Grid Grid::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel()) throw DomainError("reshape: element count mismatch");
    return Grid(std::move(shape), data_);
}

double Grid::sum() const {
    double acc = 0.0;
    for (float v : data_) acc += v;
    return acc;
}

double Grid::mean() const { return numel() == 0 ? 0.0 : sum() / static_cast<double>(numel()); }

double Grid::sq_dist(const Grid& other) const {
    if (!same_shape(other)) throw DomainError("sq_dist: shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < numel(); ++i) {
        const double d = static_cast<double>(data_[static_cast<size_t>(i)]) - other[i];
        acc += d * d;
    }
    return acc;
}

float Grid::min_value() const {
    float m = data_.empty() ? 0.0f : data_[0];
    for (float v : data_) m = std::min(m, v);
    return m;
}

float Grid::max_value() const {
    float m = data_.empty() ? 0.0f : data_[0];
    for (float v : data_) m = std::max(m, v);
    return m;
}

static void require_same(const Grid& a, const Grid& b, const char* who) {
    if (!a.same_shape(b)) throw DomainError(std::string(who) + ": shape mismatch");
}

Grid operator+(const Grid& a, const Grid& b) {
    require_same(a, b, "add");
    Grid out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Grid operator-(const Grid& a, const Grid& b) {
    require_same(a, b, "sub");
    Grid out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

Grid operator*(const Grid& a, const Grid& b) {
    require_same(a, b, "mul");
    Grid out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return out;
}

Grid operator*(const Grid& a, float s) {
    Grid out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return out;
}

Grid operator+(const Grid& a, float s) {
    Grid out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
    return out;
}

}  // namespace kao
