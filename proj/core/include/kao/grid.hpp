#pragma once

#include <cstdint>
#include <vector>

#include "kao/errors.hpp"

namespace kao {

/// Dense row-major array of 32-bit reals with an explicit shape.
/// Carries images, latents, masks and gradients throughout the repo.
class Grid {
public:
    Grid() = default;
    explicit Grid(std::vector<int64_t> shape, float fill = 0.0f);
    Grid(std::vector<int64_t> shape, std::vector<float> data);

    static Grid scalar(float v) { return Grid({1}, {v}); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // [C,H,W] indexing for image-like grids
    float& at(int64_t c, int64_t y, int64_t x);
    float at(int64_t c, int64_t y, int64_t x) const;

    bool same_shape(const Grid& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void require_finite(const char* who) const;

    Grid reshaped(std::vector<int64_t> shape) const;

    // 64-bit accumulators for all scalar reductions
    double sum() const;
    double mean() const;
    double sq_dist(const Grid& other) const;  // full squared Euclidean distance
    float min_value() const;
    float max_value() const;

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

Grid operator+(const Grid& a, const Grid& b);
Grid operator-(const Grid& a, const Grid& b);
Grid operator*(const Grid& a, const Grid& b);
Grid operator*(const Grid& a, float s);
Grid operator+(const Grid& a, float s);

}  // namespace kao
