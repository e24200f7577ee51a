#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynamo/common.hpp"

namespace dynamo {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

// Dense row-major float tensor. Layout for images is CHW, for batches NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), 0.0f);
    }
    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor full(std::vector<int> shape, float v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // CHW access
    float& at(int c, int h, int w) { return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)]; }
    float at(int c, int h, int w) const { return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)]; }
    // NCHW access
    float& at(int n, int c, int h, int w) {
        return data_[static_cast<size_t>(((int64_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    float at(int n, int c, int h, int w) const {
        return data_[static_cast<size_t>(((int64_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0f); }

    Tensor reshaped(std::vector<int> new_shape) const {
        if (numel_of(new_shape) != numel())
            throw ShapeError("reshape: element count mismatch " + shape_str() + " -> " + shape_str(new_shape));
        Tensor t = *this;
        t.shape_ = std::move(new_shape);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const { return shape_str(shape_); }
    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

    // 2-D Eigen views (rows x cols must cover the whole buffer)
    MapRM mat(int rows, int cols) {
        if (int64_t(rows) * cols != numel()) throw ShapeError("mat view size mismatch on " + shape_str());
        return MapRM(data_.data(), rows, cols);
    }
    ConstMapRM mat(int rows, int cols) const {
        if (int64_t(rows) * cols != numel()) throw ShapeError("mat view size mismatch on " + shape_str());
        return ConstMapRM(data_.data(), rows, cols);
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = shape.empty() ? 0 : 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

inline void check_shape(const Tensor& t, const std::vector<int>& expect, const char* what) {
    if (t.shape() != expect)
        throw ShapeError(std::string(what) + ": expected " + Tensor::shape_str(expect) + ", got " + t.shape_str());
}

// Mean absolute difference; shapes must match.
inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mean_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += std::abs(double(a[i]) - double(b[i]));
    return a.numel() ? s / double(a.numel()) : 0.0;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

// FNV-1a over the raw float bytes; used for parameter-isolation checks.
inline uint64_t content_hash(const Tensor& t) {
    uint64_t h = 1469598103934665603ull;
    const auto* p = reinterpret_cast<const unsigned char*>(t.data());
    for (int64_t i = 0; i < t.numel() * 4; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace dynamo
