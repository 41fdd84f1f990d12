#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

namespace itgpt {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are the only
// ranks the engine produces.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v);
    static Tensor matrix(int rows, int cols, std::vector<double> data);

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) {
        assert(rank() == 2);
        return data_[static_cast<size_t>(i) * shape_[1] + j];
    }
    double at(int i, int j) const {
        assert(rank() == 2);
        return data_[static_cast<size_t>(i) * shape_[1] + j];
    }

    double as_scalar() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

    Tensor& operator+=(const Tensor& other);
    void fill(double v);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

size_t shape_numel(const std::vector<int>& shape);

}  // namespace itgpt
