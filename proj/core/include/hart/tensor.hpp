#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace hart {

// Dense row-major tensor of 64-bit floats. Copies are shallow: they share the
// underlying value and gradient buffers, so a Tensor behaves like a cheap
// handle while parameter updates and gradient accumulation stay visible to
// every holder. Use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_ ? data_->size() : 0; }

    std::vector<double>& data() { return *data_; }
    const std::vector<double>& data() const { return *data_; }

    // Checked element access; index arity must match ndim().
    double& at(int i);
    double& at(int i, int j);
    double& at(int i, int j, int k);
    double& at(int i, int j, int k, int l);
    double at(int i) const { return const_cast<Tensor*>(this)->at(i); }
    double at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }
    double at(int i, int j, int k) const { return const_cast<Tensor*>(this)->at(i, j, k); }
    double at(int i, int j, int k, int l) const {
        return const_cast<Tensor*>(this)->at(i, j, k, l);
    }

    // Value of a single-element tensor.
    double value() const;

    bool requires_grad() const { return grad_ != nullptr; }
    // Allocates (or drops) the zero-initialised gradient buffer.
    void set_requires_grad(bool on);
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    // Deep copy of values; gradient buffer (if any) is reallocated to zero.
    Tensor clone() const;

    // Shares buffers with *this: true when both handles alias the same data.
    bool same_storage(const Tensor& other) const { return data_ == other.data_; }

    std::string shape_string() const;
    static std::string shape_string(const std::vector<int>& shape);

    // Index of the tape node that produced this tensor, -1 for leaves and
    // constants. Managed by the ops in ops.hpp.
    int node_id = -1;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;

    std::size_t offset(int i) const;
    std::size_t offset(int i, int j) const;
    std::size_t offset(int i, int j, int k) const;
    std::size_t offset(int i, int j, int k, int l) const;
};

}  // namespace hart
