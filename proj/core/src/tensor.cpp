#include "hart/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace hart {

namespace {

std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 1) {
            throw std::invalid_argument("tensor shape dimensions must be >= 1, got " +
                                        Tensor::shape_string(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t;
    const std::size_t n = checked_numel(shape);
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(n, value);
    if (requires_grad) t.grad_ = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    const std::size_t n = checked_numel(shape);
    if (n != data.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_string(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(data));
    if (requires_grad) t.grad_ = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

std::size_t Tensor::offset(int i) const {
    if (ndim() != 1 || i < 0 || i >= shape_[0]) {
        throw std::out_of_range("bad 1-d index into tensor " + shape_string());
    }
    return static_cast<std::size_t>(i);
}

std::size_t Tensor::offset(int i, int j) const {
    if (ndim() != 2 || i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1]) {
        throw std::out_of_range("bad 2-d index into tensor " + shape_string());
    }
    return static_cast<std::size_t>(i) * shape_[1] + j;
}

std::size_t Tensor::offset(int i, int j, int k) const {
    if (ndim() != 3 || i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1] || k < 0 ||
        k >= shape_[2]) {
        throw std::out_of_range("bad 3-d index into tensor " + shape_string());
    }
    return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
}

std::size_t Tensor::offset(int i, int j, int k, int l) const {
    if (ndim() != 4 || i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1] || k < 0 ||
        k >= shape_[2] || l < 0 || l >= shape_[3]) {
        throw std::out_of_range("bad 4-d index into tensor " + shape_string());
    }
    return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
}

double& Tensor::at(int i) { return (*data_)[offset(i)]; }
double& Tensor::at(int i, int j) { return (*data_)[offset(i, j)]; }
double& Tensor::at(int i, int j, int k) { return (*data_)[offset(i, j, k)]; }
double& Tensor::at(int i, int j, int k, int l) { return (*data_)[offset(i, j, k, l)]; }

double Tensor::value() const {
    if (size() != 1) {
        throw std::invalid_argument("value() requires a single-element tensor, got shape " +
                                    shape_string());
    }
    return (*data_)[0];
}

void Tensor::set_requires_grad(bool on) {
    if (on && !grad_) {
        grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
    } else if (!on) {
        grad_.reset();
    }
}

std::vector<double>& Tensor::grad() {
    if (!grad_) throw std::logic_error("tensor has no gradient buffer");
    return *grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) throw std::logic_error("tensor has no gradient buffer");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::clone() const {
    if (!defined()) return Tensor{};
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    if (grad_) t.grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
    return t;
}

std::string Tensor::shape_string(const std::vector<int>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::string Tensor::shape_string() const { return shape_string(shape_); }

}  // namespace hart
