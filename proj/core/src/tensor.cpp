#include "cvloc/tensor.hpp"

#include <numeric>
#include <sstream>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {
int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + Tensor::shape_str(shape));
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, bool requires_grad) {
    st_ = std::make_shared<Storage>();
    int64_t n = shape_numel(shape);
    st_->shape = std::move(shape);
    st_->data.assign(static_cast<size_t>(n), 0.0f);
    st_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    for (auto& v : t.st_->data) v = value;
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
    Tensor t;
    t.st_ = std::make_shared<Storage>();
    t.st_->shape = std::move(shape);
    t.st_->data = std::move(values);
    return t;
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

const std::vector<int>& Tensor::shape() const { return st_->shape; }
int Tensor::rank() const { return static_cast<int>(st_->shape.size()); }

int Tensor::dim(int i) const {
    if (i < 0 || i >= rank()) throw ShapeError("dim index out of range");
    return st_->shape[static_cast<size_t>(i)];
}

int64_t Tensor::size() const { return static_cast<int64_t>(st_->data.size()); }

std::span<float> Tensor::data() { return st_->data; }
std::span<const float> Tensor::data() const { return st_->data; }

float Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str());
    return st_->data[0];
}

bool Tensor::requires_grad() const { return st_ && st_->requires_grad; }
void Tensor::set_requires_grad(bool v) { st_->requires_grad = v; }
bool Tensor::has_grad() const { return st_ && !st_->grad.empty(); }

std::span<float> Tensor::grad() {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0f);
    return st_->grad;
}

std::span<const float> Tensor::grad() const {
    if (st_->grad.empty())
        throw Error("grad() requested on tensor without a gradient buffer");
    return st_->grad;
}

void Tensor::zero_grad() {
    if (!st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0f);
}

Tensor Tensor::clone() const {
    Tensor t;
    t.st_ = std::make_shared<Storage>();
    t.st_->shape = st_->shape;
    t.st_->data = st_->data;
    return t;
}

Tensor Tensor::reshape(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != size())
        throw ShapeError("reshape " + shape_str() + " -> " + shape_str(new_shape) +
                         " changes element count");
    Tensor t = clone();
    t.st_->shape = std::move(new_shape);
    return t;
}

std::string Tensor::shape_str() const { return shape_str(st_->shape); }

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace cvloc
