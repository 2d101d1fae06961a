#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cvloc {

/// Dense n-dimensional array of float32 in row-major order, with an
/// optional gradient buffer of the same length. Copies are shallow:
/// two Tensor handles may share one storage (this is what lets the
/// backward pass accumulate into the tensors the caller holds).
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from(std::vector<int> shape, std::vector<float> values);
    static Tensor scalar(float value);

    bool defined() const { return st_ != nullptr; }
    const std::vector<int>& shape() const;
    int rank() const;
    int dim(int i) const;
    int64_t size() const;

    std::span<float> data();
    std::span<const float> data() const;
    float item() const;  // scalar tensors only

    bool requires_grad() const;
    void set_requires_grad(bool v);
    bool has_grad() const;
    std::span<float> grad();  // allocates a zero buffer on first use
    std::span<const float> grad() const;
    void zero_grad();

    /// Deep copy into a fresh storage (no shared state, no grad).
    Tensor clone() const;
    /// Deep copy with a new shape of equal element count.
    Tensor reshape(std::vector<int> new_shape) const;

    /// True if the two handles point at the same storage.
    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

    std::string shape_str() const;
    static std::string shape_str(const std::vector<int>& shape);

  private:
    struct Storage {
        std::vector<int> shape;
        std::vector<float> data;
        std::vector<float> grad;  // empty until requested
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> st_;
};

}  // namespace cvloc
