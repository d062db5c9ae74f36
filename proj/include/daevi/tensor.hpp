#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "daevi/error.hpp"
#include "daevi/rng.hpp"

namespace daevi {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) {
        if (e < 0) {
            throw ShapeError("negative extent in shape");
        }
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << s[i] << (i + 1 < s.size() ? "x" : "");
    }
    os << ']';
    return os.str();
}

template <typename T>
class Tape;

// Dense row-major array with value semantics over shared storage. A tensor
// becomes "tracked" when an op records it on a Tape; tracking handles are
// only valid while that tape generation is alive (see Tape::reset).
template <typename T>
class Tensor {
public:
    Tensor() : data_(std::make_shared<std::vector<T>>()) {}

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(static_cast<std::size_t>(shape_numel(shape_)), T(0))) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_)) {
            throw ShapeError("value count does not match shape " + shape_str(shape_));
        }
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        for (T& v : *t.data_) {
            v = value;
        }
        return t;
    }

    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_->size()); }
    bool empty() const { return data_->empty(); }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }
    std::vector<T>& vec() { return *data_; }
    const std::vector<T>& vec() const { return *data_; }
    const std::shared_ptr<std::vector<T>>& storage() const { return data_; }

    T& at(std::int64_t i) { return (*data_)[static_cast<std::size_t>(i)]; }
    const T& at(std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

    T item() const {
        if (size() != 1) {
            throw ContractError("item() requires a single-element tensor, got " + shape_str(shape_));
        }
        return (*data_)[0];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool v) { requires_grad_ = v; }

    Tape<T>* tape() const;
    int node() const { return node_; }
    bool tracked() const { return tape() != nullptr; }

    void bind_node(Tape<T>* tape, int node, std::uint64_t generation) {
        tape_ = tape;
        node_ = node;
        generation_ = generation;
    }

    // Same storage and shape, no tape association.
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    // Deep copy of the values, untracked.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    // Same storage reinterpreted under a new shape, untracked. Used by I/O
    // and data plumbing; the differentiable reshape lives in ops.hpp.
    Tensor viewed_as(Shape shape) const {
        if (shape_numel(shape) != size()) {
            throw ShapeError("view " + shape_str(shape) + " incompatible with " + shape_str(shape_));
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill_uniform(SplitMix64& rng, T lo, T hi) {
        for (T& v : *data_) {
            v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        }
    }

    void fill_normal(SplitMix64& rng, T mean, T stddev) {
        for (T& v : *data_) {
            v = static_cast<T>(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
        }
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        const T* src = data();
        U* dst = out.data();
        for (std::int64_t i = 0; i < size(); ++i) {
            dst[i] = static_cast<U>(src[i]);
        }
        return out;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    bool requires_grad_ = false;
    Tape<T>* tape_ = nullptr;
    int node_ = -1;
    std::uint64_t generation_ = 0;

    template <typename U>
    friend class Tape;
};

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

} // namespace daevi
