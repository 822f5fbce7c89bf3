#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwau {

// Error taxonomy. The CLI maps these onto process exit codes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline Shape shape_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = int(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

template <class S>
struct StorageT {
    Shape shape;
    Shape strides;  // element strides, row-major contiguous
    std::vector<S> data;
    std::vector<S> grad;  // empty until requested; same length as data otherwise
    bool requires_grad = false;
    std::string label;  // producer op or parameter name, for diagnostics

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }
};

// Dense contiguous tensor with value semantics over a shared payload.
// Data is immutable once produced by an op; gradients accumulate in `grad`.
template <class S>
class TensorT {
  public:
    TensorT() = default;

    static TensorT zeros(Shape shape) { return filled(std::move(shape), S(0)); }

    static TensorT filled(Shape shape, S value) {
        TensorT t;
        t.st_ = std::make_shared<StorageT<S>>();
        t.st_->shape = std::move(shape);
        t.st_->strides = shape_strides(t.st_->shape);
        for (int64_t e : t.st_->shape)
            if (e <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(t.st_->shape));
        t.st_->data.assign(size_t(shape_numel(t.st_->shape)), value);
        return t;
    }

    static TensorT from_data(Shape shape, std::vector<S> data) {
        TensorT t = zeros(std::move(shape));
        if (int64_t(data.size()) != t.numel())
            throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(t.shape()));
        t.st_->data = std::move(data);
        return t;
    }

    static TensorT scalar(S v) { return from_data({1}, {v}); }

    bool defined() const { return st_ != nullptr; }
    const Shape& shape() const { return st_->shape; }
    const Shape& strides() const { return st_->strides; }
    int64_t numel() const { return int64_t(st_->data.size()); }
    int64_t dim(size_t i) const { return st_->shape[i]; }
    size_t ndim() const { return st_->shape.size(); }

    S* data() { return st_->data.data(); }
    const S* data() const { return st_->data.data(); }
    S& at(int64_t i) { return st_->data[size_t(i)]; }
    S at(int64_t i) const { return st_->data[size_t(i)]; }

    bool requires_grad() const { return st_->requires_grad; }
    TensorT& set_requires_grad(bool v = true) {
        st_->requires_grad = v;
        if (v) st_->ensure_grad();
        return *this;
    }

    const std::string& label() const { return st_->label; }
    TensorT& set_label(std::string l) {
        st_->label = std::move(l);
        return *this;
    }

    // Gradient buffer; allocated on demand, zero until backward touches it.
    S* grad() {
        st_->ensure_grad();
        return st_->grad.data();
    }
    const std::vector<S>& grad_vec() const {
        const_cast<StorageT<S>*>(st_.get())->ensure_grad();
        return st_->grad;
    }
    void zero_grad() {
        st_->ensure_grad();
        std::fill(st_->grad.begin(), st_->grad.end(), S(0));
    }

    std::shared_ptr<StorageT<S>> storage() const { return st_; }

    TensorT clone() const {
        TensorT t;
        t.st_ = std::make_shared<StorageT<S>>();
        t.st_->shape = st_->shape;
        t.st_->strides = st_->strides;
        t.st_->data = st_->data;
        t.st_->label = st_->label;
        return t;
    }

    template <class T>
    TensorT<T> cast() const {
        TensorT<T> t = TensorT<T>::zeros(st_->shape);
        for (int64_t i = 0; i < numel(); ++i) t.at(i) = T(st_->data[size_t(i)]);
        return t;
    }

  private:
    std::shared_ptr<StorageT<S>> st_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Dynamically recorded tape. Ops push a backward rule as they run; recording
// order is a topological order of the dataflow, so one reverse sweep visits
// each node exactly once. A tape is confined to one logical thread.
template <class S>
class TapeT {
  public:
    void record(std::function<void()> rule) { nodes_.push_back(std::move(rule)); }

    size_t size() const { return nodes_.size(); }

    // Seeds root with d(root)/d(root)=1 and runs all rules in reverse order.
    // The tape is consumed.
    void backward(TensorT<S> root) {
        if (root.numel() != 1)
            throw ShapeError("backward root must be scalar, got shape " + shape_str(root.shape()));
        root.grad()[0] += S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        nodes_.clear();
    }

    void clear() { nodes_.clear(); }

    static TapeT*& current() {
        thread_local TapeT* cur = nullptr;
        return cur;
    }

  private:
    std::vector<std::function<void()>> nodes_;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

// RAII activation of a tape for the current thread.
template <class S>
class TapeScopeT {
  public:
    explicit TapeScopeT(TapeT<S>& tape) : prev_(TapeT<S>::current()) { TapeT<S>::current() = &tape; }
    ~TapeScopeT() { TapeT<S>::current() = prev_; }
    TapeScopeT(const TapeScopeT&) = delete;
    TapeScopeT& operator=(const TapeScopeT&) = delete;

  private:
    TapeT<S>* prev_;
};

using TapeScope = TapeScopeT<float>;
using TapeScope64 = TapeScopeT<double>;

namespace detail {

// Every op output passes through here: NaN/Inf is an error state, never silent.
template <class S>
inline void check_finite(const TensorT<S>& t, const char* op) {
    const S* p = t.data();
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(double(p[i])))
            throw NumericalError(std::string("non-finite value in output of ") + op + " at flat index " +
                                 std::to_string(i));
    }
}

template <class S>
inline TensorT<S> make_output(Shape shape, const char* op, bool requires_grad) {
    TensorT<S> t = TensorT<S>::zeros(std::move(shape));
    t.set_label(op);
    if (requires_grad && TapeT<S>::current()) t.storage()->requires_grad = true;
    return t;
}

template <class S>
inline bool taped(std::initializer_list<const TensorT<S>*> inputs) {
    if (!TapeT<S>::current()) return false;
    for (const TensorT<S>* t : inputs)
        if (t && t->defined() && t->requires_grad()) return true;
    return false;
}

}  // namespace detail

// Scalar-valued convenience used by training and tests.
template <class S>
inline S scalar_value(const TensorT<S>& t) {
    if (t.numel() != 1) throw ShapeError("scalar_value on non-scalar tensor " + shape_str(t.shape()));
    return t.at(0);
}

template <class S>
inline void backward(TensorT<S> root) {
    TapeT<S>* tape = TapeT<S>::current();
    if (!tape) throw ConfigError("backward called with no active tape");
    tape->backward(std::move(root));
}

}  // namespace hwau
