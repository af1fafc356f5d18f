#pragma once

// Dense row-major float64 tensors with define-by-run reverse-mode autodiff.
//
// A Tensor is a cheap handle onto a graph node. Ops always allocate a fresh
// output buffer (slices copy), so two handles alias only when one was copied
// from the other. Graphs are rebuilt on every forward pass and released when
// the last handle to the loss goes away.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ccm::nx {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
public:
    /// Empty 0-element tensor; only useful as a placeholder.
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// 2-D tensor from nested rows; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);

    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    /// False only for a default-constructed placeholder.
    bool defined() const;

    std::span<const double> data() const;
    /// Mutable access for leaves (parameters, inputs). Throws on op outputs.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    bool has_grad() const;
    /// Gradient buffer; zeros if nothing has been accumulated yet.
    std::vector<double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Same data, no history, requires_grad=false.
    Tensor detach() const;
    /// Deep copy of data as a new leaf.
    Tensor clone(bool requires_grad = false) const;

    /// Reverse-mode sweep from this scalar; gradients accumulate into every
    /// reachable tensor that requires grad.
    void backward() const;

    const std::string& op_name() const;

    // internal
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// --- linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[B,in] * w[in,out] + bias[1,out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// --- elementwise (same shape, or either side a 1-element scalar) ----------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient at exactly 0 is taken as 0 (subgradient).
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
/// Gradient passes where lo <= a <= hi.
Tensor clip(const Tensor& a, double lo, double hi);

// --- reductions -----------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Row sums of a 2-D tensor: [B,N] -> [B,1].
Tensor sum_rows(const Tensor& a);
Tensor mean_rows(const Tensor& a);

// --- structural -----------------------------------------------------------
/// Concatenate 2-D tensors along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Copy of [begin,end) along axis 0 or 1 of a 2-D tensor.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

} // namespace ccm::nx
