#include "ccm/numerics/tensor.hpp"

#include "ccm/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ccm::nx {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    bool placeholder = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    double* grad_buffer()
    {
        if (grad.empty()) {
            grad.assign(data.size(), 0.0);
        }
        return grad.data();
    }
};

} // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

thread_local bool g_grad_enabled = true;

void check_finite(const std::string& op, const std::vector<double>& values)
{
    // x * 0 is NaN exactly when x is NaN or infinite; this form vectorizes.
    const std::size_t n = values.size();
    const double* __restrict v = values.data();
    double probe = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        probe += v[i] * 0.0;
    }
    if (probe == 0.0) {
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(v[i])) {
            std::ostringstream msg;
            msg << "non-finite value produced by op '" << op << "' at index " << i;
            throw NumericError(msg.str());
        }
    }
}

Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward)
{
    check_finite(op, data);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = std::move(op);
    node->is_leaf = false;
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            needs_grad = needs_grad || p->requires_grad;
        }
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b)
{
    throw DimensionError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

void require_rank2(const std::string& op, const Tensor& t)
{
    if (t.rank() != 2) {
        throw DimensionError(op + ": expected a 2-D tensor, got " + to_string(t.shape()));
    }
}

// Elementwise binary with scalar broadcast. dfa/dfb give local partials
// df(x, y, out). The three broadcast cases get separate loops so each one
// vectorizes.
template <class F, class DA, class DB>
Tensor binary(const std::string& op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb)
{
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    Shape shape;
    if (a.shape() == b.shape()) {
        shape = a.shape();
    } else if (nb == 1) {
        shape = a.shape();
    } else if (na == 1) {
        shape = b.shape();
    } else {
        shape_error(op, a.shape(), b.shape());
    }
    const std::size_t n = numel_of(shape);
    const double* __restrict ad = a.data().data();
    const double* __restrict bd = b.data().data();
    std::vector<double> out(n);
    double* __restrict o = out.data();
    if (na == n && nb == n) {
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = f(ad[i], bd[i]);
        }
    } else if (nb == 1) {
        const double y = bd[0];
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = f(ad[i], y);
        }
    } else {
        const double x = ad[0];
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = f(x, bd[i]);
        }
    }
    return make_result(op, shape, std::move(out), {a.node(), b.node()},
                       [na, nb, dfa, dfb](Node& self) {
                           Node& pa = *self.parents[0];
                           Node& pb = *self.parents[1];
                           const std::size_t n = self.data.size();
                           const double* __restrict gy = self.grad.data();
                           const double* __restrict y = self.data.data();
                           const double* __restrict xa = pa.data.data();
                           const double* __restrict xb = pb.data.data();
                           if (pa.requires_grad) {
                               double* __restrict g = pa.grad_buffer();
                               if (na == n && nb == n) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                       g[i] += gy[i] * dfa(xa[i], xb[i], y[i]);
                                   }
                               } else if (na == n) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                       g[i] += gy[i] * dfa(xa[i], xb[0], y[i]);
                                   }
                               } else {
                                   double acc = 0.0;
                                   for (std::size_t i = 0; i < n; ++i) {
                                       acc += gy[i] * dfa(xa[0], xb[nb == 1 ? 0 : i], y[i]);
                                   }
                                   g[0] += acc;
                               }
                           }
                           if (pb.requires_grad) {
                               double* __restrict g = pb.grad_buffer();
                               if (na == n && nb == n) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                       g[i] += gy[i] * dfb(xa[i], xb[i], y[i]);
                                   }
                               } else if (nb == n) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                       g[i] += gy[i] * dfb(xa[0], xb[i], y[i]);
                                   }
                               } else {
                                   double acc = 0.0;
                                   for (std::size_t i = 0; i < n; ++i) {
                                       acc += gy[i] * dfb(xa[na == 1 ? 0 : i], xb[0], y[i]);
                                   }
                                   g[0] += acc;
                               }
                           }
                       });
}

// Elementwise unary; df(x, y) is dy/dx given input x and output y.
template <class F, class D>
Tensor unary(const std::string& op, const Tensor& a, F f, D df)
{
    const std::size_t n = a.numel();
    const double* __restrict x = a.data().data();
    std::vector<double> out(n);
    double* __restrict o = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        o[i] = f(x[i]);
    }
    return make_result(op, a.shape(), std::move(out), {a.node()}, [df](Node& self) {
        Node& p = *self.parents[0];
        const std::size_t n = self.data.size();
        double* __restrict g = p.grad_buffer();
        const double* __restrict gy = self.grad.data();
        const double* __restrict px = p.data.data();
        const double* __restrict y = self.data.data();
        for (std::size_t i = 0; i < n; ++i) {
            g[i] += gy[i] * df(px[i], y[i]);
        }
    });
}

} // namespace

std::size_t numel_of(const Shape& shape)
{
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>())
{
    node_->shape = {0};
    node_->placeholder = true;
}

bool Tensor::defined() const { return node_ && !node_->placeholder; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>())
{
    if (numel_of(shape) != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + to_string(shape));
    }
    check_finite("construct", data);
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad)
{
    const auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad)
{
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad)
{
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& row : rows) {
        if (row.size() != cols) {
            throw DimensionError("ragged rows in Tensor::matrix");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= node_->shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
    }
    return node_->shape[axis];
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data()
{
    if (!node_->is_leaf) {
        throw ContractError("mutable_data() on the output of op '" + node_->op + "'");
    }
    return node_->data;
}

double Tensor::item() const
{
    if (numel() != 1) {
        throw DimensionError("item() on tensor of shape " + to_string(shape()));
    }
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const
{
    if (node_->grad.empty()) {
        return std::vector<double>(node_->data.size(), 0.0);
    }
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return {node_->grad_buffer(), node_->data.size()}; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(node_->shape, node_->data, requires_grad); }

const std::string& Tensor::op_name() const { return node_->op; }

void Tensor::backward() const
{
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + to_string(shape()));
    }
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) {
            n->grad_buffer();
            n->backward(*n);
        }
    }
    // Intermediate grads are not needed after the sweep.
    for (Node* n : order) {
        if (!n->is_leaf) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b)
{
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        shape_error("matmul", a.shape(), b.shape());
    }
    std::vector<double> out(m * n);
    Map(out.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
    return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                       [m, k, n](Node& self) {
                           Node& pa = *self.parents[0];
                           Node& pb = *self.parents[1];
                           MapC dy(self.grad.data(), m, n);
                           if (pa.requires_grad) {
                               Map(pa.grad_buffer(), m, k).noalias() +=
                                   dy * MapC(pb.data.data(), k, n).transpose();
                           }
                           if (pb.requires_grad) {
                               Map(pb.grad_buffer(), k, n).noalias() +=
                                   MapC(pa.data.data(), m, k).transpose() * dy;
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias)
{
    require_rank2("linear", x);
    require_rank2("linear", w);
    const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
    if (w.dim(0) != k) {
        shape_error("linear", x.shape(), w.shape());
    }
    if (bias.numel() != n) {
        shape_error("linear(bias)", w.shape(), bias.shape());
    }
    std::vector<double> out(m * n);
    Map y(out.data(), m, n);
    y.noalias() = MapC(x.data().data(), m, k) * MapC(w.data().data(), k, n);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), n);
    return make_result("linear", {m, n}, std::move(out), {x.node(), w.node(), bias.node()},
                       [m, k, n](Node& self) {
                           Node& px = *self.parents[0];
                           Node& pw = *self.parents[1];
                           Node& pb = *self.parents[2];
                           MapC dy(self.grad.data(), m, n);
                           if (px.requires_grad) {
                               Map(px.grad_buffer(), m, k).noalias() +=
                                   dy * MapC(pw.data.data(), k, n).transpose();
                           }
                           if (pw.requires_grad) {
                               Map(pw.grad_buffer(), k, n).noalias() +=
                                   MapC(px.data.data(), m, k).transpose() * dy;
                           }
                           if (pb.requires_grad) {
                               // Plain loops: Eigen's vectorized reductions round
                               // differently depending on buffer alignment.
                               double* __restrict gb = pb.grad_buffer();
                               const double* g = self.grad.data();
                               for (std::size_t r = 0; r < m; ++r) {
                                   for (std::size_t c = 0; c < n; ++c) {
                                       gb[c] += g[r * n + c];
                                   }
                               }
                           }
                       });
}

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b)
{
    return binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b)
{
    return binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double out) { return -out / y; });
}

Tensor neg(const Tensor& a)
{
    return unary(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor)
{
    return unary(
        "scale", a, [factor](double x) { return factor * x; },
        [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value)
{
    return unary(
        "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a)
{
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a)
{
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a)
{
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a)
{
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a)
{
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a)
{
    return unary(
        "softplus", a,
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Tensor square(const Tensor& a)
{
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a)
{
    return unary(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& a)
{
    return unary(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clip(const Tensor& a, double lo, double hi)
{
    if (lo > hi) {
        throw ContractError("clip: lo > hi");
    }
    return unary(
        "clip", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a)
{
    double total = 0.0;
    for (double v : a.data()) {
        total += v;
    }
    return make_result("sum", {1}, {total}, {a.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        double* __restrict g = p.grad_buffer();
        const double gy = self.grad[0];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            g[i] += gy;
        }
    });
}

Tensor mean(const Tensor& a)
{
    if (a.numel() == 0) {
        throw ContractError("mean of an empty tensor");
    }
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_rows(const Tensor& a)
{
    require_rank2("sum_rows", a);
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m, 0.0);
    const auto d = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += d[i * n + j];
        }
        out[i] = s;
    }
    return make_result("sum_rows", {m, 1}, std::move(out), {a.node()}, [m, n](Node& self) {
        Node& p = *self.parents[0];
        double* g = p.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                g[i * n + j] += self.grad[i];
            }
        }
    });
}

Tensor mean_rows(const Tensor& a)
{
    require_rank2("mean_rows", a);
    if (a.dim(1) == 0) {
        throw ContractError("mean_rows over zero columns");
    }
    return scale(sum_rows(a), 1.0 / static_cast<double>(a.dim(1)));
}

// --- structural -----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis)
{
    if (parts.empty()) {
        throw ContractError("concat of zero tensors");
    }
    if (axis > 1) {
        throw DimensionError("concat: axis must be 0 or 1");
    }
    for (const auto& p : parts) {
        require_rank2("concat", p);
    }
    const std::size_t other = 1 - axis;
    const std::size_t fixed = parts[0].dim(other);
    std::vector<std::size_t> extents;
    std::size_t total = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.dim(other) != fixed) {
            shape_error("concat", parts[0].shape(), p.shape());
        }
        extents.push_back(p.dim(axis));
        total += p.dim(axis);
        parents.push_back(p.node());
    }
    Shape shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
    std::vector<double> out(total * fixed);
    if (axis == 0) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
            offset += p.numel();
        }
    } else {
        std::size_t col = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto d = parts[k].data();
            const std::size_t w = extents[k];
            for (std::size_t r = 0; r < fixed; ++r) {
                std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                            out.begin() + static_cast<std::ptrdiff_t>(r * total + col));
            }
            col += w;
        }
    }
    return make_result("concat", shape, std::move(out), std::move(parents),
                       [axis, extents, total, fixed](Node& self) {
                           std::size_t offset = 0;
                           for (std::size_t k = 0; k < self.parents.size(); ++k) {
                               Node& p = *self.parents[k];
                               const std::size_t w = extents[k];
                               if (p.requires_grad) {
                                   double* g = p.grad_buffer();
                                   if (axis == 0) {
                                       for (std::size_t i = 0; i < w * fixed; ++i) {
                                           g[i] += self.grad[offset * fixed + i];
                                       }
                                   } else {
                                       for (std::size_t r = 0; r < fixed; ++r) {
                                           for (std::size_t c = 0; c < w; ++c) {
                                               g[r * w + c] += self.grad[r * total + offset + c];
                                           }
                                       }
                                   }
                               }
                               offset += w;
                           }
                       });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end)
{
    require_rank2("slice", a);
    if (axis > 1 || begin > end || end > a.dim(axis)) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") on axis " + std::to_string(axis) + " of " + to_string(a.shape()));
    }
    const std::size_t rows = a.dim(0), cols = a.dim(1), w = end - begin;
    const auto d = a.data();
    if (axis == 0) {
        std::vector<double> out(d.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                d.begin() + static_cast<std::ptrdiff_t>(end * cols));
        return make_result("slice", {w, cols}, std::move(out), {a.node()}, [begin, cols](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer() + begin * cols;
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                g[i] += self.grad[i];
            }
        });
    }
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r * cols + begin), w,
                    out.begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    return make_result("slice", {rows, w}, std::move(out), {a.node()},
                       [rows, cols, begin, w](Node& self) {
                           Node& p = *self.parents[0];
                           double* g = p.grad_buffer();
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < w; ++c) {
                                   g[r * cols + begin + c] += self.grad[r * w + c];
                               }
                           }
                       });
}

Tensor reshape(const Tensor& a, Shape shape)
{
    if (numel_of(shape) != a.numel()) {
        shape_error("reshape", a.shape(), shape);
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        double* g = p.grad_buffer();
        for (std::size_t i = 0; i < self.data.size(); ++i) {
            g[i] += self.grad[i];
        }
    });
}

} // namespace ccm::nx
