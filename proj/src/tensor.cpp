#include "slidemil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace slidemil {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void validate_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw ValidationError("tensor shape must have at least one extent");
    for (std::size_t e : shape)
        if (e == 0) throw ValidationError("tensor extents must all be >= 1");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_ = std::make_shared<std::vector<double>>(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)) {
    validate_shape(shape_);
    if (shape_product(shape_) != data.size())
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + Tensor(shape_).shape_str());
    data_ = std::make_shared<std::vector<double>>(std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev, double mean) {
    Tensor t(std::move(shape));
    for (double& x : *t.data_) x = rng.normal(mean, stddev);
    return t;
}

std::size_t Tensor::rows() const {
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
}

bool Tensor::all_finite() const {
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Tape

NodeId Tape::push(const char* op, Tensor value, std::initializer_list<NodeId> inputs,
                  BackwardFn fn) {
    Node n;
    n.op = op;
    n.n_in = static_cast<int>(inputs.size());
    int i = 0;
    for (NodeId id : inputs) n.in[i++] = id;
    n.needs_grad = any_needs_grad(inputs);
    n.value = std::move(value);
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

bool Tape::any_needs_grad(std::initializer_list<NodeId> inputs) const {
    for (NodeId id : inputs)
        if (nodes_[id].needs_grad) return true;
    return false;
}

void Tape::check_id(NodeId id) const {
    if (id >= nodes_.size()) throw UsageError("tape node id out of range");
}

std::vector<double>& Tape::adj(std::vector<std::vector<double>>& adjoints, NodeId id,
                               std::size_t n) {
    auto& a = adjoints[id];
    if (a.empty()) a.assign(n, 0.0);
    return a;
}

NodeId Tape::leaf(const Tensor& t) {
    Node n;
    n.op = "leaf";
    n.value = t;  // aliases t's data
    n.needs_grad = t.requires_grad;
    if (t.requires_grad)
        n.leaf_grad = std::make_shared<std::vector<double>>(t.size(), 0.0);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor t) {
    t.requires_grad = false;
    Node n;
    n.op = "const";
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape().size() != 2 || B.shape().size() != 2)
        throw DimensionError("matmul expects 2-d tensors, got " + A.shape_str() + " and " +
                             B.shape_str());
    const std::size_t m = A.shape()[0], k = A.shape()[1], k2 = B.shape()[0], n = B.shape()[1];
    if (k != k2)
        throw DimensionError("matmul inner extents differ: " + A.shape_str() + " vs " +
                             B.shape_str());
    Tensor C({m, n});
    const double* pa = A.data();
    const double* pb = B.data();
    double* pc = C.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* crow = pc + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return push("matmul", std::move(C), {a, b},
                [m, k, n](Tape& t, const Node& nd, const std::vector<double>& g,
                          std::vector<std::vector<double>>& adjoints) {
                    const NodeId ia = nd.in[0], ib = nd.in[1];
                    const double* pa = t.nodes_[ia].value.data();
                    const double* pb = t.nodes_[ib].value.data();
                    if (t.nodes_[ia].needs_grad) {
                        // dA = g . B^T
                        auto& da = adj(adjoints, ia, m * k);
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t kk = 0; kk < k; ++kk) {
                                double s = 0.0;
                                const double* grow = g.data() + i * n;
                                const double* brow = pb + kk * n;
                                for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                                da[i * k + kk] += s;
                            }
                    }
                    if (t.nodes_[ib].needs_grad) {
                        // dB = A^T . g
                        auto& db = adj(adjoints, ib, k * n);
                        for (std::size_t i = 0; i < m; ++i) {
                            const double* arow = pa + i * k;
                            const double* grow = g.data() + i * n;
                            for (std::size_t kk = 0; kk < k; ++kk) {
                                const double av = arow[kk];
                                if (av == 0.0) continue;
                                double* drow = db.data() + kk * n;
                                for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                            }
                        }
                    }
                });
}

NodeId Tape::transpose(NodeId a) {
    check_id(a);
    const Tensor& A = nodes_[a].value;
    if (A.shape().size() != 2)
        throw DimensionError("transpose expects a 2-d tensor, got " + A.shape_str());
    const std::size_t r = A.shape()[0], c = A.shape()[1];
    Tensor T({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) T.at(j, i) = A.at(i, j);
    return push("transpose", std::move(T), {a},
                [r, c](Tape& t, const Node& nd, const std::vector<double>& g,
                       std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    auto& da = adj(adjoints, nd.in[0], r * c);
                    for (std::size_t j = 0; j < c; ++j)
                        for (std::size_t i = 0; i < r; ++i) da[i * c + j] += g[j * r + i];
                });
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape() != B.shape())
        throw DimensionError("add shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) C.at(i) = A.at(i) + B.at(i);
    return push("add", std::move(C), {a, b},
                [](Tape& t, const Node& nd, const std::vector<double>& g,
                   std::vector<std::vector<double>>& adjoints) {
                    for (int s = 0; s < 2; ++s) {
                        const NodeId in = nd.in[s];
                        if (!t.nodes_[in].needs_grad) continue;
                        auto& d = adj(adjoints, in, g.size());
                        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                    }
                });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape() != B.shape())
        throw DimensionError("sub shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) C.at(i) = A.at(i) - B.at(i);
    return push("sub", std::move(C), {a, b},
                [](Tape& t, const Node& nd, const std::vector<double>& g,
                   std::vector<std::vector<double>>& adjoints) {
                    if (t.nodes_[nd.in[0]].needs_grad) {
                        auto& d = adj(adjoints, nd.in[0], g.size());
                        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                    }
                    if (t.nodes_[nd.in[1]].needs_grad) {
                        auto& d = adj(adjoints, nd.in[1], g.size());
                        for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                    }
                });
}

NodeId Tape::add_row(NodeId x, NodeId row) {
    check_id(x);
    check_id(row);
    const Tensor& X = nodes_[x].value;
    const Tensor& R = nodes_[row].value;
    const std::size_t d = X.cols();
    if (R.size() != d)
        throw DimensionError("add_row: row length " + R.shape_str() + " does not match " +
                             X.shape_str());
    const std::size_t rows = X.rows();
    Tensor C(X.shape());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < d; ++j) C.at(i * d + j) = X.at(i * d + j) + R.at(j);
    return push("add_row", std::move(C), {x, row},
                [rows, d](Tape& t, const Node& nd, const std::vector<double>& g,
                          std::vector<std::vector<double>>& adjoints) {
                    if (t.nodes_[nd.in[0]].needs_grad) {
                        auto& dx = adj(adjoints, nd.in[0], rows * d);
                        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                    }
                    if (t.nodes_[nd.in[1]].needs_grad) {
                        auto& dr = adj(adjoints, nd.in[1], d);
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < d; ++j) dr[j] += g[i * d + j];
                    }
                });
}

NodeId Tape::scale(NodeId x, double c) {
    check_id(x);
    const Tensor& X = nodes_[x].value;
    Tensor C(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) C.at(i) = X.at(i) * c;
    return push("scale", std::move(C), {x},
                [c](Tape& t, const Node& nd, const std::vector<double>& g,
                    std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    auto& dx = adj(adjoints, nd.in[0], g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
                });
}

NodeId Tape::gelu(NodeId x) {
    check_id(x);
    const Tensor& X = nodes_[x].value;
    Tensor C(X.shape());
    // exact-erf form: x * Phi(x)
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double v = X.at(i);
        C.at(i) = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return push("gelu", std::move(C), {x},
                [](Tape& t, const Node& nd, const std::vector<double>& g,
                   std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    const Tensor& X = t.nodes_[nd.in[0]].value;
                    auto& dx = adj(adjoints, nd.in[0], g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const double v = X.at(i);
                        const double phi = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                        const double dgelu = 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * phi;
                        dx[i] += dgelu * g[i];
                    }
                });
}

NodeId Tape::softmax(NodeId x, double temperature) {
    check_id(x);
    if (!(temperature > 0.0))
        throw ValidationError("softmax temperature must be positive, got " +
                              std::to_string(temperature));
    const Tensor& X = nodes_[x].value;
    const std::size_t rows = X.rows(), d = X.cols();
    Tensor P(X.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* xr = X.data() + i * d;
        double* pr = P.data() + i * d;
        double mx = xr[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            pr[j] = std::exp((xr[j] - mx) / temperature);
            z += pr[j];
        }
        for (std::size_t j = 0; j < d; ++j) pr[j] /= z;
    }
    return push("softmax", std::move(P), {x},
                [rows, d, temperature](Tape& t, const Node& nd, const std::vector<double>& g,
                                       std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    const Tensor& P = nd.value;
                    auto& dx = adj(adjoints, nd.in[0], rows * d);
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double* pr = P.data() + i * d;
                        const double* gr = g.data() + i * d;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < d; ++j) dot += gr[j] * pr[j];
                        for (std::size_t j = 0; j < d; ++j)
                            dx[i * d + j] += pr[j] * (gr[j] - dot) / temperature;
                    }
                });
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    check_id(x);
    check_id(gamma);
    check_id(beta);
    if (!(eps > 0.0)) throw ValidationError("layer_norm eps must be positive");
    const Tensor& X = nodes_[x].value;
    const std::size_t rows = X.rows(), d = X.cols();
    const Tensor& G = nodes_[gamma].value;
    const Tensor& B = nodes_[beta].value;
    if (G.size() != d || B.size() != d)
        throw DimensionError("layer_norm affine length mismatch: x " + X.shape_str() +
                             ", gamma " + G.shape_str() + ", beta " + B.shape_str());
    Tensor Y(X.shape());
    // stash normalized rows and inverse stddevs for backward
    auto xhat = std::make_shared<std::vector<double>>(rows * d);
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* xr = X.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mean) * is;
            (*xhat)[i * d + j] = h;
            Y.at(i * d + j) = G.at(j) * h + B.at(j);
        }
    }
    return push(
        "layer_norm", std::move(Y), {x, gamma, beta},
        [rows, d, xhat, inv_std](Tape& t, const Node& nd, const std::vector<double>& g,
                                 std::vector<std::vector<double>>& adjoints) {
            const Tensor& G = t.nodes_[nd.in[1]].value;
            if (t.nodes_[nd.in[1]].needs_grad) {
                auto& dg = adj(adjoints, nd.in[1], d);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        dg[j] += g[i * d + j] * (*xhat)[i * d + j];
            }
            if (t.nodes_[nd.in[2]].needs_grad) {
                auto& db = adj(adjoints, nd.in[2], d);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
            }
            if (t.nodes_[nd.in[0]].needs_grad) {
                auto& dx = adj(adjoints, nd.in[0], rows * d);
                for (std::size_t i = 0; i < rows; ++i) {
                    const double* gr = g.data() + i * d;
                    const double* hr = xhat->data() + i * d;
                    double m1 = 0.0, m2 = 0.0;  // mean(g*gamma), mean(g*gamma*xhat)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gg = gr[j] * G.at(j);
                        m1 += gg;
                        m2 += gg * hr[j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    const double is = (*inv_std)[i];
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gg = gr[j] * G.at(j);
                        dx[i * d + j] += (gg - m1 - hr[j] * m2) * is;
                    }
                }
            }
        });
}

NodeId Tape::cross_entropy(NodeId target, NodeId pred) {
    check_id(target);
    check_id(pred);
    const Tensor& T = nodes_[target].value;
    const Tensor& P = nodes_[pred].value;
    if (T.size() != P.size())
        throw DimensionError("cross_entropy length mismatch: " + T.shape_str() + " vs " +
                             P.shape_str());
    constexpr double tol = 1e-6;
    double st = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < T.size(); ++i) {
        if (T.at(i) < 0.0)
            throw ValidationError("cross_entropy target has a negative entry");
        if (!(P.at(i) > 0.0))
            throw ValidationError("cross_entropy prediction entries must be > 0");
        st += T.at(i);
        sp += P.at(i);
    }
    if (std::abs(st - 1.0) > tol || std::abs(sp - 1.0) > tol)
        throw ValidationError("cross_entropy inputs must sum to 1 (target sum " +
                              std::to_string(st) + ", pred sum " + std::to_string(sp) + ")");
    double h = 0.0;
    for (std::size_t i = 0; i < T.size(); ++i) h -= T.at(i) * std::log(P.at(i));
    return push("cross_entropy", Tensor::scalar(h), {target, pred},
                [](Tape& t, const Node& nd, const std::vector<double>& g,
                   std::vector<std::vector<double>>& adjoints) {
                    const Tensor& T = t.nodes_[nd.in[0]].value;
                    const Tensor& P = t.nodes_[nd.in[1]].value;
                    const double g0 = g[0];
                    if (t.nodes_[nd.in[0]].needs_grad) {
                        auto& dt = adj(adjoints, nd.in[0], T.size());
                        for (std::size_t i = 0; i < T.size(); ++i)
                            dt[i] += -std::log(P.at(i)) * g0;
                    }
                    if (t.nodes_[nd.in[1]].needs_grad) {
                        auto& dp = adj(adjoints, nd.in[1], P.size());
                        for (std::size_t i = 0; i < P.size(); ++i)
                            dp[i] += -(T.at(i) / P.at(i)) * g0;
                    }
                });
}

NodeId Tape::bce_with_logits(NodeId score, double label) {
    check_id(score);
    const Tensor& S = nodes_[score].value;
    if (S.size() != 1)
        throw DimensionError("bce_with_logits expects a scalar score, got " + S.shape_str());
    if (label != 0.0 && label != 1.0)
        throw ValidationError("bce_with_logits label must be 0 or 1");
    const double s = S.at(0);
    // max(s,0) - s*y + log(1 + exp(-|s|))
    const double loss = std::max(s, 0.0) - s * label + std::log1p(std::exp(-std::abs(s)));
    return push("bce_with_logits", Tensor::scalar(loss), {score},
                [label](Tape& t, const Node& nd, const std::vector<double>& g,
                        std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    const double s = t.nodes_[nd.in[0]].value.at(0);
                    const double sig = 1.0 / (1.0 + std::exp(-s));
                    adj(adjoints, nd.in[0], 1)[0] += (sig - label) * g[0];
                });
}

NodeId Tape::sum(NodeId x) {
    check_id(x);
    const Tensor& X = nodes_[x].value;
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X.at(i);
    return push("sum", Tensor::scalar(s), {x},
                [](Tape& t, const Node& nd, const std::vector<double>& g,
                   std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    auto& dx = adj(adjoints, nd.in[0], t.nodes_[nd.in[0]].value.size());
                    for (double& v : dx) v += g[0];
                });
}

NodeId Tape::take_row(NodeId x, std::size_t row) {
    check_id(x);
    const Tensor& X = nodes_[x].value;
    if (X.shape().size() != 2)
        throw DimensionError("take_row expects a 2-d tensor, got " + X.shape_str());
    const std::size_t r = X.shape()[0], d = X.shape()[1];
    if (row >= r) throw ValidationError("take_row index " + std::to_string(row) +
                                        " out of range for " + X.shape_str());
    Tensor Y({1, d});
    for (std::size_t j = 0; j < d; ++j) Y.at(j) = X.at(row, j);
    return push("take_row", std::move(Y), {x},
                [r, d, row](Tape& t, const Node& nd, const std::vector<double>& g,
                            std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    auto& dx = adj(adjoints, nd.in[0], r * d);
                    for (std::size_t j = 0; j < d; ++j) dx[row * d + j] += g[j];
                });
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape().size() != 2 || B.shape().size() != 2 || A.shape()[1] != B.shape()[1])
        throw DimensionError("concat_rows column mismatch: " + A.shape_str() + " vs " +
                             B.shape_str());
    const std::size_t ra = A.shape()[0], rb = B.shape()[0], d = A.shape()[1];
    Tensor C({ra + rb, d});
    std::copy(A.data(), A.data() + ra * d, C.data());
    std::copy(B.data(), B.data() + rb * d, C.data() + ra * d);
    return push("concat_rows", std::move(C), {a, b},
                [ra, rb, d](Tape& t, const Node& nd, const std::vector<double>& g,
                            std::vector<std::vector<double>>& adjoints) {
                    if (t.nodes_[nd.in[0]].needs_grad) {
                        auto& da = adj(adjoints, nd.in[0], ra * d);
                        for (std::size_t i = 0; i < ra * d; ++i) da[i] += g[i];
                    }
                    if (t.nodes_[nd.in[1]].needs_grad) {
                        auto& db = adj(adjoints, nd.in[1], rb * d);
                        for (std::size_t i = 0; i < rb * d; ++i) db[i] += g[ra * d + i];
                    }
                });
}

NodeId Tape::reshape(NodeId x, std::vector<std::size_t> shape) {
    check_id(x);
    const Tensor& X = nodes_[x].value;
    validate_shape(shape);
    if (shape_product(shape) != X.size())
        throw DimensionError("reshape size mismatch: " + X.shape_str());
    Tensor Y(std::move(shape), X.vec());
    return push("reshape", std::move(Y), {x},
                [](Tape& t, const Node& nd, const std::vector<double>& g,
                   std::vector<std::vector<double>>& adjoints) {
                    if (!t.nodes_[nd.in[0]].needs_grad) return;
                    auto& dx = adj(adjoints, nd.in[0], g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                });
}

Tape::MaxResult Tape::max_all(NodeId x) {
    check_id(x);
    const Tensor& X = nodes_[x].value;
    std::size_t arg = 0;
    double best = X.at(0);
    for (std::size_t i = 1; i < X.size(); ++i) {
        if (X.at(i) > best) {  // strict: ties keep the smallest index
            best = X.at(i);
            arg = i;
        }
    }
    NodeId id = push("max_all", Tensor::scalar(best), {x},
                     [](Tape& t, const Node& nd, const std::vector<double>& g,
                        std::vector<std::vector<double>>& adjoints) {
                         if (!t.nodes_[nd.in[0]].needs_grad) return;
                         auto& dx = adj(adjoints, nd.in[0], t.nodes_[nd.in[0]].value.size());
                         dx[nd.aux] += g[0];
                     });
    nodes_[id].aux = arg;
    return {id, arg};
}

void Tape::backward(NodeId root) {
    check_id(root);
    if (nodes_[root].value.size() != 1)
        throw UsageError("backward root must be scalar, got " +
                         nodes_[root].value.shape_str());
    std::vector<std::vector<double>> adjoints(nodes_.size());
    adjoints[root] = {1.0};
    for (NodeId i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || adjoints[i].empty()) continue;
        if (n.backward) n.backward(*this, n, adjoints[i], adjoints);
        if (n.leaf_grad) {
            auto& g = *n.leaf_grad;
            const auto& a = adjoints[i];
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += a[j];
        }
    }
}

const std::vector<double>& Tape::grad(NodeId id) const {
    check_id(id);
    if (!nodes_[id].leaf_grad)
        throw UsageError("node has no gradient (not a requires_grad leaf)");
    return *nodes_[id].leaf_grad;
}

bool Tape::has_grad(NodeId id) const {
    check_id(id);
    return nodes_[id].leaf_grad != nullptr;
}

// ---------------------------------------------------------------------------
// Binding

Binding::Binding(Tape& tape, std::span<Tensor* const> params, bool frozen) : tape_(&tape) {
    ids_.reserve(params.size());
    for (Tensor* p : params) {
        if (frozen) {
            Tensor alias = *p;  // shares data
            ids_.emplace_back(p, tape.constant(std::move(alias)));
        } else {
            ids_.emplace_back(p, tape.leaf(*p));
        }
    }
}

NodeId Binding::operator()(const Tensor& param) const {
    for (const auto& [p, id] : ids_)
        if (p == &param) return id;
    throw UsageError("tensor is not bound on this tape");
}

}  // namespace slidemil
