// SPDX-License-Identifier: Apache-2.0
#include "taste/autodiff.hpp"

#include <cmath>

namespace taste::ad {

Var Graph::make(Mat value, bool requires_grad, std::function<void(Graph&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Mat v) { return make(std::move(v), false, nullptr); }

Var Graph::leaf(Mat v) { return make(std::move(v), true, nullptr); }

const Mat& Graph::value(Var v) const { return nodes_.at(static_cast<size_t>(v.id)).value; }

Mat Graph::grad(Var v) const {
    const Node& n = nodes_.at(static_cast<size_t>(v.id));
    if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Mat& Graph::grad_ref(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) {
        n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::add_grad(int id, const Mat& g) {
    if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
    grad_ref(id) += g;
}

void Graph::backward(Var out) {
    Node& end = nodes_.at(static_cast<size_t>(out.id));
    require_arg(end.value.rows() == 1 && end.value.cols() == 1,
                "backward: output must be a 1x1 scalar");
    grad_ref(out.id).setOnes();
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.has_grad && n.back) n.back(*this);
    }
}

namespace {
void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    require_arg(a.rows() == b.rows() && a.cols() == b.cols(),
                std::string(op) + ": shape mismatch");
}
} // namespace

Var Graph::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Mat v = value(a) + value(b);
    int ia = a.id, ib = b.id;
    bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, ib, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        g.add_grad(ia, go);
        g.add_grad(ib, go);
    };
    return out;
}

Var Graph::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Mat v = value(a) - value(b);
    int ia = a.id, ib = b.id;
    bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, ib, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        g.add_grad(ia, go);
        g.add_grad(ib, -go);
    };
    return out;
}

Var Graph::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Mat v = value(a).cwiseProduct(value(b));
    int ia = a.id, ib = b.id;
    bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, ib, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        g.add_grad(ia, go.cwiseProduct(g.nodes_[ib].value));
        g.add_grad(ib, go.cwiseProduct(g.nodes_[ia].value));
    };
    return out;
}

Var Graph::scale(Var a, double c) {
    Mat v = value(a) * c;
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io, c](Graph& g) { g.add_grad(ia, c * g.nodes_[io].grad); };
    return out;
}

Var Graph::add_scalar(Var a, double c) {
    Mat v = value(a).array() + c;
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) { g.add_grad(ia, g.nodes_[io].grad); };
    return out;
}

Var Graph::add_const(Var a, const Mat& c) {
    check_same_shape(value(a), c, "add_const");
    Mat v = value(a) + c;
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) { g.add_grad(ia, g.nodes_[io].grad); };
    return out;
}

Var Graph::mul_const(Var a, const Mat& c) {
    check_same_shape(value(a), c, "mul_const");
    Mat v = value(a).cwiseProduct(c);
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    Mat cc = c;
    nodes_[io].back = [ia, io, cc](Graph& g) {
        g.add_grad(ia, g.nodes_[io].grad.cwiseProduct(cc));
    };
    return out;
}

Var Graph::mul_scalar_var(Var s, Var a) {
    require_arg(value(s).rows() == 1 && value(s).cols() == 1, "mul_scalar_var: s must be 1x1");
    double sv = value(s)(0, 0);
    Mat v = value(a) * sv;
    int is = s.id, ia = a.id;
    bool rg = nodes_[is].requires_grad || nodes_[ia].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [is, ia, io, sv](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        Mat gs(1, 1);
        gs(0, 0) = (go.cwiseProduct(g.nodes_[ia].value)).sum();
        g.add_grad(is, gs);
        g.add_grad(ia, sv * go);
    };
    return out;
}

Var Graph::exp(Var a) {
    Mat v = value(a).array().exp();
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) {
        g.add_grad(ia, g.nodes_[io].grad.cwiseProduct(g.nodes_[io].value));
    };
    return out;
}

Var Graph::tanh(Var a) {
    Mat v = value(a).array().tanh();
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) {
        const Mat& y = g.nodes_[io].value;
        g.add_grad(ia, g.nodes_[io].grad.cwiseProduct(Mat(1.0 - y.array().square())));
    };
    return out;
}

Var Graph::gelu(Var a) {
    // exact erf form; derivative Phi(x) + x phi(x)
    const Mat& x = value(a);
    Mat v(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j)
            v(i, j) = 0.5 * x(i, j) * (1.0 + std::erf(x(i, j) * M_SQRT1_2));
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) {
        const Mat& xin = g.nodes_[ia].value;
        const Mat& go = g.nodes_[io].grad;
        Mat d(xin.rows(), xin.cols());
        for (int i = 0; i < xin.rows(); ++i)
            for (int j = 0; j < xin.cols(); ++j) {
                double x = xin(i, j);
                double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                double Phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                d(i, j) = Phi + x * phi;
            }
        g.add_grad(ia, go.cwiseProduct(d));
    };
    return out;
}

Var Graph::square(Var a) { return mul(a, a); }

Var Graph::matmul(Var a, Var b) {
    require_arg(value(a).cols() == value(b).rows(), "matmul: inner dimension mismatch");
    Mat v = value(a) * value(b);
    int ia = a.id, ib = b.id;
    bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, ib, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        g.add_grad(ia, go * g.nodes_[ib].value.transpose());
        g.add_grad(ib, g.nodes_[ia].value.transpose() * go);
    };
    return out;
}

Var Graph::transpose(Var a) {
    Mat v = value(a).transpose();
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) { g.add_grad(ia, g.nodes_[io].grad.transpose()); };
    return out;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    require_arg(!parts.empty(), "concat_rows: empty");
    long rows = 0;
    long cols = value(parts[0]).cols();
    bool rg = false;
    for (Var p : parts) {
        require_arg(value(p).cols() == cols, "concat_rows: column mismatch");
        rows += value(p).rows();
        rg = rg || nodes_[p.id].requires_grad;
    }
    Mat v(rows, cols);
    long r = 0;
    std::vector<std::pair<int, std::pair<long, long>>> spans;
    for (Var p : parts) {
        long n = value(p).rows();
        v.middleRows(r, n) = value(p);
        spans.push_back({p.id, {r, n}});
        r += n;
    }
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [spans, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        for (const auto& [id, span] : spans)
            g.add_grad(id, go.middleRows(span.first, span.second));
    };
    return out;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    require_arg(!parts.empty(), "concat_cols: empty");
    long cols = 0;
    long rows = value(parts[0]).rows();
    bool rg = false;
    for (Var p : parts) {
        require_arg(value(p).rows() == rows, "concat_cols: row mismatch");
        cols += value(p).cols();
        rg = rg || nodes_[p.id].requires_grad;
    }
    Mat v(rows, cols);
    long c = 0;
    std::vector<std::pair<int, std::pair<long, long>>> spans;
    for (Var p : parts) {
        long n = value(p).cols();
        v.middleCols(c, n) = value(p);
        spans.push_back({p.id, {c, n}});
        c += n;
    }
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [spans, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        for (const auto& [id, span] : spans)
            g.add_grad(id, go.middleCols(span.first, span.second));
    };
    return out;
}

Var Graph::slice_rows(Var a, int start, int count) {
    require_arg(start >= 0 && count >= 0 && start + count <= value(a).rows(),
                "slice_rows: out of range");
    Mat v = value(a).middleRows(start, count);
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io, start, count](Graph& g) {
        if (!g.nodes_[ia].requires_grad) return;
        g.grad_ref(ia).middleRows(start, count) += g.nodes_[io].grad;
    };
    return out;
}

Var Graph::slice_cols(Var a, int start, int count) {
    require_arg(start >= 0 && count >= 0 && start + count <= value(a).cols(),
                "slice_cols: out of range");
    Mat v = value(a).middleCols(start, count);
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io, start, count](Graph& g) {
        if (!g.nodes_[ia].requires_grad) return;
        g.grad_ref(ia).middleCols(start, count) += g.nodes_[io].grad;
    };
    return out;
}

Var Graph::gather_rows(Var table, const std::vector<int>& idx) {
    const Mat& t = value(table);
    for (int i : idx)
        require_arg(i >= 0 && i < t.rows(), "gather_rows: index out of range");
    Mat v(static_cast<long>(idx.size()), t.cols());
    for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<long>(i)) = t.row(idx[i]);
    int it = table.id;
    Var out = make(std::move(v), nodes_[it].requires_grad, nullptr);
    int io = out.id;
    std::vector<int> ix = idx;
    nodes_[io].back = [it, io, ix](Graph& g) {
        if (!g.nodes_[it].requires_grad) return;
        Mat& gt = g.grad_ref(it);
        const Mat& go = g.nodes_[io].grad;
        for (size_t i = 0; i < ix.size(); ++i) gt.row(ix[i]) += go.row(static_cast<long>(i));
    };
    return out;
}

Var Graph::add_row_broadcast(Var a, Var row) {
    require_arg(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
                "add_row_broadcast: row must be 1 x cols(a)");
    Mat v = value(a).rowwise() + value(row).row(0);
    int ia = a.id, ir = row.id;
    bool rg = nodes_[ia].requires_grad || nodes_[ir].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, ir, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        g.add_grad(ia, go);
        g.add_grad(ir, go.colwise().sum());
    };
    return out;
}

Var Graph::mul_row_broadcast(Var a, Var row) {
    require_arg(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
                "mul_row_broadcast: row must be 1 x cols(a)");
    Mat v = value(a).array().rowwise() * value(row).row(0).array();
    int ia = a.id, ir = row.id;
    bool rg = nodes_[ia].requires_grad || nodes_[ir].requires_grad;
    Var out = make(std::move(v), rg, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, ir, io](Graph& g) {
        const Mat& go = g.nodes_[io].grad;
        Mat da = go.array().rowwise() * g.nodes_[ir].value.row(0).array();
        g.add_grad(ia, da);
        Mat dr = (go.cwiseProduct(g.nodes_[ia].value)).colwise().sum();
        g.add_grad(ir, dr);
    };
    return out;
}

Var Graph::rowwise_softmax(Var a) {
    const Mat& x = value(a);
    Mat v(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        double m = x.row(i).maxCoeff();
        Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
        v.row(i) = e / e.sum();
    }
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) {
        const Mat& y = g.nodes_[io].value;
        const Mat& go = g.nodes_[io].grad;
        Mat da(y.rows(), y.cols());
        for (int i = 0; i < y.rows(); ++i) {
            double dot = go.row(i).dot(y.row(i));
            da.row(i) = (y.row(i).array() * (go.row(i).array() - dot)).matrix();
        }
        g.add_grad(ia, da);
    };
    return out;
}

Var Graph::standardize_rows(Var a, double eps) {
    const Mat& x = value(a);
    const long d = x.cols();
    Mat v(x.rows(), d);
    Vec inv_std(x.rows());
    for (int i = 0; i < x.rows(); ++i) {
        double mean = x.row(i).mean();
        double var = (x.row(i).array() - mean).square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = is;
        v.row(i) = (x.row(i).array() - mean) * is;
    }
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io, inv_std, d](Graph& g) {
        const Mat& y = g.nodes_[io].value;
        const Mat& go = g.nodes_[io].grad;
        Mat da(y.rows(), y.cols());
        for (int i = 0; i < y.rows(); ++i) {
            double gmean = go.row(i).mean();
            double gydot = go.row(i).cwiseProduct(y.row(i)).sum() / static_cast<double>(d);
            da.row(i) = inv_std(i) * (go.row(i).array() - gmean - y.row(i).array() * gydot);
        }
        g.add_grad(ia, da);
    };
    return out;
}

Var Graph::sum_all(Var a) {
    Mat v(1, 1);
    v(0, 0) = value(a).sum();
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) {
        double s = g.nodes_[io].grad(0, 0);
        const Mat& av = g.nodes_[ia].value;
        g.add_grad(ia, Mat::Constant(av.rows(), av.cols(), s));
    };
    return out;
}

Var Graph::mean_all(Var a) {
    double n = static_cast<double>(value(a).size());
    return scale(sum_all(a), 1.0 / n);
}

Var Graph::row_l2_mean(Var a) {
    const Mat& x = value(a);
    const double n = static_cast<double>(x.rows());
    Mat v(1, 1);
    double s = 0;
    for (int i = 0; i < x.rows(); ++i) s += x.row(i).norm();
    v(0, 0) = s / n;
    int ia = a.id;
    Var out = make(std::move(v), nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io, n](Graph& g) {
        const Mat& xin = g.nodes_[ia].value;
        double go = g.nodes_[io].grad(0, 0);
        Mat da = Mat::Zero(xin.rows(), xin.cols());
        for (int i = 0; i < xin.rows(); ++i) {
            double nrm = xin.row(i).norm();
            if (nrm > 0) da.row(i) = (go / (n * nrm)) * xin.row(i);
        }
        g.add_grad(ia, da);
    };
    return out;
}

Var Graph::ce_rows(Var logits, const std::vector<int>& targets) {
    const Mat& x = value(logits);
    require_arg(static_cast<long>(targets.size()) == x.rows(),
                "ce_rows: one target per logit row required");
    for (int t : targets)
        require_arg(t >= 0 && t < x.cols(), "ce_rows: target out of range");
    Mat v(x.rows(), 1);
    for (int i = 0; i < x.rows(); ++i) {
        double m = x.row(i).maxCoeff();
        double lse = m + std::log((x.row(i).array() - m).exp().sum());
        v(i, 0) = lse - x(i, targets[static_cast<size_t>(i)]);
    }
    int il = logits.id;
    Var out = make(std::move(v), nodes_[il].requires_grad, nullptr);
    int io = out.id;
    std::vector<int> tg = targets;
    nodes_[io].back = [il, io, tg](Graph& g) {
        const Mat& x = g.nodes_[il].value;
        const Mat& go = g.nodes_[io].grad;
        Mat da(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i) {
            double m = x.row(i).maxCoeff();
            Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
            Eigen::RowVectorXd p = e / e.sum();
            p(tg[static_cast<size_t>(i)]) -= 1.0;
            da.row(i) = go(i, 0) * p;
        }
        g.add_grad(il, da);
    };
    return out;
}

Var Graph::straight_through(Var a, const Mat& replacement) {
    check_same_shape(value(a), replacement, "straight_through");
    int ia = a.id;
    Var out = make(replacement, nodes_[ia].requires_grad, nullptr);
    int io = out.id;
    nodes_[io].back = [ia, io](Graph& g) { g.add_grad(ia, g.nodes_[io].grad); };
    return out;
}

// ---------------------------------------------------------------------------

void ParamStore::add(const std::string& name, Mat init, bool trainable) {
    Entry e;
    e.adam_m = Mat::Zero(init.rows(), init.cols());
    e.adam_v = Mat::Zero(init.rows(), init.cols());
    e.value = std::move(init);
    e.trainable = trainable;
    entries[name] = std::move(e);
}

Mat& ParamStore::at(const std::string& name) {
    auto it = entries.find(name);
    require_arg(it != entries.end(), "unknown parameter: " + name);
    return it->second.value;
}

const Mat& ParamStore::at(const std::string& name) const {
    auto it = entries.find(name);
    require_arg(it != entries.end(), "unknown parameter: " + name);
    return it->second.value;
}

void ParamStore::set_trainable(bool trainable) {
    for (auto& [_, e] : entries) e.trainable = trainable;
}

std::map<std::string, Mat> ParamStore::values() const {
    std::map<std::string, Mat> out;
    for (const auto& [k, e] : entries) out[k] = e.value;
    return out;
}

void ParamStore::load(const std::map<std::string, Mat>& values, const std::string& prefix) {
    for (const auto& [k, v] : values) {
        if (k.rfind(prefix, 0) != 0) continue;
        auto it = entries.find(k);
        if (it != entries.end()) {
            require_data(it->second.value.rows() == v.rows() && it->second.value.cols() == v.cols(),
                         "checkpoint shape mismatch for " + k);
            it->second.value = v;
        } else {
            add(k, v);
        }
    }
}

Var GraphParams::operator()(const std::string& name) {
    auto it = touched_.find(name);
    if (it != touched_.end()) return it->second;
    const ParamStore::Entry& e = store_.entries.at(name);
    Var v = e.trainable ? g_.leaf(e.value) : g_.constant(e.value);
    touched_[name] = v;
    return v;
}

void GraphParams::accumulate_grads(std::map<std::string, Mat>& sink) const {
    for (const auto& [name, var] : touched_) {
        if (!store_.entries.at(name).trainable) continue;
        const Mat& g = g_.grad(var);
        auto it = sink.find(name);
        if (it == sink.end())
            sink[name] = g;
        else
            it->second += g;
    }
}

void AdamOptimizer::step(ParamStore& store, const std::map<std::string, Mat>& grads,
                         double lr_scale) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (const auto& [name, g] : grads) {
        auto it = store.entries.find(name);
        if (it == store.entries.end()) continue; // grads may span several stores
        ParamStore::Entry& e = it->second;
        if (!e.trainable) continue;
        e.adam_m = beta1 * e.adam_m + (1.0 - beta1) * g;
        e.adam_v = beta2 * e.adam_v + (1.0 - beta2) * g.cwiseProduct(g);
        Mat mhat = e.adam_m / bc1;
        Mat vhat = e.adam_v / bc2;
        e.value -= (lr * lr_scale) * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
    }
}

Mat sinusoidal_positions(int n, int d) {
    Mat p(n, d);
    for (int pos = 0; pos < n; ++pos) {
        for (int j = 0; j < d; ++j) {
            double freq = std::pow(10000.0, -2.0 * (j / 2) / static_cast<double>(d));
            double angle = pos * freq;
            p(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return p;
}

} // namespace taste::ad
