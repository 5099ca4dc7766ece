// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace taste::ad {

// Handle into a Graph.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eager reverse-mode tape over double matrices. Values are computed at op
// creation; backward() walks the tape in reverse. Graphs are single-use.
class Graph {
public:
    Var constant(Mat v);
    Var leaf(Mat v); // participates in gradients

    const Mat& value(Var v) const;
    Mat grad(Var v) const; // zero matrix if no gradient reached it

    // elementwise / scalar
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var add_const(Var a, const Mat& c);         // e.g. attention masks
    Var mul_const(Var a, const Mat& c);         // e.g. noise in reparameterization
    Var mul_scalar_var(Var s, Var a);           // s is 1x1
    Var exp(Var a);
    Var tanh(Var a);
    Var gelu(Var a);
    Var square(Var a);

    // linear algebra / shaping
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, int start, int count);
    Var slice_cols(Var a, int start, int count);
    Var gather_rows(Var table, const std::vector<int>& idx);
    Var add_row_broadcast(Var a, Var row);      // a: [n x d], row: [1 x d]
    Var mul_row_broadcast(Var a, Var row);

    // normalization / softmax
    Var rowwise_softmax(Var a);
    Var standardize_rows(Var a, double eps);    // per-row zero mean, unit variance

    // reductions & losses
    Var sum_all(Var a);                          // 1x1
    Var mean_all(Var a);                         // 1x1
    Var row_l2_mean(Var a);                      // (1/n) sum_i ||row_i||_2
    Var ce_rows(Var logits, const std::vector<int>& targets); // [n x 1] of -log p

    // value is `replacement`, gradient passes through to a unchanged
    Var straight_through(Var a, const Mat& replacement);

    void backward(Var scalar_out);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::function<void(Graph&)> back; // empty for leaves/constants
    };

    Var make(Mat value, bool requires_grad, std::function<void(Graph&)> back);
    Mat& grad_ref(int id);
    void add_grad(int id, const Mat& g);

    std::vector<Node> nodes_;

    friend struct GradAccess;
};

// Convenience for building models: pulls named parameters from a store into
// a graph (leaves when trainable, constants otherwise) and accumulates
// their gradients back out after backward().
struct ParamStore {
    struct Entry {
        Mat value;
        Mat adam_m, adam_v;
        bool trainable = true;
    };
    std::map<std::string, Entry> entries;

    void add(const std::string& name, Mat init, bool trainable = true);
    bool has(const std::string& name) const { return entries.count(name) > 0; }
    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    void set_trainable(bool trainable);
    std::map<std::string, Mat> values() const;
    void load(const std::map<std::string, Mat>& values, const std::string& prefix);
};

class GraphParams {
public:
    GraphParams(Graph& g, ParamStore& store) : g_(g), store_(store) {}

    // Leaf for trainable entries, constant otherwise.
    Var operator()(const std::string& name);

    // Adds d(loss)/d(param) into sink for every trainable param touched.
    void accumulate_grads(std::map<std::string, Mat>& sink) const;

private:
    Graph& g_;
    ParamStore& store_;
    std::map<std::string, Var> touched_;
};

struct AdamOptimizer {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;

    // lr_scale multiplies lr (cosine schedules live in the trainer)
    void step(ParamStore& store, const std::map<std::string, Mat>& grads, double lr_scale = 1.0);
};

Mat sinusoidal_positions(int n, int d);
Eigen::RowVectorXd sinusoidal_row(double pos, int d);

} // namespace taste::ad
