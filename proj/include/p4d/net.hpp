#pragma once

#include <iosfwd>
#include <vector>

#include "p4d/common.hpp"

namespace p4d {

/// Dense feed-forward net with tanh hidden layers and a linear output.
/// Small enough that forward/backward are written out by hand.
class Mlp {
  public:
    struct Layer {
        Mat w;  // out x in
        Vec b;
    };

    struct Tape {
        Vec input;
        std::vector<Vec> post;  // activation outputs per layer
    };

    struct Grads {
        std::vector<Layer> layers;
        void setZero();
    };

    Mlp() = default;
    Mlp(const std::vector<int>& sizes, uint64_t seed);

    int input_dim() const { return static_cast<int>(layers_.front().w.cols()); }
    int output_dim() const { return static_cast<int>(layers_.back().w.rows()); }

    Vec forward(const Vec& in) const;
    Vec forward(const Vec& in, Tape& tape) const;

    // Backprop of out_grad through the tape. Returns dL/dinput; if grads is
    // non-null, accumulates parameter gradients into it.
    Vec backward(const Tape& tape, const Vec& out_grad, Grads* grads = nullptr) const;

    Grads zero_grads() const;
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    uint64_t checksum() const;

    void write(std::ostream& os) const;
    static Mlp read(std::istream& is);

  private:
    std::vector<Layer> layers_;
};

/// Adam with optional decoupled weight decay, over Mlp parameters.
class AdamTrainer {
  public:
    AdamTrainer(Mlp& net, double lr, double weight_decay = 0.0);
    void apply(const Mlp::Grads& grads);

  private:
    Mlp& net_;
    double lr_, wd_;
    long step_ = 0;
    std::vector<Mlp::Layer> m_, v_;
};

}  // namespace p4d
