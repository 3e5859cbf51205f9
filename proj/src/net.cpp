#include "p4d/net.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace p4d {

void Mlp::Grads::setZero() {
    for (auto& l : layers) {
        l.w.setZero();
        l.b.setZero();
    }
}

Mlp::Mlp(const std::vector<int>& sizes, uint64_t seed) {
    if (sizes.size() < 2) throw std::invalid_argument("mlp: need >= 2 layer sizes");
    Rng rng(mix_seed(seed, 0x6d6c70));
    for (size_t i = 0; i + 1 < sizes.size(); ++i) {
        Layer l;
        const double scale = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
        l.w = rng.normal_mat(sizes[i + 1], sizes[i]) * scale;
        l.b = Vec::Zero(sizes[i + 1]);
        layers_.push_back(std::move(l));
    }
}

Vec Mlp::forward(const Vec& in) const {
    Vec h = in;
    for (size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].w * h + layers_[i].b;
        if (i + 1 < layers_.size()) h = h.array().tanh().matrix();
    }
    return h;
}

Vec Mlp::forward(const Vec& in, Tape& tape) const {
    tape.input = in;
    tape.post.clear();
    Vec h = in;
    for (size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].w * h + layers_[i].b;
        if (i + 1 < layers_.size()) h = h.array().tanh().matrix();
        tape.post.push_back(h);
    }
    return h;
}

Vec Mlp::backward(const Tape& tape, const Vec& out_grad, Grads* grads) const {
    Vec g = out_grad;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
        if (i + 1 < static_cast<int>(layers_.size())) {
            // through tanh: y = tanh(pre), dy/dpre = 1 - y^2
            const Vec& y = tape.post[i];
            g = (g.array() * (1.0 - y.array().square())).matrix();
        }
        const Vec& in = (i == 0) ? tape.input : tape.post[i - 1];
        if (grads) {
            grads->layers[i].w += g * in.transpose();
            grads->layers[i].b += g;
        }
        g = layers_[i].w.transpose() * g;
    }
    return g;
}

Mlp::Grads Mlp::zero_grads() const {
    Grads g;
    for (const auto& l : layers_) {
        Mlp::Layer z;
        z.w = Mat::Zero(l.w.rows(), l.w.cols());
        z.b = Vec::Zero(l.b.size());
        g.layers.push_back(std::move(z));
    }
    return g;
}

uint64_t Mlp::checksum() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double x) {
        uint64_t bits;
        std::memcpy(&bits, &x, sizeof(bits));
        for (int s = 0; s < 64; s += 8) {
            h ^= (bits >> s) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& l : layers_) {
        for (int r = 0; r < l.w.rows(); ++r)
            for (int c = 0; c < l.w.cols(); ++c) mix(l.w(r, c));
        for (int i = 0; i < l.b.size(); ++i) mix(l.b[i]);
    }
    return h;
}

void Mlp::write(std::ostream& os) const {
    const uint32_t n = static_cast<uint32_t>(layers_.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& l : layers_) {
        const uint32_t rows = static_cast<uint32_t>(l.w.rows());
        const uint32_t cols = static_cast<uint32_t>(l.w.cols());
        os.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        os.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        for (int r = 0; r < l.w.rows(); ++r)
            for (int c = 0; c < l.w.cols(); ++c) {
                const double x = l.w(r, c);
                os.write(reinterpret_cast<const char*>(&x), sizeof(x));
            }
        for (int i = 0; i < l.b.size(); ++i) {
            const double x = l.b[i];
            os.write(reinterpret_cast<const char*>(&x), sizeof(x));
        }
    }
}

Mlp Mlp::read(std::istream& is) {
    uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    Mlp net;
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t rows = 0, cols = 0;
        is.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        is.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        Layer l;
        l.w.resize(rows, cols);
        l.b.resize(rows);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t c = 0; c < cols; ++c) {
                double x;
                is.read(reinterpret_cast<char*>(&x), sizeof(x));
                l.w(r, c) = x;
            }
        for (uint32_t r = 0; r < rows; ++r) {
            double x;
            is.read(reinterpret_cast<char*>(&x), sizeof(x));
            l.b[r] = x;
        }
        net.layers_.push_back(std::move(l));
    }
    if (!is) throw std::runtime_error("mlp: truncated stream");
    return net;
}

AdamTrainer::AdamTrainer(Mlp& net, double lr, double weight_decay)
    : net_(net), lr_(lr), wd_(weight_decay) {
    for (const auto& l : net.layers()) {
        Mlp::Layer z;
        z.w = Mat::Zero(l.w.rows(), l.w.cols());
        z.b = Vec::Zero(l.b.size());
        m_.push_back(z);
        v_.push_back(std::move(z));
    }
}

void AdamTrainer::apply(const Mlp::Grads& grads) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (size_t i = 0; i < net_.layers().size(); ++i) {
        auto& l = net_.layers()[i];
        const auto& g = grads.layers[i];
        m_[i].w = b1 * m_[i].w + (1.0 - b1) * g.w;
        v_[i].w = b2 * v_[i].w.array().matrix() + (1.0 - b2) * g.w.array().square().matrix();
        m_[i].b = b1 * m_[i].b + (1.0 - b1) * g.b;
        v_[i].b = b2 * v_[i].b.array().matrix() + (1.0 - b2) * g.b.array().square().matrix();
        l.w -= lr_ * ((m_[i].w / c1).array() / ((v_[i].w / c2).array().sqrt() + eps)).matrix();
        l.b -= lr_ * ((m_[i].b / c1).array() / ((v_[i].b / c2).array().sqrt() + eps)).matrix();
        if (wd_ > 0.0) {
            l.w -= lr_ * wd_ * l.w;
            l.b -= lr_ * wd_ * l.b;
        }
    }
}

}  // namespace p4d
