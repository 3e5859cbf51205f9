#pragma once

#include <cmath>
#include <stdexcept>

namespace p4d {

/// Linear alpha-bar noise schedule: abar(0) = 1, abar(T) = 0, strictly
/// decreasing in between.
class NoiseSchedule {
  public:
    explicit NoiseSchedule(int max_t) : max_t_(max_t) {
        if (max_t < 1) throw std::invalid_argument("schedule: T must be >= 1");
    }

    int max_timestep() const { return max_t_; }

    double alpha_bar(int t) const {
        if (t < 0 || t > max_t_)
            throw std::out_of_range("schedule: timestep out of range");
        return 1.0 - static_cast<double>(t) / static_cast<double>(max_t_);
    }

    double signal_coeff(int t) const { return std::sqrt(alpha_bar(t)); }
    double noise_coeff(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

  private:
    int max_t_;
};

}  // namespace p4d
