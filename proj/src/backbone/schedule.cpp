#include "corrstyle/backbone/schedule.hpp"

#include <cmath>
#include <string>

#include "corrstyle/error.hpp"

namespace corrstyle {

void DiffusionSchedule::validate() const {
    if (total_steps < 1) throw ConfigError("schedule: total_steps must be positive");
    if (betas.size() != std::size_t(total_steps)) {
        throw ConfigError("schedule: expected " + std::to_string(total_steps) + " betas, got " +
                          std::to_string(betas.size()));
    }
    if (alpha_bars.size() != betas.size() + 1 || model_timesteps.size() != betas.size() + 1) {
        throw ConfigError("schedule: derived tables have the wrong length");
    }
    for (std::size_t i = 0; i < betas.size(); ++i) {
        if (!(betas[i] > 0.0 && betas[i] < 1.0)) {
            throw ConfigError("schedule: beta_" + std::to_string(i + 1) + " outside (0, 1)");
        }
        if (alpha_bars[i + 1] > alpha_bars[i]) {
            throw ConfigError("schedule: cumulative alpha increases at step " + std::to_string(i + 1));
        }
    }
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
    DiffusionSchedule s;
    s.total_steps = int(betas.size());
    s.alpha_bars.assign(betas.size() + 1, 1.0);
    s.model_timesteps.resize(betas.size() + 1);
    for (std::size_t i = 0; i < betas.size(); ++i) {
        s.alpha_bars[i + 1] = s.alpha_bars[i] * (1.0 - betas[i]);
        s.model_timesteps[i + 1] = int(i + 1);
    }
    s.model_timesteps[0] = 0;
    s.betas = std::move(betas);
    s.validate();
    return s;
}

DiffusionSchedule DiffusionSchedule::scaled_linear(int total_steps, double beta_start,
                                                   double beta_end, int train_steps) {
    if (total_steps < 1 || train_steps < total_steps) {
        throw ConfigError("schedule: need 1 <= total_steps <= train_steps");
    }
    std::vector<double> train_alpha_bar(static_cast<std::size_t>(train_steps));
    const double a = std::sqrt(beta_start), b = std::sqrt(beta_end);
    double acc = 1.0;
    for (int i = 0; i < train_steps; ++i) {
        const double root = train_steps == 1 ? a : a + (b - a) * double(i) / double(train_steps - 1);
        acc *= 1.0 - root * root;
        train_alpha_bar[std::size_t(i)] = acc;
    }
    const int stride = train_steps / total_steps;
    DiffusionSchedule s;
    s.total_steps = total_steps;
    s.alpha_bars.assign(std::size_t(total_steps) + 1, 1.0);
    s.model_timesteps.assign(std::size_t(total_steps) + 1, 0);
    s.betas.resize(std::size_t(total_steps));
    for (int k = 1; k <= total_steps; ++k) {
        const int idx = std::min((k - 1) * stride + 1, train_steps - 1);
        s.model_timesteps[std::size_t(k)] = idx;
        s.alpha_bars[std::size_t(k)] = train_alpha_bar[std::size_t(idx)];
        s.betas[std::size_t(k - 1)] = 1.0 - s.alpha_bars[std::size_t(k)] / s.alpha_bars[std::size_t(k - 1)];
    }
    s.validate();
    return s;
}

}  // namespace corrstyle
