#pragma once

#include <vector>

namespace corrstyle {

// Noise schedule for a T-step DDIM chain. Step k (1..T) carries beta_k and
// the cumulative product alpha_bar_k = prod_{j<=k} (1 - beta_j); k = 0 is the
// clean latent with alpha_bar_0 = 1. `model_timesteps[k]` is the timestep
// value handed to the noise predictor (its training-chain index).
struct DiffusionSchedule {
    int total_steps = 0;
    std::vector<double> betas;       // size T, betas[k - 1] is beta_k
    std::vector<double> alpha_bars;  // size T + 1
    std::vector<int> model_timesteps;  // size T + 1

    double alpha_bar(int k) const { return alpha_bars.at(static_cast<std::size_t>(k)); }
    int model_timestep(int k) const { return model_timesteps.at(static_cast<std::size_t>(k)); }

    void validate() const;

    static DiffusionSchedule from_betas(std::vector<double> betas);

    // Stable-Diffusion style "scaled_linear" training schedule subsampled to
    // T DDIM steps with a leading offset of one: k -> (k - 1) * (N / T) + 1.
    static DiffusionSchedule scaled_linear(int total_steps, double beta_start = 0.00085,
                                           double beta_end = 0.012, int train_steps = 1000);
};

}  // namespace corrstyle
