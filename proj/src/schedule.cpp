#include "neurodiff/schedule.hpp"

#include <nlohmann/json.hpp>

#include "neurodiff/error.hpp"

namespace neurodiff {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : m_beta_start(beta_start), m_beta_end(beta_end) {
    if (steps < 1) {
        throw Error(Errc::invalid_parameter, "schedule needs at least one step");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw Error(Errc::invalid_parameter, "require 0 < beta_start <= beta_end < 1");
    }
    const auto n = static_cast<std::size_t>(steps);
    m_beta.resize(n);
    m_alpha.resize(n);
    m_alpha_bar.resize(n);
    double running = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double frac = n == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(n - 1);
        m_beta[t] = beta_start + (beta_end - beta_start) * frac;
        m_alpha[t] = 1.0 - m_beta[t];
        running *= m_alpha[t];
        m_alpha_bar[t] = running;
    }
}

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
    return NoiseSchedule(steps, beta_start, beta_end);
}

std::vector<int> ddim_timesteps(int steps, int count) {
    if (count < 1 || steps < 1 || count > steps) {
        throw Error(Errc::invalid_parameter, "inference step count must lie in [1, T]");
    }
    const int stride = steps / count;
    std::vector<int> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = steps - 1 - stride * (count - 1 - i);
    }
    return out;
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
    j = nlohmann::json{{"T", s.steps()}, {"beta_start", s.beta_start()}, {"beta_end", s.beta_end()}};
}

void from_json(const nlohmann::json& j, NoiseSchedule& s) {
    s = NoiseSchedule(j.at("T").get<int>(), j.at("beta_start").get<double>(),
                      j.at("beta_end").get<double>());
}

}  // namespace neurodiff
