#pragma once

// Random model generators shared by the unit tests and the acceptance suite.

#include "omdp/model.hpp"
#include "omdp/robust_risk.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace omdp::testing {

using Gen = std::mt19937_64;

inline double unif(Gen& g, double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(g); }

inline std::vector<double> random_row(Gen& g, std::size_t n) {
    std::vector<double> r(n);
    double s = 0.0;
    for (auto& x : r) s += (x = -std::log(unif(g, 1e-12, 1.0)));
    for (auto& x : r) x /= s;
    return r;
}

/// Rows ordered in the usual stochastic order (tail sums nondecreasing down
/// the rows); the last row is the point mass on the last column.
inline Matrix random_ifr_matrix(Gen& g, std::size_t rows, std::size_t cols) {
    Matrix tail(rows, cols + 1, 0.0);  // tail(i, l) = sum_{j >= l} P(i, j)
    for (std::size_t i = 0; i < rows; ++i) {
        tail(i, 0) = 1.0;
        for (std::size_t l = 1; l < cols; ++l) {
            const double floor = i ? tail(i - 1, l) : 0.0;
            tail(i, l) = i + 1 == rows ? 1.0 : floor + unif(g) * (tail(i, l - 1) - floor);
        }
    }
    Matrix P(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) P(i, j) = tail(i, j) - tail(i, j + 1);
    return P;
}

inline Matrix random_stochastic(Gen& g, std::size_t n) {
    Matrix P(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = random_row(g, n);
        for (std::size_t j = 0; j < n; ++j) P(i, j) = r[j];
    }
    return P;
}

/// Base model in canonical orientation: death = H-1, no-offer = K-1.
/// `structured` makes transitions and offers IFR and rewards monotone.
inline DiscreteModelSpec random_base_spec(Gen& g, std::size_t H, std::size_t K, double beta, bool structured) {
    DiscreteModelSpec s;
    s.variant = Variant::Base;
    s.discount = beta;
    s.patient = {H, H - 1, Orientation::LargerIsWorse};
    s.organ = {K, K - 1, Orientation::LargerIsWorse};
    Matrix P = structured ? random_ifr_matrix(g, H, H) : random_stochastic(g, H);
    for (std::size_t j = 0; j < H; ++j) P(H - 1, j) = j + 1 == H ? 1.0 : 0.0;
    s.transition = {P};

    s.offer_prob = Matrix(H, K);
    if (structured) {
        const Matrix O = random_ifr_matrix(g, H, K);
        for (std::size_t i = 0; i + 1 < H; ++i)
            for (std::size_t k = 0; k < K; ++k) s.offer_prob(i, k) = O(i, k);
    } else {
        for (std::size_t i = 0; i + 1 < H; ++i) {
            const auto r = random_row(g, K);
            for (std::size_t k = 0; k < K; ++k) s.offer_prob(i, k) = r[k];
        }
    }
    s.offer_prob(H - 1, K - 1) = 1.0;

    std::vector<double> r(H, 0.0);
    for (std::size_t i = 0; i + 1 < H; ++i) r[i] = unif(g, 0.0, 2.0);
    if (structured) std::sort(r.begin(), r.end() - 1, std::greater<>());
    s.wait_reward = {r};

    s.transplant_reward = Matrix(H, K);
    if (structured) {
        // Accumulate positive increments from the worst corner.
        for (std::size_t i = H - 1; i-- > 0;)
            for (std::size_t k = K - 1; k-- > 0;) {
                const double below = i + 2 < H ? s.transplant_reward(i + 1, k) : 0.0;
                const double right = k + 2 < K ? s.transplant_reward(i, k + 1) : 0.0;
                const double diag = (i + 2 < H && k + 2 < K) ? s.transplant_reward(i + 1, k + 1) : 0.0;
                s.transplant_reward(i, k) = below + right - diag + unif(g, 0.0, 6.0);
            }
    } else {
        for (std::size_t i = 0; i + 1 < H; ++i)
            for (std::size_t k = 0; k + 1 < K; ++k) s.transplant_reward(i, k) = unif(g, 0.0, 25.0);
    }
    return s;
}

/// Structured base model whose transplant reward falls along the patient
/// axis no faster than the wait reward: R(h,k) - R(h+1,k) <= r(h) - r(h+1).
inline DiscreteModelSpec random_slow_decline_spec(Gen& g, std::size_t H, std::size_t K, double beta) {
    auto s = random_base_spec(g, H, K, beta, true);
    const std::size_t live = H - 1;
    std::vector<double> r(H, 0.0);
    r[live - 1] = unif(g, 0.2, 1.0);
    for (std::size_t i = live - 1; i-- > 0;) r[i] = r[i + 1] + unif(g, 0.0, 2.0);
    s.wait_reward = {r};
    std::vector<double> last(K - 1);
    for (auto& x : last) x = unif(g, 0.0, 40.0);
    std::sort(last.begin(), last.end(), std::greater<>());
    for (std::size_t k = 0; k + 1 < K; ++k) s.transplant_reward(live - 1, k) = last[k];
    for (std::size_t i = live - 1; i-- > 0;) {
        std::vector<double> c(K - 1);
        for (auto& x : c) x = unif(g);
        std::sort(c.begin(), c.end(), std::greater<>());
        for (std::size_t k = 0; k + 1 < K; ++k)
            s.transplant_reward(i, k) = s.transplant_reward(i + 1, k) + c[k] * (r[i] - r[i + 1]);
    }
    return s;
}

/// Living-donor chain with an IFR transition matrix and rewards decreasing in h.
inline DiscreteModelSpec random_living_donor_spec(Gen& g, std::size_t H, double beta) {
    DiscreteModelSpec s;
    s.variant = Variant::LivingDonor;
    s.discount = beta;
    s.patient = {H, H - 1, Orientation::LargerIsWorse};
    s.organ = {1, 0, Orientation::LargerIsWorse};
    s.transition = {random_ifr_matrix(g, H, H)};
    s.offer_prob = Matrix(H, 1, 1.0);
    std::vector<double> r(H, 0.0), R(H, 0.0);
    for (std::size_t i = 0; i + 1 < H; ++i) {
        r[i] = unif(g, 0.2, 1.5);
        R[i] = unif(g, 2.0, 20.0);
    }
    std::sort(r.begin(), r.end() - 1, std::greater<>());
    std::sort(R.begin(), R.end() - 1, std::greater<>());
    s.wait_reward = {r};
    s.transplant_reward = Matrix(H, 1);
    s.living_donor = LivingDonorOption{0, R};
    return s;
}

/// Three live states plus death with unit wait rewards and a small lifetime law.
inline std::pair<DiscreteModelSpec, RiskSpec> random_risk_model(Gen& g, bool deterministic) {
    DiscreteModelSpec s;
    s.variant = Variant::Base;
    s.discount = 1.0;
    s.patient = {4, 3};
    s.organ = {3, 2};
    s.transition = {Matrix(4, 4)};
    s.offer_prob = Matrix(4, 3);
    for (std::size_t h = 0; h < 3; ++h) {
        const auto row = random_row(g, 4);
        for (std::size_t j = 0; j < 4; ++j) s.transition[0](h, j) = row[j];
        if (deterministic) {
            for (std::size_t j = 0; j < 4; ++j) s.transition[0](h, j) = j == h + 1 ? 1.0 : 0.0;
        }
        const auto o = random_row(g, 3);
        for (std::size_t k = 0; k < 3; ++k) s.offer_prob(h, k) = deterministic ? (k == h % 2 ? 1.0 : 0.0) : o[k];
    }
    s.transition[0](3, 3) = 1.0;
    s.offer_prob(3, 2) = 1.0;
    s.wait_reward = {{1.0, 1.0, 1.0, 0.0}};
    s.transplant_reward = Matrix(4, 3);

    RiskSpec r;
    r.gamma = 1e-6;
    r.lifetime.assign(4, std::vector<std::vector<double>>(3));
    for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t k = 0; k < 2; ++k) {
            if (deterministic) {
                r.lifetime[h][k].assign(8, 0.0);
                r.lifetime[h][k][std::size_t(unif(g, 0.0, 8.0))] = 1.0;
            } else {
                r.lifetime[h][k] = random_row(g, 8);
            }
        }
    return {s, r};
}

inline std::string fixture(const std::string& name) { return std::string(OMDP_FIXTURES) + "/" + name; }

}  // namespace omdp::testing
