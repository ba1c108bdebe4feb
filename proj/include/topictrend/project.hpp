#ifndef TOPICTREND_PROJECT_HPP
#define TOPICTREND_PROJECT_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topictrend/common.hpp"

/**
 * @file project.hpp
 *
 * Exact (O(n^2)) t-SNE: perplexity-calibrated Gaussian affinities in the
 * input space, Student-t affinities in 2-D, gradient descent on KL(P || Q)
 * with early exaggeration, a momentum switch and per-coordinate adaptive
 * gains. Initialisation is deterministic (first two principal components).
 */

namespace topictrend {

enum class TsneInit { pca, random };

struct TsneConfig {
    double perplexity = 30.0;
    double learning_rate = 200.0;
    std::size_t iterations = 1000;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    TsneInit init = TsneInit::pca;
    std::uint64_t seed = 0;  // only used by TsneInit::random
    std::size_t kl_checkpoint_every = 50;

    void validate(std::size_t n) const {
        if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n) / 3.0))
            throw ArgumentError("perplexity must satisfy 1 < perplexity < n/3 (n=" + std::to_string(n) + ")");
        if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
        if (iterations < 1) throw ArgumentError("iterations must be >= 1");
        if (!(early_exaggeration >= 1.0)) throw ArgumentError("early_exaggeration must be >= 1");
    }
};

inline constexpr double kAffinityFloor = 1e-12;

/// Symmetric joint probabilities plus the per-row Gaussian precision
/// beta_i = 1 / (2 sigma_i^2) that was calibrated.
struct Affinities {
    Matrix p;
    std::vector<double> beta;
};

namespace detail {

/// Conditional distribution of row i under precision beta; returns its
/// entropy in bits. `row_sq` holds squared distances, entry i ignored.
inline double conditional_row(std::span<const double> row_sq, std::size_t i, double beta, std::span<double> out) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row_sq.size(); ++j)
        if (j != i) dmin = std::min(dmin, row_sq[j]);
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < row_sq.size(); ++j) {
        if (j == i) {
            out[j] = 0.0;
            continue;
        }
        const double shifted = row_sq[j] - dmin;
        out[j] = std::exp(-beta * shifted);
        sum += out[j];
        weighted += shifted * out[j];
    }
    for (auto& v : out) v /= sum;
    // H = ln(sum) + beta * E[d - dmin], in nats.
    return (std::log(sum) + beta * weighted / sum) / std::log(2.0);
}

}  // namespace detail

/// Per-row bisection on beta so the conditional entropy equals
/// log2(perplexity) within 1e-5 bits (at most 50 steps), then
/// P = (P_cond + P_cond^T) / (2n) with off-diagonal entries floored at 1e-12
/// and renormalised to sum 1.
inline Affinities calibrate_affinities(const Matrix& points, double perplexity) {
    const std::size_t n = points.rows();
    if (n < 3) throw ArgumentError("calibrate_affinities: need at least 3 points");
    if (!(perplexity > 1.0) || !(perplexity <= static_cast<double>(n - 1)))
        throw ArgumentError("calibrate_affinities: perplexity must lie in (1, n-1]");

    const double target = std::log2(perplexity);
    Matrix cond(n, n);
    std::vector<double> beta(n, 1.0);
    std::vector<std::uint8_t> ok(n, 0);

    parallel_for(n, [&](std::size_t i) {
        std::vector<double> sq(n);
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sq[j] = j == i ? 0.0 : squared_distance(points.row(i), points.row(j));
            mean += sq[j];
        }
        mean /= static_cast<double>(n - 1);
        double b = mean > 0.0 ? 1.0 / mean : 1.0;
        double lo = 0.0, hi = std::numeric_limits<double>::infinity();
        auto out = cond.row(i);
        for (int step = 0; step < 50; ++step) {
            const double h = detail::conditional_row(sq, i, b, out);
            const double diff = h - target;
            if (std::abs(diff) < 1e-5) {
                ok[i] = 1;
                break;
            }
            if (diff > 0) {  // too flat: sharpen
                lo = b;
                b = std::isinf(hi) ? b * 2.0 : 0.5 * (b + hi);
            } else {
                hi = b;
                b = 0.5 * (b + lo);
            }
        }
        if (!ok[i]) {
            // the loop may exit on the last step with a value computed for an
            // unevaluated beta; re-check the final precision
            const double h = detail::conditional_row(sq, i, b, out);
            ok[i] = std::abs(h - target) < 1e-5;
        }
        beta[i] = b;
    });
    for (std::size_t i = 0; i < n; ++i)
        if (!ok[i]) throw ComputeError("perplexity calibration did not converge for row " + std::to_string(i));

    Affinities a;
    a.beta = std::move(beta);
    a.p = Matrix(n, n);
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double v = std::max((cond(i, j) + cond(j, i)) * scale, kAffinityFloor);
            a.p(i, j) = v;
            total += v;
        }
    for (auto& v : a.p.values()) v /= total;
    return a;
}

namespace detail {

/// Unnormalised Student-t kernel 1/(1+|y_i-y_j|^2) (zero diagonal) and its sum.
inline std::pair<Matrix, double> student_kernel(const Matrix& y) {
    const std::size_t n = y.rows();
    Matrix w(n, n);
    std::vector<double> row_sum(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            w(i, j) = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
            row_sum[i] += w(i, j);
        }
    });
    double z = 0.0;
    for (double s : row_sum) z += s;
    return {std::move(w), z};
}

inline Matrix gradient_with_kernel(const Matrix& p, const Matrix& y, const Matrix& w, double z, double exaggeration) {
    const std::size_t n = y.rows(), dim = y.cols();
    Matrix g(n, dim);
    parallel_for(n, [&](std::size_t i) {
        auto gi = g.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double mult = (exaggeration * p(i, j) - w(i, j) / z) * w(i, j);
            for (std::size_t d = 0; d < dim; ++d) gi[d] += 4.0 * mult * (y(i, d) - y(j, d));
        }
    });
    return g;
}

inline double kl_with_kernel(const Matrix& p, const Matrix& w, double z) {
    const std::size_t n = p.rows();
    std::vector<double> row(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || p(i, j) <= 0.0) continue;
            const double q = std::max(w(i, j) / z, std::numeric_limits<double>::min());
            row[i] += p(i, j) * std::log(p(i, j) / q);
        }
    });
    double kl = 0.0;
    for (double r : row) kl += r;
    return kl;
}

}  // namespace detail

/// KL(P || Q) for the embedding y.
inline double kl_divergence(const Matrix& p, const Matrix& y) {
    const auto [w, z] = detail::student_kernel(y);
    return detail::kl_with_kernel(p, w, z);
}

/// Analytic gradient dKL/dy: 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2).
inline Matrix kl_gradient(const Matrix& p, const Matrix& y) {
    const auto [w, z] = detail::student_kernel(y);
    return detail::gradient_with_kernel(p, y, w, z, 1.0);
}

/// First two principal-component scores, each eigenvector's largest-magnitude
/// entry made positive, scaled so the first coordinate has standard deviation 1e-4.
inline Matrix pca_initialisation(const Matrix& points) {
    const std::size_t n = points.rows(), dim = points.cols();
    Eigen::MatrixXd x(n, dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d) x(i, d) = points(i, d);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Matrix y(n, 2);
    for (std::size_t c = 0; c < 2; ++c) {
        if (c >= dim) break;
        Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(dim - 1 - c));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        const Eigen::VectorXd scores = x * v;
        for (std::size_t i = 0; i < n; ++i) y(i, c) = scores(static_cast<Eigen::Index>(i));
    }
    double mean0 = 0.0, var0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean0 += y(i, 0);
    mean0 /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) var0 += (y(i, 0) - mean0) * (y(i, 0) - mean0);
    const double sd = std::sqrt(var0 / static_cast<double>(n));
    if (sd > 0.0)
        for (auto& v : y.values()) v *= 1e-4 / sd;
    return y;
}

struct Projection2D {
    Matrix coords;  // n x 2, rows aligned to the input
    double kl = 0.0;
    std::vector<std::pair<std::size_t, double>> kl_trace;  // (iteration, KL)
};

inline Projection2D tsne_project(const Matrix& points, const TsneConfig& config) {
    const std::size_t n = points.rows();
    config.validate(n);
    const Affinities aff = calibrate_affinities(points, config.perplexity);
    const Matrix& p = aff.p;

    Matrix y;
    if (config.init == TsneInit::pca) {
        y = pca_initialisation(points);
    } else {
        std::mt19937_64 rng(config.seed);
        y = Matrix(n, 2);
        for (auto& v : y.values()) v = 1e-4 * standard_normal(rng);
    }

    Matrix update(n, 2), gains(n, 2, 1.0);
    Projection2D out;
    for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
        const double exaggeration = iter <= config.exaggeration_iterations ? config.early_exaggeration : 1.0;
        const double momentum = iter <= config.momentum_switch ? config.initial_momentum : config.final_momentum;
        const auto [w, z] = detail::student_kernel(y);
        const Matrix g = detail::gradient_with_kernel(p, y, w, z, exaggeration);

        for (std::size_t k = 0; k < y.values().size(); ++k) {
            auto& gain = gains.values()[k];
            auto& u = update.values()[k];
            const double gk = g.values()[k];
            gain = (gk > 0.0) != (u > 0.0) ? gain + 0.2 : gain * 0.8;
            gain = std::max(gain, 0.01);
            u = momentum * u - config.learning_rate * gain * gk;
            y.values()[k] += u;
            if (!std::isfinite(y.values()[k]))
                throw ComputeError("t-SNE diverged (non-finite coordinate) at iteration " + std::to_string(iter));
        }
        for (std::size_t c = 0; c < 2; ++c) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += y(i, c);
            m /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, c) -= m;
        }

        const bool checkpoint = iter == config.iterations || iter == config.exaggeration_iterations ||
                                (config.kl_checkpoint_every > 0 && iter % config.kl_checkpoint_every == 0);
        if (checkpoint) {
            const double kl = kl_divergence(p, y);
            if (!std::isfinite(kl)) throw ComputeError("t-SNE KL became NaN at iteration " + std::to_string(iter));
            out.kl_trace.emplace_back(iter, kl);
        }
    }
    out.kl = out.kl_trace.back().second;
    out.coords = std::move(y);
    return out;
}

inline void write_kl_csv(std::ostream& os, const Projection2D& proj) {
    os << "iteration,kl\n";
    for (const auto& [it, kl] : proj.kl_trace) os << it << ',' << format_double(kl) << '\n';
}

}  // namespace topictrend

#endif  // TOPICTREND_PROJECT_HPP
