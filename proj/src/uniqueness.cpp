#include "repmkt/uniqueness.hpp"

#include "repmkt/math_util.hpp"
#include "repmkt/parallel.hpp"
#include "repmkt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace repmkt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sign and log-magnitude of det(m) by LU with partial pivoting in extended
/// precision. Pivot magnitudes are accumulated in logs, so determinants far
/// below double range keep their sign.
struct LogDet {
    int sign = 0; // -1, 0, +1
    double log_abs = -kInf;
};

LogDet log_det(const Mat& m) {
    const int n = static_cast<int>(m.rows());
    std::vector<long double> a(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a[static_cast<size_t>(i) * n + j] = m(i, j);

    LogDet result;
    result.sign = 1;
    result.log_abs = 0.0;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        long double best = std::abs(a[static_cast<size_t>(k) * n + k]);
        for (int i = k + 1; i < n; ++i) {
            const long double cand = std::abs(a[static_cast<size_t>(i) * n + k]);
            if (cand > best) {
                best = cand;
                piv = i;
            }
        }
        if (best == 0.0L) return LogDet{0, -kInf};
        if (piv != k) {
            for (int j = 0; j < n; ++j)
                std::swap(a[static_cast<size_t>(piv) * n + j], a[static_cast<size_t>(k) * n + j]);
            result.sign = -result.sign;
        }
        const long double pivot = a[static_cast<size_t>(k) * n + k];
        if (pivot < 0.0L) result.sign = -result.sign;
        result.log_abs += static_cast<double>(std::log(std::abs(pivot)));
        for (int i = k + 1; i < n; ++i) {
            const long double f = a[static_cast<size_t>(i) * n + k] / pivot;
            if (f == 0.0L) continue;
            for (int j = k + 1; j < n; ++j)
                a[static_cast<size_t>(i) * n + j] -= f * a[static_cast<size_t>(k) * n + j];
        }
    }
    return result;
}

Mat principal_submatrix(const Mat& m, const std::vector<int>& idx) {
    const int k = static_cast<int>(idx.size());
    Mat s(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) s(i, j) = m(idx[i], idx[j]);
    return s;
}

std::string describe_subset(const std::vector<int>& idx) {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
    os << "}";
    return os.str();
}

} // namespace

PMatrixReport is_p_matrix_report(const Mat& m, std::uint64_t seed, int samples) {
    if (m.rows() != m.cols()) throw DimensionMismatchError("is_p_matrix: non-square input");
    const int n = static_cast<int>(m.rows());
    PMatrixReport report;
    report.is_p = true;
    report.worst_log_minor = kInf;

    auto check = [&](const std::vector<int>& idx) {
        const LogDet d = log_det(principal_submatrix(m, idx));
        ++report.minors_checked;
        if (d.sign <= 0) {
            report.is_p = false;
            report.failure = "principal minor " + describe_subset(idx) +
                             (d.sign == 0 ? " is zero" : " is negative");
            return false;
        }
        report.worst_log_minor = std::min(report.worst_log_minor, d.log_abs);
        return true;
    };

    if (n <= 12) {
        for (unsigned long mask = 1; mask < (1UL << n); ++mask) {
            std::vector<int> idx;
            for (int i = 0; i < n; ++i)
                if (mask & (1UL << i)) idx.push_back(i);
            if (!check(idx)) return report;
        }
        return report;
    }

    report.sampled = true;
    // Leading principal minors, full size.
    std::vector<int> lead;
    for (int k = 0; k < n; ++k) {
        lead.push_back(k);
        if (!check(lead)) return report;
    }
    // Seeded random principal submatrices of order <= 12.
    Rng rng(seed, 0);
    for (int s = 0; s < samples; ++s) {
        const int k = 1 + static_cast<int>(rng.next_u64() % 12);
        std::vector<int> idx;
        while (static_cast<int>(idx.size()) < k) {
            const int cand = static_cast<int>(rng.next_u64() % n);
            if (std::find(idx.begin(), idx.end(), cand) == idx.end()) idx.push_back(cand);
        }
        std::sort(idx.begin(), idx.end());
        if (!check(idx)) return report;
    }
    return report;
}

bool is_p_matrix(const Mat& m) { return is_p_matrix_report(m).is_p; }

bool is_diagonally_dominant(const Mat& m, const Vec& weights) {
    if (m.rows() != m.cols()) throw DimensionMismatchError("is_diagonally_dominant: non-square");
    if (weights.size() != m.rows())
        throw InvalidWeightsError("is_diagonally_dominant: weight length mismatch");
    for (Index i = 0; i < weights.size(); ++i)
        if (!(weights(i) > 0.0)) throw InvalidWeightsError("weights must be strictly positive");
    const int n = static_cast<int>(m.rows());
    for (int j = 0; j < n; ++j) {
        double margin = weights(j) * std::abs(m(j, j));
        for (int i = 0; i < n; ++i)
            if (i != j) margin -= weights(i) * std::abs(m(j, i));
        if (!(margin > 0.0)) return false;
    }
    return true;
}

JacobianBundle assemble_jacobian(const EquilibriumSolution& solution, const ModelParams& params,
                                 const TransitionKernel& kernel, const CostDistribution& cost) {
    if (!solution.converged)
        throw StaleSolutionError("assemble_jacobian: solution did not converge");
    const int n = static_cast<int>(kernel.size());
    const int nn = 2 * n;
    if (solution.beliefs.theta_hat.size() != n)
        throw DimensionMismatchError("assemble_jacobian: solution does not match kernel");

    JacobianBundle b;
    b.n_states = n;
    b.s_diag.resize(nn);
    b.r_diag.resize(nn);
    b.exit.resize(nn);
    b.leave_prob.resize(nn);
    b.dg1 = Mat::Zero(nn, nn);
    b.dg2 = Mat::Zero(nn, nn);
    b.off12 = Mat::Zero(nn, nn);
    b.off21 = Mat::Zero(nn, nn);

    for (QualityType t : kTypes) {
        const int ti = type_index(t);
        const Mat& pi = kernel.of(t);
        const Vec& cut = solution.cutoffs.of(t);
        const Vec sdiag = continuation_derivative(cut, cost, params.payoff_variant);
        for (int w = 0; w < n; ++w) {
            const int row = ti * n + w;
            b.s_diag(row) = sdiag(w);
            b.r_diag(row) = solution.survival[ti](w);
            b.exit(row) = solution.exit_prob[ti](w);
            double leave = 0.0;
            for (int v = 0; v < n; ++v)
                if (v != w) leave += pi(w, v);
            b.leave_prob(row) = leave;
        }
        // dg1 block: beta * Pi * S - I
        for (int w = 0; w < n; ++w)
            for (int v = 0; v < n; ++v)
                b.dg1(ti * n + w, ti * n + v) =
                    params.beta * pi(w, v) * sdiag(v) - (w == v ? 1.0 : 0.0);
        // dg2 block: Pi' * R - I
        for (int w = 0; w < n; ++w)
            for (int v = 0; v < n; ++v)
                b.dg2(ti * n + w, ti * n + v) =
                    pi(v, w) * solution.survival[ti](v) - (w == v ? 1.0 : 0.0);
        // off21: d g2[t,w'] / d cbar[t,w] = pi(w,w') f(cbar) mu, via logs to
        // pair tiny densities with huge masses.
        for (int w = 0; w < n; ++w) {
            const double f = cost.pdf(cut(w));
            if (f <= 0.0) continue;
            const double lfm = std::log(f) + solution.masses.log_mass[ti](w);
            if (lfm == -kInf) continue;
            const double fm = std::exp(lfm);
            for (int v = 0; v < n; ++v)
                if (pi(w, v) != 0.0) b.off21(ti * n + v, ti * n + w) = pi(w, v) * fm;
        }
    }

    // off12: belief channel, local in the state.
    const double spread = params.theta_high - params.theta_low;
    const Vec& llo = solution.masses.log_mass[0];
    const Vec& lhi = solution.masses.log_mass[1];
    for (int w = 0; w < n; ++w) {
        if (llo(w) == -kInf && lhi(w) == -kInf) {
            ++b.zero_mass_states;
            continue; // unreachable state: no belief sensitivity recorded
        }
        const double ltot = log_sum_exp(llo(w), lhi(w));
        // d theta_hat / d mu_high = spread * mu_low / tot^2, and the mirror
        // image for mu_low; formed in logs so huge masses stay meaningful.
        const double d_theta_d_mu_high = llo(w) == -kInf ? 0.0 : spread * std::exp(llo(w) - 2.0 * ltot);
        const double d_theta_d_mu_low = lhi(w) == -kInf ? 0.0 : -spread * std::exp(lhi(w) - 2.0 * ltot);
        const double th = solution.beliefs.theta_hat(w);
        const double dflow = params.demand_gamma0 + 2.0 * params.demand_gamma1 * th;
        for (QualityType t : kTypes) {
            const int row = type_index(t) * n + w;
            b.off12(row, 0 * n + w) = dflow * d_theta_d_mu_low;
            b.off12(row, 1 * n + w) = dflow * d_theta_d_mu_high;
        }
    }
    return b;
}

namespace {

/// -Dg with the stationarity diagonal assembled from exit and leave masses
/// (exit + F * leave) instead of 1 - pi*F, which would round to zero at
/// quasi-absorbing states.
Mat assemble_minus_dg(const JacobianBundle& b, const ModelParams& params,
                      const TransitionKernel& kernel) {
    const int n = b.n_states;
    const int nn = 2 * n;
    Mat m = Mat::Zero(2 * nn, 2 * nn);
    m.topLeftCorner(nn, nn) = -b.dg1;
    m.topRightCorner(nn, nn) = -b.off12;
    m.bottomLeftCorner(nn, nn) = -b.off21;
    m.bottomRightCorner(nn, nn) = -b.dg2;
    for (QualityType t : kTypes) {
        const int ti = type_index(t);
        const Mat& pi = kernel.of(t);
        for (int w = 0; w < n; ++w) {
            const int row = ti * n + w;
            double leave_mass = 0.0;
            for (int v = 0; v < n; ++v)
                if (v != w) leave_mass += pi(w, v);
            m(nn + row, nn + row) = b.exit(row) + b.r_diag(row) * leave_mass;
        }
    }
    (void)params;
    return m;
}

} // namespace

UniquenessReport verify_uniqueness_at(const EquilibriumSolution& solution,
                                      const ModelParams& params, const TransitionKernel& kernel,
                                      const CostDistribution& cost) {
    const JacobianBundle b = assemble_jacobian(solution, params, kernel, cost);
    const int nn = 2 * b.n_states;
    UniquenessReport report;
    report.zero_mass_states = b.zero_mass_states;

    // Dg1 dominance, weights s^{-1}; scalar reduction: margin_j = 1/s_j - beta.
    {
        DominanceReport& d = report.dg1_dominance;
        d.holds = true;
        d.min_margin = kInf;
        bool weights_ok = true;
        Vec weights(nn);
        for (int j = 0; j < nn; ++j) {
            if (!(b.s_diag(j) > 0.0)) {
                weights_ok = false;
                break;
            }
            weights(j) = 1.0 / b.s_diag(j);
            const double margin = weights(j) - params.beta;
            if (margin < d.min_margin) {
                d.min_margin = margin;
                d.argmin_row = j;
            }
            if (!(margin > 0.0)) d.holds = false;
        }
        if (!weights_ok) {
            d.holds = false;
            d.min_margin = -kInf;
            report.notes += "dg1: nonpositive S diagonal entry; ";
        } else {
            d.matrix_test_agrees = (is_diagonally_dominant(b.dg1, weights) == d.holds);
        }
    }

    // Dg2 dominance on the transpose form Pi*R - I with weights F^{-1};
    // scalar reduction: margin_j = 1/F_j - 1 = exit_j / (1 - exit_j).
    {
        DominanceReport& d = report.dg2_dominance;
        d.holds = true;
        d.min_margin = kInf;
        for (int j = 0; j < nn; ++j) {
            const double e = b.exit(j);
            const double margin = e < 1.0 ? e / (1.0 - e) : kInf;
            if (margin < d.min_margin) {
                d.min_margin = margin;
                d.argmin_row = j;
            }
            if (!(margin > 0.0)) d.holds = false;
        }
        // Literal matrix evaluation of Pi*R - I (type-stacked); at quasi-
        // absorbing states double rounding collapses its margins to zero, so
        // disagreement is reported rather than treated as failure.
        Mat m2 = Mat::Zero(nn, nn);
        bool weights_ok = true;
        Vec weights(nn);
        for (int j = 0; j < nn; ++j) {
            if (!(b.r_diag(j) > 0.0)) {
                weights_ok = false;
                break;
            }
            weights(j) = 1.0 / b.r_diag(j);
        }
        if (weights_ok) {
            for (QualityType t : kTypes) {
                const int ti = type_index(t);
                const Mat& pi = kernel.of(t);
                const int n = b.n_states;
                for (int w = 0; w < n; ++w)
                    for (int v = 0; v < n; ++v)
                        m2(ti * n + w, ti * n + v) =
                            pi(w, v) * b.r_diag(ti * n + v) - (w == v ? 1.0 : 0.0);
            }
            d.matrix_test_agrees = (is_diagonally_dominant(m2, weights) == d.holds);
        } else {
            d.holds = false;
            report.notes += "dg2: zero survival entry; ";
        }
    }

    report.off12_norm = b.off12.cwiseAbs().rowwise().sum().maxCoeff();
    report.off21_norm = b.off21.cwiseAbs().rowwise().sum().maxCoeff();

    // The entry measure enters the coupling blocks as a pure similarity
    // scaling (masses linearly, belief sensitivities inversely), so the
    // P-matrix verdict is evaluated at the canonical unit entry mass; this
    // keeps the verdict exactly invariant under entry rescaling instead of
    // merely invariant up to round-off.
    JacobianBundle scaled = b;
    scaled.off12 *= params.entry_mass;
    scaled.off21 /= params.entry_mass;
    report.p_matrix = is_p_matrix_report(assemble_minus_dg(scaled, params, kernel));
    report.overall =
        report.dg1_dominance.holds && report.dg2_dominance.holds && report.p_matrix.is_p;
    return report;
}

BetaBarResult estimate_beta_bar(const ModelParams& params, const StateSpace& space,
                                const TransitionKernel& kernel, const CostDistribution& cost,
                                const std::vector<double>& beta_grid,
                                const SolveOptions& options) {
    for (size_t i = 0; i + 1 < beta_grid.size(); ++i)
        if (!(beta_grid[i] < beta_grid[i + 1]))
            throw InvalidParameterError("beta grid must be strictly increasing");
    for (double bta : beta_grid)
        if (!(bta > 0.0 && bta < 1.0))
            throw InvalidParameterError("beta grid must lie inside (0,1)");

    BetaBarResult result;
    result.points.resize(beta_grid.size());
    parallel_for(beta_grid.size(), [&](size_t i) {
        BetaBarPoint& pt = result.points[i];
        pt.beta = beta_grid[i];
        ModelParams p = params;
        p.beta = beta_grid[i];
        try {
            const EquilibriumSolution sol = solve_equilibrium(p, space, kernel, cost, options);
            pt.solved = true;
            pt.passed = verify_uniqueness_at(sol, p, kernel, cost).overall;
        } catch (const ModelError& err) {
            pt.solved = false;
            pt.note = err.what();
        }
    });

    // Smallest grid point from which every later solved point passes.
    std::optional<size_t> start;
    bool seen_pass = false;
    for (size_t i = 0; i < result.points.size(); ++i) {
        const auto& pt = result.points[i];
        if (!pt.solved) continue;
        if (pt.passed) {
            if (!start) start = i;
            seen_pass = true;
        } else {
            if (seen_pass) result.monotone = false;
            start.reset();
        }
    }
    if (start) result.beta_bar = result.points[*start].beta;
    return result;
}

} // namespace repmkt
