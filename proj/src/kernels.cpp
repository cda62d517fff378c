#include "repmkt/kernels.hpp"

#include "repmkt/math_util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace repmkt {

Mat build_tauchen_rating_kernel(const ModelParams& params, const RatingGrid& grid,
                                QualityType type) {
    const int n = grid.size();
    if (n < 1) throw InvalidGridError("tauchen: rating grid has no points");
    if (!(params.sigma_r > 0.0)) throw InvalidParameterError("tauchen: sigma_r must be positive");
    if (n == 1) return Mat::Ones(1, 1);

    const auto& r = grid.points;
    const double sigma = params.sigma_r;
    const double rho = params.rho(type);

    std::vector<double> upper_edge(n - 1);
    for (int j = 0; j + 1 < n; ++j) upper_edge[j] = 0.5 * (r[j] + r[j + 1]);

    Mat p(n, n);
    for (int i = 0; i < n; ++i) {
        const double mean = params.xi * r[i] + (1.0 - params.xi) * rho;
        // First cell takes the lower tail, last cell the upper tail; the
        // upper tail goes through the survival function so drift targets far
        // above the ceiling still leave representable leak mass below it.
        p(i, 0) = normal_cdf((upper_edge[0] - mean) / sigma);
        for (int j = 1; j + 1 < n; ++j)
            p(i, j) = normal_cdf((upper_edge[j] - mean) / sigma) -
                      normal_cdf((upper_edge[j - 1] - mean) / sigma);
        p(i, n - 1) = normal_sf((upper_edge[n - 2] - mean) / sigma);
    }
    return p;
}

Mat build_sales_kernel(const ModelParams& params, const SalesGrid& grid) {
    const double g = params.gamma_sales;
    if (!(g >= 0.0 && g <= 1.0)) throw InvalidParameterError("gamma_sales must lie in [0,1]");
    const int k = grid.size();
    Mat s = Mat::Zero(k, k);
    for (int i = 0; i + 1 < k; ++i) {
        s(i, i) = 1.0 - g;
        s(i, i + 1) = g;
    }
    s(k - 1, k - 1) = 1.0;
    return s;
}

TransitionKernel build_product_kernel(const PerType<Mat>& rating_kernels, const Mat& sales_kernel,
                                      const StateSpace& space) {
    const int nr = space.n_ratings();
    const int nb = space.n_buckets();
    TransitionKernel kernel;
    for (int t = 0; t < kNumTypes; ++t) {
        const Mat& rk = rating_kernels[t];
        if (rk.rows() != nr || rk.cols() != nr || sales_kernel.rows() != nb ||
            sales_kernel.cols() != nb)
            throw DimensionMismatchError("product kernel factors do not match the state space");
        Mat p(nr * nb, nr * nb);
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nr; ++j)
                p.block(i * nb, j * nb, nb, nb) = rk(i, j) * sales_kernel;
        kernel.pi[t] = std::move(p);
    }
    return kernel;
}

TransitionKernel build_model_kernel(const ModelParams& params, const StateSpace& space) {
    PerType<Mat> rating;
    for (QualityType t : kTypes)
        rating[type_index(t)] = build_tauchen_rating_kernel(params, space.rating_grid, t);
    return build_product_kernel(rating, build_sales_kernel(params, space.sales_grid), space);
}

namespace {

// Iterative Tarjan; recursion depth would be unbounded on ladder graphs.
struct TarjanState {
    const Mat& m;
    int n;
    std::vector<int> index, lowlink, stack;
    std::vector<bool> on_stack;
    std::vector<std::vector<int>> components;
    int counter = 0;

    explicit TarjanState(const Mat& mat)
        : m(mat), n(static_cast<int>(mat.rows())), index(n, -1), lowlink(n, 0), on_stack(n, false) {}

    void run(int root) {
        struct Frame {
            int v;
            int next_col;
        };
        std::vector<Frame> frames;
        frames.push_back({root, 0});
        index[root] = lowlink[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;

        while (!frames.empty()) {
            Frame& f = frames.back();
            bool descended = false;
            while (f.next_col < n) {
                const int w = f.next_col++;
                if (w == f.v || m(f.v, w) <= 0.0) continue;
                if (index[w] < 0) {
                    index[w] = lowlink[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    frames.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[w]) lowlink[f.v] = std::min(lowlink[f.v], index[w]);
            }
            if (descended) continue;
            const int v = f.v;
            frames.pop_back();
            if (!frames.empty()) lowlink[frames.back().v] = std::min(lowlink[frames.back().v], lowlink[v]);
            if (lowlink[v] == index[v]) {
                std::vector<int> comp;
                while (true) {
                    const int w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp.push_back(w);
                    if (w == v) break;
                }
                std::sort(comp.begin(), comp.end());
                components.push_back(std::move(comp));
            }
        }
    }
};

} // namespace

std::vector<std::vector<int>> strongly_connected_components(const Mat& m) {
    TarjanState t(m);
    for (int v = 0; v < t.n; ++v)
        if (t.index[v] < 0) t.run(v);
    // Tarjan emits components in reverse topological order.
    std::reverse(t.components.begin(), t.components.end());
    return t.components;
}

AssumptionReport validate_assumption_a1(const TransitionKernel& kernel) {
    AssumptionReport report;
    report.holds = true;
    std::ostringstream diag;
    for (QualityType t : kTypes) {
        const auto comps = strongly_connected_components(kernel.of(t));
        if (comps.size() != 1) {
            report.holds = false;
            diag << "Pi_" << (t == QualityType::low ? "low" : "high") << " is reducible: "
                 << comps.size() << " communicating classes; first failing component {";
            const auto& c = comps.front();
            for (size_t i = 0; i < c.size() && i < 8; ++i) diag << (i ? "," : "") << c[i];
            if (c.size() > 8) diag << ",...";
            diag << "}. ";
        }
    }
    if (report.holds) report.diagnostic = "all per-type kernels irreducible";
    else report.diagnostic = diag.str();
    return report;
}

std::vector<double> default_a2_probe_grid(const ModelParams& params, int n) {
    const double lo = params.theta_low - 5.0 * params.sigma_c;
    const double hi = params.theta_high / (1.0 - params.beta);
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = lo + (hi - lo) * i / (n - 1);
    return grid;
}

AssumptionReport validate_assumption_a2(const CostDistribution& cost, const ModelParams& params,
                                        const std::vector<double>& probe_grid) {
    AssumptionReport report;
    std::ostringstream diag;
    const double f_lo = cost.cdf(params.theta_low);
    const double f_hi = cost.cdf(params.theta_high);
    if (!(0.0 < f_lo && f_lo < f_hi && f_hi < 1.0)) {
        diag << "cdf ordering violated: F(theta_low)=" << f_lo << ", F(theta_high)=" << f_hi;
        report.diagnostic = diag.str();
        return report;
    }
    const double h = 1e-5;
    for (double c : probe_grid) {
        // The derivative condition is checked where F is strictly increasing;
        // bounded families (uniform01) are flat off their support.
        if (cost.cdf(c + h) <= 0.0 || cost.cdf(c - h) >= 1.0) continue;
        const double d =
            (cost.expected_positive_part(c + h) - cost.expected_positive_part(c - h)) / (2.0 * h);
        if (!(d > 0.0)) {
            diag << "derivative condition fails at c=" << c << " (central difference " << d << ")";
            report.diagnostic = diag.str();
            return report;
        }
    }
    report.holds = true;
    report.diagnostic = "unbounded-costs condition holds on the probe grid";
    return report;
}

} // namespace repmkt
