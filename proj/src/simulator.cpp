#include "repmkt/simulator.hpp"

#include "repmkt/parallel.hpp"
#include "repmkt/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace repmkt {

namespace {

using nlohmann::json;

int draw_from_row(const Mat& pi, int state, double u) {
    double acc = 0.0;
    const Index n = pi.cols();
    for (Index j = 0; j < n; ++j) {
        acc += pi(state, j);
        if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(n - 1);
}

double percentile(std::vector<double>& v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - lo;
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

} // namespace

std::vector<std::pair<std::size_t, std::size_t>> Panel::vendor_spans() const {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    if (observations.empty()) {
        if (!meta.empty()) throw ParseError("panel metadata does not match observations");
        return spans;
    }
    spans.reserve(meta.size());
    std::size_t begin = 0;
    for (std::size_t i = 0; i <= observations.size(); ++i) {
        if (i == observations.size() ||
            (i > begin && observations[i].vendor_id != observations[begin].vendor_id)) {
            spans.emplace_back(begin, i);
            begin = i;
        }
    }
    if (spans.size() != meta.size()) throw ParseError("panel metadata does not match observations");
    return spans;
}

void Panel::validate(const StateSpace* space) const {
    const auto spans = vendor_spans();
    for (std::size_t v = 0; v < spans.size(); ++v) {
        const auto [b, e] = spans[v];
        if (b == e) throw ParseError("vendor without observations");
        if (observations[b].vendor_id != meta[v].vendor_id)
            throw ParseError("panel metadata order does not match observations");
        for (std::size_t i = b; i < e; ++i) {
            const auto& o = observations[i];
            if (o.age != static_cast<int>(i - b) + 1)
                throw ParseError("non-contiguous ages for vendor " + std::to_string(o.vendor_id));
            if (o.exited_this_week && i + 1 != e)
                throw ParseError("exit flag before the last row for vendor " +
                                 std::to_string(o.vendor_id));
            if (space) {
                if (o.state_index < 0 || o.state_index >= space->n_states())
                    throw ParseError("state index out of range");
                if (o.sales_bucket != space->bucket_index(o.state_index))
                    throw ParseError("sales bucket inconsistent with state index");
                if (std::abs(o.rating - space->rating_value(o.state_index)) > 1e-6)
                    throw ParseError("rating inconsistent with state index");
            }
        }
        const bool exited = observations[e - 1].exited_this_week;
        if (meta[v].censored == exited)
            throw ParseError("censoring flag inconsistent with exit row for vendor " +
                             std::to_string(meta[v].vendor_id));
    }
}

Panel simulate_panel(const EquilibriumSolution& solution, const ModelParams& params,
                     const StateSpace& space, const TransitionKernel& kernel,
                     const CostDistribution& cost, const SimulationConfig& config) {
    if (config.n_vendors < 1 || config.horizon_weeks < 1)
        throw InvalidParameterError("simulation needs n_vendors >= 1 and horizon_weeks >= 1");
    if (!solution.converged) throw StaleSolutionError("simulate_panel: solution did not converge");

    const int W = config.horizon_weeks;
    std::vector<std::vector<PanelObservation>> rows(config.n_vendors);
    std::vector<VendorMeta> meta(config.n_vendors);

    parallel_for(static_cast<std::size_t>(config.n_vendors), [&](std::size_t v) {
        Rng rng(config.seed, static_cast<std::uint64_t>(v));
        VendorMeta m;
        m.vendor_id = static_cast<std::int64_t>(v);
        m.entry_week = config.staggered_entry
                           ? 1 + static_cast<int>(rng.uniform01() * W) % W
                           : 1;
        m.true_type = rng.uniform01() < params.alpha ? QualityType::high : QualityType::low;
        const Vec& cutoffs = solution.cutoffs.of(m.true_type);
        const Mat& pi = kernel.of(m.true_type);

        int state = space.entry_state();
        std::vector<PanelObservation>& out = rows[v];
        bool alive = true;
        for (int week = m.entry_week; week <= W && alive; ++week) {
            PanelObservation o;
            o.vendor_id = m.vendor_id;
            o.week = week;
            o.age = week - m.entry_week + 1;
            o.state_index = state;
            o.rating = space.rating_value(state);
            o.sales_bucket = space.bucket_index(state);
            const double c = cost.quantile(rng.uniform_open());
            if (c > cutoffs(state)) {
                o.exited_this_week = true;
                o.price_obs = std::numeric_limits<double>::quiet_NaN();
                out.push_back(o);
                alive = false;
                break;
            }
            const double z = rng.normal();
            const double theta_hat = solution.beliefs.theta_hat(state);
            const double shock = std::exp(params.sigma_p * z);
            o.price_obs = params.price_noise == PriceNoise::multiplicative_lognormal
                              ? theta_hat * shock
                              : theta_hat + shock;
            o.exited_this_week = false;
            out.push_back(o);
            state = draw_from_row(pi, state, rng.uniform01());
        }
        m.censored = alive;
        meta[v] = m;
    });

    Panel panel;
    panel.meta = std::move(meta);
    std::size_t total = 0;
    for (const auto& r : rows) total += r.size();
    panel.observations.reserve(total);
    for (auto& r : rows)
        panel.observations.insert(panel.observations.end(), r.begin(), r.end());
    return panel;
}

MomentReport empirical_moments(const Panel& panel) {
    if (panel.observations.empty()) throw InvalidParameterError("empirical_moments: empty panel");
    MomentReport report;

    int max_bucket = 0;
    for (const auto& o : panel.observations) max_bucket = std::max(max_bucket, o.sales_bucket);
    std::vector<std::vector<double>> by_bucket(max_bucket + 1);
    for (const auto& o : panel.observations) by_bucket[o.sales_bucket].push_back(o.rating);
    for (auto& v : by_bucket) {
        report.rating_median_by_bucket.push_back(percentile(v, 0.5));
        report.rating_p30_by_bucket.push_back(percentile(v, 0.3));
        report.rating_p70_by_bucket.push_back(percentile(v, 0.7));
        report.rating_p10_by_bucket.push_back(percentile(v, 0.1));
    }

    // One-week continuation rates, split per the survival-figure definitions:
    // high rating > 4.95, old age >= 7 weeks (~50 days).
    long stay[2][2] = {{0, 0}, {0, 0}};
    long count[2][2] = {{0, 0}, {0, 0}};
    for (const auto& o : panel.observations) {
        const int hi = o.rating > 4.95 ? 1 : 0;
        const int old_age = o.age >= 7 ? 1 : 0;
        ++count[old_age][hi];
        if (!o.exited_this_week) ++stay[old_age][hi];
    }
    auto rate = [&](int old_age, int hi) {
        return count[old_age][hi] > 0 ? static_cast<double>(stay[old_age][hi]) / count[old_age][hi]
                                      : 1.0;
    };
    report.stay_young_high = rate(0, 1);
    report.stay_young_low = rate(0, 0);
    report.stay_old_high = rate(1, 1);
    report.stay_old_low = rate(1, 0);

    long censored = 0;
    for (const auto& m : panel.meta) {
        if (m.censored) ++censored;
    }
    report.active_share_at_closure = static_cast<double>(censored) / panel.meta.size();
    const auto spans = panel.vendor_spans();
    for (std::size_t v = 0; v < spans.size(); ++v) {
        if (!panel.meta[v].censored) {
            const auto& last = panel.observations[spans[v].second - 1];
            ++report.exit_age_histogram[last.age];
        }
    }
    return report;
}

void write_panel(const Panel& panel, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open panel file for writing: " + path);
    os << "vendor_id,week,age,state_index,rating,sales_bucket,price_obs,exited\n";
    char buf[160];
    for (const auto& o : panel.observations) {
        std::snprintf(buf, sizeof(buf), "%lld,%d,%d,%d,%.6f,%d,%.17g,%d\n",
                      static_cast<long long>(o.vendor_id), o.week, o.age, o.state_index, o.rating,
                      o.sales_bucket, o.price_obs, o.exited_this_week ? 1 : 0);
        os << buf;
    }
    os.close();

    json meta = json::array();
    for (const auto& m : panel.meta) {
        meta.push_back({{"vendor_id", m.vendor_id},
                        {"entry_week", m.entry_week},
                        {"censored", m.censored},
                        {"true_type", m.true_type == QualityType::high ? "high" : "low"}});
    }
    std::ofstream ms(path + ".meta.json");
    if (!ms) throw IoError("cannot open panel metadata for writing: " + path + ".meta.json");
    ms << meta.dump(1) << "\n";
}

Panel read_panel(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open panel file: " + path);
    Panel panel;
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path + ": missing header");
    if (line != "vendor_id,week,age,state_index,rating,sales_bucket,price_obs,exited")
        throw ParseError(path + ": unexpected header");
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        PanelObservation o;
        long long vid;
        int exited;
        char pricebuf[64];
        const int got = std::sscanf(line.c_str(), "%lld,%d,%d,%d,%lf,%d,%63[^,],%d", &vid, &o.week,
                                    &o.age, &o.state_index, &o.rating, &o.sales_bucket, pricebuf,
                                    &exited);
        if (got != 8)
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed row");
        o.vendor_id = vid;
        o.price_obs = std::strtod(pricebuf, nullptr);
        o.exited_this_week = exited != 0;
        panel.observations.push_back(o);
    }

    std::ifstream ms(path + ".meta.json");
    if (ms) {
        json meta = json::parse(ms);
        for (const auto& m : meta) {
            VendorMeta vm;
            vm.vendor_id = m.at("vendor_id").get<std::int64_t>();
            vm.entry_week = m.at("entry_week").get<int>();
            vm.censored = m.at("censored").get<bool>();
            vm.true_type =
                m.at("true_type").get<std::string>() == "high" ? QualityType::high : QualityType::low;
            panel.meta.push_back(vm);
        }
    } else if (!panel.observations.empty()) {
        // Reconstruct metadata from the rows themselves.
        std::size_t begin = 0;
        for (std::size_t i = 0; i <= panel.observations.size(); ++i) {
            if (i == panel.observations.size() ||
                (i > begin && panel.observations[i].vendor_id != panel.observations[begin].vendor_id)) {
                VendorMeta vm;
                vm.vendor_id = panel.observations[begin].vendor_id;
                vm.entry_week = panel.observations[begin].week;
                vm.censored = !panel.observations[i - 1].exited_this_week;
                panel.meta.push_back(vm);
                begin = i;
            }
        }
    }
    panel.validate();
    return panel;
}

} // namespace repmkt
