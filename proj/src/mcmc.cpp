#include "bckl/mcmc.hpp"

#include "bckl/error.hpp"

#include <boost/accumulators/accumulators.hpp>
#include <boost/accumulators/statistics/p_square_quantile.hpp>
#include <boost/accumulators/statistics/stats.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>

namespace bckl {

namespace acc = boost::accumulators;

// ---------------------------------------------------------------- config

void McmcConfig::validate() const {
    if (rank < 0 || local_components < 0) throw ConfigError("rank and local_components must be nonnegative");
    if (rank == 0 && local_components == 0) {
        throw ConfigError("rank and local_components cannot both be zero: the model would be empty");
    }
    if (burn_in < 0) throw ConfigError("burn_in must be nonnegative");
    if (samples < 1) throw ConfigError("samples must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
    if (!(pcg.tol > 0.0) || pcg.max_iter < 1) throw ConfigError("pcg tolerance and max_iter must be positive");
    if (!(jitter >= 0.0)) throw ConfigError("jitter must be nonnegative");
    if (!(tau_imag > 0.0)) throw ConfigError("tau_imag must be positive");
    if (!(priors.a0 > 0.0) || !(priors.b0 > 0.0)) throw ConfigError("a0 and b0 must be positive");
    if (!(priors.tau_phi > 0.0) || !(priors.tau_delta > 0.0) || !(priors.tau_theta > 0.0)) {
        throw ConfigError("length-scale prior precisions must be positive");
    }
    if (fixed_tau && !(*fixed_tau > 0.0)) throw ConfigError("fixed_tau must be positive");
    if (initial_tau && !(*initial_tau > 0.0)) throw ConfigError("initial_tau must be positive");
    if (local_components > 0 && (!(space_taper.range > 0.0) || !(time_taper.range > 0.0))) {
        throw ConfigError("taper ranges must be positive");
    }
}

GlobalSamplerOptions McmcConfig::global_options() const {
    GlobalSamplerOptions o;
    o.space_kernel = space_kernel;
    o.time_kernel = time_kernel;
    o.space_coords = space_coords;
    o.time_coords = time_coords;
    o.space_precomputed = space_precomputed;
    o.time_precomputed = time_precomputed;
    o.priors = priors;
    o.jitter = jitter;
    o.max_shrink = max_shrink;
    return o;
}

LocalSamplerOptions McmcConfig::local_options() const {
    LocalSamplerOptions o;
    o.space_family = local_space_family;
    o.time_family = local_time_family;
    o.space_coords = space_coords;
    o.time_coords = time_coords;
    o.space_taper = space_taper;
    o.time_taper = time_taper;
    o.priors = priors;
    o.k3_mode = k3_mode;
    o.jitter = jitter;
    o.tau_imag = tau_imag;
    o.pcg = pcg;
    o.max_shrink = max_shrink;
    return o;
}

// ---------------------------------------------------------------- posterior samples

// Per-entry tails: the c smallest values in a max-heap and the c largest in a min-heap,
// enough for the type-7 endpoints when c covers them. Very long runs exceed the cap and
// fall back to P-square estimates.
struct PosteriorSamples::Sketch {
    using Acc = acc::accumulator_set<double, acc::stats<acc::tag::p_square_quantile>>;
    std::size_t cap = 0;
    std::size_t fill = 0;
    std::vector<double> low;   // n x cap
    std::vector<double> high;  // n x cap
    std::vector<Acc> lower;
    std::vector<Acc> upper;
};

namespace {

constexpr std::size_t kTailCap = 64;

// Order statistics read by a type-7 endpoint at probability a over k values.
std::size_t tail_need(Index k, double a) {
    const double h = static_cast<double>(std::max<Index>(k, 1) - 1) * a;
    return static_cast<std::size_t>(std::floor(h)) + 2;
}

}  // namespace

PosteriorSamples::PosteriorSamples(Dims dims, Index expected_samples, double level, bool includes_noise,
                                   Index exact_store_limit)
    : dims_(dims), level_(level), includes_noise_(includes_noise) {
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("level must lie in (0, 1)");
    const Index n = dims.size();
    sum_ = Eigen::VectorXd::Zero(n);
    spread_sum_ = Eigen::VectorXd::Zero(n);
    spread_sumsq_ = Eigen::VectorXd::Zero(n);
    exact_ = n * std::max<Index>(expected_samples, 1) <= exact_store_limit;
    if (exact_) {
        store_.reserve(static_cast<std::size_t>(n * std::max<Index>(expected_samples, 0)));
    } else {
        sketch_ = std::make_unique<Sketch>();
        const double a = 0.5 * (1.0 - level);
        const std::size_t need = tail_need(expected_samples, a);
        if (need <= kTailCap) {
            sketch_->cap = need;
            sketch_->low.resize(static_cast<std::size_t>(n) * need);
            sketch_->high.resize(static_cast<std::size_t>(n) * need);
        } else {
            sketch_->lower.reserve(static_cast<std::size_t>(n));
            sketch_->upper.reserve(static_cast<std::size_t>(n));
            for (Index i = 0; i < n; ++i) {
                sketch_->lower.emplace_back(acc::quantile_probability = a);
                sketch_->upper.emplace_back(acc::quantile_probability = 1.0 - a);
            }
        }
    }
}

PosteriorSamples::PosteriorSamples() = default;
PosteriorSamples::PosteriorSamples(PosteriorSamples&&) noexcept = default;
PosteriorSamples& PosteriorSamples::operator=(PosteriorSamples&&) noexcept = default;
PosteriorSamples::~PosteriorSamples() = default;

void PosteriorSamples::add(const Eigen::VectorXd& clean, const Eigen::VectorXd* noisy) {
    const Index n = dims_.size();
    if (clean.size() != n || (noisy && noisy->size() != n)) throw DimensionError("sample length must equal M*T*P");
    if (!exact_ && !sketch_) throw Error("a loaded sketch cannot accept new samples");
    const Eigen::VectorXd& spread = (includes_noise_ && noisy) ? *noisy : clean;
    sum_ += clean;
    spread_sum_ += spread;
    spread_sumsq_ += spread.cwiseProduct(spread);
    if (exact_) {
        store_.insert(store_.end(), spread.data(), spread.data() + n);
    } else if (sketch_->cap > 0) {
        Sketch& sk = *sketch_;
        const std::size_t c = sk.cap;
        const bool full = sk.fill == c;
        for (Index i = 0; i < n; ++i) {
            double* lo = sk.low.data() + static_cast<std::size_t>(i) * c;
            double* hi = sk.high.data() + static_cast<std::size_t>(i) * c;
            const double x = spread[i];
            if (!full) {
                lo[sk.fill] = x;
                std::push_heap(lo, lo + sk.fill + 1);
                hi[sk.fill] = x;
                std::push_heap(hi, hi + sk.fill + 1, std::greater<>());
                continue;
            }
            if (x < lo[0]) {
                std::pop_heap(lo, lo + c);
                lo[c - 1] = x;
                std::push_heap(lo, lo + c);
            }
            if (x > hi[0]) {
                std::pop_heap(hi, hi + c, std::greater<>());
                hi[c - 1] = x;
                std::push_heap(hi, hi + c, std::greater<>());
            }
        }
        if (!full) ++sk.fill;
    } else {
        for (Index i = 0; i < n; ++i) {
            sketch_->lower[static_cast<std::size_t>(i)](spread[i]);
            sketch_->upper[static_cast<std::size_t>(i)](spread[i]);
        }
    }
    ++count_;
}

Eigen::VectorXd PosteriorSamples::mean() const {
    if (count_ == 0) throw Error("no retained samples");
    return sum_ / static_cast<double>(count_);
}

Eigen::VectorXd PosteriorSamples::std() const {
    if (count_ == 0) throw Error("no retained samples");
    const double k = static_cast<double>(count_);
    const Eigen::VectorXd m = spread_sum_ / k;
    return (spread_sumsq_ / k - m.cwiseProduct(m)).cwiseMax(0.0).cwiseSqrt();
}

std::vector<double> PosteriorSamples::entry_values(Index i) const {
    if (!exact_) throw Error("entry values are only stored in exact mode");
    const Index n = dims_.size();
    std::vector<double> v(static_cast<std::size_t>(count_));
    for (Index k = 0; k < count_; ++k) v[static_cast<std::size_t>(k)] = store_[static_cast<std::size_t>(k * n + i)];
    return v;
}

namespace {

// Linear interpolation between order statistics at h = (n - 1) q.
double sorted_quantile(const std::vector<double>& sorted, double q) {
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void PosteriorSamples::interval(double level, Eigen::VectorXd& lower, Eigen::VectorXd& upper) const {
    if (count_ == 0) throw Error("no retained samples");
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("level must lie in (0, 1)");
    const Index n = dims_.size();
    lower.resize(n);
    upper.resize(n);
    const double a = 0.5 * (1.0 - level);
    if (exact_) {
        std::vector<double> v;
        for (Index i = 0; i < n; ++i) {
            v = entry_values(i);
            std::sort(v.begin(), v.end());
            lower[i] = sorted_quantile(v, a);
            upper[i] = sorted_quantile(v, 1.0 - a);
        }
        return;
    }
    if (std::abs(level - level_) > 1e-12) {
        throw ParameterError("the quantile sketch only supports the level it was built with");
    }
    if (!sketch_) {
        lower = frozen_lower_;
        upper = frozen_upper_;
        return;
    }
    if (sketch_->cap > 0) {
        const std::size_t c = sketch_->cap, f = sketch_->fill;
        const double h_lo = static_cast<double>(count_ - 1) * a;
        const double h_hi = static_cast<double>(count_ - 1) * (1.0 - a);
        const auto clamp = [f](Index k) { return std::min(static_cast<std::size_t>(std::max<Index>(k, 0)), f - 1); };
        // Ascending rank r of the lower tail is low[r]; of the upper tail, high[count - 1 - r].
        const auto l0 = static_cast<Index>(std::floor(h_lo));
        const auto u0 = static_cast<Index>(std::floor(h_hi));
        const double fl = h_lo - static_cast<double>(l0), fu = h_hi - static_cast<double>(u0);
        std::vector<double> v(f);
        for (Index i = 0; i < n; ++i) {
            const double* lo = sketch_->low.data() + static_cast<std::size_t>(i) * c;
            const double* hi = sketch_->high.data() + static_cast<std::size_t>(i) * c;
            v.assign(lo, lo + f);
            std::sort(v.begin(), v.end());
            const double a0 = v[clamp(l0)], a1 = v[clamp(std::min(l0 + 1, count_ - 1))];
            lower[i] = a0 + fl * (a1 - a0);
            v.assign(hi, hi + f);
            std::sort(v.begin(), v.end(), std::greater<>());
            const double b0 = v[clamp(count_ - 1 - u0)], b1 = v[clamp(count_ - 1 - std::min(u0 + 1, count_ - 1))];
            upper[i] = b0 + fu * (b1 - b0);
        }
        return;
    }
    for (Index i = 0; i < n; ++i) {
        lower[i] = acc::p_square_quantile(sketch_->lower[static_cast<std::size_t>(i)]);
        upper[i] = acc::p_square_quantile(sketch_->upper[static_cast<std::size_t>(i)]);
    }
}

std::size_t PosteriorSamples::memory_bytes() const {
    std::size_t b = sizeof(double) * static_cast<std::size_t>(sum_.size() + spread_sum_.size() + spread_sumsq_.size());
    b += sizeof(double) * store_.capacity();
    if (sketch_) {
        b += sizeof(Sketch::Acc) * (sketch_->lower.capacity() + sketch_->upper.capacity());
        b += sizeof(double) * (sketch_->low.capacity() + sketch_->high.capacity());
    }
    b += sizeof(double) * static_cast<std::size_t>(frozen_lower_.size() + frozen_upper_.size());
    return b;
}

namespace {

constexpr char kSamplesMagic[4] = {'B', 'C', 'K', 'S'};
constexpr std::uint32_t kSamplesVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("truncated sample store");
    return v;
}

void put_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw DataError("truncated sample store");
}

}  // namespace

void PosteriorSamples::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write(kSamplesMagic, 4);
    put(os, kSamplesVersion);
    put(os, static_cast<std::uint64_t>(dims_.m));
    put(os, static_cast<std::uint64_t>(dims_.t));
    put(os, static_cast<std::uint64_t>(dims_.p));
    put(os, static_cast<std::uint64_t>(count_));
    put(os, level_);
    put(os, static_cast<std::uint8_t>(includes_noise_));
    put(os, static_cast<std::uint8_t>(exact_));
    const auto n = static_cast<std::size_t>(dims_.size());
    put_doubles(os, sum_.data(), n);
    put_doubles(os, spread_sum_.data(), n);
    put_doubles(os, spread_sumsq_.data(), n);
    if (exact_) {
        put_doubles(os, store_.data(), store_.size());
    } else {
        Eigen::VectorXd lo, hi;
        interval(level_, lo, hi);
        put_doubles(os, lo.data(), n);
        put_doubles(os, hi.data(), n);
    }
    if (!os) throw DataError("failed writing " + path);
}

PosteriorSamples PosteriorSamples::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kSamplesMagic, 4) != 0) throw DataError(path + " is not a sample store");
    if (get<std::uint32_t>(is) != kSamplesVersion) throw DataError("unsupported sample store version");
    PosteriorSamples s;
    s.dims_.m = static_cast<Index>(get<std::uint64_t>(is));
    s.dims_.t = static_cast<Index>(get<std::uint64_t>(is));
    s.dims_.p = static_cast<Index>(get<std::uint64_t>(is));
    s.count_ = static_cast<Index>(get<std::uint64_t>(is));
    s.level_ = get<double>(is);
    s.includes_noise_ = get<std::uint8_t>(is) != 0;
    s.exact_ = get<std::uint8_t>(is) != 0;
    const Index n = s.dims_.size();
    const auto un = static_cast<std::size_t>(n);
    s.sum_.resize(n);
    s.spread_sum_.resize(n);
    s.spread_sumsq_.resize(n);
    get_doubles(is, s.sum_.data(), un);
    get_doubles(is, s.spread_sum_.data(), un);
    get_doubles(is, s.spread_sumsq_.data(), un);
    if (s.exact_) {
        s.store_.resize(un * static_cast<std::size_t>(s.count_));
        get_doubles(is, s.store_.data(), s.store_.size());
    } else {
        s.frozen_lower_.resize(n);
        s.frozen_upper_.resize(n);
        get_doubles(is, s.frozen_lower_.data(), un);
        get_doubles(is, s.frozen_upper_.data(), un);
    }
    return s;
}

PosteriorSummary summarize(const PosteriorSamples& samples, double level) {
    PosteriorSummary out;
    out.level = level;
    out.mean = samples.mean();
    out.std = samples.std();
    samples.interval(level, out.lower, out.upper);
    return out;
}

// ---------------------------------------------------------------- sweeps

double sample_tau(const Eigen::VectorXd& residual_omega, double a0, double b0, Rng& rng) {
    const double shape = a0 + 0.5 * static_cast<double>(residual_omega.size());
    const double rate = b0 + 0.5 * residual_omega.squaredNorm();
    return sample_gamma(shape, rate, rng);
}

namespace {

struct Emitter {
    const McmcObserver* obs;
    Index iteration = 0;
    void operator()(const char* step, Index index = -1) const {
        if (obs && obs->on_event) obs->on_event(SweepEvent{iteration, step, index});
    }
};

double initial_tau_from(const Eigen::VectorXd& y_omega) {
    if (y_omega.size() < 2) return 1.0;
    const double mean = y_omega.mean();
    const double var = (y_omega.array() - mean).square().mean();
    return var > 0.0 ? 1.0 / var : 1.0;
}

}  // namespace

McmcResult run_mcmc(const SpatioTensor& data, const McmcConfig& cfg, const McmcObserver* observer) {
    cfg.validate();
    const Dims dims = data.dims();
    if (data.num_observed() == 0) throw DataError("the input tensor has no observed entries");
    const OmegaIndex omega(data);
    const Eigen::VectorXd y = data.zero_filled();
    const Index n = dims.size();
    const Index d_rank = cfg.rank;
    const Index q_count = cfg.local_components;

    Rng rng = Rng::substream(cfg.seed, "chain");
    Rng predictive = Rng::substream(cfg.seed, "predictive");

    std::optional<GlobalSampler> global;
    std::optional<LocalSampler> local;
    McmcResult res;
    if (d_rank > 0) {
        global.emplace(dims, cfg.global_options());
        res.global = global->initial_state(d_rank, rng);
    }
    if (q_count > 0) {
        local.emplace(dims, cfg.local_options());
        res.local = local->initial_state(q_count, rng);
    }
    res.samples = PosteriorSamples(dims, cfg.samples, cfg.level, cfg.interval_includes_noise, cfg.exact_store_limit);

    const Eigen::VectorXd y_omega = project_omega(y, omega.linear, n);
    double tau = cfg.fixed_tau ? *cfg.fixed_tau : (cfg.initial_tau ? *cfg.initial_tau : initial_tau_from(y_omega));

    Eigen::VectorXd x = d_rank > 0 ? cp_reconstruct(res.global.factors) : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r_sum = Eigen::VectorXd::Zero(n);
    for (const auto& c : res.local) r_sum += c.r;
    // Residual y - X - R, maintained on Omega only.
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    for (Index i : omega.linear) e[i] = y[i] - x[i] - r_sum[i];

    const Index total = cfg.burn_in + cfg.samples;
    const bool sample_hyper = !cfg.freeze_hyperparameters;
    Emitter emit{observer};
    auto& f = res.global.factors;

    for (Index iter = 0; iter < total; ++iter) {
        emit.iteration = iter;
        SweepRecord rec;
        rec.iteration = iter;

        for (Index d = 0; d < d_rank; ++d) {
            // E_d = E + u_d ∘ v_d ∘ w_d on Omega.
            for (std::size_t k = 0; k < omega.linear.size(); ++k) {
                e[omega.linear[k]] += f.u(omega.m[k], d) * f.v(omega.t[k], d) * f.w(omega.p[k], d);
            }
            emit("phi", d);
            if (sample_hyper) global->update_lengthscale(FactorMode::U, d, res.global, e, omega, tau, rng);
            emit("delta", d);
            if (sample_hyper) global->update_lengthscale(FactorMode::V, d, res.global, e, omega, tau, rng);
            emit("u", d);
            global->sample_factor(FactorMode::U, d, res.global, e, omega, tau, rng);
            emit("v", d);
            global->sample_factor(FactorMode::V, d, res.global, e, omega, tau, rng);
            emit("w", d);
            global->sample_factor(FactorMode::W, d, res.global, e, omega, tau, rng);
            for (std::size_t k = 0; k < omega.linear.size(); ++k) {
                e[omega.linear[k]] -= f.u(omega.m[k], d) * f.v(omega.t[k], d) * f.w(omega.p[k], d);
            }
        }
        if (d_rank > 0) {
            emit("lambda_w");
            if (sample_hyper) res.global.lambda_w = global->sample_lambda_w(f.w, rng);
        }

        if (q_count > 0) {
            // y - X on Omega.
            Eigen::VectorXd y_minus_x = Eigen::VectorXd::Zero(n);
            for (Index i : omega.linear) y_minus_x[i] = e[i] + r_sum[i];
            std::vector<Eigen::VectorXd> r_tilde;
            r_tilde.reserve(static_cast<std::size_t>(q_count));
            for (std::size_t q = 0; q < res.local.size(); ++q) {
                auto& c = res.local[q];
                const Eigen::VectorXd res_q = local->component_residual(res.local, q, y_minus_x, omega);
                const auto qi = static_cast<Index>(q);
                emit("theta1", qi);
                if (sample_hyper) local->update_lengthscale(c, 1, res_q, omega, tau, rng);
                emit("theta2", qi);
                if (sample_hyper) local->update_lengthscale(c, 2, res_q, omega, tau, rng);
                emit("k3", qi);
                if (sample_hyper) local->sample_variable_covariance(c, res_q, omega, tau, rng);
                emit("prior_draw", qi);
                r_tilde.push_back(local->draw_prior(c, rng));
            }
            emit("correct");
            const CorrectionResult cr = local->correct(res.local, r_tilde, y_minus_x, omega, tau, rng);
            rec.pcg_iterations = cr.pcg_iterations;
            rec.pcg_converged = cr.converged;
            if (!cr.converged) {
                ++res.solver_failures;
                if (observer && observer->on_warning) {
                    observer->on_warning("PCG did not converge at sweep " + std::to_string(iter) +
                                         " (relative residual " + std::to_string(cr.relative_residual) +
                                         "); keeping the previous local components");
                }
                if (static_cast<double>(res.solver_failures) >
                    cfg.max_solver_failure_fraction * static_cast<double>(total)) {
                    throw SolverError("PCG failed on " + std::to_string(res.solver_failures) + " of " +
                                      std::to_string(total) + " sweeps");
                }
            }
        }

        emit("assemble");
        if (d_rank > 0) x = cp_reconstruct(f);
        r_sum.setZero();
        for (const auto& c : res.local) r_sum += c.r;
        Eigen::VectorXd e_omega(omega.size());
        for (std::size_t k = 0; k < omega.linear.size(); ++k) {
            const Index i = omega.linear[k];
            e[i] = y[i] - x[i] - r_sum[i];
            e_omega[static_cast<Index>(k)] = e[i];
        }

        emit("tau");
        if (!cfg.fixed_tau) tau = sample_tau(e_omega, cfg.priors.a0, cfg.priors.b0, rng);

        if (iter >= cfg.burn_in) {
            emit("collect");
            const Eigen::VectorXd clean = x + r_sum;
            if (cfg.interval_includes_noise) {
                const Eigen::VectorXd noisy = clean + predictive.normal_vector(n) / std::sqrt(tau);
                res.samples.add(clean, &noisy);
            } else {
                res.samples.add(clean);
            }
        }

        rec.tau = tau;
        if (d_rank > 0) {
            rec.log_phi = res.global.log_phi;
            rec.log_delta = res.global.log_delta;
        }
        rec.log_theta1.resize(q_count);
        rec.log_theta2.resize(q_count);
        if (cfg.k3_mode == K3Mode::Diagonal) rec.tau_q.resize(q_count);
        for (Index q = 0; q < q_count; ++q) {
            const auto& c = res.local[static_cast<std::size_t>(q)];
            rec.log_theta1[q] = c.log_theta1;
            rec.log_theta2[q] = c.log_theta2;
            if (cfg.k3_mode == K3Mode::Diagonal) rec.tau_q[q] = c.tau_q;
        }
        if (observer && observer->on_sweep) observer->on_sweep(rec);
        res.trace.push_back(std::move(rec));
    }
    res.tau = tau;
    return res;
}

}  // namespace bckl
