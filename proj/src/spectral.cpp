#include "qnoise/spectral.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qnoise::spectral {

using json = nlohmann::json;

namespace {

// FFTW's planner is not thread-safe; executions on distinct plans are.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// |X_k|^2 for the one-sided transform of a real segment.
void r2c_power(std::span<const double> segment, std::vector<double>& power) {
    const int n = static_cast<int>(segment.size());
    const int nbins = n / 2 + 1;
    std::vector<double> in(segment.begin(), segment.end());
    std::vector<std::complex<double>> out(static_cast<std::size_t>(nbins));
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(n, in.data(),
                                    reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    power.resize(static_cast<std::size_t>(nbins));
    for (int k = 0; k < nbins; ++k) power[static_cast<std::size_t>(k)] = std::norm(out[static_cast<std::size_t>(k)]);
}

std::vector<double> make_window(Window w, int n) {
    std::vector<double> win(static_cast<std::size_t>(n), 1.0);
    if (w == Window::hann) {
        // periodic Hann, the usual choice for overlapped averaging
        for (int i = 0; i < n; ++i)
            win[static_cast<std::size_t>(i)] =
                0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
    }
    return win;
}

int auto_nperseg(std::size_t n) {
    std::size_t target = n / 8;
    int p = 1;
    while (static_cast<std::size_t>(p) * 2 <= target) p *= 2;
    p = std::clamp(p, 64, 1 << 14);
    while (static_cast<std::size_t>(p) > n) p /= 2;
    return p;
}

}  // namespace

PsdEstimate psd(std::span<const double> series, double sample_interval_s,
                const SegmentConfig& cfg) {
    if (series.size() < 16) throw std::invalid_argument("psd: need at least 16 samples");
    if (!(sample_interval_s > 0.0)) throw std::invalid_argument("psd: bad sample interval");
    for (double v : series)
        if (!std::isfinite(v)) throw std::invalid_argument("psd: non-finite sample");

    int nperseg = cfg.nperseg > 0 ? cfg.nperseg : auto_nperseg(series.size());
    nperseg = std::min<std::size_t>(nperseg, series.size());
    if (nperseg < 16) throw std::invalid_argument("psd: segment shorter than 16 samples");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0))
        throw std::invalid_argument("psd: overlap must be in [0, 1)");

    const int hop = std::max(1, static_cast<int>(std::lround(nperseg * (1.0 - cfg.overlap))));
    const auto win = make_window(cfg.window, nperseg);
    const double win_power = std::inner_product(win.begin(), win.end(), win.begin(), 0.0);

    double mean = 0.0;
    if (cfg.remove_mean) {
        for (double v : series) mean += v;
        mean /= static_cast<double>(series.size());
    }

    const int nbins = nperseg / 2 + 1;
    std::vector<double> accum(static_cast<std::size_t>(nbins), 0.0);
    std::vector<double> seg(static_cast<std::size_t>(nperseg));
    std::vector<double> power;
    int segments = 0;
    for (std::size_t start = 0; start + static_cast<std::size_t>(nperseg) <= series.size();
         start += static_cast<std::size_t>(hop)) {
        for (int i = 0; i < nperseg; ++i)
            seg[static_cast<std::size_t>(i)] =
                (series[start + static_cast<std::size_t>(i)] - mean) * win[static_cast<std::size_t>(i)];
        r2c_power(seg, power);
        for (int k = 0; k < nbins; ++k) accum[static_cast<std::size_t>(k)] += power[static_cast<std::size_t>(k)];
        ++segments;
    }

    // One-sided scaling: integral of the PSD over [df, f_nyquist] recovers the
    // series variance. Interior bins carry the factor 2; Nyquist does not.
    const double scale = sample_interval_s / (win_power * segments);
    const double df = 1.0 / (nperseg * sample_interval_s);
    PsdEstimate est;
    est.sample_interval_s = sample_interval_s;
    est.nperseg = nperseg;
    est.segments = segments;
    est.freq_hz.reserve(static_cast<std::size_t>(nbins - 1));
    est.values.reserve(static_cast<std::size_t>(nbins - 1));
    for (int k = 1; k < nbins; ++k) {
        const bool nyquist = (nperseg % 2 == 0) && (k == nbins - 1);
        est.freq_hz.push_back(k * df);
        est.values.push_back(accum[static_cast<std::size_t>(k)] * scale * (nyquist ? 1.0 : 2.0));
    }
    return est;
}

Resampled resample_hold(std::span<const double> t_s, std::span<const double> values,
                        double sample_interval_s) {
    if (t_s.size() != values.size() || t_s.size() < 2)
        throw std::invalid_argument("resample_hold: need two or more (t, value) samples");
    for (std::size_t i = 1; i < t_s.size(); ++i)
        if (!(t_s[i] > t_s[i - 1]))
            throw std::invalid_argument("resample_hold: timestamps must increase");

    if (sample_interval_s <= 0.0) {
        std::vector<double> gaps;
        gaps.reserve(t_s.size() - 1);
        for (std::size_t i = 1; i < t_s.size(); ++i) gaps.push_back(t_s[i] - t_s[i - 1]);
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        sample_interval_s = gaps[gaps.size() / 2];
    }

    Resampled out;
    out.sample_interval_s = sample_interval_s;
    const double t0 = t_s.front();
    const double t1 = t_s.back();
    std::size_t src = 0;
    for (double t = t0; t <= t1 + 1e-12 * (t1 - t0); t += sample_interval_s) {
        while (src + 1 < t_s.size() && t_s[src + 1] <= t) ++src;
        out.values.push_back(values[src]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lorentzian fit
// ---------------------------------------------------------------------------

double LorentzianFit::eval(double f_hz) const {
    const double r = f_hz / knee_hz;
    return amplitude / (1.0 + r * r) + floor_value;
}

double LorentzianFit::dwell_angular_s() const {
    return 1.0 / (2.0 * std::numbers::pi * knee_hz);
}

double LorentzianFit::dwell_rts_s() const {
    return 1.0 / (std::numbers::pi * knee_hz);
}

namespace {

struct LorentzianProblem {
    std::vector<double> f;
    std::vector<double> log_s;
    std::vector<double> w;  // log-frequency weights, sum 1

    // model in theta = (log A, log f_c, b) with B = b^2
    double model_log(const Eigen::Vector3d& th, double fi) const {
        const double a = std::exp(th[0]);
        const double fc = std::exp(th[1]);
        const double b2 = th[2] * th[2];
        const double r = fi / fc;
        return std::log(a / (1.0 + r * r) + b2);
    }

    void residuals(const Eigen::Vector3d& th, Eigen::VectorXd& res, Eigen::MatrixXd* jac) const {
        const double a = std::exp(th[0]);
        const double fc = std::exp(th[1]);
        const double b = th[2];
        res.resize(static_cast<Eigen::Index>(f.size()));
        if (jac) jac->resize(static_cast<Eigen::Index>(f.size()), 3);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double r = f[i] / fc;
            const double lor = a / (1.0 + r * r);
            const double s = lor + b * b;
            const double sw = std::sqrt(w[i]);
            res[static_cast<Eigen::Index>(i)] = sw * (std::log(s) - log_s[i]);
            if (jac) {
                const double ds_dlogA = lor;
                const double ds_dlogfc = lor * (2.0 * r * r / (1.0 + r * r));
                const double ds_db = 2.0 * b;
                (*jac)(static_cast<Eigen::Index>(i), 0) = sw * ds_dlogA / s;
                (*jac)(static_cast<Eigen::Index>(i), 1) = sw * ds_dlogfc / s;
                (*jac)(static_cast<Eigen::Index>(i), 2) = sw * ds_db / s;
            }
        }
    }

    double cost(const Eigen::Vector3d& th) const {
        Eigen::VectorXd r;
        residuals(th, r, nullptr);
        return 0.5 * r.squaredNorm();
    }
};

// Levenberg-Marquardt on the 3-parameter log-space problem.
bool levenberg_marquardt(const LorentzianProblem& prob, Eigen::Vector3d& th, int max_iters,
                         double tol, int& iters_used) {
    double lambda = 1e-3;
    Eigen::VectorXd res;
    Eigen::MatrixXd jac;
    prob.residuals(th, res, &jac);
    double cost = 0.5 * res.squaredNorm();
    for (iters_used = 0; iters_used < max_iters; ++iters_used) {
        Eigen::Matrix3d jtj = jac.transpose() * jac;
        Eigen::Vector3d jtr = jac.transpose() * res;
        Eigen::Matrix3d damped = jtj + lambda * Eigen::Matrix3d(jtj.diagonal().asDiagonal());
        Eigen::Vector3d step = damped.ldlt().solve(-jtr);
        if (!step.allFinite()) return false;
        Eigen::Vector3d trial = th + step;
        const double trial_cost = prob.cost(trial);
        if (trial_cost < cost) {
            const double drop = cost - trial_cost;
            th = trial;
            cost = trial_cost;
            lambda = std::max(lambda * 0.3, 1e-12);
            prob.residuals(th, res, &jac);
            if (drop < tol * std::max(cost, 1e-300) || step.norm() < 1e-14) return true;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) return false;
        }
    }
    return true;  // iteration cap reached with a usable point
}

}  // namespace

LorentzianFit fit_lorentzian(const PsdEstimate& estimate, const LorentzianFitOptions& opts) {
    LorentzianProblem prob;
    for (std::size_t i = 0; i < estimate.freq_hz.size(); ++i) {
        if (estimate.values[i] > 0.0 && estimate.freq_hz[i] > 0.0) {
            prob.f.push_back(estimate.freq_hz[i]);
            prob.log_s.push_back(std::log(estimate.values[i]));
        }
    }
    if (prob.f.size() < 8) throw std::invalid_argument("fit_lorentzian: too few positive bins");

    // Log-frequency weights: each bin carries the log-width it represents, so
    // every decade contributes equally instead of the dense high-f tail.
    prob.w.resize(prob.f.size());
    double wsum = 0.0;
    for (std::size_t i = 0; i < prob.f.size(); ++i) {
        const double lo = i == 0 ? prob.f[0] : prob.f[i - 1];
        const double hi = i + 1 == prob.f.size() ? prob.f.back() : prob.f[i + 1];
        prob.w[i] = 0.5 * std::log(hi / lo);
        if (prob.w[i] <= 0.0) prob.w[i] = 1e-12;
        wsum += prob.w[i];
    }
    for (auto& wi : prob.w) wi /= wsum;

    // Initialization: floor from the top half-decade, amplitude from the
    // lowest bins, knee from the half-power crossing of the smoothed data.
    const double f_max = prob.f.back();
    double floor0 = 0.0;
    int nf = 0;
    for (std::size_t i = 0; i < prob.f.size(); ++i)
        if (prob.f[i] > f_max / 3.0) {
            floor0 += std::exp(prob.log_s[i]);
            ++nf;
        }
    floor0 = nf ? floor0 / nf : 0.0;

    double amp0 = 0.0;
    int na = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(prob.f.size(), 8); ++i) {
        amp0 += std::exp(prob.log_s[i]);
        ++na;
    }
    amp0 = std::max(amp0 / na - floor0, 1e-12 * amp0 / na + 1e-300);

    double knee0 = std::sqrt(prob.f.front() * prob.f.back());
    const double half = floor0 + 0.5 * amp0;
    // crossing search on a lightly smoothed curve
    for (std::size_t i = 2; i + 2 < prob.f.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = i - 2; k <= i + 2; ++k) s += std::exp(prob.log_s[k]);
        if (s / 5.0 < half) {
            knee0 = prob.f[i];
            break;
        }
    }

    // LM from the half-power estimate plus log-spaced knee candidates; the
    // best final cost wins. Restarts beyond the candidate sweep jitter the
    // amplitude/floor split.
    std::vector<Eigen::Vector3d> starts;
    starts.emplace_back(std::log(amp0), std::log(knee0), std::sqrt(std::max(floor0, 1e-300)));
    const double lf_lo = std::log(prob.f.front());
    const double lf_hi = std::log(prob.f.back());
    for (int c = 1; c <= 6; ++c) {
        const double lf = lf_lo + (lf_hi - lf_lo) * c / 7.0;
        starts.emplace_back(std::log(amp0), lf, std::sqrt(std::max(floor0, 1e-300)));
    }
    std::mt19937_64 rng(0x10c4a11);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    for (int attempt = 1; attempt < opts.restarts; ++attempt) {
        Eigen::Vector3d th = starts.front();
        th[0] += jitter(rng);
        th[1] += jitter(rng);
        th[2] *= std::exp(0.5 * jitter(rng));
        starts.push_back(th);
    }

    Eigen::Vector3d best = Eigen::Vector3d::Zero();
    double best_cost = std::numeric_limits<double>::infinity();
    int best_iters = 0;
    bool any = false;
    std::vector<double> attempt_costs;
    for (Eigen::Vector3d th : starts) {
        int iters = 0;
        if (levenberg_marquardt(prob, th, opts.max_iterations, opts.tol, iters)) {
            const double c = prob.cost(th);
            attempt_costs.push_back(c);
            if (c < best_cost) {
                best_cost = c;
                best = th;
                best_iters = iters;
                any = true;
            }
        }
    }
    if (!any) {
        std::ostringstream msg;
        msg << "fit_lorentzian: no restart converged; costs:";
        for (double c : attempt_costs) msg << ' ' << c;
        throw std::runtime_error(msg.str());
    }

    LorentzianFit fit;
    fit.amplitude = std::exp(best[0]);
    fit.knee_hz = std::exp(best[1]);
    fit.floor_value = best[2] * best[2];
    fit.iterations = best_iters;

    Eigen::VectorXd res;
    Eigen::MatrixXd jac;
    prob.residuals(best, res, &jac);
    fit.residual_rms = std::sqrt(res.squaredNorm() / static_cast<double>(res.size()));
    const double dof = std::max<double>(1.0, static_cast<double>(res.size()) - 3.0);
    const double sigma2 = res.squaredNorm() / dof;
    Eigen::Matrix3d cov_theta =
        (jac.transpose() * jac).ldlt().solve(Eigen::Matrix3d::Identity()) * sigma2;
    // delta method back to (A, f_c, B)
    Eigen::Matrix3d dmap = Eigen::Matrix3d::Zero();
    dmap(0, 0) = fit.amplitude;
    dmap(1, 1) = fit.knee_hz;
    dmap(2, 2) = 2.0 * best[2];
    fit.covariance = dmap * cov_theta * dmap.transpose();
    return fit;
}

std::string LorentzianFit::to_json() const {
    json doc;
    doc["amplitude"] = amplitude;
    doc["knee_hz"] = knee_hz;
    doc["floor"] = floor_value;
    doc["residual_rms_log"] = residual_rms;
    doc["iterations"] = iterations;
    doc["dwell_s"] = {{"paper_1_over_fc", dwell_paper_s()},
                      {"angular_1_over_2pi_fc", dwell_angular_s()},
                      {"rts_1_over_pi_fc", dwell_rts_s()}};
    std::vector<std::vector<double>> cov(3, std::vector<double>(3));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cov[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = covariance(r, c);
    doc["covariance"] = cov;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Power-law fit
// ---------------------------------------------------------------------------

PowerLawFit fit_power_law(const PsdEstimate& estimate, double f_lo_hz, double f_hi_hz) {
    if (!(f_lo_hz > 0.0 && f_hi_hz > f_lo_hz))
        throw std::invalid_argument("fit_power_law: bad frequency range");

    std::vector<double> lf, ls;
    int excluded = 0;
    for (std::size_t i = 0; i < estimate.freq_hz.size(); ++i) {
        const double f = estimate.freq_hz[i];
        if (f < f_lo_hz || f > f_hi_hz) continue;
        if (estimate.values[i] <= 0.0) {
            ++excluded;
            continue;
        }
        lf.push_back(std::log(f));
        ls.push_back(std::log(estimate.values[i]));
    }
    if (lf.size() < 8) throw std::invalid_argument("fit_power_law: fewer than 8 usable bins");

    const double n = static_cast<double>(lf.size());
    const double mx = std::accumulate(lf.begin(), lf.end(), 0.0) / n;
    const double my = std::accumulate(ls.begin(), ls.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lf.size(); ++i) {
        sxx += (lf[i] - mx) * (lf[i] - mx);
        sxy += (lf[i] - mx) * (ls[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;

    PowerLawFit fit;
    fit.alpha = -slope;
    fit.amp_1hz = std::exp(intercept);
    fit.f_lo_hz = f_lo_hz;
    fit.f_hi_hz = f_hi_hz;
    fit.bins_used = static_cast<int>(lf.size());
    fit.bins_excluded = excluded;
    double ss = 0.0;
    for (std::size_t i = 0; i < lf.size(); ++i) {
        const double r = ls[i] - (intercept + slope * lf[i]);
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / n);
    return fit;
}

std::string PowerLawFit::to_json() const {
    json doc;
    doc["alpha"] = alpha;
    doc["amp_1hz"] = amp_1hz;
    doc["f_lo_hz"] = f_lo_hz;
    doc["f_hi_hz"] = f_hi_hz;
    doc["residual_rms_log"] = residual_rms;
    doc["bins_used"] = bins_used;
    doc["bins_excluded"] = bins_excluded;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// 1/f^alpha synthesis
// ---------------------------------------------------------------------------

std::vector<double> gen_power_law_noise(double alpha, double amp_1hz, std::size_t n,
                                        double sample_interval_s, std::uint64_t seed) {
    if (!(alpha >= 0.0 && alpha <= 3.0))
        throw std::invalid_argument("gen_power_law_noise: alpha must be in [0, 3]");
    if (!(amp_1hz > 0.0) || !(sample_interval_s > 0.0) || n < 2)
        throw std::invalid_argument("gen_power_law_noise: bad arguments");

    const std::size_t nbins = n / 2 + 1;
    std::vector<std::complex<double>> spec(nbins, {0.0, 0.0});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Forward periodogram convention: S_k = 2 dt |X_k|^2 / n with X_k the
    // unnormalized DFT. The backward c2r transform below produces exactly
    // sum_k X_k e^{+2pi i jk/n}, so draw |X_k|^2 with mean S(f_k) n / (2 dt).
    const double df = 1.0 / (static_cast<double>(n) * sample_interval_s);
    for (std::size_t k = 1; k < nbins; ++k) {
        const double f = static_cast<double>(k) * df;
        const double target = amp_1hz * std::pow(f, -alpha);
        const bool nyquist = (n % 2 == 0) && (k == nbins - 1);
        if (nyquist) {
            const double sigma = std::sqrt(target * static_cast<double>(n) / sample_interval_s);
            spec[k] = {sigma * gauss(rng), 0.0};
        } else {
            const double sigma =
                std::sqrt(target * static_cast<double>(n) / (4.0 * sample_interval_s));
            spec[k] = {sigma * gauss(rng), sigma * gauss(rng)};
        }
    }

    std::vector<double> out(n);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                    reinterpret_cast<fftw_complex*>(spec.data()), out.data(),
                                    FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    for (auto& v : out) v /= static_cast<double>(n);
    return out;
}

}  // namespace qnoise::spectral
