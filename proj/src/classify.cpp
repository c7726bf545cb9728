#include "qnoise/classify.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "qnoise/io.hpp"

namespace qnoise::classify {

using json = nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::vector<double>> to_nested(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
    return out;
}

Eigen::MatrixXd from_nested(const std::vector<std::vector<double>>& v) {
    if (v.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
    for (std::size_t r = 0; r < v.size(); ++r)
        for (std::size_t c = 0; c < v[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c];
    return m;
}

// Per-component Gaussian evaluated through its Cholesky factor.
struct GaussianEval {
    Eigen::MatrixXd chol_lower;
    Eigen::VectorXd mean;
    double log_norm = 0.0;  // -d/2 log(2 pi) - log det L

    void set(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
        mean = mu;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("gaussian eval: covariance not positive definite");
        chol_lower = llt.matrixL();
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < chol_lower.rows(); ++i)
            logdet += std::log(chol_lower(i, i));
        log_norm = -0.5 * static_cast<double>(mu.size()) * std::log(2.0 * std::numbers::pi) -
                   logdet;
    }

    double log_pdf(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd z = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
        return log_norm - 0.5 * z.squaredNorm();
    }
};

double logsumexp_row(const Eigen::VectorXd& v) {
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

// Floor covariance eigenvalues; returns true if the ridge fired.
bool apply_cov_floor(Eigen::MatrixXd& cov, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.eigenvalues().minCoeff() >= floor) return false;
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
    cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return true;
}

void canonical_order(GaussianMixture& g) {
    std::vector<int> idx(static_cast<std::size_t>(g.components()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return g.means(a, 0) < g.means(b, 0); });
    Eigen::VectorXd w(g.components());
    Eigen::MatrixXd mu(g.components(), g.dim);
    std::vector<Eigen::MatrixXd> cv(static_cast<std::size_t>(g.components()));
    for (int i = 0; i < g.components(); ++i) {
        w[i] = g.weights[idx[static_cast<std::size_t>(i)]];
        mu.row(i) = g.means.row(idx[static_cast<std::size_t>(i)]);
        cv[static_cast<std::size_t>(i)] = g.covs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    }
    g.weights = std::move(w);
    g.means = std::move(mu);
    g.covs = std::move(cv);
}

}  // namespace

// ---------------------------------------------------------------------------
// GMM
// ---------------------------------------------------------------------------

double GaussianMixture::bic(std::size_t n_samples) const {
    const int k = components();
    const int d = dim;
    const int p = (k - 1) + k * d + k * d * (d + 1) / 2;
    return -2.0 * log_likelihood + p * std::log(static_cast<double>(n_samples));
}

namespace {

GaussianMixture gmm_fit_single(const Eigen::MatrixXd& obs, int k, const GmmFitOptions& opts,
                               std::uint64_t seed, bool quantile_init) {
    const auto m = obs.rows();
    const int d = static_cast<int>(obs.cols());
    std::mt19937_64 rng(seed);

    // data scale for the covariance floor
    Eigen::RowVectorXd data_mean = obs.colwise().mean();
    Eigen::MatrixXd centered = obs.rowwise() - data_mean;
    Eigen::MatrixXd data_cov = centered.transpose() * centered / static_cast<double>(m);
    const double floor = std::max(opts.cov_floor_rel * data_cov.trace() / d, 1e-300);

    GaussianMixture g;
    g.dim = d;
    g.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    g.means.resize(k, d);
    g.covs.assign(static_cast<std::size_t>(k), data_cov + floor * Eigen::MatrixXd::Identity(d, d));

    if (quantile_init && d == 1) {
        std::vector<double> sorted(obs.data(), obs.data() + m);
        std::sort(sorted.begin(), sorted.end());
        for (int c = 0; c < k; ++c) {
            const auto pos = static_cast<std::size_t>((c + 0.5) / k * static_cast<double>(m));
            g.means(c, 0) = sorted[std::min(pos, sorted.size() - 1)];
        }
        const double span = sorted.back() - sorted.front();
        const double v0 = std::max(floor, span / (2.0 * k) * span / (2.0 * k));
        for (auto& cov : g.covs) cov(0, 0) = v0;
    } else {
        // k-means++ style seeding
        std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
        std::vector<Eigen::Index> centers{pick(rng)};
        Eigen::VectorXd d2 = (centered.rowwise() - (obs.row(centers[0]) - data_mean))
                                 .rowwise()
                                 .squaredNorm();
        while (static_cast<int>(centers.size()) < k) {
            std::discrete_distribution<Eigen::Index> dist(d2.data(), d2.data() + m);
            const Eigen::Index next = dist(rng);
            centers.push_back(next);
            Eigen::VectorXd nd = (obs.rowwise() - obs.row(next)).rowwise().squaredNorm();
            d2 = d2.cwiseMin(nd);
        }
        for (int c = 0; c < k; ++c) g.means.row(c) = obs.row(centers[static_cast<std::size_t>(c)]);
    }
    if (!quantile_init) {
        // jitter so restarts explore distinct basins
        std::normal_distribution<double> jit(0.0, 1.0);
        const double scale = std::sqrt(data_cov.trace() / d) / (4.0 * k);
        for (int c = 0; c < k; ++c)
            for (int j = 0; j < d; ++j) g.means(c, j) += scale * jit(rng);
    }

    std::vector<GaussianEval> eval(static_cast<std::size_t>(k));
    Eigen::MatrixXd log_resp(m, k);
    double prev_ll = kNegInf;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        for (int c = 0; c < k; ++c)
            eval[static_cast<std::size_t>(c)].set(g.means.row(c).transpose(), g.covs[static_cast<std::size_t>(c)]);

        double ll = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            Eigen::VectorXd row(k);
            const Eigen::VectorXd x = obs.row(i).transpose();
            for (int c = 0; c < k; ++c)
                row[c] = std::log(g.weights[c]) + eval[static_cast<std::size_t>(c)].log_pdf(x);
            const double lse = logsumexp_row(row);
            ll += lse;
            log_resp.row(i) = (row.array() - lse).matrix().transpose();
        }
        g.loglik_history.push_back(ll);

        bool ridged = false;
        // M step
        Eigen::VectorXd nk = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(k, d);
        for (Eigen::Index i = 0; i < m; ++i)
            for (int c = 0; c < k; ++c) {
                const double r = std::exp(log_resp(i, c));
                nk[c] += r;
                mu.row(c) += r * obs.row(i);
            }
        for (int c = 0; c < k; ++c) {
            if (nk[c] < 1e-12) {
                nk[c] = 1e-12;  // starved component; ridge will reinflate it
                ridged = true;
            }
            mu.row(c) /= nk[c];
        }
        std::vector<Eigen::MatrixXd> cov(static_cast<std::size_t>(k),
                                         Eigen::MatrixXd::Zero(d, d));
        for (Eigen::Index i = 0; i < m; ++i)
            for (int c = 0; c < k; ++c) {
                const double r = std::exp(log_resp(i, c));
                const Eigen::RowVectorXd dx = obs.row(i) - mu.row(c);
                cov[static_cast<std::size_t>(c)] += r * dx.transpose() * dx;
            }
        for (int c = 0; c < k; ++c) {
            cov[static_cast<std::size_t>(c)] /= nk[c];
            if (apply_cov_floor(cov[static_cast<std::size_t>(c)], floor)) {
                ridged = true;
                ++g.ridge_events;
            }
        }
        g.weights = nk / nk.sum();
        g.means = std::move(mu);
        g.covs = std::move(cov);

        // EM never decreases the likelihood; ridge steps are exempt
        if (!ridged && std::isfinite(prev_ll) &&
            ll < prev_ll - 1e-10 * (std::abs(prev_ll) + 1.0))
            throw std::logic_error("gmm_fit: EM log-likelihood decreased");

        if (std::isfinite(prev_ll) &&
            std::abs(ll - prev_ll) < opts.tol * (std::abs(ll) + 1.0)) {
            g.converged = true;
            g.log_likelihood = ll;
            break;
        }
        prev_ll = ll;
        g.log_likelihood = ll;
    }
    return g;
}

}  // namespace

GaussianMixture gmm_fit(const Eigen::MatrixXd& obs, int k, const GmmFitOptions& opts) {
    if (k < 1) throw std::invalid_argument("gmm_fit: k must be >= 1");
    if (obs.rows() < 10 * static_cast<Eigen::Index>(k))
        throw std::invalid_argument("gmm_fit: need at least 10 observations per component");
    if (!obs.allFinite()) throw std::invalid_argument("gmm_fit: non-finite observation");

    GaussianMixture best;
    double best_ll = kNegInf;
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        auto g = gmm_fit_single(obs, k, opts, io::derive_seed(opts.seed, "gmm/" + std::to_string(r)),
                                r == 0);
        if (g.log_likelihood > best_ll) {
            best_ll = g.log_likelihood;
            best = std::move(g);
        }
    }
    canonical_order(best);
    return best;
}

Classification gmm_classify(const GaussianMixture& model, const Eigen::MatrixXd& obs) {
    if (obs.cols() != model.dim) throw std::invalid_argument("gmm_classify: dimension mismatch");
    const int k = model.components();
    std::vector<GaussianEval> eval(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        eval[static_cast<std::size_t>(c)].set(model.means.row(c).transpose(), model.covs[static_cast<std::size_t>(c)]);

    Classification out;
    out.labels.resize(static_cast<std::size_t>(obs.rows()));
    out.posteriors.resize(obs.rows(), k);
    for (Eigen::Index i = 0; i < obs.rows(); ++i) {
        Eigen::VectorXd row(k);
        const Eigen::VectorXd x = obs.row(i).transpose();
        for (int c = 0; c < k; ++c)
            row[c] = std::log(model.weights[c]) + eval[static_cast<std::size_t>(c)].log_pdf(x);
        const double lse = logsumexp_row(row);
        int arg = 0;
        for (int c = 0; c < k; ++c) {
            out.posteriors(i, c) = std::exp(row[c] - lse);
            if (row[c] > row[arg]) arg = c;  // strict: ties keep the lower index
        }
        out.labels[static_cast<std::size_t>(i)] = arg;
    }
    return out;
}

std::vector<int> parity_band_reduce(std::span<const int> labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        if (l < 0 || l > 2) throw std::invalid_argument("parity_band_reduce: label outside {0,1,2}");
        out.push_back(l == 0 ? 0 : 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// HMM internals
// ---------------------------------------------------------------------------

namespace {

// Dense T x n emission probability table (probabilities, not logs; the
// forward/backward passes are scaled so only per-sample underflow matters,
// which the floor below removes).
Eigen::MatrixXd emission_table_categorical(const HiddenMarkov& h, std::span<const int> symbols) {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(symbols.size()), h.n_states);
    for (std::size_t t = 0; t < symbols.size(); ++t) {
        const int o = symbols[t];
        if (o < 0 || o >= h.emit_prob.cols())
            throw std::invalid_argument("hmm: symbol out of range at sample " + std::to_string(t));
        for (int s = 0; s < h.n_states; ++s) b(static_cast<Eigen::Index>(t), s) = h.emit_prob(s, o);
    }
    return b;
}

Eigen::MatrixXd emission_table_gaussian(const HiddenMarkov& h, std::span<const double> obs) {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(obs.size()), h.n_states);
    for (int s = 0; s < h.n_states; ++s) {
        const double var = h.emit_var[s];
        const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * var);
        for (std::size_t t = 0; t < obs.size(); ++t) {
            const double dx = obs[t] - h.emit_mean[s];
            b(static_cast<Eigen::Index>(t), s) =
                std::max(norm * std::exp(-0.5 * dx * dx / var), 1e-300);
        }
    }
    return b;
}

struct ForwardBackward {
    Eigen::MatrixXd alpha;  // scaled
    Eigen::MatrixXd beta;   // scaled
    Eigen::VectorXd scale;  // c_t = sum of unscaled alpha_t
    double loglik = 0.0;
};

ForwardBackward forward_backward(const HiddenMarkov& h, const Eigen::MatrixXd& b) {
    const Eigen::Index T = b.rows();
    const int n = h.n_states;
    ForwardBackward fb;
    fb.alpha.resize(T, n);
    fb.beta.resize(T, n);
    fb.scale.resize(T);

    fb.alpha.row(0) = (h.initial.transpose().array() * b.row(0).array()).matrix();
    fb.scale[0] = fb.alpha.row(0).sum();
    if (fb.scale[0] <= 0.0)
        throw std::runtime_error("hmm: observation 0 has zero probability under every state");
    fb.alpha.row(0) /= fb.scale[0];
    for (Eigen::Index t = 1; t < T; ++t) {
        fb.alpha.row(t) =
            ((fb.alpha.row(t - 1) * h.transition).array() * b.row(t).array()).matrix();
        fb.scale[t] = fb.alpha.row(t).sum();
        if (fb.scale[t] <= 0.0)
            throw std::runtime_error("hmm: observation " + std::to_string(t) +
                                     " has zero probability under every state");
        fb.alpha.row(t) /= fb.scale[t];
    }
    fb.beta.row(T - 1).setOnes();
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        fb.beta.row(t) =
            ((fb.beta.row(t + 1).array() * b.row(t + 1).array()).matrix() *
             h.transition.transpose()) /
            fb.scale[t + 1];
    }
    fb.loglik = fb.scale.array().log().sum();
    return fb;
}

struct BaumWelchResult {
    HiddenMarkov model;
};

HiddenMarkov baum_welch(HiddenMarkov h, const Eigen::MatrixXd& b_initial,
                        std::span<const int> symbols, std::span<const double> gobs,
                        const HmmTrainOptions& opts) {
    const Eigen::Index T = b_initial.rows();
    const int n = h.n_states;
    Eigen::MatrixXd b = b_initial;

    double prev_ll = kNegInf;
    double var_floor = 0.0;
    if (h.kind == EmissionKind::gaussian) {
        double mean = 0.0, var = 0.0;
        for (double x : gobs) mean += x;
        mean /= static_cast<double>(gobs.size());
        for (double x : gobs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(gobs.size());
        var_floor = std::max(1e-6 * var, 1e-300);
    }

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        auto fb = forward_backward(h, b);
        h.loglik_history.push_back(fb.loglik);

        // accumulate xi row sums and gamma
        Eigen::MatrixXd gamma = (fb.alpha.array() * fb.beta.array()).matrix();
        for (Eigen::Index t = 0; t < T; ++t) {
            const double rs = gamma.row(t).sum();
            if (rs > 0.0) gamma.row(t) /= rs;
        }
        Eigen::MatrixXd xi_sum = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index t = 0; t + 1 < T; ++t) {
            // xi_t(s,s') ~ alpha_t(s) A(s,s') b_{t+1}(s') beta_{t+1}(s') / c_{t+1}
            const Eigen::VectorXd right =
                (b.row(t + 1).array() * fb.beta.row(t + 1).array()).matrix().transpose() /
                fb.scale[t + 1];
            xi_sum += (fb.alpha.row(t).transpose() * right.transpose()).cwiseProduct(h.transition);
        }

        // updates
        h.initial = gamma.row(0).transpose();
        h.initial /= h.initial.sum();

        Eigen::VectorXd occ = gamma.topRows(T - 1).colwise().sum().transpose();
        Eigen::MatrixXd new_a = h.transition;
        for (int s = 0; s < n; ++s) {
            if (occ[s] > 1e-300) {
                new_a.row(s) = xi_sum.row(s) / occ[s];
                const double dev = std::abs(new_a.row(s).sum() - 1.0);
                h.max_row_sum_error = std::max(h.max_row_sum_error, dev);
                new_a.row(s) /= new_a.row(s).sum();
            }
        }
        h.transition = new_a;

        bool floored = false;
        if (!opts.freeze_emissions) {
            if (h.kind == EmissionKind::categorical) {
                const auto n_symbols = static_cast<int>(h.emit_prob.cols());
                Eigen::MatrixXd acc = Eigen::MatrixXd::Constant(n, n_symbols, 1e-12);
                for (Eigen::Index t = 0; t < T; ++t)
                    acc.col(symbols[static_cast<std::size_t>(t)]) += gamma.row(t).transpose();
                for (int s = 0; s < n; ++s) h.emit_prob.row(s) = acc.row(s) / acc.row(s).sum();
            } else {
                for (int s = 0; s < n; ++s) {
                    double wsum = 0.0, msum = 0.0;
                    for (Eigen::Index t = 0; t < T; ++t) {
                        wsum += gamma(t, s);
                        msum += gamma(t, s) * gobs[static_cast<std::size_t>(t)];
                    }
                    if (wsum < 1e-300) continue;
                    const double mean = msum / wsum;
                    double vsum = 0.0;
                    for (Eigen::Index t = 0; t < T; ++t) {
                        const double dx = gobs[static_cast<std::size_t>(t)] - mean;
                        vsum += gamma(t, s) * dx * dx;
                    }
                    h.emit_mean[s] = mean;
                    double v = vsum / wsum;
                    if (v < var_floor) {
                        v = var_floor;
                        floored = true;
                    }
                    h.emit_var[s] = v;
                }
            }
            // refresh emission table
            b = h.kind == EmissionKind::categorical ? emission_table_categorical(h, symbols)
                                                    : emission_table_gaussian(h, gobs);
        }

        if (!floored && std::isfinite(prev_ll) &&
            fb.loglik < prev_ll - 1e-10 * (std::abs(prev_ll) + 1.0))
            throw std::logic_error("hmm_train: Baum-Welch log-likelihood decreased");

        h.log_likelihood = fb.loglik;
        if (std::isfinite(prev_ll) &&
            std::abs(fb.loglik - prev_ll) < opts.tol * (std::abs(fb.loglik) + 1.0)) {
            h.converged = true;
            break;
        }
        prev_ll = fb.loglik;
    }
    if (!h.converged) h.iteration_cap_hit = true;
    return h;
}

void canonical_order(HiddenMarkov& h) {
    const int n = h.n_states;
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (h.kind == EmissionKind::gaussian) {
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return h.emit_mean[a] < h.emit_mean[b]; });
    } else {
        const Eigen::Index last = h.emit_prob.cols() - 1;
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return h.emit_prob(a, last) < h.emit_prob(b, last); });
    }
    Eigen::VectorXd init(n);
    Eigen::MatrixXd trans(n, n);
    Eigen::MatrixXd emit = h.emit_prob;
    Eigen::VectorXd mean = h.emit_mean, var = h.emit_var;
    for (int s = 0; s < n; ++s) {
        init[s] = h.initial[idx[static_cast<std::size_t>(s)]];
        for (int t = 0; t < n; ++t)
            trans(s, t) = h.transition(idx[static_cast<std::size_t>(s)], idx[static_cast<std::size_t>(t)]);
        if (h.kind == EmissionKind::categorical)
            emit.row(s) = h.emit_prob.row(idx[static_cast<std::size_t>(s)]);
        else {
            mean[s] = h.emit_mean[idx[static_cast<std::size_t>(s)]];
            var[s] = h.emit_var[idx[static_cast<std::size_t>(s)]];
        }
    }
    h.initial = std::move(init);
    h.transition = std::move(trans);
    h.emit_prob = std::move(emit);
    h.emit_mean = std::move(mean);
    h.emit_var = std::move(var);
}

HiddenMarkov init_model_categorical(int n_states, int n_symbols, double self_p,
                                    std::mt19937_64& rng, bool jitter) {
    HiddenMarkov h;
    h.kind = EmissionKind::categorical;
    h.n_states = n_states;
    h.initial = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    h.transition = Eigen::MatrixXd::Constant(
        n_states, n_states, n_states > 1 ? (1.0 - self_p) / (n_states - 1) : 0.0);
    h.transition.diagonal().setConstant(n_states > 1 ? self_p : 1.0);
    h.emit_prob = Eigen::MatrixXd::Constant(n_states, n_symbols, 0.2 / std::max(1, n_symbols - 1));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int s = 0; s < n_states; ++s) {
        h.emit_prob(s, std::min(s, n_symbols - 1)) = 0.8;
        if (jitter)
            for (int o = 0; o < n_symbols; ++o) h.emit_prob(s, o) *= 0.5 + u(rng);
        h.emit_prob.row(s) /= h.emit_prob.row(s).sum();
    }
    return h;
}

HiddenMarkov init_model_gaussian(std::span<const double> obs, int n_states, double self_p,
                                 std::mt19937_64& rng, bool jitter) {
    HiddenMarkov h;
    h.kind = EmissionKind::gaussian;
    h.n_states = n_states;
    h.initial = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    h.transition = Eigen::MatrixXd::Constant(
        n_states, n_states, n_states > 1 ? (1.0 - self_p) / (n_states - 1) : 0.0);
    h.transition.diagonal().setConstant(n_states > 1 ? self_p : 1.0);

    std::vector<double> sorted(obs.begin(), obs.end());
    std::sort(sorted.begin(), sorted.end());
    h.emit_mean.resize(n_states);
    h.emit_var.resize(n_states);
    const double span = std::max(sorted.back() - sorted.front(), 1e-12);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int s = 0; s < n_states; ++s) {
        const auto pos = static_cast<std::size_t>((s + 0.5) / n_states *
                                                  static_cast<double>(sorted.size()));
        h.emit_mean[s] = sorted[std::min(pos, sorted.size() - 1)];
        if (jitter) h.emit_mean[s] += 0.25 * span / n_states * g(rng);
        h.emit_var[s] = span / (2.0 * n_states) * span / (2.0 * n_states);
    }
    return h;
}

HiddenMarkov train_dispatch(std::span<const int> symbols, std::span<const double> gobs,
                            EmissionKind kind, int n_states, const HmmTrainOptions& opts) {
    const std::size_t T = kind == EmissionKind::categorical ? symbols.size() : gobs.size();
    if (T < 100) throw std::invalid_argument("hmm_train: need at least 100 observations");
    if (n_states < 1) throw std::invalid_argument("hmm_train: need at least one state");

    int n_symbols = 2;
    if (kind == EmissionKind::categorical) {
        int max_sym = 0;
        for (int s : symbols) {
            if (s < 0) throw std::invalid_argument("hmm_train: negative symbol");
            max_sym = std::max(max_sym, s);
        }
        n_symbols = max_sym + 1;
        if (n_symbols < 2) n_symbols = 2;
    }

    std::mt19937_64 rng(io::derive_seed(opts.seed, "hmm-init"));
    HiddenMarkov best;
    double best_ll = kNegInf;
    const int restarts = opts.init ? 1 : std::max(1, opts.restarts);
    for (int r = 0; r < restarts; ++r) {
        HiddenMarkov h0;
        if (opts.init) {
            h0 = *opts.init;
            if (h0.n_states != n_states || h0.kind != kind)
                throw std::invalid_argument("hmm_train: init model shape mismatch");
            h0.loglik_history.clear();
            h0.converged = false;
            h0.iteration_cap_hit = false;
        } else if (kind == EmissionKind::categorical) {
            h0 = init_model_categorical(n_states, n_symbols, opts.self_transition_init, rng, r > 0);
        } else {
            h0 = init_model_gaussian(gobs, n_states, opts.self_transition_init, rng, r > 0);
        }
        Eigen::MatrixXd b = kind == EmissionKind::categorical
                                ? emission_table_categorical(h0, symbols)
                                : emission_table_gaussian(h0, gobs);
        auto h = baum_welch(std::move(h0), b, symbols, gobs, opts);
        if (h.log_likelihood > best_ll) {
            best_ll = h.log_likelihood;
            best = std::move(h);
        }
    }
    canonical_order(best);
    return best;
}

}  // namespace

HiddenMarkov hmm_train_categorical(std::span<const int> symbols, int n_states,
                                   const HmmTrainOptions& opts) {
    return train_dispatch(symbols, {}, EmissionKind::categorical, n_states, opts);
}

HiddenMarkov hmm_train_gaussian(std::span<const double> obs, int n_states,
                                const HmmTrainOptions& opts) {
    return train_dispatch({}, obs, EmissionKind::gaussian, n_states, opts);
}

namespace {

LabelPath viterbi_impl(const HiddenMarkov& h, const Eigen::MatrixXd& b,
                       std::span<const double> times) {
    const Eigen::Index T = b.rows();
    const int n = h.n_states;
    if (!times.empty() && times.size() != static_cast<std::size_t>(T))
        throw std::invalid_argument("hmm_viterbi: times length mismatch");

    Eigen::MatrixXd delta(T, n);
    Eigen::MatrixXi from(T, n);
    for (int s = 0; s < n; ++s)
        delta(0, s) = std::log(h.initial[s]) + std::log(b(0, s));
    if ((delta.row(0).array() == kNegInf).all())
        throw std::runtime_error("hmm_viterbi: observation 0 impossible under every state");

    Eigen::MatrixXd log_a = h.transition.array().log().matrix();
    for (Eigen::Index t = 1; t < T; ++t) {
        bool any = false;
        for (int s = 0; s < n; ++s) {
            double bestv = kNegInf;
            int bestp = 0;
            for (int p = 0; p < n; ++p) {
                const double v = delta(t - 1, p) + log_a(p, s);
                if (v > bestv) {  // strict: ties keep the lowest predecessor
                    bestv = v;
                    bestp = p;
                }
            }
            delta(t, s) = bestv + std::log(b(t, s));
            from(t, s) = bestp;
            any |= std::isfinite(delta(t, s));
        }
        if (!any)
            throw std::runtime_error("hmm_viterbi: observation " + std::to_string(t) +
                                     " impossible under every state");
    }

    LabelPath path;
    path.states.resize(static_cast<std::size_t>(T));
    int cur = 0;
    for (int s = 1; s < n; ++s)
        if (delta(T - 1, s) > delta(T - 1, cur)) cur = s;
    path.log_prob = delta(T - 1, cur);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        path.states[static_cast<std::size_t>(t)] = cur;
        if (t > 0) cur = from(t, cur);
    }
    if (!times.empty()) path.times_s.assign(times.begin(), times.end());
    return path;
}

}  // namespace

LabelPath hmm_viterbi(const HiddenMarkov& model, std::span<const int> symbols,
                      std::span<const double> times_s) {
    return viterbi_impl(model, emission_table_categorical(model, symbols), times_s);
}

LabelPath hmm_viterbi(const HiddenMarkov& model, std::span<const double> obs,
                      std::span<const double> times_s) {
    return viterbi_impl(model, emission_table_gaussian(model, obs), times_s);
}

LabelPath fuse_parity_paths(const LabelPath& even_band, const LabelPath& odd_band) {
    if (even_band.times_s.size() != even_band.states.size() ||
        odd_band.times_s.size() != odd_band.states.size() || even_band.times_s.empty())
        throw std::invalid_argument("fuse_parity_paths: paths need timestamps");

    LabelPath fused;
    fused.log_prob = even_band.log_prob + odd_band.log_prob;
    fused.times_s.reserve(even_band.times_s.size() + odd_band.times_s.size());
    fused.states.reserve(fused.times_s.capacity());
    std::size_t a = 0, b = 0;
    while (a < even_band.times_s.size() || b < odd_band.times_s.size()) {
        const bool take_even =
            b >= odd_band.times_s.size() ||
            (a < even_band.times_s.size() && even_band.times_s[a] <= odd_band.times_s[b]);
        if (take_even) {
            // responded in even band -> even parity (0)
            fused.times_s.push_back(even_band.times_s[a]);
            fused.states.push_back(even_band.states[a] == 1 ? 0 : 1);
            ++a;
        } else {
            fused.times_s.push_back(odd_band.times_s[b]);
            fused.states.push_back(odd_band.states[b] == 1 ? 1 : 0);
            ++b;
        }
    }
    return fused;
}

// ---------------------------------------------------------------------------
// Silhouette and model-order selection
// ---------------------------------------------------------------------------

double silhouette_1d(std::span<const double> values, std::span<const int> labels, int k) {
    if (values.size() != labels.size() || values.empty())
        throw std::invalid_argument("silhouette_1d: size mismatch");
    if (k < 1) throw std::invalid_argument("silhouette_1d: k must be >= 1");

    std::vector<std::vector<double>> sorted(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || l >= k) throw std::invalid_argument("silhouette_1d: label out of range");
        sorted[static_cast<std::size_t>(l)].push_back(values[i]);
    }
    for (auto& v : sorted) {
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(v.begin(), v.end());
    }
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        auto& p = prefix[static_cast<std::size_t>(c)];
        p.resize(sorted[static_cast<std::size_t>(c)].size() + 1, 0.0);
        for (std::size_t i = 0; i < sorted[static_cast<std::size_t>(c)].size(); ++i)
            p[i + 1] = p[i] + sorted[static_cast<std::size_t>(c)][i];
    }

    auto sum_abs = [&](int c, double x) {
        const auto& v = sorted[static_cast<std::size_t>(c)];
        const auto& p = prefix[static_cast<std::size_t>(c)];
        const auto pos = static_cast<std::size_t>(
            std::upper_bound(v.begin(), v.end(), x) - v.begin());
        const double total = p.back();
        return x * static_cast<double>(pos) - p[pos] + (total - p[pos]) -
               x * static_cast<double>(v.size() - pos);
    };

    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int own = labels[i];
        const double x = values[i];
        const std::size_t own_size = sorted[static_cast<std::size_t>(own)].size();
        // a(i) = 0 for singleton clusters, so an isolated point scores 1
        const double a = own_size > 1
                             ? sum_abs(own, x) / static_cast<double>(own_size - 1)
                             : 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own) continue;
            b = std::min(b, sum_abs(c, x) / static_cast<double>(sorted[static_cast<std::size_t>(c)].size()));
        }
        if (k == 1) b = 0.0;
        const double denom = std::max(a, b);
        acc += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return acc / static_cast<double>(values.size());
}

namespace {

// Greedy nearest-mean matching between two component sets; returns the summed
// distance over matched pairs.
double matched_mean_distance(const GaussianMixture& a, const GaussianMixture& b) {
    const int k = a.components();
    std::vector<bool> used_a(static_cast<std::size_t>(k), false), used_b(static_cast<std::size_t>(k), false);
    double total = 0.0;
    for (int round = 0; round < k; ++round) {
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (int i = 0; i < k; ++i) {
            if (used_a[static_cast<std::size_t>(i)]) continue;
            for (int j = 0; j < k; ++j) {
                if (used_b[static_cast<std::size_t>(j)]) continue;
                const double d = (a.means.row(i) - b.means.row(j)).norm();
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        used_a[static_cast<std::size_t>(bi)] = true;
        used_b[static_cast<std::size_t>(bj)] = true;
        total += best;
    }
    return total;
}

}  // namespace

int choose_order(const std::vector<OrderScore>& scores, const ModelSelectionOptions& opts) {
    if (scores.empty()) throw std::invalid_argument("choose_order: empty score list");

    double gmax = 0.0, dmax = 0.0, sil_lo = 1.0, sil_hi = -1.0;
    for (const auto& s : scores) {
        if (!s.valid) continue;
        if (s.order > scores.front().order) gmax = std::max(gmax, std::abs(s.bic_gradient));
        dmax = std::max(dmax, s.train_test_distance);
        sil_lo = std::min(sil_lo, s.silhouette);
        sil_hi = std::max(sil_hi, s.silhouette);
    }
    const double sil_range = std::max(sil_hi - sil_lo, 1e-12);

    auto tail_mean_sil = [&](std::size_t from) {
        double acc = 0.0;
        int count = 0;
        for (std::size_t i = from; i < scores.size(); ++i) {
            if (!scores[i].valid) continue;
            acc += scores[i].silhouette;
            ++count;
        }
        return count ? acc / count : 0.0;
    };

    // settled = this order sits on the common plateau of all three curves
    auto settled = [&](std::size_t i) {
        const auto& s = scores[i];
        if (!s.valid) return false;
        const bool bic_ok = std::abs(s.bic_gradient) <= opts.bic_plateau_frac * gmax;
        const bool dist_ok = s.train_test_distance <= opts.dist_plateau_frac * dmax;
        const bool sil_ok =
            std::abs(s.silhouette - tail_mean_sil(i)) <= opts.sil_plateau_frac * sil_range;
        return bic_ok && dist_ok && sil_ok;
    };

    // the chosen order is the last point before every curve levels off
    int chosen = scores.front().order;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (!settled(i)) chosen = scores[i].order;
    return chosen;
}

ModelSelectionReport select_model_order(std::span<const double> q_values,
                                        const ModelSelectionOptions& opts, std::uint64_t seed) {
    if (q_values.size() < static_cast<std::size_t>(10 * opts.max_order))
        throw std::invalid_argument("select_model_order: too few samples for the largest order");

    // seeded subsample keeps the scan affordable on pooled datasets
    std::vector<double> sub;
    if (q_values.size() > static_cast<std::size_t>(opts.subsample)) {
        std::vector<std::size_t> idx(q_values.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(io::derive_seed(seed, "order-scan/subsample"));
        std::shuffle(idx.begin(), idx.end(), rng);
        sub.reserve(static_cast<std::size_t>(opts.subsample));
        for (int i = 0; i < opts.subsample; ++i) sub.push_back(q_values[idx[static_cast<std::size_t>(i)]]);
    } else {
        sub.assign(q_values.begin(), q_values.end());
    }
    Eigen::MatrixXd obs(static_cast<Eigen::Index>(sub.size()), 1);
    for (std::size_t i = 0; i < sub.size(); ++i) obs(static_cast<Eigen::Index>(i), 0) = sub[i];

    ModelSelectionReport report;
    double prev_bic = 0.0;
    for (int order = opts.min_order; order <= opts.max_order; ++order) {
        OrderScore score;
        score.order = order;

        GmmFitOptions fit_opts = opts.gmm;
        fit_opts.seed = io::derive_seed(seed, "order-scan/full/" + std::to_string(order));
        auto full = gmm_fit(obs, order, fit_opts);
        score.bic = full.bic(sub.size());
        score.bic_gradient = order == opts.min_order ? 0.0 : score.bic - prev_bic;
        prev_bic = score.bic;

        auto cls = gmm_classify(full, obs);
        score.silhouette = silhouette_1d(sub, cls.labels, order);
        if (std::isnan(score.silhouette)) {
            score.valid = false;
            score.silhouette = 0.0;
        }

        // train/test stability: average matched-mean distance over half splits
        double dist = 0.0;
        std::vector<std::size_t> idx(sub.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (int split = 0; split < opts.distance_splits; ++split) {
            std::mt19937_64 rng(io::derive_seed(
                seed, "order-scan/split/" + std::to_string(order) + "/" + std::to_string(split)));
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto half = sub.size() / 2;
            Eigen::MatrixXd a(static_cast<Eigen::Index>(half), 1);
            Eigen::MatrixXd b(static_cast<Eigen::Index>(sub.size() - half), 1);
            for (std::size_t i = 0; i < half; ++i) a(static_cast<Eigen::Index>(i), 0) = sub[idx[i]];
            for (std::size_t i = half; i < sub.size(); ++i)
                b(static_cast<Eigen::Index>(i - half), 0) = sub[idx[i]];
            GmmFitOptions ha = opts.gmm, hb = opts.gmm;
            ha.seed = io::derive_seed(fit_opts.seed, "half-a/" + std::to_string(split));
            hb.seed = io::derive_seed(fit_opts.seed, "half-b/" + std::to_string(split));
            try {
                dist += matched_mean_distance(gmm_fit(a, order, ha), gmm_fit(b, order, hb));
            } catch (const std::exception&) {
                score.valid = false;
            }
        }
        score.train_test_distance = dist / opts.distance_splits;
        report.scores.push_back(score);
    }
    report.chosen = choose_order(report.scores, opts);
    return report;
}

// ---------------------------------------------------------------------------
// Transition matrices and dwell statistics
// ---------------------------------------------------------------------------

TransitionMatrix transition_matrix(const LabelPath& path, int n_states) {
    if (n_states < 1) throw std::invalid_argument("transition_matrix: need n >= 1");
    for (int s : path.states)
        if (s < 0 || s >= n_states)
            throw std::invalid_argument("transition_matrix: label outside [0, n)");

    TransitionMatrix tm;
    tm.counts = Eigen::MatrixXd::Zero(n_states, n_states);
    for (std::size_t t = 0; t + 1 < path.states.size(); ++t)
        tm.counts(path.states[t], path.states[t + 1]) += 1.0;

    tm.p.resize(n_states, n_states);
    tm.row_flagged.assign(static_cast<std::size_t>(n_states), false);
    for (int s = 0; s < n_states; ++s) {
        const double total = tm.counts.row(s).sum();
        if (total > 0.0) {
            tm.p.row(s) = tm.counts.row(s) / total;
        } else {
            tm.p.row(s).setConstant(1.0 / n_states);
            tm.row_flagged[static_cast<std::size_t>(s)] = true;
        }
    }

    tm.row_neighbor_mass.resize(n_states);
    tm.row_scramble_mass.resize(n_states);
    double occ_total = 0.0;
    for (int s = 0; s < n_states; ++s) {
        double nb = 0.0, sc = 0.0;
        for (int t = 0; t < n_states; ++t) {
            if (t == s) continue;
            (std::abs(t - s) <= 2 ? nb : sc) += tm.p(s, t);
        }
        tm.row_neighbor_mass[s] = nb;
        tm.row_scramble_mass[s] = sc;
        const double occ = tm.counts.row(s).sum();
        tm.neighbor_mass += occ * nb;
        tm.scramble_mass += occ * sc;
        occ_total += occ;
    }
    if (occ_total > 0.0) {
        tm.neighbor_mass /= occ_total;
        tm.scramble_mass /= occ_total;
    }
    return tm;
}

Eigen::MatrixXd TransitionMatrix::display(bool zero_diagonal) const {
    Eigen::MatrixXd out = p;
    if (zero_diagonal) out.diagonal().setZero();
    return out;
}

namespace {

DwellSummary summarize(int state, std::vector<double>& dwells) {
    DwellSummary s;
    s.state = state;
    s.count = dwells.size();
    if (dwells.empty()) return s;
    double acc = 0.0;
    for (double d : dwells) {
        acc += d;
        s.max_s = std::max(s.max_s, d);
    }
    s.mean_s = acc / static_cast<double>(dwells.size());
    const auto mid = dwells.size() / 2;
    std::nth_element(dwells.begin(), dwells.begin() + static_cast<std::ptrdiff_t>(mid), dwells.end());
    s.median_s = dwells[mid];
    if (dwells.size() % 2 == 0) {
        const double lower = *std::max_element(dwells.begin(), dwells.begin() + static_cast<std::ptrdiff_t>(mid));
        s.median_s = 0.5 * (s.median_s + lower);
    }
    return s;
}

}  // namespace

DwellStats dwell_times(const LabelPath& path) {
    if (path.states.empty()) throw std::invalid_argument("dwell_times: empty path");

    const std::size_t T = path.states.size();
    const bool timed = path.times_s.size() == T;
    double median_dt = 1.0;
    if (timed && T > 1) {
        std::vector<double> gaps(T - 1);
        for (std::size_t i = 1; i < T; ++i) gaps[i - 1] = path.times_s[i] - path.times_s[i - 1];
        std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
        median_dt = gaps[gaps.size() / 2];
    }
    auto time_at = [&](std::size_t i) {
        return timed ? path.times_s[i] : static_cast<double>(i);
    };

    int max_state = 0;
    for (int s : path.states) max_state = std::max(max_state, s);
    std::vector<std::vector<double>> dwells(static_cast<std::size_t>(max_state) + 1);
    std::vector<double> pooled;
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= T; ++i) {
        if (i == T || path.states[i] != path.states[run_start]) {
            const double end = i == T ? time_at(T - 1) + median_dt : time_at(i);
            const double d = end - time_at(run_start);
            dwells[static_cast<std::size_t>(path.states[run_start])].push_back(d);
            pooled.push_back(d);
            run_start = i;
        }
    }

    DwellStats stats;
    for (std::size_t s = 0; s < dwells.size(); ++s)
        stats.per_state.push_back(summarize(static_cast<int>(s), dwells[s]));
    stats.pooled = summarize(-1, pooled);
    return stats;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

std::string GaussianMixture::to_json() const {
    json doc;
    doc["dim"] = dim;
    doc["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
    doc["means"] = to_nested(means);
    std::vector<std::vector<std::vector<double>>> cv;
    for (const auto& c : covs) cv.push_back(to_nested(c));
    doc["covariances"] = cv;
    doc["log_likelihood"] = log_likelihood;
    doc["converged"] = converged;
    doc["ridge_events"] = ridge_events;
    return doc.dump(2);
}

GaussianMixture GaussianMixture::from_json(const std::string& text) {
    json doc = json::parse(text);
    GaussianMixture g;
    g.dim = doc.at("dim").get<int>();
    const auto w = doc.at("weights").get<std::vector<double>>();
    g.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    g.means = from_nested(doc.at("means").get<std::vector<std::vector<double>>>());
    for (const auto& c : doc.at("covariances"))
        g.covs.push_back(from_nested(c.get<std::vector<std::vector<double>>>()));
    g.log_likelihood = doc.value("log_likelihood", 0.0);
    g.converged = doc.value("converged", false);
    g.ridge_events = doc.value("ridge_events", 0);
    return g;
}

std::string HiddenMarkov::to_json() const {
    json doc;
    doc["kind"] = kind == EmissionKind::categorical ? "categorical" : "gaussian";
    doc["n_states"] = n_states;
    doc["initial"] = std::vector<double>(initial.data(), initial.data() + initial.size());
    doc["transition"] = to_nested(transition);
    if (kind == EmissionKind::categorical) {
        doc["emit_prob"] = to_nested(emit_prob);
    } else {
        doc["emit_mean"] = std::vector<double>(emit_mean.data(), emit_mean.data() + emit_mean.size());
        doc["emit_var"] = std::vector<double>(emit_var.data(), emit_var.data() + emit_var.size());
    }
    doc["log_likelihood"] = log_likelihood;
    doc["converged"] = converged;
    doc["iteration_cap_hit"] = iteration_cap_hit;
    return doc.dump(2);
}

HiddenMarkov HiddenMarkov::from_json(const std::string& text) {
    json doc = json::parse(text);
    HiddenMarkov h;
    h.kind = doc.at("kind").get<std::string>() == "categorical" ? EmissionKind::categorical
                                                                : EmissionKind::gaussian;
    h.n_states = doc.at("n_states").get<int>();
    const auto init = doc.at("initial").get<std::vector<double>>();
    h.initial = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
    h.transition = from_nested(doc.at("transition").get<std::vector<std::vector<double>>>());
    if (h.kind == EmissionKind::categorical) {
        h.emit_prob = from_nested(doc.at("emit_prob").get<std::vector<std::vector<double>>>());
    } else {
        const auto m = doc.at("emit_mean").get<std::vector<double>>();
        const auto v = doc.at("emit_var").get<std::vector<double>>();
        h.emit_mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
        h.emit_var = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    h.log_likelihood = doc.value("log_likelihood", 0.0);
    h.converged = doc.value("converged", false);
    h.iteration_cap_hit = doc.value("iteration_cap_hit", false);
    return h;
}

std::string ModelSelectionReport::to_json() const {
    json doc;
    doc["chosen"] = chosen;
    json rows = json::array();
    for (const auto& s : scores) {
        rows.push_back({{"order", s.order},
                        {"silhouette", s.silhouette},
                        {"train_test_distance", s.train_test_distance},
                        {"bic", s.bic},
                        {"bic_gradient", s.bic_gradient},
                        {"valid", s.valid}});
    }
    doc["scores"] = rows;
    return doc.dump(2);
}

std::string TransitionMatrix::to_json() const {
    json doc;
    doc["p"] = to_nested(p);
    doc["counts"] = to_nested(counts);
    doc["temperature_k"] = temperature_k;
    doc["row_flagged"] = row_flagged;
    doc["neighbor_mass"] = neighbor_mass;
    doc["scramble_mass"] = scramble_mass;
    return doc.dump(2);
}

std::string DwellStats::to_json() const {
    auto entry = [](const DwellSummary& s) {
        return json{{"state", s.state},
                    {"count", s.count},
                    {"mean_s", s.mean_s},
                    {"median_s", s.median_s},
                    {"max_s", s.max_s}};
    };
    json doc;
    json rows = json::array();
    for (const auto& s : per_state) rows.push_back(entry(s));
    doc["per_state"] = rows;
    doc["pooled"] = entry(pooled);
    return doc.dump(2);
}

}  // namespace qnoise::classify
