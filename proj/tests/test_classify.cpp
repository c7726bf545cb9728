#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "qnoise/classify.hpp"
#include "qnoise/synth.hpp"

using namespace qnoise;
using namespace qnoise::classify;

namespace {

Eigen::MatrixXd column(const std::vector<double>& v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
}

std::vector<double> gaussian_blobs(const std::vector<double>& centers, double sigma,
                                   std::size_t per_cluster, std::uint64_t seed,
                                   std::vector<int>* labels = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> out;
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per_cluster; ++i) {
            out.push_back(centers[c] + g(rng));
            if (labels) labels->push_back(static_cast<int>(c));
        }
    // deterministic interleave so clusters are not contiguous
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

// Exhaustive most-probable-path oracle for small HMMs.
std::pair<std::vector<int>, double> brute_force_viterbi(const HiddenMarkov& h,
                                                        const std::vector<int>& symbols) {
    const int n = h.n_states;
    const std::size_t T = symbols.size();
    std::vector<int> best_path;
    double best_lp = -std::numeric_limits<double>::infinity();
    std::vector<int> path(T, 0);
    const auto total = static_cast<std::size_t>(std::pow(n, static_cast<double>(T)));
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t t = 0; t < T; ++t) {
            path[t] = static_cast<int>(c % static_cast<std::size_t>(n));
            c /= static_cast<std::size_t>(n);
        }
        double lp = std::log(h.initial[path[0]]) + std::log(h.emit_prob(path[0], symbols[0]));
        for (std::size_t t = 1; t < T; ++t)
            lp += std::log(h.transition(path[t - 1], path[t])) +
                  std::log(h.emit_prob(path[t], symbols[t]));
        if (lp > best_lp) {  // strict: ties keep the earlier (lexicographically lower) path
            best_lp = lp;
            best_path = path;
        }
    }
    return {best_path, best_lp};
}

}  // namespace

TEST_CASE("gmm on a single gaussian recovers sample moments") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(2.5, 0.7);
    std::vector<double> data(5000);
    for (auto& x : data) x = g(rng);
    auto obs = column(data);

    GmmFitOptions opts;
    opts.seed = 1;
    auto fit = gmm_fit(obs, 1, opts);

    double mean = 0.0;
    for (double x : data) mean += x;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (double x : data) var += (x - mean) * (x - mean);
    var /= static_cast<double>(data.size());

    CHECK(fit.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.means(0, 0) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(fit.covs[0](0, 0) == doctest::Approx(var).epsilon(1e-6));
    CHECK(fit.converged);

    // EM monotonicity (slack for the final arithmetic)
    for (std::size_t i = 1; i < fit.loglik_history.size(); ++i)
        CHECK(fit.loglik_history[i] >= fit.loglik_history[i - 1] - 1e-8);
}

TEST_CASE("gmm separates two 10-sigma clusters with perfect assignment") {
    std::vector<int> truth;
    auto data = gaussian_blobs({0.0, 1.0}, 0.05, 1500, 2, &truth);
    auto obs = column(data);
    GmmFitOptions opts;
    opts.seed = 2;
    auto fit = gmm_fit(obs, 2, opts);
    auto cls = gmm_classify(fit, obs);

    // canonical order sorts by mean, so cluster 0 is the left blob
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        correct += cls.labels[i] == (data[i] < 0.5 ? 0 : 1);
    CHECK(correct == data.size());
    for (Eigen::Index i = 0; i < cls.posteriors.rows(); ++i)
        CHECK(cls.posteriors.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("bic punishes gross overfitting on pure noise") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> data(400);
    for (auto& x : data) x = g(rng);
    auto obs = column(data);

    GmmFitOptions opts;
    opts.seed = 3;
    auto one = gmm_fit(obs, 1, opts);
    auto many = gmm_fit(obs, static_cast<int>(data.size()) / 10 / 4, opts);  // k = 10
    CHECK(one.bic(data.size()) < many.bic(data.size()));
}

TEST_CASE("gmm input validation") {
    auto obs = column(std::vector<double>(15, 1.0));
    CHECK_THROWS(gmm_fit(obs, 2, {}));  // needs 10 per component
    CHECK_THROWS(gmm_fit(obs, 0, {}));
}

TEST_CASE("posterior symmetry for an equidistant point") {
    GaussianMixture g;
    g.dim = 1;
    g.weights = Eigen::VectorXd::Constant(2, 0.5);
    g.means = Eigen::MatrixXd(2, 1);
    g.means << -1.0, 1.0;
    g.covs = {Eigen::MatrixXd::Constant(1, 1, 0.25), Eigen::MatrixXd::Constant(1, 1, 0.25)};

    Eigen::MatrixXd x(2, 1);
    x << 0.0, -1.0;
    auto cls = gmm_classify(g, x);
    CHECK(cls.posteriors(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cls.labels[0] == 0);  // tie resolves to the lower index
    CHECK(cls.posteriors(1, 0) > 0.999);
}

TEST_CASE("parity band reduction follows the in-band rule") {
    std::vector<int> labels{0, 1, 2, 0};
    CHECK(parity_band_reduce(labels) == std::vector<int>{0, 1, 1, 0});
    CHECK(parity_band_reduce(std::vector<int>(4, 0)) == std::vector<int>(4, 0));
    CHECK(parity_band_reduce(std::vector<int>(4, 2)) == std::vector<int>(4, 1));
    std::vector<int> bad{0, 3};
    CHECK_THROWS(parity_band_reduce(bad));
}

TEST_CASE("hmm on noiseless telegraph labels recovers flip frequency") {
    // deterministic two-state sequence with known flip count
    std::mt19937_64 rng(5);
    std::vector<int> symbols;
    int state = 0;
    std::size_t flips = 0;
    std::geometric_distribution<int> dwell(0.02);
    while (symbols.size() < 20000) {
        const int len = 1 + dwell(rng);
        for (int i = 0; i < len && symbols.size() < 20000; ++i) symbols.push_back(state);
        state = 1 - state;
        ++flips;
    }
    std::size_t emp_flips = 0;
    for (std::size_t i = 1; i < symbols.size(); ++i) emp_flips += symbols[i] != symbols[i - 1];

    HmmTrainOptions opts;
    opts.seed = 5;
    auto model = hmm_train_categorical(symbols, 2, opts);

    // canonical order: state 0 emits symbol 0
    CHECK(model.emit_prob(0, 0) > 0.999);
    CHECK(model.emit_prob(1, 1) > 0.999);
    const double expected01 =
        static_cast<double>(emp_flips) / 2.0 /
        (static_cast<double>(symbols.size()) / 2.0);  // flips per dwell step and state
    CHECK(model.transition(0, 1) == doctest::Approx(expected01).epsilon(0.05));

    // row stochasticity after training
    for (int s = 0; s < 2; ++s)
        CHECK(model.transition.row(s).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(model.max_row_sum_error < 1e-9);

    // monotone training likelihood
    for (std::size_t i = 1; i < model.loglik_history.size(); ++i)
        CHECK(model.loglik_history[i] >= model.loglik_history[i - 1] - 1e-8);

    // decoded path equals the symbols themselves in the noiseless limit
    auto path = hmm_viterbi(model, std::span<const int>(symbols));
    CHECK(path.states == symbols);
}

TEST_CASE("constant sequence collapses into one absorbing state") {
    std::vector<int> symbols(500, 1);
    HmmTrainOptions opts;
    opts.seed = 6;
    auto model = hmm_train_categorical(symbols, 2, opts);
    auto path = hmm_viterbi(model, std::span<const int>(symbols));
    const int first = path.states.front();
    for (int s : path.states) CHECK(s == first);
}

TEST_CASE("hmm needs at least 100 observations") {
    std::vector<int> symbols(99, 0);
    CHECK_THROWS(hmm_train_categorical(symbols, 2, {}));
}

TEST_CASE("viterbi suppresses an isolated spurious flip") {
    HiddenMarkov h;
    h.kind = EmissionKind::categorical;
    h.n_states = 2;
    h.initial = Eigen::VectorXd::Constant(2, 0.5);
    h.transition.resize(2, 2);
    h.transition << 0.999, 0.001, 0.001, 0.999;
    h.emit_prob.resize(2, 2);
    h.emit_prob << 0.95, 0.05, 0.05, 0.95;  // 5% label noise

    std::vector<int> symbols(41, 0);
    symbols[20] = 1;  // lone flipped label
    auto path = hmm_viterbi(h, std::span<const int>(symbols));
    for (int s : path.states) CHECK(s == 0);
}

TEST_CASE("viterbi equals exhaustive enumeration on small instances") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 3);        // up to 3 states
        const int T = 1 + static_cast<int>(rng() % 8);        // up to 8 observations
        const int n_sym = 2 + static_cast<int>(rng() % 2);    // 2..3 symbols
        HiddenMarkov h;
        h.kind = EmissionKind::categorical;
        h.n_states = n;
        h.initial.resize(n);
        h.transition.resize(n, n);
        h.emit_prob.resize(n, n_sym);
        for (int s = 0; s < n; ++s) {
            h.initial[s] = u(rng);
            for (int t = 0; t < n; ++t) h.transition(s, t) = u(rng);
            h.transition.row(s) /= h.transition.row(s).sum();
            for (int o = 0; o < n_sym; ++o) h.emit_prob(s, o) = u(rng);
            h.emit_prob.row(s) /= h.emit_prob.row(s).sum();
        }
        h.initial /= h.initial.sum();

        std::vector<int> symbols(static_cast<std::size_t>(T));
        for (auto& s : symbols) s = static_cast<int>(rng() % static_cast<std::uint64_t>(n_sym));

        auto fast = hmm_viterbi(h, std::span<const int>(symbols));
        auto [slow_path, slow_lp] = brute_force_viterbi(h, symbols);
        CHECK(fast.log_prob == doctest::Approx(slow_lp).epsilon(1e-12));
        CHECK(fast.states == slow_path);
    }
}

TEST_CASE("viterbi reports impossible observations by index") {
    HiddenMarkov h;
    h.kind = EmissionKind::categorical;
    h.n_states = 2;
    h.initial = Eigen::VectorXd::Constant(2, 0.5);
    h.transition = Eigen::MatrixXd::Constant(2, 2, 0.5);
    h.emit_prob.resize(2, 3);
    h.emit_prob << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0;  // symbol 2 impossible everywhere

    std::vector<int> symbols{0, 1, 2, 0};
    CHECK_THROWS_WITH_AS(hmm_viterbi(h, std::span<const int>(symbols)),
                         doctest::Contains("observation 2"), std::runtime_error);
}

TEST_CASE("gaussian-emission hmm recovers planted configuration offsets") {
    auto cfg = synth::ChargeEnvConfig::paper_like();
    cfg.duration_s = 400000.0;
    cfg.sample_interval_s = 4.0;
    cfg.seed = 31;
    // faster mixing so every state is well visited in 100k samples
    cfg.neighbor_base_rate_hz *= 20.0;
    cfg.scramble_rate_hz *= 20.0;
    auto trace = synth::gen_charge_trace(cfg, 0.010);

    HmmTrainOptions opts;
    opts.seed = 31;
    opts.restarts = 2;
    opts.max_iterations = 60;
    auto model = hmm_train_gaussian(trace.q_e, 8, opts);

    // occupancy per state for the tolerance 3 sigma / sqrt(n_s)
    std::vector<std::size_t> occ(8, 0);
    for (int s : trace.truth) ++occ[static_cast<std::size_t>(s)];
    for (int s = 0; s < 8; ++s) {
        const double tol =
            3.0 * cfg.noise_sigma_e / std::sqrt(static_cast<double>(occ[static_cast<std::size_t>(s)]));
        CHECK(std::abs(model.emit_mean[s] - cfg.offsets_e[static_cast<std::size_t>(s)]) <
              std::max(tol, 5e-4));
    }

    // decoding tracks the planted labels nearly everywhere
    auto path = hmm_viterbi(model, std::span<const double>(trace.q_e), trace.t_s);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < path.states.size(); ++i)
        agree += path.states[i] == trace.truth[i];
    CHECK(static_cast<double>(agree) / static_cast<double>(path.states.size()) > 0.99);
}

TEST_CASE("fuse_parity_paths merges band streams by timestamp") {
    LabelPath even;
    even.times_s = {0.0, 1.0, 2.0};
    even.states = {1, 1, 0};  // responded, responded, silent
    LabelPath odd;
    odd.times_s = {0.5, 1.5, 2.5};
    odd.states = {0, 0, 1};

    auto fused = fuse_parity_paths(even, odd);
    REQUIRE(fused.states.size() == 6);
    CHECK(fused.times_s == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0, 2.5});
    // even responses and odd silences are even parity (0)
    CHECK(fused.states == std::vector<int>{0, 0, 0, 0, 1, 1});
}

TEST_CASE("silhouette: degenerate two-point case and range") {
    std::vector<double> two{0.0, 1.0};
    std::vector<int> lab{0, 1};
    CHECK(silhouette_1d(two, lab, 2) == doctest::Approx(1.0));

    std::vector<int> truth;
    auto data = gaussian_blobs({0.0, 0.2, 0.4}, 0.01, 300, 11, &truth);
    // recompute labels after shuffle by nearest center
    std::vector<int> labels;
    for (double x : data)
        labels.push_back(static_cast<int>(std::lround(std::clamp(x, 0.0, 0.4) / 0.2)));
    const double s = silhouette_1d(data, labels, 3);
    CHECK(s > 0.8);
    CHECK(s <= 1.0);

    // empty cluster -> NaN
    std::vector<int> sparse(data.size(), 0);
    CHECK(std::isnan(silhouette_1d(data, sparse, 2)));
}

TEST_CASE("model order selection on well separated clusters") {
    {
        std::vector<int> truth;
        auto data3 = gaussian_blobs({0.1, 0.25, 0.4}, 0.008, 700, 13, &truth);
        ModelSelectionOptions opts;
        opts.max_order = 8;
        opts.subsample = 2000;
        auto report = select_model_order(data3, opts, 13);
        CHECK(report.chosen == 3);
    }
    {
        auto data1 = gaussian_blobs({0.25}, 0.01, 2000, 17);
        ModelSelectionOptions opts;
        opts.max_order = 6;
        opts.subsample = 2000;
        auto report = select_model_order(data1, opts, 17);
        CHECK(report.chosen == 1);
    }
    std::vector<double> tiny(50, 0.0);
    ModelSelectionOptions opts;
    CHECK_THROWS(select_model_order(tiny, opts, 1));
}

TEST_CASE("transition matrix counting, empty rows, display") {
    LabelPath path;
    path.states = {0, 0, 1, 1};
    auto tm = transition_matrix(path, 2);
    CHECK(tm.p(0, 0) == doctest::Approx(0.5));
    CHECK(tm.p(0, 1) == doctest::Approx(0.5));
    CHECK(tm.p(1, 1) == doctest::Approx(1.0));
    CHECK(!tm.row_flagged[0]);

    auto tm3 = transition_matrix(path, 3);
    CHECK(tm3.row_flagged[2]);
    CHECK(tm3.p(2, 0) == doctest::Approx(1.0 / 3.0));

    auto shown = tm.display(true);
    CHECK(shown(0, 0) == 0.0);
    CHECK(tm.p(0, 0) == doctest::Approx(0.5));  // stored values untouched

    LabelPath bad;
    bad.states = {0, 5};
    CHECK_THROWS(transition_matrix(bad, 2));
}

TEST_CASE("dwell statistics from run lengths") {
    LabelPath path;
    path.states = {0, 0, 0, 1, 1, 0};
    path.times_s = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    auto stats = dwell_times(path);
    // runs: state0 [0,3) -> 3 s, state1 [3,5) -> 2 s, state0 [5,6) -> 1 s
    CHECK(stats.pooled.count == 3);
    CHECK(stats.pooled.mean_s == doctest::Approx(2.0));
    CHECK(stats.per_state[0].count == 2);
    CHECK(stats.per_state[0].max_s == doctest::Approx(3.0));
    CHECK(stats.per_state[1].mean_s == doctest::Approx(2.0));

    LabelPath constant;
    constant.states = std::vector<int>(10, 2);
    auto cs = dwell_times(constant);
    CHECK(cs.pooled.count == 1);
    CHECK(cs.pooled.mean_s == doctest::Approx(10.0));  // unit sample interval

    CHECK_THROWS(dwell_times(LabelPath{}));
}

TEST_CASE("permutation equivariance: canonical order makes reports stable") {
    // same data, two seeds: state numbering must coincide after sorting
    std::vector<int> truth;
    auto data = gaussian_blobs({0.1, 0.3, 0.45}, 0.01, 800, 19, &truth);
    HmmTrainOptions a, b;
    a.seed = 100;
    b.seed = 200;
    a.restarts = b.restarts = 2;
    auto ma = hmm_train_gaussian(data, 3, a);
    auto mb = hmm_train_gaussian(data, 3, b);
    for (int s = 0; s < 3; ++s)
        CHECK(ma.emit_mean[s] == doctest::Approx(mb.emit_mean[s]).epsilon(0.05));
    for (int s = 1; s < 3; ++s) CHECK(ma.emit_mean[s] > ma.emit_mean[s - 1]);
}

TEST_CASE("model json round trips") {
    std::vector<int> truth;
    auto data = gaussian_blobs({0.1, 0.4}, 0.02, 300, 23, &truth);
    GmmFitOptions opts;
    opts.seed = 23;
    auto fit = gmm_fit(column(data), 2, opts);
    auto back = GaussianMixture::from_json(fit.to_json());
    CHECK(back.means(0, 0) == fit.means(0, 0));
    CHECK(back.covs[1](0, 0) == fit.covs[1](0, 0));

    HmmTrainOptions hopts;
    hopts.seed = 23;
    std::vector<int> syms(200);
    for (std::size_t i = 0; i < syms.size(); ++i) syms[i] = (i / 20) % 2;
    auto model = hmm_train_categorical(syms, 2, hopts);
    auto hback = HiddenMarkov::from_json(model.to_json());
    CHECK(hback.transition(0, 1) == model.transition(0, 1));
    CHECK(hback.emit_prob(1, 1) == model.emit_prob(1, 1));
}
