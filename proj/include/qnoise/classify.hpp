#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qnoise::classify {

// ---------------------------------------------------------------------------
// Gaussian mixtures
// ---------------------------------------------------------------------------

struct GaussianMixture {
    int dim = 1;
    Eigen::VectorXd weights;             // k, positive, sums to 1
    Eigen::MatrixXd means;               // k x dim
    std::vector<Eigen::MatrixXd> covs;   // k matrices, dim x dim, PD
    double log_likelihood = 0.0;
    std::vector<double> loglik_history;  // one entry per EM iteration
    int ridge_events = 0;                // degenerate-covariance regularizations
    bool converged = false;

    int components() const { return static_cast<int>(weights.size()); }
    double bic(std::size_t n_samples) const;  // -2 logL + p ln m
    std::string to_json() const;
    static GaussianMixture from_json(const std::string& text);
};

struct GmmFitOptions {
    int restarts = 3;
    int max_iterations = 300;
    double tol = 1e-8;            // relative log-likelihood change
    double cov_floor_rel = 1e-6;  // covariance eigenvalue floor, relative to data variance
    std::uint64_t seed = 0;
};

/// EM to a local optimum; best of `restarts` seeded initializations by final
/// log-likelihood. Per-step monotonicity is asserted (with slack for ridge
/// regularization steps). Components come back sorted by first mean
/// coordinate.
GaussianMixture gmm_fit(const Eigen::MatrixXd& obs, int k, const GmmFitOptions& opts = {});

struct Classification {
    std::vector<int> labels;      // argmax posterior, ties toward lower index
    Eigen::MatrixXd posteriors;   // m x k, rows sum to 1
};

Classification gmm_classify(const GaussianMixture& model, const Eigen::MatrixXd& obs);

/// Parity reduction of 3-state readout labels: |1> and |2> count as "in
/// band" (readout relaxation folds 2 into 1), |0> as "out of band".
std::vector<int> parity_band_reduce(std::span<const int> labels);

// ---------------------------------------------------------------------------
// Hidden Markov models
// ---------------------------------------------------------------------------

enum class EmissionKind { categorical, gaussian };

struct HiddenMarkov {
    EmissionKind kind = EmissionKind::categorical;
    int n_states = 0;
    Eigen::VectorXd initial;
    Eigen::MatrixXd transition;   // row-stochastic
    Eigen::MatrixXd emit_prob;    // categorical: n_states x n_symbols
    Eigen::VectorXd emit_mean;    // gaussian
    Eigen::VectorXd emit_var;     // gaussian
    double log_likelihood = 0.0;
    std::vector<double> loglik_history;
    bool converged = false;
    bool iteration_cap_hit = false;   // returned with warning, never silently
    double max_row_sum_error = 0.0;   // worst row-sum deviation seen during training

    std::string to_json() const;
    static HiddenMarkov from_json(const std::string& text);
};

struct HmmTrainOptions {
    int max_iterations = 500;
    double tol = 1e-8;
    int restarts = 3;
    std::uint64_t seed = 0;
    double self_transition_init = 0.95;
    bool freeze_emissions = false;        // keep emissions of `init` fixed
    const HiddenMarkov* init = nullptr;   // optional starting model (restarts = 1)
};

/// Baum-Welch with scaled forward/backward passes (no underflow). States are
/// canonically ordered afterwards: by emission mean (gaussian) or by the
/// probability of emitting the highest symbol (categorical).
HiddenMarkov hmm_train_categorical(std::span<const int> symbols, int n_states,
                                   const HmmTrainOptions& opts = {});
HiddenMarkov hmm_train_gaussian(std::span<const double> obs, int n_states,
                                const HmmTrainOptions& opts = {});

struct LabelPath {
    std::vector<double> times_s;  // empty if the caller supplied none
    std::vector<int> states;
    double log_prob = 0.0;
};

/// Most probable state path in log space; ties break toward the lower state
/// index. Throws (naming the sample) if an observation has zero probability
/// under every state.
LabelPath hmm_viterbi(const HiddenMarkov& model, std::span<const int> symbols,
                      std::span<const double> times_s = {});
LabelPath hmm_viterbi(const HiddenMarkov& model, std::span<const double> obs,
                      std::span<const double> times_s = {});

/// Merge two decoded parity-band paths (states: 1 = qudit responded in this
/// band) into a single parity path sampled at every probe. Output states:
/// 0 = even parity, 1 = odd parity.
LabelPath fuse_parity_paths(const LabelPath& even_band, const LabelPath& odd_band);

// ---------------------------------------------------------------------------
// Model-order selection
// ---------------------------------------------------------------------------

/// Mean silhouette of a hard 1D clustering, computed exactly in
/// O(m k log m) via per-cluster prefix sums. Singleton clusters contribute
/// a(i) = 0 (so an isolated point scores 1). Returns NaN if any cluster of
/// 1..k is empty.
double silhouette_1d(std::span<const double> values, std::span<const int> labels, int k);

struct OrderScore {
    int order = 0;
    double silhouette = 0.0;
    double train_test_distance = 0.0;  // summed matched-mean distance between half fits
    double bic = 0.0;
    double bic_gradient = 0.0;  // bic[N] - bic[N-1]
    bool valid = true;          // false if a silhouette cluster came up empty
};

struct ModelSelectionOptions {
    int min_order = 1;
    int max_order = 19;
    int subsample = 20000;        // scan runs on a seeded subsample this size
    int distance_splits = 3;      // random half-splits averaged into the distance
    GmmFitOptions gmm{.restarts = 2, .max_iterations = 200, .tol = 1e-7};
    double bic_plateau_frac = 0.10;
    double dist_plateau_frac = 0.10;
    double sil_plateau_frac = 0.05;
};

struct ModelSelectionReport {
    std::vector<OrderScore> scores;
    int chosen = 0;
    std::string to_json() const;
};

/// Sweep mixture order over [min_order, max_order] on the pooled offsets and
/// apply the deterministic elbow rule described in choose_order().
ModelSelectionReport select_model_order(std::span<const double> q_values,
                                        const ModelSelectionOptions& opts, std::uint64_t seed);

/// The elbow rule, exposed separately so reports can be re-evaluated:
/// scanning down from the top, an order is "settled" once its BIC step and
/// its train/test distance are both within the plateau fractions of the
/// curve scales and its silhouette sits within sil_plateau_frac of the tail
/// plateau. Chosen is the last unsettled order (the paper's "last point
/// before the scores level off").
int choose_order(const std::vector<OrderScore>& scores, const ModelSelectionOptions& opts);

// ---------------------------------------------------------------------------
// Transition matrices and dwell statistics
// ---------------------------------------------------------------------------

struct TransitionMatrix {
    Eigen::MatrixXd p;        // row-normalized bigram counts
    Eigen::MatrixXd counts;   // raw bigram counts
    double temperature_k = 0.0;
    std::vector<bool> row_flagged;      // state never visited; row set uniform
    Eigen::VectorXd row_neighbor_mass;  // off-diagonal |di| <= 2 per row
    Eigen::VectorXd row_scramble_mass;  // |di| > 2 per row
    double neighbor_mass = 0.0;         // occupancy-weighted per-step probability
    double scramble_mass = 0.0;

    /// Copy with the diagonal zeroed for display contrast; stored
    /// probabilities are never modified.
    Eigen::MatrixXd display(bool zero_diagonal) const;
    std::string to_json() const;
};

TransitionMatrix transition_matrix(const LabelPath& path, int n_states);

struct DwellSummary {
    int state = -1;  // -1 for pooled
    std::size_t count = 0;
    double mean_s = 0.0;
    double median_s = 0.0;
    double max_s = 0.0;
};

struct DwellStats {
    std::vector<DwellSummary> per_state;
    DwellSummary pooled;
    std::string to_json() const;
};

/// Run-length statistics of a label path. Dwells are measured between run
/// starts; the final run extends one median sample interval past its last
/// sample.
DwellStats dwell_times(const LabelPath& path);

}  // namespace qnoise::classify
