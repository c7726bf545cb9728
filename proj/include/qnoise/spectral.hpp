#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qnoise::spectral {

enum class Window { hann, boxcar };

struct SegmentConfig {
    int nperseg = 0;         // 0 = auto (largest power of two <= n/8, clamped)
    double overlap = 0.5;    // fraction of nperseg shared between segments
    Window window = Window::hann;
    bool remove_mean = true;
};

/// One-sided segment-averaged periodogram. DC is excluded; normalization is
/// such that sum(values) * df equals the series variance (window power loss
/// corrected via the sum of squared window samples).
struct PsdEstimate {
    std::vector<double> freq_hz;
    std::vector<double> values;  // observable^2 / Hz
    double sample_interval_s = 0.0;
    int nperseg = 0;
    int segments = 0;

    double df() const { return freq_hz.size() > 1 ? freq_hz[1] - freq_hz[0] : 0.0; }
};

PsdEstimate psd(std::span<const double> series, double sample_interval_s,
                const SegmentConfig& cfg = {});

/// Hold-resample an unevenly sampled series onto a uniform grid at the given
/// interval (0 = median spacing). Jumps are preserved; values are held
/// between samples, matching quasi-stationary charge traces.
struct Resampled {
    std::vector<double> values;
    double sample_interval_s = 0.0;
};
Resampled resample_hold(std::span<const double> t_s, std::span<const double> values,
                        double sample_interval_s = 0.0);

/// S(f) = A / (1 + (f/f_c)^2) + B, fitted in log space with log-frequency
/// weights. Because the paper's quoted dwell conflates the spectral knee with
/// a switching rate, three dwell readings are exposed side by side.
struct LorentzianFit {
    double amplitude = 0.0;   // A, observable^2 / Hz
    double knee_hz = 0.0;     // f_c
    double floor_value = 0.0; // B, white background
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // over (A, f_c, B)
    double residual_rms = 0.0;  // weighted log-space residual
    int iterations = 0;

    double eval(double f_hz) const;

    /// Paper convention: dwell quoted as 1/f_c (169 Hz <-> 5.9 ms).
    double dwell_paper_s() const { return 1.0 / knee_hz; }
    /// Angular-frequency reading of the same knee.
    double dwell_angular_s() const;
    /// Random-telegraph correspondence: a symmetric two-state process with
    /// mean per-state dwell tau has S(f) = S0 / (1 + (pi f tau)^2), so the
    /// half-power knee sits at 1/(pi tau).
    double dwell_rts_s() const;

    std::string to_json() const;
};

struct LorentzianFitOptions {
    int max_iterations = 200;
    int restarts = 3;
    double tol = 1e-12;
};

LorentzianFit fit_lorentzian(const PsdEstimate& estimate, const LorentzianFitOptions& opts = {});

/// S(f) = amp_1hz * f^(-alpha), fitted by least squares of log S on log f.
struct PowerLawFit {
    double alpha = 0.0;
    double amp_1hz = 0.0;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    double residual_rms = 0.0;  // rms of log-space residuals
    int bins_used = 0;
    int bins_excluded = 0;  // nonpositive PSD bins dropped from the fit

    std::string to_json() const;
};

PowerLawFit fit_power_law(const PsdEstimate& estimate, double f_lo_hz, double f_hi_hz);

/// Spectral synthesis of 1/f^alpha noise: white Gaussian spectrum shaped by
/// f^(-alpha/2), inverse transformed. The one-sided PSD of the output matches
/// amp_1hz * f^(-alpha) within estimator error.
std::vector<double> gen_power_law_noise(double alpha, double amp_1hz, std::size_t n,
                                        double sample_interval_s, std::uint64_t seed);

}  // namespace qnoise::spectral
