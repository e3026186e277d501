//! Distance-dependent path loss and time-correlated Rayleigh fading.

use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::bessel_j0;
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest correlation accepted by [`FadingState::advance`]; anything at or
/// above 1 is pulled back here.
pub const MAX_CORRELATION: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub carrier_wavelength_m: f64,
    pub reference_distance_m: f64,
    pub pathloss_exponent: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub doppler_hz: f64,
    pub sample_time_s: f64,
}

impl Default for RadioConfig {
    /// 20 dBm over 1.4 MHz at 2 GHz, β = 3, d0 = 100 m, -174 dBm/Hz with a 7 dB
    /// noise figure; Doppler from a 1 m/s vehicle, 5 ms sampling.
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 2.0e9;
        Self {
            tx_power_dbm: 20.0,
            carrier_wavelength_m: wavelength,
            reference_distance_m: 100.0,
            pathloss_exponent: 3.0,
            bandwidth_hz: 1.4e6,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 7.0,
            doppler_hz: 1.0 / wavelength,
            sample_time_s: 0.005,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_wavelength", self.carrier_wavelength_m),
            ("reference_distance", self.reference_distance_m),
            ("bandwidth", self.bandwidth_hz),
            ("doppler_hz", self.doppler_hz),
            ("sample_time", self.sample_time_s),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(alloc::format!("{key} must be positive, got {v}")));
            }
        }
        for (key, v) in [
            ("tx_power", self.tx_power_dbm),
            ("noise_density", self.noise_density_dbm_hz),
            ("noise_figure", self.noise_figure_db),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(alloc::format!("{key} must be finite")));
            }
        }
        if !(2.0..=6.0).contains(&self.pathloss_exponent) {
            return Err(Error::Config(alloc::format!(
                "pathloss_exponent must lie in [2, 6], got {}",
                self.pathloss_exponent
            )));
        }
        Ok(())
    }

    /// Noise power over the whole band in dBm.
    pub fn noise_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * libm::log10(self.bandwidth_hz) + self.noise_figure_db
    }

    /// Free-space loss from the antenna out to the reference distance, in dB.
    pub fn reference_loss_db(&self) -> f64 {
        20.0 * libm::log10(4.0 * PI * self.reference_distance_m / self.carrier_wavelength_m)
    }

    /// Lag-one correlation of the complex gain, `J0(2π f_d T_s)`.
    pub fn correlation(&self) -> Result<f64> {
        bessel_j0(2.0 * PI * self.doppler_hz * self.sample_time_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSnr {
    pub linear: f64,
    /// Set when the distance was below the reference distance and clamped.
    pub distance_clamped: bool,
}

/// Mean received SNR at `distance_m` (path loss only, no fading).
pub fn mean_snr(config: &RadioConfig, distance_m: f64) -> MeanSnr {
    let d0 = config.reference_distance_m;
    let distance_clamped = !(distance_m >= d0);
    let d = if distance_clamped { d0 } else { distance_m };
    let tx_mw = libm::pow(10.0, config.tx_power_dbm / 10.0);
    let noise_mw = libm::pow(10.0, config.noise_dbm() / 10.0);
    let free_space = libm::pow(config.carrier_wavelength_m / (4.0 * PI * d0), 2.0);
    let decay = libm::pow(d0 / d, config.pathloss_exponent);
    MeanSnr { linear: tx_mw * free_space * decay / noise_mw, distance_clamped }
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * libm::log10(linear)
}

pub fn from_db(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Draw from the circularly-symmetric complex Gaussian with `E|h|² = 1`.
pub fn unit_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingState {
    pub complex_gain: Complex64,
    pub mean_snr_linear: f64,
    pub inst_snr_linear: f64,
}

impl FadingState {
    /// Starts from the stationary distribution of the gain process.
    pub fn new<R: Rng + ?Sized>(mean_snr_linear: f64, rng: &mut R) -> Self {
        Self::with_gain(unit_complex_gaussian(rng), mean_snr_linear)
    }

    pub fn with_gain(complex_gain: Complex64, mean_snr_linear: f64) -> Self {
        Self { complex_gain, mean_snr_linear, inst_snr_linear: complex_gain.norm_sqr() * mean_snr_linear }
    }

    pub fn power_gain(&self) -> f64 {
        self.complex_gain.norm_sqr()
    }

    /// Updates the mean SNR (e.g. after the vehicle moved) keeping the gain.
    pub fn with_mean_snr(self, mean_snr_linear: f64) -> Self {
        Self::with_gain(self.complex_gain, mean_snr_linear)
    }

    /// One AR(1) step `h' = ρ h + sqrt(1 - ρ²) w`. The flag is set when `ρ`
    /// was out of range and had to be clamped.
    pub fn advance<R: Rng + ?Sized>(&self, rho: f64, rng: &mut R) -> (Self, bool) {
        let (rho, clamped) = if rho >= 1.0 {
            (MAX_CORRELATION, true)
        } else if !(rho >= 0.0) {
            (0.0, true)
        } else {
            (rho, false)
        };
        let innovation = unit_complex_gaussian(rng);
        let gain = self.complex_gain * rho + innovation * libm::sqrt(1.0 - rho * rho);
        (Self::with_gain(gain, self.mean_snr_linear), clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_distance_has_unit_decay() {
        let cfg = RadioConfig::default();
        let g = mean_snr(&cfg, cfg.reference_distance_m);
        let expected_db = cfg.tx_power_dbm - cfg.reference_loss_db() - cfg.noise_dbm();
        assert!((to_db(g.linear) - expected_db).abs() < 1e-10);
        assert!(!g.distance_clamped);
    }

    #[test]
    fn doubling_distance_scales_by_two_to_minus_beta() {
        let cfg = RadioConfig::default();
        let near = mean_snr(&cfg, 137.0).linear;
        let far = mean_snr(&cfg, 274.0).linear;
        assert!((far / near - 0.125).abs() < 1e-14);
    }

    #[test]
    fn link_budget_at_one_kilometre() {
        // Hand budget: FSPL(1 m, 2 GHz) = 38.4684 dB, 30 dB per decade for
        // three decades, noise -174 + 61.4613 + 7 = -105.5387 dBm.
        // 20 - 38.4684 - 90 + 105.5387 = -2.9297 dB.
        let cfg = RadioConfig { reference_distance_m: 1.0, ..RadioConfig::default() };
        let g = mean_snr(&cfg, 1000.0);
        assert!((to_db(g.linear) - (-2.929_7)).abs() < 1e-3, "{}", to_db(g.linear));

        // free-space segment out to 100 m: 20 dB less loss than 1 m + 30 dB/decade
        let g = mean_snr(&RadioConfig::default(), 1000.0);
        assert!((to_db(g.linear) - 17.070_3).abs() < 1e-3, "{}", to_db(g.linear));
    }

    #[test]
    fn distances_inside_reference_are_clamped() {
        let cfg = RadioConfig::default();
        let g = mean_snr(&cfg, 0.2);
        assert!(g.distance_clamped);
        assert_eq!(g.linear, mean_snr(&cfg, cfg.reference_distance_m).linear);
    }

    #[test]
    fn default_correlation_is_about_0_989() {
        let rho = RadioConfig::default().correlation().unwrap();
        assert!((rho - 0.989).abs() < 5e-4, "{rho}");
    }

    #[test]
    fn validation_catches_exponent_and_sign() {
        let cfg = RadioConfig { pathloss_exponent: 1.5, ..RadioConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RadioConfig { bandwidth_hz: -1.0, ..RadioConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn advance_clamps_unit_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = FadingState::new(1.0, &mut rng);
        let (next, clamped) = s.advance(1.0, &mut rng);
        assert!(clamped);
        assert!((next.complex_gain - s.complex_gain).norm_sqr() < 1e-6);
        let (_, clamped) = s.advance(0.5, &mut rng);
        assert!(!clamped);
    }

    #[test]
    fn inst_snr_tracks_gain_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = FadingState::new(4.0, &mut rng);
        assert!((s.inst_snr_linear - 4.0 * s.power_gain()).abs() < 1e-15);
        let t = s.with_mean_snr(2.0);
        assert!((t.inst_snr_linear - 2.0 * s.power_gain()).abs() < 1e-15);
    }
}
