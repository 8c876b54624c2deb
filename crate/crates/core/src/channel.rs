//! RF and THz downlink link models.
//!
//! Everything here is a pure function of its arguments. Random quantities
//! (fading powers, beam alignment) are drawn by the caller through an explicit
//! RNG and passed in, so identical inputs always give bit-identical outputs.

use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Radio parameters shared by every base station of a deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub f_r_hz: f64,
    pub f_t_hz: f64,
    pub p_r_tx_w: f64,
    pub p_t_tx_w: f64,
    pub g_r_tx: f64,
    pub g_r_rx: f64,
    pub g_t_max_tx: f64,
    pub g_t_max_rx: f64,
    /// Side-lobe gain of the THz antennas. Zero means side lobes are ignored.
    pub g_t_min: f64,
    pub theta_tx_rad: f64,
    pub theta_rx_rad: f64,
    pub alpha: f64,
    pub k_a_per_m: f64,
    pub w_r_hz: f64,
    pub w_t_hz: f64,
    pub sigma2_w: f64,
    pub n0_w: f64,
    pub h_r_m: f64,
    pub h_t_m: f64,
    pub l_b_r_symbols: f64,
    pub l_b_t_symbols: f64,
    pub eps_c: f64,
    pub q_r: u32,
    pub q_t: u32,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            f_r_hz: 3.5e9,
            f_t_hz: 1.0e12,
            p_r_tx_w: 1.0,
            p_t_tx_w: 1.0,
            g_r_tx: 316.2,
            g_r_rx: 316.2,
            g_t_max_tx: 316.2,
            g_t_max_rx: 316.2,
            g_t_min: 0.0,
            theta_tx_rad: 10f64.to_radians(),
            theta_rx_rad: 10f64.to_radians(),
            alpha: 4.0,
            k_a_per_m: 0.05,
            w_r_hz: 4.0e7,
            w_t_hz: 5.0e8,
            sigma2_w: 1e-13,
            n0_w: 1e-12,
            h_r_m: 10.0,
            h_t_m: 5.0,
            // D_t * W: 4e-7 s * 4e7 Hz and 5e-8 s * 5e8 Hz
            l_b_r_symbols: 16.0,
            l_b_t_symbols: 25.0,
            eps_c: 1e-5,
            q_r: 5,
            q_t: 10,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_r_hz", self.f_r_hz),
            ("f_t_hz", self.f_t_hz),
            ("p_r_tx_w", self.p_r_tx_w),
            ("p_t_tx_w", self.p_t_tx_w),
            ("g_r_tx", self.g_r_tx),
            ("g_r_rx", self.g_r_rx),
            ("g_t_max_tx", self.g_t_max_tx),
            ("g_t_max_rx", self.g_t_max_rx),
            ("w_r_hz", self.w_r_hz),
            ("w_t_hz", self.w_t_hz),
            ("sigma2_w", self.sigma2_w),
            ("n0_w", self.n0_w),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("radio.{name} must be > 0, got {v}")));
            }
        }
        if !(self.g_t_min.is_finite() && self.g_t_min >= 0.0) {
            return Err(Error::config("radio.g_t_min must be >= 0"));
        }
        for (name, v) in [("theta_tx_rad", self.theta_tx_rad), ("theta_rx_rad", self.theta_rx_rad)] {
            if !(0.0..=2.0 * PI).contains(&v) {
                return Err(Error::config(format!("radio.{name} must lie in [0, 2pi]")));
            }
        }
        if !(self.alpha >= 2.0) {
            return Err(Error::config("radio.alpha must be >= 2"));
        }
        if !(self.k_a_per_m.is_finite() && self.k_a_per_m >= 0.0) {
            return Err(Error::config("radio.k_a_per_m must be >= 0"));
        }
        if !(self.h_r_m >= 0.0 && self.h_t_m >= 0.0) {
            return Err(Error::config("antenna heights must be >= 0"));
        }
        if !(self.l_b_r_symbols >= 1.0 && self.l_b_t_symbols >= 1.0) {
            return Err(Error::config("blocklengths must be >= 1"));
        }
        if !(self.eps_c > 0.0 && self.eps_c < 0.5) {
            return Err(Error::config("radio.eps_c must lie in (0, 0.5)"));
        }
        if self.q_r == 0 || self.q_t == 0 {
            return Err(Error::config("base-station quotas must be >= 1"));
        }
        Ok(())
    }

    /// (c / 4 pi f)^2 for the RF carrier.
    pub fn rf_free_space(&self) -> f64 {
        (SPEED_OF_LIGHT / (4.0 * PI * self.f_r_hz)).powi(2)
    }

    pub fn thz_free_space(&self) -> f64 {
        (SPEED_OF_LIGHT / (4.0 * PI * self.f_t_hz)).powi(2)
    }

    /// Main-lobe hit probability of the transmit beam.
    pub fn f_tx(&self) -> f64 {
        self.theta_tx_rad / (2.0 * PI)
    }

    pub fn f_rx(&self) -> f64 {
        self.theta_rx_rad / (2.0 * PI)
    }
}

/// Ground distance plus antenna height of one BS-to-vehicle link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    ground_m: f64,
    height_m: f64,
}

impl LinkGeometry {
    pub fn new(ground_m: f64, height_m: f64) -> Result<Self> {
        if !(ground_m.is_finite() && height_m.is_finite()) {
            return Err(Error::domain("link geometry must be finite"));
        }
        if ground_m < 0.0 || height_m < 0.0 {
            return Err(Error::domain("link distances must be non-negative"));
        }
        Ok(Self { ground_m, height_m })
    }

    pub fn ground(&self) -> f64 {
        self.ground_m
    }

    pub fn height(&self) -> f64 {
        self.height_m
    }

    /// 3-D distance sqrt(d^2 + h^2).
    pub fn distance(&self) -> f64 {
        self.ground_m.hypot(self.height_m)
    }
}

fn checked_distance(g: &LinkGeometry) -> Result<f64> {
    let r = g.distance();
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::domain("link distance must be > 0"))
    }
}

fn checked_nonneg(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// SINR of a sub-6GHz link with exponential fading on every path.
///
/// `fading` is the fading power of the serving link; each interferer carries its
/// own fading power.
pub fn rf_sinr(
    serving: &LinkGeometry,
    fading: f64,
    interferers: &[(LinkGeometry, f64)],
    cfg: &RadioConfig,
) -> Result<f64> {
    let r = checked_distance(serving)?;
    let h = checked_nonneg("fading power", fading)?;
    let gamma = cfg.g_r_tx * cfg.g_r_rx * cfg.rf_free_space();

    let mut interference = 0.0;
    for (geom, hk) in interferers {
        let rk = checked_distance(geom)?;
        let hk = checked_nonneg("interferer fading power", *hk)?;
        interference += cfg.p_r_tx_w * gamma * rk.powf(-cfg.alpha) * hk;
    }

    let signal = cfg.p_r_tx_w * gamma * h;
    Ok(signal / (r.powf(cfg.alpha) * (cfg.sigma2_w + interference)))
}

/// SINR of a THz line-of-sight link.
///
/// The serving beam is always aligned (main lobe on both ends). Each interferer
/// carries its sampled alignment gain product, see [`sample_beam_alignment`].
/// The denominator collects thermal noise, molecular re-radiation noise from
/// the serving and interfering paths, and the interference itself.
pub fn thz_sinr(
    serving: &LinkGeometry,
    interferers: &[(LinkGeometry, f64)],
    cfg: &RadioConfig,
) -> Result<f64> {
    let r = checked_distance(serving)?;
    let fs = cfg.thz_free_space();
    let gamma = cfg.g_t_max_tx * cfg.g_t_max_rx * fs;
    let p = cfg.p_t_tx_w;
    let ka = cfg.k_a_per_m;

    let spread = p * gamma * r.powi(-2);
    let signal = spread * (-ka * r).exp();
    let mut noise = cfg.n0_w - spread * (-ka * r).exp_m1();
    let mut interference = 0.0;
    for (geom, gain) in interferers {
        let rk = checked_distance(geom)?;
        let gain = checked_nonneg("alignment gain product", *gain)?;
        let spread_k = gain * fs * p * rk.powi(-2);
        interference += spread_k * (-ka * rk).exp();
        noise -= spread_k * (-ka * rk).exp_m1();
    }
    Ok(signal / (noise + interference))
}

/// Draws the antenna gain product seen on an interfering THz path.
///
/// The transmit and receive sides independently land in their main lobe with
/// probabilities theta/2pi; otherwise the side-lobe gain applies.
pub fn sample_beam_alignment<R: Rng + ?Sized>(cfg: &RadioConfig, rng: &mut R) -> f64 {
    let tx = if rng.random::<f64>() < cfg.f_tx() {
        cfg.g_t_max_tx
    } else {
        cfg.g_t_min
    };
    let rx = if rng.random::<f64>() < cfg.f_rx() {
        cfg.g_t_max_rx
    } else {
        cfg.g_t_min
    };
    tx * rx
}

/// Standard Gaussian tail probability Q(x).
pub fn q_function(x: f64) -> f64 {
    0.5 * erf::erfc(x / SQRT_2)
}

/// Inverse of the Gaussian tail function: returns x with Q(x) = p.
pub fn inverse_q(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("inverse_q needs 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = SQRT_2 * erf::erfc_inv(2.0 * p);
    // One Newton polish on Q(x) - p; the tail is solved in the small-p
    // orientation so the residual does not cancel.
    let (target, sign) = if p < 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let mut t = sign * x;
    let density = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    if density > 0.0 {
        t += (q_function(t) - target) / density;
        x = sign * t;
    }
    Ok(x)
}

/// Finite-blocklength achievable rate in bit/s, clamped below at zero.
pub fn achievable_rate(sinr: f64, bandwidth_hz: f64, blocklength: f64, eps_c: f64) -> Result<f64> {
    if !(eps_c > 0.0 && eps_c < 0.5) {
        return Err(Error::domain(format!("decoding error probability must lie in (0, 0.5), got {eps_c}")));
    }
    checked_nonneg("sinr", sinr)?;
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(Error::domain("bandwidth must be > 0"));
    }
    if !(blocklength >= 1.0) {
        return Err(Error::domain("blocklength must be >= 1"));
    }
    let dispersion = 1.0 - 1.0 / ((1.0 + sinr) * (1.0 + sinr));
    let penalty = (dispersion / blocklength).sqrt() * inverse_q(eps_c)?;
    let rate = bandwidth_hz / LN_2 * (sinr.ln_1p() - penalty);
    Ok(rate.max(0.0))
}

/// Handover penalty class of an association decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Handover {
    Keep,
    ToRbs,
    ToTbs,
}

impl Handover {
    pub fn penalty(self) -> f64 {
        match self {
            Handover::Keep => 0.0,
            Handover::ToRbs => 0.1,
            Handover::ToTbs => 0.5,
        }
    }
}

/// Load- and handover-aware rate metric.
///
/// A zero load means the candidate vehicle would be the first association, so
/// the divisor becomes one.
pub fn weighted_rate(rate: f64, quota: u32, load: u32, mu: f64) -> Result<f64> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::domain(format!("rate must be finite and >= 0, got {rate}")));
    }
    if quota == 0 {
        return Err(Error::domain("quota must be >= 1"));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::domain("handover penalty must lie in [0, 1]"));
    }
    let divisor = quota.min(load).max(1);
    Ok(rate / f64::from(divisor) * (1.0 - mu))
}

/// One evaluated link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub sinr: f64,
    pub rate: f64,
    pub wr: f64,
    pub mu: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(d: f64, h: f64) -> LinkGeometry {
        LinkGeometry::new(d, h).unwrap()
    }

    #[test]
    fn default_radio_values() {
        let cfg = RadioConfig::default();
        assert_eq!(cfg.p_r_tx_w, 1.0);
        assert_eq!(cfg.g_r_tx, 316.2);
        assert_eq!(cfg.g_t_max_rx, 316.2);
        assert_eq!(cfg.f_r_hz, 3.5e9);
        assert_eq!(cfg.alpha, 4.0);
        assert_eq!((cfg.q_r, cfg.q_t), (5, 10));
        assert_eq!(cfg.l_b_t_symbols, cfg.w_t_hz * 5e-8);
        assert_eq!(cfg.l_b_r_symbols, cfg.w_r_hz * 4e-7);
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_fading_gives_zero_sinr() {
        let cfg = RadioConfig::default();
        let s = rf_sinr(&geom(100.0, 10.0), 0.0, &[(geom(300.0, 10.0), 1.0)], &cfg).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn zero_distance_and_nan_are_rejected() {
        let cfg = RadioConfig::default();
        assert!(rf_sinr(&geom(0.0, 0.0), 1.0, &[], &cfg).is_err());
        assert!(thz_sinr(&geom(0.0, 0.0), &[], &cfg).is_err());
        assert!(rf_sinr(&geom(10.0, 1.0), f64::NAN, &[], &cfg).is_err());
        assert!(LinkGeometry::new(f64::INFINITY, 1.0).is_err());
        assert!(LinkGeometry::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn thz_without_absorption_is_free_space() {
        let cfg = RadioConfig {
            k_a_per_m: 0.0,
            ..RadioConfig::default()
        };
        let g = geom(30.0, 5.0);
        let r = g.distance();
        let gamma = cfg.g_t_max_tx * cfg.g_t_max_rx * cfg.thz_free_space();
        let expect = gamma * cfg.p_t_tx_w * r.powi(-2) / cfg.n0_w;
        let got = thz_sinr(&g, &[], &cfg).unwrap();
        assert!(((got - expect) / expect).abs() < 1e-14);
    }

    #[test]
    fn sinr_decreases_with_distance() {
        let cfg = RadioConfig::default();
        let intf_rf = [(geom(400.0, 10.0), 0.7)];
        let intf_thz = [(geom(60.0, 5.0), cfg.g_t_max_tx * cfg.g_t_max_rx)];
        let mut prev_rf = f64::INFINITY;
        let mut prev_thz = f64::INFINITY;
        let mut d = 10.0;
        while d <= 1000.0 {
            let rf = rf_sinr(&geom(d, 10.0), 1.0, &intf_rf, &cfg).unwrap();
            let thz = thz_sinr(&geom(d, 5.0), &intf_thz, &cfg).unwrap();
            assert!(rf < prev_rf, "rf not decreasing at {d}");
            assert!(thz < prev_thz, "thz not decreasing at {d}");
            prev_rf = rf;
            prev_thz = thz;
            d += 5.0;
        }
    }

    #[test]
    fn beam_alignment_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = RadioConfig {
            theta_tx_rad: 2.0 * PI,
            theta_rx_rad: 2.0 * PI,
            ..RadioConfig::default()
        };
        let none = RadioConfig {
            theta_tx_rad: 0.0,
            theta_rx_rad: 0.0,
            ..RadioConfig::default()
        };
        for _ in 0..1000 {
            assert_eq!(sample_beam_alignment(&full, &mut rng), 316.2 * 316.2);
            assert_eq!(sample_beam_alignment(&none, &mut rng), 0.0);
        }
    }

    #[test]
    fn beam_alignment_frequency_at_half_beamwidth() {
        let cfg = RadioConfig {
            theta_tx_rad: PI,
            theta_rx_rad: PI,
            ..RadioConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let main = (0..n)
            .filter(|_| sample_beam_alignment(&cfg, &mut rng) > 0.0)
            .count();
        let freq = main as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn inverse_q_known_points() {
        assert_eq!(inverse_q(0.5).unwrap(), 0.0);
        let p = q_function(1.0);
        assert!((inverse_q(p).unwrap() - 1.0).abs() < 1e-9);
        assert!((inverse_q(1.0 - p).unwrap() + 1.0).abs() < 1e-9);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inverse_q(bad).is_err());
        }
    }

    #[test]
    fn rate_edge_cases() {
        assert_eq!(achievable_rate(0.0, 5e8, 25.0, 1e-5).unwrap(), 0.0);
        // dispersion penalty swamps the capacity term at low SINR
        assert_eq!(achievable_rate(1e-3, 5e8, 25.0, 1e-5).unwrap(), 0.0);
        assert!(achievable_rate(1.0, 5e8, 25.0, 0.5).is_err());
        assert!(achievable_rate(1.0, 5e8, 25.0, 0.0).is_err());
        assert!(achievable_rate(1.0, 5e8, 0.5, 1e-5).is_err());
        assert!(achievable_rate(-1.0, 5e8, 25.0, 1e-5).is_err());
    }

    #[test]
    fn handover_penalties_are_exact() {
        assert_eq!(Handover::Keep.penalty(), 0.0);
        assert_eq!(Handover::ToRbs.penalty(), 0.1);
        assert_eq!(Handover::ToTbs.penalty(), 0.5);
    }

    #[test]
    fn weighted_rate_cases() {
        assert_eq!(weighted_rate(1e8, 10, 4, Handover::Keep.penalty()).unwrap(), 2.5e7);
        assert_eq!(weighted_rate(1e8, 5, 8, Handover::ToTbs.penalty()).unwrap(), 1e7);
        assert_eq!(weighted_rate(1e8, 5, 0, 0.0).unwrap(), 1e8);
        assert!(weighted_rate(-1.0, 5, 1, 0.0).is_err());
        assert!(weighted_rate(1.0, 0, 1, 0.0).is_err());
    }
}
