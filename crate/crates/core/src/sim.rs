//! Synthetic herds driven by per-cow Michaelis–Menten milking curves.
//!
//! Each cow gets a curve `y(t)` giving the yield accumulated after `t` hours
//! since the previous milking, normalised so that `y(12 h) = y720`. The AM
//! interval is drawn from a truncated normal, the PM interval is its
//! complement to 24 h, and the recorded daily yield is the sum of the two
//! recorded milkings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{MilkingDataset, MilkingRecord, Provenance, Session};
use crate::scalar::Scalar;

/// Length of the reference interval in hours; curve time is measured in units of it.
const REFERENCE_HOURS: f64 = 12.0;

/// Decimal places kept for simulated intervals and yields.
pub const RECORD_DECIMALS: i32 = 4;

/// Normalisation of the Michaelis–Menten curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CurveForm {
    /// `y720 (1+k) τ / (k + τ)`: `k` is the half-saturation time in
    /// 12-hour units; the curve saturates at `y720 (1+k)`.
    HalfSaturation,
    /// `y720 (1+k) τ / (1 + k τ)`: `k` scales the saturation rate; the curve
    /// saturates at `y720 (1+k) / k`.
    #[default]
    SaturationRate,
}

/// Per-cow curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams<T> {
    /// Yield accumulated over a 12-hour interval, kg.
    pub y720: T,
    /// Dimensionless shape parameter.
    pub k: T,
}

impl<T: Scalar> CurveParams<T> {
    pub fn new(y720: T, k: T) -> Result<Self> {
        if !(y720 > T::zero()) || !(k > T::zero()) {
            return Err(Error::Domain(format!(
                "curve parameters must be positive (y720={y720}, k={k})"
            )));
        }
        Ok(Self { y720, k })
    }
}

/// Yield accumulated after `t` hours.
pub fn curve_yield<T: Scalar>(form: CurveForm, p: &CurveParams<T>, t: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("interval must be non-negative, got {t}")));
    }
    let one = T::one();
    let tau = t / T::lit(REFERENCE_HOURS);
    if tau.is_infinite() {
        return Ok(curve_asymptote(form, p));
    }
    let y = match form {
        CurveForm::HalfSaturation => p.y720 * (one + p.k) * tau / (p.k + tau),
        CurveForm::SaturationRate => p.y720 * (one + p.k) * tau / (one + p.k * tau),
    };
    Ok(y)
}

/// Limit of the curve as the interval grows without bound.
pub fn curve_asymptote<T: Scalar>(form: CurveForm, p: &CurveParams<T>) -> T {
    match form {
        CurveForm::HalfSaturation => p.y720 * (T::one() + p.k),
        CurveForm::SaturationRate => p.y720 * (T::one() + p.k) / p.k,
    }
}

/// Draws from `Normal(mu, sd)` conditioned on `[lo, hi]` by rejection.
///
/// Wide windows propose from the normal itself; windows narrow relative to
/// `sd` propose uniformly on the window and accept with the normal density
/// ratio, so the acceptance rate stays bounded away from zero either way.
pub fn sample_tn<R: Rng + ?Sized>(mu: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Domain(format!("standard deviation must be positive, got {sd}")));
    }
    if !(lo < hi) {
        return Err(Error::Domain(format!("empty truncation interval [{lo}, {hi}]")));
    }
    if !(lo < mu && mu < hi) {
        return Err(Error::Domain(format!(
            "mean {mu} lies outside the truncation interval [{lo}, {hi}]"
        )));
    }
    if hi - lo >= 2.5 * sd {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + sd * z;
            if x >= lo && x <= hi {
                return Ok(x);
            }
        }
    }
    loop {
        let x = rng.random_range(lo..=hi);
        let z = (x - mu) / sd;
        let u: f64 = rng.random();
        if u <= (-0.5 * z * z).exp() {
            return Ok(x);
        }
    }
}

/// How days in milk are assigned to simulated cows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DimSpec {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Default for DimSpec {
    fn default() -> Self {
        DimSpec::Constant(150.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_cows: usize,
    pub y720_mean: f64,
    pub y720_sd: f64,
    pub k_mean: f64,
    pub k_sd: f64,
    pub interval_mean: f64,
    pub interval_sd: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    /// Curve parameters are truncated at mean ± this many SDs.
    pub param_lo_sd_mult: f64,
    /// SD of the independent error added to each recorded milking, kg.
    pub noise_sd: f64,
    pub curve_form: CurveForm,
    pub dim: DimSpec,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_cows: 3000,
            y720_mean: 12.0,
            y720_sd: 2.0,
            k_mean: 0.8,
            k_sd: 0.1,
            interval_mean: 12.0,
            interval_sd: 1.12,
            interval_lo: 8.0,
            interval_hi: 16.0,
            param_lo_sd_mult: 3.0,
            noise_sd: 0.46,
            curve_form: CurveForm::default(),
            dim: DimSpec::default(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cows == 0 {
            return Err(Error::Config("n_cows must be at least 1".into()));
        }
        for (name, sd) in [
            ("y720_sd", self.y720_sd),
            ("k_sd", self.k_sd),
            ("interval_sd", self.interval_sd),
        ] {
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {sd}")));
            }
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config(format!("noise_sd must be non-negative, got {}", self.noise_sd)));
        }
        if !(self.param_lo_sd_mult > 0.0) {
            return Err(Error::Config("param_lo_sd_mult must be positive".into()));
        }
        if !(self.interval_lo < self.interval_mean && self.interval_mean < self.interval_hi) {
            return Err(Error::Config(format!(
                "interval bounds must bracket the mean: {} < {} < {}",
                self.interval_lo, self.interval_mean, self.interval_hi
            )));
        }
        if !(self.interval_lo > 0.0 && self.interval_hi < 24.0) {
            return Err(Error::Config(
                "interval bounds must lie strictly inside (0, 24) h".into(),
            ));
        }
        if !(self.y720_mean > 0.0 && self.k_mean > 0.0) {
            return Err(Error::Config("curve parameter means must be positive".into()));
        }
        if let DimSpec::Uniform { lo, hi } = self.dim {
            if !(lo < hi) {
                return Err(Error::Config(format!("empty DIM range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Truncation window for y720, kept strictly positive.
    pub fn y720_bounds(&self) -> (f64, f64) {
        let half = self.param_lo_sd_mult * self.y720_sd;
        ((self.y720_mean - half).max(1e-6), self.y720_mean + half)
    }

    pub fn k_bounds(&self) -> (f64, f64) {
        let half = self.param_lo_sd_mult * self.k_sd;
        ((self.k_mean - half).max(1e-6), self.k_mean + half)
    }
}

fn quantize(v: f64) -> f64 {
    let scale = 10f64.powi(RECORD_DECIMALS);
    (v * scale).round() / scale
}

/// One simulated cow: its curve, AM interval and the two recorded milkings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedCow {
    pub params: CurveParams<f64>,
    pub am_interval: f64,
    pub am_kg: f64,
    pub pm_kg: f64,
    pub dim: f64,
}

/// Generates cow `index` from its own counter-derived stream of `cfg.seed`.
pub fn simulate_cow(cfg: &SimConfig, index: usize) -> Result<SimulatedCow> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    let (y_lo, y_hi) = cfg.y720_bounds();
    let (k_lo, k_hi) = cfg.k_bounds();
    let y720 = sample_tn(cfg.y720_mean, cfg.y720_sd, y_lo, y_hi, &mut rng)?;
    let k = sample_tn(cfg.k_mean, cfg.k_sd, k_lo, k_hi, &mut rng)?;
    let t1 = sample_tn(
        cfg.interval_mean,
        cfg.interval_sd,
        cfg.interval_lo,
        cfg.interval_hi,
        &mut rng,
    )?;
    let params = CurveParams::new(y720, k)?;
    let am_interval = quantize(t1);
    let pm_interval = 24.0 - am_interval;

    let mut milking = |t: f64| -> Result<f64> {
        let clean = curve_yield(cfg.curve_form, &params, t)?;
        let noise = if cfg.noise_sd > 0.0 {
            cfg.noise_sd * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        // A scale never reads below its resolution.
        Ok(quantize((clean + noise).max(10f64.powi(-RECORD_DECIMALS))))
    };
    let am_kg = milking(am_interval)?;
    let pm_kg = milking(pm_interval)?;

    let dim = match cfg.dim {
        DimSpec::Constant(d) => d,
        DimSpec::Uniform { lo, hi } => rng.random_range(lo..hi).floor(),
    };
    Ok(SimulatedCow {
        params,
        am_interval,
        am_kg,
        pm_kg,
        dim,
    })
}

/// Simulates `cfg.n_cows` cows, two records (AM then PM) per cow.
pub fn simulate_herd<T: Scalar>(cfg: &SimConfig) -> Result<MilkingDataset<T>> {
    cfg.validate()?;
    let cows: Vec<SimulatedCow> = (0..cfg.n_cows)
        .into_par_iter()
        .map(|i| simulate_cow(cfg, i))
        .collect::<Result<_>>()?;

    let width = cfg.n_cows.to_string().len();
    let mut records = Vec::with_capacity(2 * cfg.n_cows);
    for (i, cow) in cows.iter().enumerate() {
        let cow_id = format!("C{:0width$}", i + 1, width = width);
        let daily = quantize(cow.am_kg + cow.pm_kg);
        for (session, interval, partial) in [
            (Session::Am, cow.am_interval, cow.am_kg),
            (Session::Pm, 24.0 - cow.am_interval, cow.pm_kg),
        ] {
            records.push(MilkingRecord {
                cow_id: cow_id.clone(),
                session,
                interval_h: T::lit(interval),
                partial_kg: T::lit(partial),
                daily_kg: Some(T::lit(daily)),
                dim: Some(T::lit(cow.dim)),
            });
        }
    }
    Ok(MilkingDataset::new(
        records,
        Provenance::Simulated {
            seed: cfg.seed,
            config: cfg.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(y720: f64, k: f64) -> CurveParams<f64> {
        CurveParams::new(y720, k).unwrap()
    }

    #[test]
    fn half_saturation_examples() {
        let form = CurveForm::HalfSaturation;
        assert_relative_eq!(curve_yield(form, &p(12.0, 0.8), 12.0).unwrap(), 12.0, epsilon = 1e-12);
        assert_eq!(curve_yield(form, &p(12.0, 0.8), 0.0).unwrap(), 0.0);
        // 21.6 * 2 / 2.8
        assert_relative_eq!(
            curve_yield(form, &p(12.0, 0.8), 24.0).unwrap(),
            15.428_571_428_571_43,
            epsilon = 1e-9
        );
        assert_relative_eq!(curve_yield(form, &p(12.0, 0.8), 1e6).unwrap(), 21.6, epsilon = 1e-3);
        assert_relative_eq!(curve_asymptote(form, &p(12.0, 0.8)), 21.6, epsilon = 1e-12);
    }

    #[test]
    fn saturation_rate_is_normalised_at_twelve_hours() {
        let form = CurveForm::SaturationRate;
        assert_relative_eq!(curve_yield(form, &p(12.0, 0.8), 12.0).unwrap(), 12.0, epsilon = 1e-12);
        // 12 * 1.8 * 2 / 2.6
        assert_relative_eq!(
            curve_yield(form, &p(12.0, 0.8), 24.0).unwrap(),
            16.615_384_615_384_6,
            epsilon = 1e-9
        );
        assert_relative_eq!(curve_yield(form, &p(12.0, 0.8), 1e9).unwrap(), 27.0, epsilon = 1e-6);
    }

    #[test]
    fn negative_interval_is_rejected() {
        assert!(matches!(
            curve_yield(CurveForm::HalfSaturation, &p(12.0, 0.8), -1.0),
            Err(Error::Domain(_))
        ));
        assert!(CurveParams::new(0.0, 0.8).is_err());
        assert!(CurveParams::new(12.0, -0.1).is_err());
    }

    #[test]
    fn curve_is_increasing_and_concave() {
        for form in [CurveForm::HalfSaturation, CurveForm::SaturationRate] {
            for &(y, k) in &[(12.0, 0.8), (6.0, 0.5), (18.0, 1.1)] {
                let ys: Vec<f64> = (0..=360)
                    .map(|i| curve_yield(form, &p(y, k), i as f64 * 0.1).unwrap())
                    .collect();
                for w in ys.windows(2) {
                    assert!(w[1] > w[0]);
                }
                for w in ys.windows(3) {
                    assert!(w[2] - 2.0 * w[1] + w[0] < 0.0);
                }
            }
        }
    }

    #[test]
    fn tn_draws_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = sample_tn(12.0, 1.12, 8.0, 16.0, &mut rng).unwrap();
            assert!((8.0..=16.0).contains(&x));
        }
        // narrow-window branch
        for _ in 0..1000 {
            let x = sample_tn(12.0, 100.0, 11.0, 13.0, &mut rng).unwrap();
            assert!((11.0..=13.0).contains(&x));
        }
    }

    #[test]
    fn tn_degenerate_sd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = sample_tn(12.0, 1e-9, 8.0, 16.0, &mut rng).unwrap();
            assert!((x - 12.0).abs() < 1e-6);
        }
    }

    #[test]
    fn tn_symmetric_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| sample_tn(12.0, 2.0, 6.0, 18.0, &mut rng).unwrap()).sum();
        assert!((s / n as f64 - 12.0).abs() < 0.03);
    }

    #[test]
    fn tn_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(sample_tn(12.0, 1.0, 16.0, 8.0, &mut rng).is_err());
        assert!(sample_tn(12.0, 0.0, 8.0, 16.0, &mut rng).is_err());
        assert!(sample_tn(20.0, 1.0, 8.0, 16.0, &mut rng).is_err());
    }

    #[test]
    fn small_herd_structure() {
        let cfg = SimConfig {
            n_cows: 10,
            ..SimConfig::default()
        };
        let data: MilkingDataset<f64> = simulate_herd(&cfg).unwrap();
        assert_eq!(data.len(), 20);
        for pair in data.records.chunks(2) {
            assert_eq!(pair[0].cow_id, pair[1].cow_id);
            assert_eq!(pair[0].session, Session::Am);
            assert_eq!(pair[1].session, Session::Pm);
            assert_eq!(pair[0].interval_h + pair[1].interval_h, 24.0);
            assert!((pair[0].daily_kg.unwrap() - pair[0].partial_kg - pair[1].partial_kg).abs() < 1e-9);
            assert_eq!(pair[0].daily_kg, pair[1].daily_kg);
            assert_eq!(pair[0].dim, Some(150.0));
        }
        data.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            n_cows: 0,
            ..SimConfig::default()
        };
        assert!(simulate_herd::<f64>(&bad).is_err());
        let bad = SimConfig {
            interval_lo: 12.5,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            k_sd: 0.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let cfg = SimConfig {
            n_cows: 50,
            ..SimConfig::default()
        };
        let a: MilkingDataset<f64> = simulate_herd(&cfg).unwrap();
        let b: MilkingDataset<f64> = simulate_herd(&cfg).unwrap();
        assert_eq!(a, b);
        let c: MilkingDataset<f64> = simulate_herd(&SimConfig { seed: 2, ..cfg }).unwrap();
        let ia: Vec<f64> = a.records.iter().map(|r| r.interval_h).collect();
        let ic: Vec<f64> = c.records.iter().map(|r| r.interval_h).collect();
        assert_ne!(ia, ic);
    }

    #[test]
    fn f32_herd() {
        let cfg = SimConfig {
            n_cows: 20,
            ..SimConfig::default()
        };
        let data: MilkingDataset<f32> = simulate_herd(&cfg).unwrap();
        assert_eq!(data.len(), 40);
        data.validate().unwrap();
    }
}
