use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounds of a uniformly sampled parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.min..=self.max).contains(&v)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// One sampled camera ISP configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IspParams {
    pub wb_gains: [f64; 3],
    /// Row-major colour correction; output channel `i` is `Σⱼ ccm[i][j]·inⱼ`.
    pub ccm: [[f64; 3]; 3],
    pub gamma: f64,
    pub gauss_sigma: f64,
    pub poisson_lambda: f64,
    pub jpeg_qf: u8,
    pub seed: u64,
}

pub const GAMMA_RANGE: Range = Range::new(1.8, 2.6);
pub const WB_GAIN_RANGE: Range = Range::new(0.5, 2.0);

impl IspParams {
    /// Unit gains, identity CCM, gamma 1, no noise, quality 100.
    pub fn identity() -> Self {
        Self {
            wb_gains: [1.0; 3],
            ccm: IDENTITY3,
            gamma: 1.0,
            gauss_sigma: 0.0,
            poisson_lambda: 0.0,
            jpeg_qf: 100,
            seed: 0,
        }
    }

    /// The fixed reference camera used to invert clean RGB back to RAW.
    pub fn canonical() -> Self {
        Self {
            gamma: 2.2,
            ..Self::identity()
        }
    }

    /// Checks the sampled-parameter invariants (gamma and gain ranges,
    /// white-preserving CCM, noise and quality bounds).
    pub fn validate(&self) -> Result<()> {
        if !GAMMA_RANGE.contains(self.gamma) {
            return Err(Error::Parameter(format!("gamma {} outside [1.8, 2.6]", self.gamma)));
        }
        if let Some(g) = self.wb_gains.iter().find(|g| !WB_GAIN_RANGE.contains(**g)) {
            return Err(Error::Parameter(format!("white-balance gain {g} outside [0.5, 2]")));
        }
        for (i, row) in self.ccm.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Parameter(format!("ccm row {i} sums to {s}, not 1")));
            }
        }
        if !(self.gauss_sigma >= 0.0 && self.poisson_lambda >= 0.0) {
            return Err(Error::Parameter("noise levels must be non-negative".into()));
        }
        if !(1..=100).contains(&self.jpeg_qf) {
            return Err(Error::Parameter(format!("jpeg quality {} outside [1, 100]", self.jpeg_qf)));
        }
        Ok(())
    }
}

pub(crate) const IDENTITY3: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Sampling ranges for every [`IspParams`] field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationProfile {
    pub name: String,
    pub wb_gain: Range,
    /// Off-diagonal CCM perturbation before row renormalisation.
    pub ccm_offdiag: Range,
    pub gamma: Range,
    pub gauss_sigma: Range,
    pub poisson_lambda: Range,
    pub jpeg_qf: Range,
}

impl DegradationProfile {
    /// Gaussian σ in [0.05, 0.10], JPEG quality in [10, 30], no shot noise.
    pub fn default_preset() -> Self {
        Self {
            name: "default".into(),
            wb_gain: Range::new(0.75, 1.35),
            ccm_offdiag: Range::new(-0.1, 0.1),
            gamma: GAMMA_RANGE,
            gauss_sigma: Range::new(0.05, 0.10),
            poisson_lambda: Range::fixed(0.0),
            jpeg_qf: Range::new(10.0, 30.0),
        }
    }

    /// Low-light setting: σ in [0.15, 0.35], shot-noise λ in [0.02, 0.04],
    /// JPEG quality in [50, 95].
    pub fn dark_preset() -> Self {
        Self {
            name: "dark".into(),
            gauss_sigma: Range::new(0.15, 0.35),
            poisson_lambda: Range::new(0.02, 0.04),
            jpeg_qf: Range::new(50.0, 95.0),
            ..Self::default_preset()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("wb_gain", self.wb_gain),
            ("ccm_offdiag", self.ccm_offdiag),
            ("gamma", self.gamma),
            ("gauss_sigma", self.gauss_sigma),
            ("poisson_lambda", self.poisson_lambda),
            ("jpeg_qf", self.jpeg_qf),
        ];
        for (name, r) in ranges {
            if !(r.min <= r.max) {
                return Err(Error::Parameter(format!("{name}: min {} > max {}", r.min, r.max)));
            }
        }
        if self.wb_gain.min < WB_GAIN_RANGE.min || self.wb_gain.max > WB_GAIN_RANGE.max {
            return Err(Error::Parameter("wb_gain range exceeds [0.5, 2]".into()));
        }
        if self.gamma.min < GAMMA_RANGE.min || self.gamma.max > GAMMA_RANGE.max {
            return Err(Error::Parameter("gamma range exceeds [1.8, 2.6]".into()));
        }
        if self.gauss_sigma.min < 0.0 || self.poisson_lambda.min < 0.0 {
            return Err(Error::Parameter("noise ranges must be non-negative".into()));
        }
        if self.jpeg_qf.min < 1.0 || self.jpeg_qf.max > 100.0 {
            return Err(Error::Parameter("jpeg_qf range exceeds [1, 100]".into()));
        }
        Ok(())
    }
}

impl FromStr for DegradationProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::default_preset()),
            "dark" => Ok(Self::dark_preset()),
            other => Err(Error::Config(format!(
                "unknown degradation profile `{other}` (expected `default` or `dark`)"
            ))),
        }
    }
}

impl fmt::Display for DegradationProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Draws one ISP configuration; every field is uniform within its range.
pub fn sample_params(profile: &DegradationProfile, rng: &mut impl Rng) -> Result<IspParams> {
    profile.validate()?;
    let wb_gains = [0; 3].map(|_| profile.wb_gain.sample(rng));
    let mut ccm = IDENTITY3;
    for (i, row) in ccm.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = profile.ccm_offdiag.sample(rng);
            }
        }
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    let gamma = profile.gamma.sample(rng);
    let gauss_sigma = profile.gauss_sigma.sample(rng);
    let poisson_lambda = profile.poisson_lambda.sample(rng);
    let (qlo, qhi) = (profile.jpeg_qf.min.ceil() as u8, profile.jpeg_qf.max.floor() as u8);
    let jpeg_qf = rng.random_range(qlo..=qhi);
    let seed = rng.random();
    let params = IspParams {
        wb_gains,
        ccm,
        gamma,
        gauss_sigma,
        poisson_lambda,
        jpeg_qf,
        seed,
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dark_preset_ranges_hold_for_every_draw() {
        let profile = DegradationProfile::dark_preset();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = sample_params(&profile, &mut rng).unwrap();
            assert!((0.15..=0.35).contains(&p.gauss_sigma));
            assert!((0.02..=0.04).contains(&p.poisson_lambda));
            assert!((50..=95).contains(&p.jpeg_qf));
        }
    }

    #[test]
    fn default_preset_ranges_hold_for_every_draw() {
        let profile = DegradationProfile::default_preset();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen_lo = false;
        let mut seen_hi = false;
        for _ in 0..2000 {
            let p = sample_params(&profile, &mut rng).unwrap();
            assert!((0.05..=0.10).contains(&p.gauss_sigma));
            assert!((10..=30).contains(&p.jpeg_qf));
            assert_eq!(p.poisson_lambda, 0.0);
            seen_lo |= p.jpeg_qf == 10;
            seen_hi |= p.jpeg_qf == 30;
        }
        assert!(seen_lo && seen_hi, "quality endpoints should be reachable");
    }

    #[test]
    fn same_seed_same_params() {
        let profile = DegradationProfile::default_preset();
        let a = sample_params(&profile, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample_params(&profile, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ccm_rows_are_white_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_params(&DegradationProfile::default_preset(), &mut rng).unwrap();
        for row in p.ccm {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverted_range_is_rejected() {
        let mut profile = DegradationProfile::default_preset();
        profile.gauss_sigma = Range::new(0.2, 0.1);
        assert!(matches!(
            sample_params(&profile, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn unknown_profile_name() {
        assert!("bright".parse::<DegradationProfile>().is_err());
        assert_eq!("dark".parse::<DegradationProfile>().unwrap().name, "dark");
    }
}
