//! Synthetic tabular data with a controlled dependence between the label
//! and a binary sensitive attribute, sized after the income-prediction
//! benchmarks this crate's experiments mimic: roughly a third of samples
//! in the minority group overall, but only ~15% among the positive
//! class. Features are Gaussian with class- and group-dependent means so
//! a linear model can recover the label while also leaking the group.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Joint-distribution and feature-geometry knobs for [`generate`].
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub n: usize,
    /// Feature dimension; even indices lean on the label, odd on the group.
    pub d: usize,
    pub seed: u64,
    /// Overall P(s = 1).
    pub minority_rate: f64,
    /// P(y = 1).
    pub positive_rate: f64,
    /// P(s = 1 | y = 1); the lever the shift experiments move.
    pub minority_conditional: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub noise: f64,
    /// Fraction of rows whose feature signal is attenuated to near zero,
    /// forming a hard-to-classify subgroup.
    pub hard_fraction: f64,
}

impl SynthConfig {
    /// The default geometry with the benchmark rates: P(s=1) = 0.3307,
    /// P(y=1) = 0.25, P(s=1 | y=1) = 0.1503.
    pub fn adult_like(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n,
            d: 6,
            seed,
            minority_rate: 0.3307,
            positive_rate: 0.25,
            minority_conditional: 0.1503,
            noise: 1.0,
            hard_fraction: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Validation(
                "need at least 4 rows to cover every label/group cell".to_string(),
            ));
        }
        if self.d == 0 {
            return Err(Error::Validation("feature dimension must be positive".to_string()));
        }
        for (name, v) in [
            ("minority_rate", self.minority_rate),
            ("positive_rate", self.positive_rate),
            ("minority_conditional", self.minority_conditional),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::Validation(format!(
                    "{name} must lie strictly inside (0, 1), got {v}"
                )));
            }
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(Error::Validation(format!(
                "noise must be positive, got {}",
                self.noise
            )));
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(Error::Validation(format!(
                "hard fraction must lie in [0, 1], got {}",
                self.hard_fraction
            )));
        }
        // The four joint cells implied by the three rates must all be
        // positive: P(y=1,s=1), P(y=1,s=0), P(y=0,s=1), P(y=0,s=0).
        let p11 = self.positive_rate * self.minority_conditional;
        let p01 = self.minority_rate - p11;
        let p00 = 1.0 - self.positive_rate - p01;
        if p01 <= 0.0 || p00 <= 0.0 {
            return Err(Error::Validation(format!(
                "rates imply a nonpositive joint cell: P(y=0,s=1) = {p01}, P(y=0,s=0) = {p00}"
            )));
        }
        Ok(())
    }
}

/// Draws a dataset from the configured joint distribution.
///
/// Each row samples (y, s) from the four-cell joint implied by the three
/// rates, then features x_t = a_t (y - 1/2) + b_t (s - 1/2) + noise * z
/// with z standard normal; even coordinates weight the label (a = 1.4,
/// b = 0.4), odd coordinates the group (a = 0.4, b = 1.0). Rows selected
/// into the hard subgroup keep their noise but have the signal scaled by
/// 0.15. Every label/group cell is guaranteed at least one row (the
/// first four rows are overwritten if sampling left a cell empty, which
/// at benchmark sizes never triggers). Deterministic in the seed.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p11 = cfg.positive_rate * cfg.minority_conditional;
    let p10 = cfg.positive_rate - p11;
    let p01 = cfg.minority_rate - p11;
    let mut labels = Vec::with_capacity(cfg.n);
    let mut sensitive = Vec::with_capacity(cfg.n);
    let mut hard = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let u: f64 = rng.gen();
        let (y, s) = if u < p11 {
            (1, 1)
        } else if u < p11 + p10 {
            (1, 0)
        } else if u < p11 + p10 + p01 {
            (0, 1)
        } else {
            (0, 0)
        };
        labels.push(y);
        sensitive.push(s);
        hard.push(cfg.hard_fraction > 0.0 && rng.gen::<f64>() < cfg.hard_fraction);
    }
    // Guarantee every (y, s) cell is represented: if any is empty, the
    // first four rows are rewritten to one row per cell.
    let mut have = [[false; 2]; 2];
    for i in 0..cfg.n {
        have[labels[i]][sensitive[i]] = true;
    }
    if have.iter().flatten().any(|present| !present) {
        for y in 0..2 {
            for s in 0..2 {
                let slot = 2 * y + s;
                labels[slot] = y;
                sensitive[slot] = s;
            }
        }
    }
    let mut features = Array2::<f64>::zeros((cfg.n, cfg.d));
    for i in 0..cfg.n {
        let y = labels[i] as f64 - 0.5;
        let s = sensitive[i] as f64 - 0.5;
        let signal = if hard[i] { 0.15 } else { 1.0 };
        for t in 0..cfg.d {
            let (a, b) = if t % 2 == 0 { (1.4, 0.4) } else { (0.4, 1.0) };
            let z: f64 = rng.sample(StandardNormal);
            features[[i, t]] = signal * (a * y + b * s) + cfg.noise * z;
        }
    }
    Dataset::new(features, labels, sensitive, 2, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_rates_match_the_configured_joint() {
        let cfg = SynthConfig::adult_like(20000, 7);
        let data = generate(&cfg).unwrap();
        let minority = data.sensitive_marginal()[1];
        assert!((minority - 0.3307).abs() < 0.012, "minority rate {minority}");
        let positive = data.labels.iter().filter(|&&y| y == 1).count() as f64 / 20000.0;
        assert!((positive - 0.25).abs() < 0.012, "positive rate {positive}");
        let conditional = data.conditional_rate(1, 1).unwrap();
        assert!(
            (conditional - 0.1503).abs() < 0.02,
            "conditional minority rate {conditional}"
        );
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let cfg = SynthConfig::adult_like(200, 11);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.sensitive, b.sensitive);
        let c = generate(&SynthConfig::adult_like(200, 12)).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn every_cell_is_present_even_at_tiny_sizes() {
        let mut cfg = SynthConfig::adult_like(4, 3);
        cfg.minority_conditional = 0.01;
        let data = generate(&cfg).unwrap();
        for y in 0..2 {
            for s in 0..2 {
                assert!(
                    (0..4).any(|i| data.labels[i] == y && data.sensitive[i] == s),
                    "cell ({y}, {s}) missing"
                );
            }
        }
    }

    #[test]
    fn infeasible_rates_are_rejected() {
        let mut cfg = SynthConfig::adult_like(100, 1);
        // P(y=0,s=1) = minority_rate - positive_rate * conditional < 0.
        cfg.minority_rate = 0.1;
        cfg.positive_rate = 0.5;
        cfg.minority_conditional = 0.9;
        assert!(generate(&cfg).is_err());
        let mut bad = SynthConfig::adult_like(3, 1);
        bad.n = 3;
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn features_separate_the_classes() {
        let cfg = SynthConfig::adult_like(4000, 5);
        let data = generate(&cfg).unwrap();
        // Mean of an even (label-heavy) coordinate differs across labels.
        let mean = |label: usize| {
            let rows: Vec<usize> = (0..data.n()).filter(|&i| data.labels[i] == label).collect();
            rows.iter().map(|&i| data.features[[i, 0]]).sum::<f64>() / rows.len() as f64
        };
        assert!(mean(1) - mean(0) > 1.0, "gap {}", mean(1) - mean(0));
    }

    #[test]
    fn hard_subgroup_weakens_the_signal() {
        let mut cfg = SynthConfig::adult_like(6000, 9);
        cfg.hard_fraction = 0.5;
        let data = generate(&cfg).unwrap();
        // With half the rows attenuated, the between-class gap on a
        // label-heavy coordinate shrinks toward half its clean value.
        let mean = |label: usize| {
            let rows: Vec<usize> = (0..data.n()).filter(|&i| data.labels[i] == label).collect();
            rows.iter().map(|&i| data.features[[i, 0]]).sum::<f64>() / rows.len() as f64
        };
        let gap = mean(1) - mean(0);
        assert!(gap > 0.5 && gap < 1.2, "attenuated gap {gap}");
    }
}
