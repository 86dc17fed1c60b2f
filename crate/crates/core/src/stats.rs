//! Histograms, exponential fits, empirical tails and the theoretical tail
//! bounds they are checked against.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer-count histogram of non-negative lengths.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
    replicas: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values<I: IntoIterator<Item = u64>>(values: I) -> Self {
        let mut h = Histogram::new();
        for v in values {
            h.add(v);
        }
        h
    }

    pub fn add(&mut self, length: u64) {
        self.add_count(length, 1);
    }

    pub fn add_count(&mut self, length: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(length).or_insert(0) += count;
            self.total += count;
        }
    }

    /// Marks how many independent runs contributed.
    pub fn with_replicas(mut self, replicas: u64) -> Self {
        self.replicas = replicas;
        self
    }

    /// Adds `other` into `self`, replicas included. Pure integer addition, so
    /// the order of merges never matters.
    pub fn merge(&mut self, other: &Histogram) {
        for (&length, &count) in &other.counts {
            self.add_count(length, count);
        }
        self.replicas += other.replicas;
    }

    pub fn count(&self, length: u64) -> u64 {
        self.counts.get(&length).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&l, &c)| (l, c))
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn replicas(&self) -> u64 {
        self.replicas
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn max_length(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    /// Counts divided by the number of replicas.
    pub fn averaged(&self) -> Vec<(u64, f64)> {
        let runs = self.replicas.max(1) as f64;
        self.iter().map(|(l, c)| (l, c as f64 / runs)).collect()
    }

    /// `length,count` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("length,count\n");
        for (l, c) in self.iter() {
            writeln!(out, "{l},{c}").unwrap();
        }
        out
    }

    /// Parses `length,count` CSV. A header line and blank lines are skipped;
    /// repeated lengths add up.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut h = Histogram::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (k == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
                continue;
            }
            let (length, count) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected length,count", k + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))
            };
            h.add_count(parse(length)?, parse(count)?);
        }
        Ok(h)
    }
}

/// `N(L) ≈ A·e^{−λL}` fitted by least squares on `ln N(L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub lambda: f64,
    pub r_squared: f64,
    pub fit_range: [u64; 2],
    pub bins_used: usize,
}

impl ExpFit {
    pub fn predict(&self, length: u64) -> f64 {
        self.amplitude * (-self.lambda * length as f64).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitOptions {
    /// Bins with fewer counts are left out.
    pub min_count: u64,
    /// Inclusive length range; defaults to `[1, largest qualifying length]`.
    pub range: Option<(u64, u64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_count: 10,
            range: None,
        }
    }
}

pub const MIN_FIT_BINS: usize = 3;

pub fn fit_exponential(h: &Histogram, options: FitOptions) -> Result<ExpFit> {
    let qualifying = |l: u64, c: u64| c >= options.min_count && c > 0 && l >= 1;
    let (lo, hi) = match options.range {
        Some(range) => range,
        None => {
            let top = h
                .iter()
                .filter(|&(l, c)| qualifying(l, c))
                .map(|(l, _)| l)
                .max()
                .unwrap_or(0);
            (1, top)
        }
    };
    let points: Vec<(f64, f64)> = h
        .iter()
        .filter(|&(l, c)| l >= lo && l <= hi && c >= options.min_count && c > 0)
        .map(|(l, c)| (l as f64, (c as f64).ln()))
        .collect();
    if points.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientBins {
            found: points.len(),
            required: MIN_FIT_BINS,
        });
    }
    let k = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - residual / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ExpFit {
        amplitude: intercept.exp(),
        lambda: -slope,
        r_squared,
        fit_range: [lo, hi],
        bins_used: points.len(),
    })
}

/// Empirical tail `P̂(X ≥ l)` of a per-replica quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCurve {
    at_least: Vec<f64>,
    replicas: u64,
}

impl TailCurve {
    /// Builds the tail from a histogram holding one value per replica.
    pub fn from_maxima(maxima: &Histogram) -> Self {
        let replicas = maxima.total();
        let top = maxima.max_length().unwrap_or(0) as usize;
        let mut at_least = vec![0.0; top + 2];
        if replicas > 0 {
            let mut remaining = replicas;
            let mut l = 0usize;
            for (length, count) in maxima.iter() {
                while l <= length as usize {
                    at_least[l] = remaining as f64 / replicas as f64;
                    l += 1;
                }
                remaining -= count;
            }
        }
        TailCurve { at_least, replicas }
    }

    pub fn replicas(&self) -> u64 {
        self.replicas
    }

    /// `P̂(X ≥ l)`.
    pub fn at_least(&self, l: u64) -> f64 {
        self.at_least.get(l as usize).copied().unwrap_or(0.0)
    }

    /// `P̂(X > l)`.
    pub fn exceeds(&self, l: u64) -> f64 {
        self.at_least(l + 1)
    }

    /// Smallest `l` with `P̂(X ≥ l) = 0`.
    pub fn support_end(&self) -> u64 {
        (self.at_least.len() - 1) as u64
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.at_least.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Constants of the random-walk hitting argument on a cylinder of
/// circumference `n`, with `h = ⌊n/2⌋`:
/// `θ = (1 − 4^{−h})^{1/h}`, `C₀ = max(1, θ^{−h})`, `δ = θ^{1/(8n+1)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    pub n: usize,
    pub theta: f64,
    pub c0: f64,
    pub delta: f64,
}

pub fn bound_constants(n: usize) -> Result<BoundConstants> {
    if n < 3 {
        return Err(Error::InvalidDimensions { n, m: 1 });
    }
    let h = (n / 2) as i32;
    let theta = (1.0 - 4f64.powi(-h)).powf(1.0 / h as f64);
    let c0 = theta.powi(-h).max(1.0);
    let delta = theta.powf(1.0 / (8 * n + 1) as f64);
    Ok(BoundConstants {
        n,
        theta,
        c0,
        delta,
    })
}

/// The event a tail bound controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailEvent {
    /// `X ≥ l`, for `l ≥ 0`.
    AtLeast,
    /// `X > l`, for `l ≥ 1`.
    Exceeds,
}

/// `prefactor · rate^l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub prefactor: f64,
    pub rate: f64,
    pub event: TailEvent,
}

impl TailBound {
    /// Longest branch off the trunk: `C₀·m·(n−1)·θ^l` for `P(max ≥ l)`.
    pub fn branches(c: &BoundConstants, m: usize) -> Self {
        TailBound {
            prefactor: c.c0 * m as f64 * (c.n - 1) as f64,
            rate: c.theta,
            event: TailEvent::AtLeast,
        }
    }

    /// Slash size: `C₀/(1−θ)·δ^l` for `P(|slash| > l)`.
    pub fn slash(c: &BoundConstants) -> Self {
        TailBound {
            prefactor: c.c0 / (1.0 - c.theta),
            rate: c.delta,
            event: TailEvent::Exceeds,
        }
    }

    pub fn at(&self, l: u64) -> f64 {
        self.prefactor * self.rate.powf(l as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundPoint {
    pub l: u64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound: TailBound,
    pub replicas: u64,
    /// Allowance in binomial standard errors.
    pub sigmas: f64,
    pub points: Vec<BoundPoint>,
    pub first_violation: Option<u64>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Compares the empirical tail with `bound` plus three binomial standard
/// errors at every `l` up to one past the largest observation (beyond that
/// the empirical tail is zero).
pub fn bound_check(tail: &TailCurve, bound: TailBound) -> BoundReport {
    const SIGMAS: f64 = 3.0;
    let first = match bound.event {
        TailEvent::AtLeast => 0,
        TailEvent::Exceeds => 1,
    };
    let replicas = tail.replicas().max(1) as f64;
    let points: Vec<BoundPoint> = (first..=tail.support_end())
        .map(|l| {
            let empirical = match bound.event {
                TailEvent::AtLeast => tail.at_least(l),
                TailEvent::Exceeds => tail.exceeds(l),
            };
            let std_error = (empirical * (1.0 - empirical) / replicas).sqrt();
            let limit = bound.at(l);
            BoundPoint {
                l,
                empirical,
                std_error,
                bound: limit,
                ok: empirical <= limit + SIGMAS * std_error,
            }
        })
        .collect();
    let first_violation = points.iter().find(|p| !p.ok).map(|p| p.l);
    BoundReport {
        bound,
        replicas: tail.replicas(),
        sigmas: SIGMAS,
        points,
        first_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(amplitude: f64, lambda: f64, lengths: std::ops::RangeInclusive<u64>) -> Histogram {
        let mut h = Histogram::new();
        for l in lengths {
            h.add_count(l, (amplitude * (-lambda * l as f64).exp()).round() as u64);
        }
        h
    }

    #[test]
    fn fit_recovers_generator() {
        let h = synthetic(1000.0, 0.5, 0..=10);
        let fit = fit_exponential(&h, FitOptions::default()).unwrap();
        assert!((fit.lambda - 0.5).abs() < 0.01, "{fit:?}");
        assert_eq!(fit.fit_range, [1, 9]);
        assert_eq!(fit.bins_used, 9);
        assert!(fit.r_squared > 0.999);
        assert!((fit.amplitude - 1000.0).abs() / 1000.0 < 0.05);
    }

    #[test]
    fn fit_within_two_percent_at_scale() {
        let h = synthetic(20_000.0, 0.8, 0..=20);
        assert!(h.total() > 10_000);
        let fit = fit_exponential(&h, FitOptions::default()).unwrap();
        assert!((fit.lambda - 0.8).abs() < 0.016, "{fit:?}");
    }

    #[test]
    fn fit_needs_three_bins() {
        let h = synthetic(1000.0, 3.0, 0..=10);
        // counts 1000, 50, 2, 0...: only length 1 qualifies
        assert!(matches!(
            fit_exponential(&h, FitOptions::default()),
            Err(Error::InsufficientBins {
                found: 1,
                required: 3
            })
        ));
        let explicit = FitOptions {
            min_count: 1,
            range: Some((0, 2)),
        };
        assert_eq!(fit_exponential(&h, explicit).unwrap().bins_used, 3);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let h = synthetic(100.0, 0.3, 0..=6).with_replicas(1);
        let text = h.to_csv();
        assert!(text.starts_with("length,count\n0,100\n"));
        let back = Histogram::from_csv(&text).unwrap();
        assert_eq!(back.total(), h.total());
        assert!(back.iter().eq(h.iter()));
        assert!(Histogram::from_csv("length,count\n3;4\n").is_err());
        assert!(Histogram::from_csv("1,x\n").is_err());
    }

    #[test]
    fn bound_constants_examples() {
        let c3 = bound_constants(3).unwrap();
        assert!((c3.theta - 0.75).abs() < 1e-15);
        assert!((c3.c0 - 4.0 / 3.0).abs() < 1e-15);
        assert!((c3.delta - 0.75f64.powf(1.0 / 25.0)).abs() < 1e-15);
        let c4 = bound_constants(4).unwrap();
        assert!((c4.theta - (15.0f64 / 16.0).sqrt()).abs() < 1e-15);
        assert!((c4.theta - 0.96825).abs() < 1e-5);
        assert!((c4.c0 - 16.0 / 15.0).abs() < 1e-12);
        let thetas: Vec<f64> = (3..=20)
            .map(|n| bound_constants(n).unwrap().theta)
            .collect();
        assert!(thetas.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(thetas[0], 0.75);
        assert!(thetas[17] > thetas[1]);
        assert!(bound_constants(2).is_err());
    }

    #[test]
    fn tail_from_maxima() {
        let maxima = Histogram::from_values([0, 2, 2, 3, 5]);
        let tail = TailCurve::from_maxima(&maxima);
        assert_eq!(tail.replicas(), 5);
        assert_eq!(tail.at_least(0), 1.0);
        assert_eq!(tail.at_least(1), 0.8);
        assert_eq!(tail.at_least(3), 0.4);
        assert_eq!(tail.at_least(5), 0.2);
        assert_eq!(tail.at_least(6), 0.0);
        assert_eq!(tail.at_least(60), 0.0);
        assert_eq!(tail.exceeds(2), 0.4);
        assert!(tail.is_nonincreasing());
    }

    #[test]
    fn loose_bounds_pass_and_tight_bounds_fail() {
        let maxima = Histogram::from_values((0..100).map(|k| k % 7));
        let tail = TailCurve::from_maxima(&maxima);
        let report = bound_check(
            &tail,
            TailBound::branches(&bound_constants(3).unwrap(), 1000),
        );
        assert!(report.passed());
        assert!(report.points[0].bound > 1.0);

        let tight = TailBound {
            prefactor: 1.0,
            rate: 0.1,
            event: TailEvent::AtLeast,
        };
        assert_eq!(bound_check(&tail, tight).first_violation, Some(1));

        let slash = bound_check(&tail, TailBound::slash(&bound_constants(3).unwrap()));
        assert_eq!(slash.points[0].l, 1);
        assert!(slash.passed());
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            a in proptest::collection::vec(0u64..30, 0..50),
            b in proptest::collection::vec(0u64..30, 0..50),
            c in proptest::collection::vec(0u64..30, 0..50),
        ) {
            let (ha, hb, hc) = (
                Histogram::from_values(a.clone()).with_replicas(1),
                Histogram::from_values(b.clone()).with_replicas(1),
                Histogram::from_values(c.clone()).with_replicas(1),
            );
            let mut left = ha.clone();
            left.merge(&hb);
            left.merge(&hc);
            let mut right = hc.clone();
            let mut bc = hb.clone();
            bc.merge(&ha);
            right.merge(&bc);
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(left.total() as usize, a.len() + b.len() + c.len());
            prop_assert_eq!(left.replicas(), 3);
        }

        #[test]
        fn tails_are_monotone_probabilities(values in proptest::collection::vec(0u64..40, 1..80)) {
            let tail = TailCurve::from_maxima(&Histogram::from_values(values.clone()));
            prop_assert!(tail.is_nonincreasing());
            prop_assert_eq!(tail.at_least(0), 1.0);
            for l in 0..45 {
                let p = tail.at_least(l);
                prop_assert!((0.0..=1.0).contains(&p));
                let direct = values.iter().filter(|&&v| v >= l).count() as f64 / values.len() as f64;
                prop_assert!((p - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn fit_recovers_rates(lambda in 0.2f64..1.5, amplitude in 5_000.0f64..50_000.0) {
            let h = synthetic(amplitude, lambda, 0..=60);
            let fit = fit_exponential(&h, FitOptions::default()).unwrap();
            prop_assert!((fit.lambda - lambda).abs() < 0.02 * lambda, "{:?}", fit);
        }
    }
}
