//! Discrete secret-key-rate distributions and the joint scenario space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Default cap on joint scenario enumeration.
pub const DEFAULT_SCENARIO_CAP: u64 = 1_000_000;

/// Finite distribution over secret-key rates (kbps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DemandDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Distribution("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::Distribution(format!(
                "{} support values but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        for w in support.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Distribution(
                    "support must be strictly ascending".into(),
                ));
            }
        }
        if support.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Distribution("support values must be finite and >= 0".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Distribution("probabilities must be >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Distribution(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DemandDistribution { support, probs })
    }

    pub fn degenerate(rate: f64) -> Result<Self> {
        DemandDistribution::new(vec![rate], vec![1.0])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn max_rate(&self) -> f64 {
        *self.support.last().expect("nonempty")
    }

    /// Multiplies every support value by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Parameter(format!("demand scale must be > 0, got {factor}")));
        }
        DemandDistribution::new(self.support.iter().map(|v| v * factor).collect(), self.probs.clone())
    }
}

/// Equiprobable support `{min, min+step, ..., <= max}`.
pub fn uniform_distribution(min_rate: f64, max_rate: f64, step: f64) -> Result<DemandDistribution> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!("step must be > 0, got {step}")));
    }
    if !(min_rate.is_finite() && max_rate.is_finite()) || min_rate < 0.0 || min_rate > max_rate {
        return Err(Error::Parameter(format!(
            "need 0 <= min <= max, got min={min_rate}, max={max_rate}"
        )));
    }
    let count = ((max_rate - min_rate) / step + 1e-9).floor() as usize + 1;
    let support: Vec<f64> = (0..count).map(|i| min_rate + i as f64 * step).collect();
    let p = 1.0 / count as f64;
    let mut probs = vec![p; count];
    // keep the sum within tolerance for awkward counts
    let drift: f64 = 1.0 - probs.iter().sum::<f64>();
    probs[count - 1] += drift;
    DemandDistribution::new(support, probs)
}

pub fn expected_demand(dist: &DemandDistribution) -> f64 {
    dist.iter().map(|(v, p)| v * p).sum()
}

/// JSON form of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DemandSpec {
    Uniform { min: f64, max: f64, step: f64 },
    Table { support: Vec<f64>, probs: Vec<f64> },
}

impl DemandSpec {
    pub fn build(&self) -> Result<DemandDistribution> {
        match self {
            DemandSpec::Uniform { min, max, step } => uniform_distribution(*min, *max, *step),
            DemandSpec::Table { support, probs } => DemandDistribution::new(support.clone(), probs.clone()),
        }
    }

    pub fn from_distribution(d: &DemandDistribution) -> Self {
        DemandSpec::Table {
            support: d.support.clone(),
            probs: d.probs.clone(),
        }
    }
}

/// Independent per-request distributions, iterated lexicographically over
/// request ids (the last id varies fastest).
#[derive(Debug, Clone, Default)]
pub struct JointScenarioSpace {
    per_request: BTreeMap<String, DemandDistribution>,
}

impl JointScenarioSpace {
    pub fn new(per_request: BTreeMap<String, DemandDistribution>) -> Self {
        JointScenarioSpace { per_request }
    }

    pub fn request_ids(&self) -> impl Iterator<Item = &str> {
        self.per_request.keys().map(String::as_str)
    }

    pub fn cardinality(&self) -> u128 {
        self.per_request.values().map(|d| d.len() as u128).product()
    }

    /// Every joint scenario exactly once, with its probability.
    pub fn enumerate(&self, cap: u64) -> Result<JointIter<'_>> {
        let size = self.cardinality();
        if size > cap as u128 {
            return Err(Error::ScenarioCap { size, cap });
        }
        let dists: Vec<&DemandDistribution> = self.per_request.values().collect();
        Ok(JointIter {
            digits: vec![0; dists.len()],
            dists,
            done: false,
        })
    }
}

pub fn enumerate_joint(space: &JointScenarioSpace, cap: u64) -> Result<JointIter<'_>> {
    space.enumerate(cap)
}

/// Odometer over the product of supports.
pub struct JointIter<'a> {
    dists: Vec<&'a DemandDistribution>,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for JointIter<'_> {
    type Item = (Vec<f64>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut prob = 1.0;
        let values: Vec<f64> = self
            .dists
            .iter()
            .zip(&self.digits)
            .map(|(d, &i)| {
                prob *= d.probs[i];
                d.support[i]
            })
            .collect();
        // advance
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.dists[pos].len() {
                break;
            }
            self.digits[pos] = 0;
        }
        Some((values, prob))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_examples() {
        let d = uniform_distribution(1.0, 5.0, 1.0).unwrap();
        assert_eq!(d.support(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(d.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));
        let d = uniform_distribution(3.0, 3.0, 1.0).unwrap();
        assert_eq!(d.support(), &[3.0]);
        assert_eq!(d.probs(), &[1.0]);
        let d = uniform_distribution(0.0, 4.0, 2.0).unwrap();
        assert_eq!(d.support(), &[0.0, 2.0, 4.0]);
        assert!(d.probs().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn uniform_rejects_bad_parameters() {
        assert!(uniform_distribution(1.0, 5.0, 0.0).is_err());
        assert!(uniform_distribution(5.0, 1.0, 1.0).is_err());
        assert!(uniform_distribution(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn distribution_invariants() {
        assert!(DemandDistribution::new(vec![], vec![]).is_err());
        assert!(DemandDistribution::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DemandDistribution::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DemandDistribution::new(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(DemandDistribution::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn expectations() {
        assert_eq!(expected_demand(&uniform_distribution(1.0, 5.0, 1.0).unwrap()), 3.0);
        assert_eq!(expected_demand(&DemandDistribution::degenerate(7.0).unwrap()), 7.0);
        let d = DemandDistribution::new(vec![3.0, 9.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(expected_demand(&d), 6.0);
    }

    fn space(dists: Vec<DemandDistribution>) -> JointScenarioSpace {
        JointScenarioSpace::new(
            dists
                .into_iter()
                .enumerate()
                .map(|(i, d)| (format!("r{i}"), d))
                .collect(),
        )
    }

    #[test]
    fn joint_enumeration() {
        let coin = uniform_distribution(0.0, 1.0, 1.0).unwrap();
        let s = space(vec![coin.clone(), coin]);
        let all: Vec<_> = s.enumerate(100).unwrap().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].0, vec![0.0, 0.0]);
        assert_eq!(all[1].0, vec![0.0, 1.0]);
        assert!(all.iter().all(|(_, p)| (p - 0.25).abs() < 1e-15));

        let s = space(vec![DemandDistribution::degenerate(4.0).unwrap()]);
        let all: Vec<_> = s.enumerate(100).unwrap().collect();
        assert_eq!(all, vec![(vec![4.0], 1.0)]);

        let ten = uniform_distribution(1.0, 10.0, 1.0).unwrap();
        let s = space(vec![ten.clone(), ten.clone(), ten]);
        assert_eq!(s.enumerate(10_000).unwrap().count(), 1000);
        assert!(matches!(s.enumerate(999), Err(Error::ScenarioCap { size: 1000, cap: 999 })));
    }

    #[test]
    fn marginals_are_recovered() {
        let a = DemandDistribution::new(vec![1.0, 2.0, 4.0], vec![0.2, 0.3, 0.5]).unwrap();
        let b = uniform_distribution(0.0, 3.0, 1.0).unwrap();
        let s = space(vec![a.clone(), b]);
        let mut marg = BTreeMap::new();
        let mut total = 0.0;
        for (v, p) in s.enumerate(100).unwrap() {
            *marg.entry(v[0].to_bits()).or_insert(0.0) += p;
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-10);
        for (v, p) in a.iter() {
            assert!((marg[&v.to_bits()] - p).abs() < 1e-12);
        }
    }
}
