//! Exact expectation of the binned estimators under parametric count models.
//!
//! The oracle enumerates every count tuple `(c_a, c_b, c_c)` up to a
//! truncation cap, weights the per-bin term by its probability, and
//! conditions on the bin contributing. It shares only the term formulas and
//! the contribution predicate with the estimator code; it never touches
//! records, bins or random numbers.

use crate::error::{Error, Result};
use crate::estimators::{contributes, heralded_value, unheralded_value, EstimatorKind, HeraldRule};

pub const DEFAULT_CAP: usize = 40;
const MAX_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountModelKind {
    /// Independent Poisson counts per channel.
    IndependentPoisson,
    /// Poisson number of pairs per bin, each routed like the simulator
    /// does, plus independent Poisson background on every channel.
    PairedPlusPoisson,
}

/// Per-bin count distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountModel {
    pub kind: CountModelKind,
    /// Background means per bin.
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    /// Mean pairs per bin (paired model only).
    pub mu_pair: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub eta_c: f64,
    pub truncation_cap: usize,
}

impl CountModel {
    pub fn independent(lambda_a: f64, lambda_b: f64, lambda_c: f64) -> Self {
        CountModel {
            kind: CountModelKind::IndependentPoisson,
            lambda_a,
            lambda_b,
            lambda_c,
            mu_pair: 0.0,
            eta_a: 0.0,
            eta_b: 0.0,
            eta_c: 0.0,
            truncation_cap: DEFAULT_CAP,
        }
    }

    pub fn paired(mu_pair: f64, eta_a: f64, eta_b: f64, eta_c: f64) -> Self {
        CountModel {
            kind: CountModelKind::PairedPlusPoisson,
            mu_pair,
            eta_a,
            eta_b,
            eta_c,
            ..CountModel::independent(0.0, 0.0, 0.0)
        }
    }

    pub fn with_background(mut self, lambda_a: f64, lambda_b: f64, lambda_c: f64) -> Self {
        self.lambda_a = lambda_a;
        self.lambda_b = lambda_b;
        self.lambda_c = lambda_c;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.truncation_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        let means = [self.lambda_a, self.lambda_b, self.lambda_c, self.mu_pair];
        if means.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidConfig("count model means must be >= 0".into()));
        }
        if self.kind == CountModelKind::PairedPlusPoisson {
            let etas = [self.eta_a, self.eta_b, self.eta_c];
            if etas.iter().any(|e| !(0.0..=1.0).contains(e)) || self.eta_a + self.eta_b > 1.0 {
                return Err(Error::InvalidConfig(
                    "count model efficiencies must lie in [0, 1] with eta_a + eta_b <= 1".into(),
                ));
            }
        }
        if self.truncation_cap == 0 {
            return Err(Error::InvalidConfig("truncation cap must be positive".into()));
        }
        Ok(())
    }

    /// Joint pmf over `0..=cap` per channel, indexed `[a][b][c]` flattened.
    fn joint_pmf(&self) -> Vec<f64> {
        let n = self.truncation_cap + 1;
        match self.kind {
            CountModelKind::IndependentPoisson => {
                let pa = poisson_pmf(self.lambda_a, n);
                let pb = poisson_pmf(self.lambda_b, n);
                let pc = poisson_pmf(self.lambda_c, n);
                let mut joint = vec![0.0; n * n * n];
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            joint[(a * n + b) * n + c] = pa[a] * pb[b] * pc[c];
                        }
                    }
                }
                joint
            }
            CountModelKind::PairedPlusPoisson => self.paired_joint(n),
        }
    }

    /// Splitting the pairs by outcome gives independent Poisson counts:
    /// heralded-and-on-A (`u`), heralded-and-on-B (`v`), and the remainders
    /// on A, B and C. Then
    /// `P(a, b, c) = sum_{u,v} f(u) g(v) pA(a - u) pB(b - v) pC(c - u - v)`,
    /// evaluated in two convolution passes.
    fn paired_joint(&self, n: usize) -> Vec<f64> {
        let mu = self.mu_pair;
        let f = poisson_pmf(mu * self.eta_a * self.eta_c, n);
        let g = poisson_pmf(mu * self.eta_b * self.eta_c, n);
        let pa = poisson_pmf(mu * self.eta_a * (1.0 - self.eta_c) + self.lambda_a, n);
        let pb = poisson_pmf(mu * self.eta_b * (1.0 - self.eta_c) + self.lambda_b, n);
        let pc = poisson_pmf(
            mu * (1.0 - self.eta_a - self.eta_b) * self.eta_c + self.lambda_c,
            n,
        );

        // shared[a][b][w]: probability of (a, b) with w = u + v shared herald clicks
        let mut shared = vec![0.0; n * n * n];
        for a in 0..n {
            for u in 0..=a {
                let ra = f[u] * pa[a - u];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    for v in 0..=b.min(n - 1 - u) {
                        shared[(a * n + b) * n + u + v] += ra * g[v] * pb[b - v];
                    }
                }
            }
        }
        let mut joint = vec![0.0; n * n * n];
        for ab in 0..n * n {
            let row = &shared[ab * n..(ab + 1) * n];
            for c in 0..n {
                joint[ab * n + c] = (0..=c).map(|w| row[w] * pc[c - w]).sum();
            }
        }
        joint
    }
}

/// `P(X = k)` for `k < n`, `X ~ Poisson(lambda)`.
pub fn poisson_pmf(lambda: f64, n: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; n];
    if n == 0 {
        return pmf;
    }
    pmf[0] = (-lambda).exp();
    for k in 1..n {
        pmf[k] = pmf[k - 1] * lambda / k as f64;
    }
    pmf
}

/// Exact conditional expectation of the per-bin term given that the bin
/// contributes, under the default herald rule.
pub fn exact_expected_g2(model: &CountModel, kind: EstimatorKind) -> Result<f64> {
    exact_expected_g2_with(model, kind, HeraldRule::default())
}

pub fn exact_expected_g2_with(
    model: &CountModel,
    kind: EstimatorKind,
    rule: HeraldRule,
) -> Result<f64> {
    let term: fn(u64, u64, u64) -> f64 = match kind {
        EstimatorKind::UnheraldedBinned => |a, b, _| unheralded_value(a, b),
        EstimatorKind::HeraldedBinned => heralded_value,
        other => return Err(Error::WrongEstimator(other.as_str())),
    };
    model.validate()?;
    let n = model.truncation_cap + 1;
    let joint = model.joint_pmf();

    let mass: f64 = joint.iter().sum();
    let tail = 1.0 - mass;
    if tail > MAX_TAIL {
        return Err(Error::TruncationTooSmall {
            cap: model.truncation_cap,
            tail,
        });
    }

    let mut weighted = 0.0;
    let mut contributing = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let p = joint[(a * n + b) * n + c];
                if p == 0.0 || !contributes(a as u64, b as u64, c as u64, kind, rule) {
                    continue;
                }
                contributing += p;
                weighted += p * term(a as u64, b as u64, c as u64);
            }
        }
    }
    if contributing <= 0.0 {
        return Err(Error::NoContributingMass);
    }
    Ok(weighted / contributing)
}
