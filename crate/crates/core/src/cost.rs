//! Per-slot delivery cost as a function of total load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid size of the construction-time convexity probe.
const PROBE_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostKind {
    /// `C(L) = L^2`.
    Quadratic {},
    /// `C(L) = L / (mu - L)` on `[0, mu)`.
    Outage { mu: f64 },
    /// `C(L) = sum_k coeffs[k] L^k`, nonnegative coefficients, degree above one.
    Polynomial { coeffs: Vec<f64> },
}

/// Smooth, strictly convex, increasing cost with its derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModel {
    kind: CostKind,
}

/// Which function of the load an expectation is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    Cost,
    Marginal,
}

impl CostModel {
    pub fn quadratic() -> Self {
        Self {
            kind: CostKind::Quadratic {},
        }
    }

    pub fn outage(mu: f64) -> Result<Self> {
        Self::new(CostKind::Outage { mu })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(CostKind::Polynomial { coeffs })
    }

    /// Validates parameters and probes convexity and monotonicity on a grid.
    pub fn new(kind: CostKind) -> Result<Self> {
        let probe_max = match &kind {
            CostKind::Quadratic {} => 1.0,
            CostKind::Outage { mu } => {
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(Error::CostModel(format!("outage capacity must be positive, got {mu}")));
                }
                // stay clear of the pole
                0.99 * mu
            }
            CostKind::Polynomial { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(Error::CostModel("polynomial coefficients must be nonnegative".into()));
                }
                let degree = coeffs.iter().rposition(|c| *c > 0.0).unwrap_or(0);
                if degree < 2 {
                    return Err(Error::CostModel(format!(
                        "polynomial degree must exceed one, got {degree}"
                    )));
                }
                10.0
            }
        };
        let model = Self { kind };
        model.probe(probe_max)?;
        Ok(model)
    }

    fn probe(&self, probe_max: f64) -> Result<()> {
        let step = probe_max / PROBE_POINTS as f64;
        for i in 0..=PROBE_POINTS {
            let l = i as f64 * step;
            let d1 = self.marginal(l)?;
            let d2 = self.curvature(l);
            // C'(0) may vanish (e.g. L^2); it must be positive everywhere else.
            if d1 < 0.0 || (i > 0 && d1 <= 0.0) || d2 <= 0.0 {
                return Err(Error::CostModel(format!(
                    "not strictly convex and increasing at load {l}: C' = {d1}, C'' = {d2}"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CostKind::Quadratic {} => "quadratic",
            CostKind::Outage { .. } => "outage",
            CostKind::Polynomial { .. } => "polynomial",
        }
    }

    /// Upper end of the domain (exclusive), infinite for polynomials.
    pub fn domain_limit(&self) -> f64 {
        match self.kind {
            CostKind::Outage { mu } => mu,
            _ => f64::INFINITY,
        }
    }

    #[inline]
    fn check(&self, load: f64) -> Result<()> {
        if let CostKind::Outage { mu } = self.kind {
            if load >= mu {
                return Err(Error::Domain { load, limit: mu });
            }
        }
        Ok(())
    }

    pub fn cost(&self, load: f64) -> Result<f64> {
        self.check(load)?;
        Ok(match &self.kind {
            CostKind::Quadratic {} => load * load,
            CostKind::Outage { mu } => load / (mu - load),
            CostKind::Polynomial { coeffs } => horner(coeffs, load),
        })
    }

    pub fn marginal(&self, load: f64) -> Result<f64> {
        self.check(load)?;
        Ok(match &self.kind {
            CostKind::Quadratic {} => 2.0 * load,
            CostKind::Outage { mu } => mu / ((mu - load) * (mu - load)),
            CostKind::Polynomial { coeffs } => horner(&derivative(coeffs), load),
        })
    }

    /// `C''`, used only by the construction-time probe.
    fn curvature(&self, load: f64) -> f64 {
        match &self.kind {
            CostKind::Quadratic {} => 2.0,
            CostKind::Outage { mu } => 2.0 * mu / (mu - load).powi(3),
            CostKind::Polynomial { coeffs } => horner(&derivative(&derivative(coeffs)), load),
        }
    }

    pub fn eval(&self, moment: Moment, load: f64) -> Result<f64> {
        match moment {
            Moment::Cost => self.cost(load),
            Moment::Marginal => self.marginal(load),
        }
    }

    /// Coefficients `[a0, a1, a2]` of the requested moment when it is a
    /// polynomial of degree at most two in the load.
    pub fn quadratic_coeffs(&self, moment: Moment) -> Option<[f64; 3]> {
        let c = match &self.kind {
            CostKind::Quadratic {} => vec![0.0, 0.0, 1.0],
            CostKind::Polynomial { coeffs } if coeffs.iter().skip(3).all(|c| *c == 0.0) => {
                coeffs.clone()
            }
            _ => return None,
        };
        let c = match moment {
            Moment::Cost => c,
            Moment::Marginal => derivative(&c),
        };
        let get = |k: usize| c.get(k).copied().unwrap_or(0.0);
        Some([get(0), get(1), get(2)])
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn models() -> Vec<CostModel> {
        vec![
            CostModel::quadratic(),
            CostModel::outage(9.8).unwrap(),
            CostModel::polynomial(vec![0.5, 1.0, 0.3, 0.05]).unwrap(),
        ]
    }

    #[test]
    fn reference_values() {
        assert_eq!(CostModel::quadratic().cost(3.0).unwrap(), 9.0);
        assert_eq!(CostModel::quadratic().marginal(5.0).unwrap(), 10.0);
        let outage = CostModel::outage(9.8).unwrap();
        assert!((outage.cost(4.9).unwrap() - 1.0).abs() < 1e-15);
        assert!((outage.marginal(0.0).unwrap() - 1.0 / 9.8).abs() < 1e-15);
        assert_eq!(outage.cost(0.0).unwrap(), 0.0);
        assert_eq!(CostModel::quadratic().cost(0.0).unwrap(), 0.0);
    }

    #[test]
    fn outage_rejects_loads_at_capacity() {
        let outage = CostModel::outage(9.8).unwrap();
        match outage.cost(9.8) {
            Err(Error::Domain { load, .. }) => assert_eq!(load, 9.8),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(outage.marginal(12.0).is_err());
    }

    #[test]
    fn construction_rejects_non_convex_models() {
        assert!(CostModel::polynomial(vec![0.0, 1.0]).is_err());
        assert!(CostModel::polynomial(vec![0.0, -1.0, 1.0]).is_err());
        assert!(CostModel::outage(0.0).is_err());
    }

    #[test]
    fn marginal_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for model in models() {
            let hi = model.domain_limit().min(20.0) * 0.95;
            for _ in 0..20 {
                let l = rng.gen_range(0.01..hi);
                let h = 1e-5 * (1.0 + l);
                let fd = (model.cost(l + h).unwrap() - model.cost(l - h).unwrap()) / (2.0 * h);
                let d = model.marginal(l).unwrap();
                assert!((fd - d).abs() <= 1e-6 * (1.0 + d.abs()), "{model:?} at {l}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn strictly_convex_and_increasing_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for model in models() {
            let hi = model.domain_limit().min(20.0) * 0.95;
            for _ in 0..200 {
                let a = rng.gen_range(0.0..hi);
                let b = rng.gen_range(0.0..hi);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                if b - a < 1e-3 {
                    continue;
                }
                let mid = model.cost(0.5 * (a + b)).unwrap();
                let chord = 0.5 * (model.cost(a).unwrap() + model.cost(b).unwrap());
                assert!(mid < chord - 1e-12, "{model:?}: midpoint {mid} vs chord {chord}");
                assert!(model.marginal(b).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn quadratic_coefficients_only_for_low_degree() {
        assert_eq!(
            CostModel::quadratic().quadratic_coeffs(Moment::Marginal),
            Some([0.0, 2.0, 0.0])
        );
        let p = CostModel::polynomial(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.quadratic_coeffs(Moment::Cost), Some([1.0, 2.0, 3.0]));
        assert!(CostModel::polynomial(vec![0.0, 0.0, 1.0, 1.0])
            .unwrap()
            .quadratic_coeffs(Moment::Cost)
            .is_none());
        assert!(CostModel::outage(5.0).unwrap().quadratic_coeffs(Moment::Cost).is_none());
    }
}
