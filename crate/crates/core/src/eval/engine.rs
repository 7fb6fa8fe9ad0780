//! Expectations of functions of one slot's load.
//!
//! A slot load is `offset + sum_n Z_n`, where user `n` independently
//! contributes `values[m]` with probability `probs[m]` and zero otherwise.
//! Every load in the model has this shape: the proactive-adjusted load, the
//! non-proactive load and the Policy A loads only differ in `offset` and
//! `values`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, Moment};
use crate::demand::choose;
use crate::error::{Error, Result};
use crate::stream;

/// Upper limit on `(M + 1)^N` outcomes per slot for exact enumeration.
pub const MAX_ENUMERATION: f64 = 1e7;

/// Samples per Monte Carlo work unit; partial sums are reduced in unit order.
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case", deny_unknown_fields)]
pub enum Engine {
    /// Exact sum over every joint request outcome.
    Enumerate,
    /// Closed form from per-user means and variances; quadratic costs only.
    AnalyticQuadratic,
    /// Seeded sample mean with standard error.
    MonteCarlo { samples: usize },
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Enumerate => "enumerate",
            Engine::AnalyticQuadratic => "analytic_quadratic",
            Engine::MonteCarlo { .. } => "monte_carlo",
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Engine::MonteCarlo { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(flatten)]
    pub engine: Engine,
    #[serde(default)]
    pub seed: u64,
}

impl EvalConfig {
    pub fn enumerate() -> Self {
        Self {
            engine: Engine::Enumerate,
            seed: 0,
        }
    }

    pub fn analytic() -> Self {
        Self {
            engine: Engine::AnalyticQuadratic,
            seed: 0,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            engine: Engine::MonteCarlo { samples },
            seed,
        }
    }

    /// Rejects engine/instance combinations the engine cannot evaluate.
    pub fn check(&self, users: usize, items: usize, cost: &CostModel) -> Result<()> {
        match self.engine {
            Engine::Enumerate => {
                let outcomes = (items as f64 + 1.0).powi(users as i32);
                if outcomes > MAX_ENUMERATION {
                    return Err(Error::UnsupportedEngine {
                        engine: "enumerate",
                        reason: format!(
                            "{outcomes:e} outcomes per slot exceeds the {MAX_ENUMERATION:e} limit"
                        ),
                    });
                }
            }
            Engine::AnalyticQuadratic => {
                if cost.quadratic_coeffs(Moment::Cost).is_none() {
                    return Err(Error::UnsupportedEngine {
                        engine: "analytic_quadratic",
                        reason: format!("cost `{}` is not a polynomial of degree <= 2", cost.name()),
                    });
                }
            }
            Engine::MonteCarlo { samples } => {
                if samples < 2 {
                    return Err(Error::UnsupportedEngine {
                        engine: "monte_carlo",
                        reason: "at least two samples are needed for a standard error".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Expected value with its standard error (zero for exact engines).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    fn from_sums(sum: f64, sumsq: f64, samples: usize) -> Self {
        let k = samples as f64;
        let mean = sum / k;
        let var = ((sumsq - k * mean * mean) / (k - 1.0)).max(0.0);
        Self {
            value: mean,
            stderr: (var / k).sqrt(),
        }
    }
}

/// One user's random contribution to a slot load.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLoad {
    /// Request probabilities per item; silence takes the remaining mass.
    pub probs: Vec<f64>,
    /// Load contributed when the corresponding item is requested.
    pub values: Vec<f64>,
}

impl UserLoad {
    fn silence(&self) -> f64 {
        (1.0 - self.probs.iter().sum::<f64>()).max(0.0)
    }

    fn mean_and_var(&self) -> (f64, f64) {
        let mean: f64 = self.probs.iter().zip(&self.values).map(|(p, v)| p * v).sum();
        let second: f64 = self.probs.iter().zip(&self.values).map(|(p, v)| p * v * v).sum();
        (mean, (second - mean * mean).max(0.0))
    }

    /// Value for choice `c` (0 = silent, `m + 1` = item `m`).
    fn value(&self, c: usize) -> f64 {
        if c == 0 {
            0.0
        } else {
            self.values[c - 1]
        }
    }

    fn prob(&self, c: usize) -> f64 {
        if c == 0 {
            self.silence()
        } else {
            self.probs[c - 1]
        }
    }
}

/// Random load of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLoad {
    /// Slot index, which selects the Monte Carlo substreams.
    pub slot: usize,
    /// Deterministic part of the load.
    pub offset: f64,
    pub users: Vec<UserLoad>,
}

/// `E[g(Y)]` together with `E[I_n(m) g(Y)]` for every user and item.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMoments {
    pub total: Estimate,
    /// `by_item[n][m]`.
    pub by_item: Vec<Vec<Estimate>>,
}

impl SlotLoad {
    fn items(&self) -> usize {
        self.users.first().map_or(0, |u| u.probs.len())
    }

    /// `E[g(Y)]` for `g` the cost or its derivative.
    pub fn expect(&self, cost: &CostModel, moment: Moment, cfg: &EvalConfig) -> Result<Estimate> {
        match cfg.engine {
            Engine::Enumerate => {
                let mut acc = 0.0;
                self.enumerate(None, |prob, load, _| {
                    acc += prob * cost.eval(moment, load)?;
                    Ok(())
                })?;
                Ok(Estimate::exact(acc))
            }
            Engine::AnalyticQuadratic => {
                let coeffs = analytic_coeffs(cost, moment)?;
                let (mean, var) = self.mean_and_var();
                Ok(Estimate::exact(quadratic_expectation(coeffs, mean, var)))
            }
            Engine::MonteCarlo { samples } => {
                let sums = self.monte_carlo(cost, moment, samples, cfg.seed, false)?;
                Ok(Estimate::from_sums(sums.total.0, sums.total.1, samples))
            }
        }
    }

    /// `E[g(Y)]` and `E[I_n(m) g(Y)]` for all `(n, m)`.
    pub fn expect_indicator(
        &self,
        cost: &CostModel,
        moment: Moment,
        cfg: &EvalConfig,
    ) -> Result<IndicatorMoments> {
        let items = self.items();
        match cfg.engine {
            Engine::Enumerate => {
                let mut total = 0.0;
                let mut by_item = vec![vec![0.0; items]; self.users.len()];
                self.enumerate(None, |prob, load, choice| {
                    let w = prob * cost.eval(moment, load)?;
                    total += w;
                    for (n, &c) in choice.iter().enumerate() {
                        if c > 0 {
                            by_item[n][c - 1] += w;
                        }
                    }
                    Ok(())
                })?;
                Ok(IndicatorMoments {
                    total: Estimate::exact(total),
                    by_item: by_item
                        .into_iter()
                        .map(|row| row.into_iter().map(Estimate::exact).collect())
                        .collect(),
                })
            }
            Engine::AnalyticQuadratic => {
                let coeffs = analytic_coeffs(cost, moment)?;
                let stats: Vec<(f64, f64)> = self.users.iter().map(UserLoad::mean_and_var).collect();
                let (mean, var) = self.mean_and_var();
                let by_item = self
                    .users
                    .iter()
                    .zip(&stats)
                    .map(|(u, (mu_n, var_n))| {
                        let rest_mean = mean - mu_n;
                        let rest_var = (var - var_n).max(0.0);
                        u.probs
                            .iter()
                            .zip(&u.values)
                            .map(|(p, v)| {
                                Estimate::exact(
                                    p * quadratic_expectation(coeffs, rest_mean + v, rest_var),
                                )
                            })
                            .collect()
                    })
                    .collect();
                Ok(IndicatorMoments {
                    total: Estimate::exact(quadratic_expectation(coeffs, mean, var)),
                    by_item,
                })
            }
            Engine::MonteCarlo { samples } => {
                let sums = self.monte_carlo(cost, moment, samples, cfg.seed, true)?;
                let by_item = sums
                    .cells
                    .chunks(items.max(1))
                    .take(self.users.len())
                    .map(|row| {
                        row.iter()
                            .map(|(s, sq)| Estimate::from_sums(*s, *sq, samples))
                            .collect()
                    })
                    .collect();
                Ok(IndicatorMoments {
                    total: Estimate::from_sums(sums.total.0, sums.total.1, samples),
                    by_item,
                })
            }
        }
    }

    /// `E[g(Y) | user n's choice]` for every choice: index 0 is silence,
    /// index `m + 1` is a request for item `m`. Exact engines only.
    ///
    /// Choices with zero probability whose load can leave the cost domain
    /// come out as `+inf`.
    pub fn conditional(
        &self,
        n: usize,
        cost: &CostModel,
        moment: Moment,
        cfg: &EvalConfig,
    ) -> Result<Vec<f64>> {
        let items = self.items();
        let user = &self.users[n];
        match cfg.engine {
            Engine::Enumerate => {
                let mut acc = vec![0.0; items + 1];
                self.enumerate(Some(n), |prob, load, _| {
                    for (c, a) in acc.iter_mut().enumerate() {
                        match cost.eval(moment, load + user.value(c)) {
                            Ok(v) => *a += prob * v,
                            // a choice the user never makes may overload the slot
                            Err(Error::Domain { .. }) if user.prob(c) <= 0.0 => *a = f64::INFINITY,
                            Err(e) => return Err(e),
                        }
                    }
                    Ok(())
                })?;
                Ok(acc)
            }
            Engine::AnalyticQuadratic => {
                let coeffs = analytic_coeffs(cost, moment)?;
                let (mean, var) = self.mean_and_var();
                let (mu_n, var_n) = user.mean_and_var();
                let rest_var = (var - var_n).max(0.0);
                Ok((0..=items)
                    .map(|c| quadratic_expectation(coeffs, mean - mu_n + user.value(c), rest_var))
                    .collect())
            }
            Engine::MonteCarlo { .. } => Err(Error::UnsupportedEngine {
                engine: "monte_carlo",
                reason: "conditional expectations require an exact engine".into(),
            }),
        }
    }

    fn mean_and_var(&self) -> (f64, f64) {
        self.users.iter().map(UserLoad::mean_and_var).fold(
            (self.offset, 0.0),
            |(m, v), (mu, var)| (m + mu, v + var),
        )
    }

    /// Visits every reachable joint outcome, optionally leaving user `skip` out.
    /// The callback gets the outcome probability, its load and the choices.
    fn enumerate<F>(&self, skip: Option<usize>, mut visit: F) -> Result<()>
    where
        F: FnMut(f64, f64, &[usize]) -> Result<()>,
    {
        let users = self.users.len() - usize::from(skip.is_some());
        let outcomes = (self.items() as f64 + 1.0).powi(users as i32);
        if outcomes > MAX_ENUMERATION {
            return Err(Error::UnsupportedEngine {
                engine: "enumerate",
                reason: format!("{outcomes:e} outcomes per slot exceeds the limit"),
            });
        }
        let mut choice = vec![0usize; self.users.len()];
        self.descend(0, skip, 1.0, self.offset, &mut choice, &mut visit)
    }

    fn descend<F>(
        &self,
        n: usize,
        skip: Option<usize>,
        prob: f64,
        load: f64,
        choice: &mut [usize],
        visit: &mut F,
    ) -> Result<()>
    where
        F: FnMut(f64, f64, &[usize]) -> Result<()>,
    {
        if n == self.users.len() {
            return visit(prob, load, choice);
        }
        if Some(n) == skip {
            choice[n] = 0;
            return self.descend(n + 1, skip, prob, load, choice, visit);
        }
        let user = &self.users[n];
        for c in 0..=user.probs.len() {
            let p = user.prob(c);
            if p <= 0.0 {
                continue;
            }
            choice[n] = c;
            self.descend(n + 1, skip, prob * p, load + user.value(c), choice, visit)?;
        }
        choice[n] = 0;
        Ok(())
    }

    fn monte_carlo(
        &self,
        cost: &CostModel,
        moment: Moment,
        samples: usize,
        seed: u64,
        with_cells: bool,
    ) -> Result<McSums> {
        let items = self.items();
        let cells = if with_cells { self.users.len() * items } else { 0 };
        let chunks = samples.div_ceil(MC_CHUNK);
        let partials: Vec<Result<McSums>> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let start = chunk * MC_CHUNK;
                let end = (start + MC_CHUNK).min(samples);
                let mut rngs: Vec<_> = (0..self.users.len())
                    .map(|n| stream::substream(seed, self.slot, n, start as u64))
                    .collect();
                let mut sums = McSums::new(cells);
                let mut choice = vec![0usize; self.users.len()];
                for _ in start..end {
                    let mut load = self.offset;
                    for ((user, rng), c) in self.users.iter().zip(&mut rngs).zip(&mut choice) {
                        *c = choose(&user.probs, rand::Rng::gen::<f64>(rng));
                        load += user.value(*c);
                    }
                    let g = cost.eval(moment, load)?;
                    sums.total.0 += g;
                    sums.total.1 += g * g;
                    if with_cells {
                        for (n, &c) in choice.iter().enumerate() {
                            if c > 0 {
                                let cell = &mut sums.cells[n * items + c - 1];
                                cell.0 += g;
                                cell.1 += g * g;
                            }
                        }
                    }
                }
                Ok(sums)
            })
            .collect();
        // reduce in chunk order so the result is independent of scheduling
        let mut out = McSums::new(cells);
        for partial in partials {
            let partial = partial?;
            out.total.0 += partial.total.0;
            out.total.1 += partial.total.1;
            for (a, b) in out.cells.iter_mut().zip(&partial.cells) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
        Ok(out)
    }
}

struct McSums {
    total: (f64, f64),
    cells: Vec<(f64, f64)>,
}

impl McSums {
    fn new(cells: usize) -> Self {
        Self {
            total: (0.0, 0.0),
            cells: vec![(0.0, 0.0); cells],
        }
    }
}

fn analytic_coeffs(cost: &CostModel, moment: Moment) -> Result<[f64; 3]> {
    cost.quadratic_coeffs(moment)
        .ok_or_else(|| Error::UnsupportedEngine {
            engine: "analytic_quadratic",
            reason: format!("cost `{}` is not a polynomial of degree <= 2", cost.name()),
        })
}

/// `E[a0 + a1 Y + a2 Y^2]` for `Y` with the given mean and variance.
fn quadratic_expectation([a0, a1, a2]: [f64; 3], mean: f64, var: f64) -> f64 {
    a0 + a1 * mean + a2 * (var + mean * mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_users() -> SlotLoad {
        SlotLoad {
            slot: 0,
            offset: 0.5,
            users: vec![
                UserLoad {
                    probs: vec![0.72, 0.09, 0.09],
                    values: vec![3.0, 2.0, 4.0],
                },
                UserLoad {
                    probs: vec![0.27, 0.09, 0.54],
                    values: vec![2.5, 2.0, 4.0],
                },
            ],
        }
    }

    #[test]
    fn analytic_matches_enumeration() {
        let slot = two_users();
        let cost = CostModel::polynomial(vec![1.0, 0.5, 2.0]).unwrap();
        for moment in [Moment::Cost, Moment::Marginal] {
            let e = slot.expect_indicator(&cost, moment, &EvalConfig::enumerate()).unwrap();
            let a = slot.expect_indicator(&cost, moment, &EvalConfig::analytic()).unwrap();
            assert!((e.total.value - a.total.value).abs() < 1e-10);
            for (re, ra) in e.by_item.iter().zip(&a.by_item) {
                for (x, y) in re.iter().zip(ra) {
                    assert!((x.value - y.value).abs() < 1e-10);
                }
            }
            for n in 0..2 {
                let ce = slot.conditional(n, &cost, moment, &EvalConfig::enumerate()).unwrap();
                let ca = slot.conditional(n, &cost, moment, &EvalConfig::analytic()).unwrap();
                for (x, y) in ce.iter().zip(&ca) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn conditionals_average_to_the_total() {
        let slot = two_users();
        let cost = CostModel::outage(12.0).unwrap();
        let cfg = EvalConfig::enumerate();
        let total = slot.expect(&cost, Moment::Cost, &cfg).unwrap().value;
        for n in 0..2 {
            let cond = slot.conditional(n, &cost, Moment::Cost, &cfg).unwrap();
            let u = &slot.users[n];
            let mixed: f64 = (0..cond.len()).map(|c| u.prob(c) * cond[c]).sum();
            assert!((mixed - total).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_close() {
        let slot = two_users();
        let cost = CostModel::quadratic();
        let cfg = EvalConfig::monte_carlo(200_000, 3);
        let a = slot.expect_indicator(&cost, Moment::Cost, &cfg).unwrap();
        let b = slot.expect_indicator(&cost, Moment::Cost, &cfg).unwrap();
        assert_eq!(a, b);
        let exact = slot.expect(&cost, Moment::Cost, &EvalConfig::enumerate()).unwrap();
        assert!((a.total.value - exact.value).abs() < 4.0 * a.total.stderr);
        assert!(a.total.stderr > 0.0);
    }

    #[test]
    fn unreachable_overload_is_ignored_but_reachable_one_is_not() {
        let cost = CostModel::outage(5.0).unwrap();
        let mut slot = SlotLoad {
            slot: 0,
            offset: 0.0,
            users: vec![UserLoad {
                probs: vec![1.0, 0.0],
                values: vec![1.0, 10.0],
            }],
        };
        assert!(slot.expect(&cost, Moment::Cost, &EvalConfig::enumerate()).is_ok());
        slot.users[0].probs = vec![0.9, 0.1];
        assert!(matches!(
            slot.expect(&cost, Moment::Cost, &EvalConfig::enumerate()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn engine_checks() {
        let q = CostModel::quadratic();
        let o = CostModel::outage(3.0).unwrap();
        assert!(EvalConfig::analytic().check(2, 3, &o).is_err());
        assert!(EvalConfig::analytic().check(500, 50, &q).is_ok());
        assert!(EvalConfig::enumerate().check(20, 3, &q).is_err());
        assert!(EvalConfig::enumerate().check(4, 3, &q).is_ok());
        assert!(EvalConfig::monte_carlo(1, 0).check(4, 3, &q).is_err());
    }
}
