//! Proactive downloads for a fixed demand profile: the optimal allocation,
//! active users, the equal-share Policy A and the cost-reduction bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::Moment;
use crate::cube::Cube;
use crate::error::{Error, Result};
use crate::eval::{
    self, nonproactive_distribution, CycleCost, EvalConfig, ProactiveAllocation, SlotLoad,
};
use crate::instance::Instance;
use crate::optim::{self, golden_section, PgOptions};

/// Strict margin for active-set membership under exact engines.
pub const ACTIVE_MARGIN: f64 = 1e-12;
/// Standard errors a Monte Carlo margin must clear to decide membership.
pub const ACTIVE_SIGMAS: f64 = 4.0;
/// Bracket width of the one-dimensional Policy A search.
pub const POLICY_A_TOL: f64 = 1e-8;

/// Users worth prefetching for: `n` is in `B_t(m)` when
/// `E[I_{n,t}(m) C'(L_t)] - E[C'(L_{t-1})] > 0` under non-proactive loads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveSets {
    /// `members[t][m]` lists the users in `B_t(m)` in increasing order.
    pub members: Vec<Vec<Vec<usize>>>,
    /// Monte Carlo cells whose margin is within the decision band.
    pub undecided: Vec<(usize, usize, usize)>,
    pub margins: Cube,
    pub margin_stderr: Cube,
}

impl ActiveSets {
    pub fn count(&self, t: usize, m: usize) -> usize {
        self.members[t][m].len()
    }

    /// `sum_m B_t(m)`: number of active `(user, item)` pairs at slot `t`.
    pub fn pairs(&self, t: usize) -> usize {
        self.members[t].iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.members.iter().all(|slot| slot.iter().all(Vec::is_empty))
    }

    pub fn contains(&self, n: usize, t: usize, m: usize) -> bool {
        self.members[t][m].binary_search(&n).is_ok()
    }
}

pub fn active_sets(inst: &Instance, cfg: &EvalConfig) -> Result<ActiveSets> {
    cfg.check(inst.users(), inst.items(), &inst.cost)?;
    let (users, slots, items) = inst.profile.probs().dims();
    let moments = (0..slots)
        .map(|t| nonproactive_distribution(inst, t, 0.0).expect_indicator(&inst.cost, Moment::Marginal, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut margins = Cube::zeros(users, slots, items);
    let mut margin_stderr = Cube::zeros(users, slots, items);
    let mut members = vec![vec![Vec::new(); items]; slots];
    let mut undecided = Vec::new();
    for t in 0..slots {
        let prev = moments[inst.profile.slot(t as isize - 1)].total;
        for n in 0..users {
            for m in 0..items {
                let cell = moments[t].by_item[n][m];
                let margin = cell.value - prev.value;
                let se = cell.stderr.hypot(prev.stderr);
                margins.set(n, t, m, margin);
                margin_stderr.set(n, t, m, se);
                if cfg.engine.is_exact() {
                    if margin > ACTIVE_MARGIN {
                        members[t][m].push(n);
                    }
                } else if margin > ACTIVE_SIGMAS * se + ACTIVE_MARGIN {
                    members[t][m].push(n);
                } else if margin > -ACTIVE_SIGMAS * se {
                    undecided.push((n, t, m));
                }
            }
        }
    }
    Ok(ActiveSets {
        members,
        undecided,
        margins,
        margin_stderr,
    })
}

/// Minimizes the expected cycle cost over `0 <= x <= S(m)` from `x = 0`.
pub fn solve_proactive(
    inst: &Instance,
    cfg: &EvalConfig,
    opts: &PgOptions,
) -> Result<(ProactiveAllocation, CycleCost)> {
    solve_proactive_from(inst, cfg, opts, None)
}

/// As [`solve_proactive`], starting from `start` when given.
pub fn solve_proactive_from(
    inst: &Instance,
    cfg: &EvalConfig,
    opts: &PgOptions,
    start: Option<&ProactiveAllocation>,
) -> Result<(ProactiveAllocation, CycleCost)> {
    cfg.check(inst.users(), inst.items(), &inst.cost)?;
    let (users, slots, items) = inst.profile.probs().dims();
    let upper = Cube::from_fn(users, slots, items, |_, _, m| inst.catalog.size(m)).into_vec();
    let lower = vec![0.0; upper.len()];
    let x0 = match start {
        Some(a) if a.cube().dims() == (users, slots, items) => a.cube().as_slice().to_vec(),
        Some(_) => return Err(Error::Invalid("warm start has wrong dimensions".into())),
        None => lower.clone(),
    };
    let objective = |x: &[f64]| -> Result<optim::Evaluation> {
        let alloc = ProactiveAllocation::from_feasible(
            Cube::from_vec(users, slots, items, x.to_vec()).expect("dimensions fixed above"),
        );
        match eval::value_and_gradient_x(inst, &alloc, cfg) {
            Ok((cost, grad)) => Ok(Some((cost.value(), grad.value.into_vec()))),
            Err(Error::Domain { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let result = optim::projected_gradient(objective, &x0, &lower, &upper, opts)?;
    if result.history.is_empty() {
        // start point itself is outside the cost domain; surface the domain error
        let alloc = ProactiveAllocation::from_feasible(
            Cube::from_vec(users, slots, items, result.x).expect("dimensions fixed above"),
        );
        eval::expected_cycle_cost(inst, &alloc, cfg)?;
        unreachable!("objective reported a domain error that evaluation did not reproduce");
    }
    if !result.converged {
        return Err(Error::NotConverged {
            iterations: result.iterations,
            pg_norm: result.pg_norm,
            cost: result.value,
            iterate: result.x,
        });
    }
    log::debug!(
        "proactive solve: {} iterations, pg norm {:e}, cost {}",
        result.iterations,
        result.pg_norm,
        result.value
    );
    let alloc = ProactiveAllocation::from_feasible(
        Cube::from_vec(users, slots, items, result.x).expect("dimensions fixed above"),
    );
    let cost = eval::expected_cycle_cost(inst, &alloc, cfg)?;
    Ok((alloc, cost))
}

/// How far `x_tilde_t` sits below `x_hat_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RRule {
    /// `r = factor * min_t x_hat_t` over slots with active users.
    Relative(f64),
    Absolute(f64),
}

impl Default for RRule {
    fn default() -> Self {
        RRule::Relative(1e-3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyA {
    pub allocation: ProactiveAllocation,
    /// Per-slot minimizer of the single-slot surrogate (zero for empty slots).
    pub x_hat: Vec<f64>,
    /// Portion actually assigned to every active pair of the slot.
    pub x_tilde: Vec<f64>,
    pub r: f64,
    /// Set when no user is active anywhere, in which case the allocation is zero.
    pub all_empty: bool,
}

/// Load of slot `t` when every active pair at `t` has `x` prefetched.
fn reduced_load(inst: &Instance, sets: &ActiveSets, t: usize, x: f64) -> SlotLoad {
    let mut dist = nonproactive_distribution(inst, t, 0.0);
    for (m, members) in sets.members[t].iter().enumerate() {
        for &n in members {
            dist.users[n].values[m] -= x;
        }
    }
    dist
}

/// Load of slot `t - 1` with `K_t * x` extra units sent ahead for slot `t`.
fn raised_load(inst: &Instance, sets: &ActiveSets, t: usize, x: f64) -> SlotLoad {
    let prev = inst.profile.slot(t as isize - 1);
    nonproactive_distribution(inst, prev, sets.pairs(t) as f64 * x)
}

/// `E[C(L_{t-1} + K_t x)] + E[C(L_t - x H_t)]`, the cost Policy A trades off at slot `t`.
fn slot_surrogate(inst: &Instance, cfg: &EvalConfig, sets: &ActiveSets, t: usize, x: f64) -> Result<f64> {
    let a = raised_load(inst, sets, t, x).expect(&inst.cost, Moment::Cost, cfg)?;
    let b = reduced_load(inst, sets, t, x).expect(&inst.cost, Moment::Cost, cfg)?;
    Ok(a.value + b.value)
}

pub fn policy_a(inst: &Instance, cfg: &EvalConfig, sets: &ActiveSets, rule: RRule) -> Result<PolicyA> {
    cfg.check(inst.users(), inst.items(), &inst.cost)?;
    let slots = inst.slots();
    if sets.members.len() != slots {
        return Err(Error::Invalid("active sets belong to a different instance".into()));
    }
    let s_min = inst.catalog.s_min();
    let mut x_hat = vec![0.0; slots];
    for (t, xh) in x_hat.iter_mut().enumerate() {
        if sets.pairs(t) == 0 {
            continue;
        }
        let mut failure = None;
        let (x, _) = golden_section(
            |x| match slot_surrogate(inst, cfg, sets, t, x) {
                Ok(v) => v,
                Err(Error::Domain { .. }) => f64::INFINITY,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            0.0,
            s_min,
            POLICY_A_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        *xh = x;
    }
    let all_empty = sets.is_empty();
    let r = match rule {
        RRule::Absolute(r) => r,
        RRule::Relative(f) => {
            let min = (0..slots)
                .filter(|&t| sets.pairs(t) > 0)
                .map(|t| x_hat[t])
                .fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                f * min
            } else {
                0.0
            }
        }
    };
    let x_tilde: Vec<f64> = (0..slots)
        .map(|t| if sets.pairs(t) > 0 { (x_hat[t] - r).max(0.0) } else { 0.0 })
        .collect();
    let (users, _, items) = inst.profile.probs().dims();
    let mut x = Cube::zeros(users, slots, items);
    for t in 0..slots {
        for (m, members) in sets.members[t].iter().enumerate() {
            for &n in members {
                x.set(n, t, m, x_tilde[t]);
            }
        }
    }
    if all_empty {
        log::info!("no active users in any slot; Policy A allocates nothing");
    }
    Ok(PolicyA {
        allocation: ProactiveAllocation::from_feasible(x),
        x_hat,
        x_tilde,
        r,
        all_empty,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReductionReport {
    pub c_nonproactive: f64,
    pub optimal_cost: f64,
    pub policy_a_cost: f64,
    /// `C^N - C^P`.
    pub delta_c: f64,
    /// `(1/T) sum_{t,m} S(m) sum_{n in B_t(m)} margin`.
    pub upper: f64,
    /// Policy A bound with `x_tilde` inside the marginal costs.
    pub lower: f64,
    pub active_pairs: usize,
    pub undecided: usize,
    pub all_empty: bool,
}

/// Optimal reduction `C^N - C^P` together with its upper and lower bounds.
pub fn reduction_bounds(inst: &Instance, cfg: &EvalConfig, opts: &PgOptions) -> Result<CostReductionReport> {
    let sets = active_sets(inst, cfg)?;
    let policy = policy_a(inst, cfg, &sets, RRule::default())?;
    let c_nonproactive = eval::nonproactive_cost(inst, cfg)?.value();
    let policy_a_cost = eval::expected_cycle_cost(inst, &policy.allocation, cfg)?.value();
    let (_, optimal) = solve_proactive(inst, cfg, opts)?;
    let slots = inst.slots();
    let scale = 1.0 / slots as f64;

    let mut upper = 0.0;
    for t in 0..slots {
        for (m, members) in sets.members[t].iter().enumerate() {
            for &n in members {
                upper += inst.catalog.size(m) * sets.margins.get(n, t, m);
            }
        }
    }
    upper *= scale;

    let mut lower = 0.0;
    for t in 0..slots {
        let k = sets.pairs(t);
        let xt = policy.x_tilde[t];
        if k == 0 || xt == 0.0 {
            continue;
        }
        let hits = reduced_load(inst, &sets, t, xt).expect_indicator(&inst.cost, Moment::Marginal, cfg)?;
        let raised = raised_load(inst, &sets, t, xt).expect(&inst.cost, Moment::Marginal, cfg)?;
        let mut active = 0.0;
        for (m, members) in sets.members[t].iter().enumerate() {
            for &n in members {
                active += hits.by_item[n][m].value;
            }
        }
        lower += xt * (active - k as f64 * raised.value);
    }
    lower *= scale;

    Ok(CostReductionReport {
        c_nonproactive,
        optimal_cost: optimal.value(),
        policy_a_cost,
        delta_c: c_nonproactive - optimal.value(),
        upper,
        lower,
        active_pairs: (0..slots).map(|t| sets.pairs(t)).sum(),
        undecided: sets.undecided.len(),
        all_empty: policy.all_empty,
    })
}

/// Finite-N marginal-cost ratio per slot:
/// `sum_m B_t(m) E[C'(L_t)] / (sum_m B_t(m) E[C'(L_{t-1})])`.
/// `None` for slots without active users.
pub fn marginal_ratio(inst: &Instance, cfg: &EvalConfig, sets: &ActiveSets) -> Result<Vec<Option<f64>>> {
    let slots = inst.slots();
    let marg = (0..slots)
        .map(|t| nonproactive_distribution(inst, t, 0.0).expect(&inst.cost, Moment::Marginal, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..slots)
        .map(|t| {
            let b = sets.pairs(t) as f64;
            (b > 0.0).then(|| b * marg[t].value / (b * marg[inst.profile.slot(t as isize - 1)].value))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub users: usize,
    pub c_nonproactive: f64,
    pub c_proactive: f64,
    pub delta_c: f64,
    pub ratio: f64,
    /// Standard error of `delta_c` (zero for exact engines).
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln delta_c` against `ln N`.
    pub exponent: f64,
}

/// Least-squares slope of `ln y` on `ln x`; needs three points with positive `y`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Invalid("exponent fit needs at least three ladder points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Invalid("exponent fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("exponent fit needs distinct ladder points".into()));
    }
    Ok(sxy / sxx)
}

/// Optimal cost reduction for each population size produced by `family`.
pub fn scaling_curve<F>(family: F, ladder: &[usize], cfg: &EvalConfig, opts: &PgOptions) -> Result<ScalingCurve>
where
    F: Fn(usize) -> Result<Instance> + Sync,
{
    if ladder.len() < 3 {
        return Err(Error::Invalid("exponent fit needs at least three ladder points".into()));
    }
    let points = ladder
        .par_iter()
        .map(|&n| {
            let inst = family(n)?;
            let base = eval::nonproactive_cost(&inst, cfg)?;
            let (_, opt) = solve_proactive(&inst, cfg, opts)?;
            let delta = base.value() - opt.value();
            Ok(ScalingPoint {
                users: n,
                c_nonproactive: base.value(),
                c_proactive: opt.value(),
                delta_c: delta,
                ratio: delta / base.value(),
                stderr: base.total.stderr.hypot(opt.total.stderr),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.users as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.delta_c).collect();
    let exponent = fit_exponent(&xs, &ys)?;
    Ok(ScalingCurve { points, exponent })
}
