//! One-cycle expected cost of a proactive allocation and its gradients.
//!
//! With `x[n][t][m]` the portion of item `m` delivered to user `n` during slot
//! `t - 1` for use in slot `t`, the load of slot `t` is
//!
//! ```text
//! Y_t = sum_n (S(m_n) - x[n][t][m_n]) 1{n requests m_n} + sum_{n,m} x[n][t+1][m]
//! ```
//!
//! with slot indices taken modulo the cycle length `T`. The objective is
//! `(1/T) sum_t E[C(Y_t)]`.

mod engine;

pub use engine::{
    Engine, Estimate, EvalConfig, IndicatorMoments, SlotLoad, UserLoad, MAX_ENUMERATION,
};

use serde::Serialize;

use crate::catalog::ItemCatalog;
use crate::cost::Moment;
use crate::cube::Cube;
use crate::demand::RequestOutcome;
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Proactive download portions `x[n][t][m]`, with `0 <= x <= S(m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProactiveAllocation(Cube);

impl ProactiveAllocation {
    pub fn zeros(users: usize, slots: usize, items: usize) -> Self {
        Self(Cube::zeros(users, slots, items))
    }

    pub fn zeros_for(inst: &Instance) -> Self {
        Self::zeros(inst.users(), inst.slots(), inst.items())
    }

    pub fn new(catalog: &ItemCatalog, x: Cube) -> Result<Self> {
        if x.items() != catalog.len() {
            return Err(Error::Invalid("allocation item count does not match catalog".into()));
        }
        for n in 0..x.users() {
            for t in 0..x.slots() {
                for (m, &v) in x.row(n, t).iter().enumerate() {
                    if !(0.0..=catalog.size(m)).contains(&v) {
                        return Err(Error::Invalid(format!(
                            "allocation x[{n}][{t}][{m}] = {v} outside [0, {}]",
                            catalog.size(m)
                        )));
                    }
                }
            }
        }
        Ok(Self(x))
    }

    /// Wraps a cube already known to be inside the box.
    pub(crate) fn from_feasible(x: Cube) -> Self {
        Self(x)
    }

    pub fn cube(&self) -> &Cube {
        &self.0
    }

    pub fn get(&self, n: usize, t: usize, m: usize) -> f64 {
        self.0.get(n, t, m)
    }

    pub fn into_cube(self) -> Cube {
        self.0
    }
}

/// Realized load `Y_t` of one sampled outcome under an allocation.
pub fn slot_load(catalog: &ItemCatalog, outcome: &RequestOutcome, alloc: &ProactiveAllocation, t: usize) -> f64 {
    let x = alloc.cube();
    let t = x.slot(t as isize);
    let next = x.slot(t as isize + 1);
    let requested: f64 = (0..outcome.choice.len())
        .filter_map(|n| outcome.item(n).map(|m| catalog.size(m) - x.get(n, t, m)))
        .sum();
    requested + x.slot_total(next)
}

/// Distribution of `Y_t` as an offset plus independent per-user terms.
pub fn slot_distribution(inst: &Instance, alloc: &ProactiveAllocation, t: usize) -> SlotLoad {
    let x = alloc.cube();
    let next = x.slot(t as isize + 1);
    let sizes = inst.catalog.sizes();
    SlotLoad {
        slot: t,
        offset: x.slot_total(next),
        users: (0..inst.users())
            .map(|n| UserLoad {
                probs: inst.profile.row(n, t).to_vec(),
                values: sizes.iter().zip(x.row(n, t)).map(|(s, xv)| s - xv).collect(),
            })
            .collect(),
    }
}

/// Non-proactive load distribution of slot `t` shifted by `offset`.
pub fn nonproactive_distribution(inst: &Instance, t: usize, offset: f64) -> SlotLoad {
    SlotLoad {
        slot: t,
        offset,
        users: (0..inst.users())
            .map(|n| UserLoad {
                probs: inst.profile.row(n, t).to_vec(),
                values: inst.catalog.sizes().to_vec(),
            })
            .collect(),
    }
}

/// Cycle-average expected cost with the per-slot terms it is made of.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleCost {
    pub total: Estimate,
    /// `E[C(Y_t)]` for each slot (not divided by `T`).
    pub per_slot: Vec<Estimate>,
}

impl CycleCost {
    fn from_slots(per_slot: Vec<Estimate>) -> Self {
        let t = per_slot.len() as f64;
        let value = per_slot.iter().map(|e| e.value).sum::<f64>() / t;
        let stderr = per_slot.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / t;
        Self {
            total: Estimate { value, stderr },
            per_slot,
        }
    }

    pub fn value(&self) -> f64 {
        self.total.value
    }
}

fn check_alloc(inst: &Instance, alloc: &ProactiveAllocation) -> Result<()> {
    if alloc.cube().dims() != inst.profile.probs().dims() {
        return Err(Error::Invalid(format!(
            "allocation dims {:?} do not match profile dims {:?}",
            alloc.cube().dims(),
            inst.profile.probs().dims()
        )));
    }
    Ok(())
}

/// `(1/T) sum_t E[C(Y_t)]`.
pub fn expected_cycle_cost(inst: &Instance, alloc: &ProactiveAllocation, cfg: &EvalConfig) -> Result<CycleCost> {
    check_alloc(inst, alloc)?;
    cfg.check(inst.users(), inst.items(), &inst.cost)?;
    let per_slot = (0..inst.slots())
        .map(|t| slot_distribution(inst, alloc, t).expect(&inst.cost, Moment::Cost, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(CycleCost::from_slots(per_slot))
}

/// Cost of the network without proactive downloads.
pub fn nonproactive_cost(inst: &Instance, cfg: &EvalConfig) -> Result<CycleCost> {
    expected_cycle_cost(inst, &ProactiveAllocation::zeros_for(inst), cfg)
}

/// Gradient with per-entry standard errors (zero for exact engines).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: Cube,
    pub stderr: Cube,
}

/// `d/dx[n][t][m]` of the cycle cost.
///
/// `x[n][t][m]` adds one unit to `Y_{t-1}` and removes `I_{n,t}(m)` units from
/// `Y_t`, so the derivative is `(E[C'(Y_{t-1})] - E[I_{n,t}(m) C'(Y_t)]) / T`.
pub fn cost_gradient_x(inst: &Instance, alloc: &ProactiveAllocation, cfg: &EvalConfig) -> Result<Gradient> {
    Ok(value_and_gradient_x(inst, alloc, cfg)?.1)
}

pub(crate) fn value_and_gradient_x(
    inst: &Instance,
    alloc: &ProactiveAllocation,
    cfg: &EvalConfig,
) -> Result<(CycleCost, Gradient)> {
    check_alloc(inst, alloc)?;
    cfg.check(inst.users(), inst.items(), &inst.cost)?;
    let slots = inst.slots();
    let mut costs = Vec::with_capacity(slots);
    let mut moments = Vec::with_capacity(slots);
    for t in 0..slots {
        let dist = slot_distribution(inst, alloc, t);
        costs.push(dist.expect(&inst.cost, Moment::Cost, cfg)?);
        moments.push(dist.expect_indicator(&inst.cost, Moment::Marginal, cfg)?);
    }
    let scale = 1.0 / slots as f64;
    let (users, _, items) = inst.profile.probs().dims();
    let mut value = Cube::zeros(users, slots, items);
    let mut stderr = Cube::zeros(users, slots, items);
    for t in 0..slots {
        let prev = &moments[alloc.cube().slot(t as isize - 1)].total;
        for n in 0..users {
            for m in 0..items {
                let cell = &moments[t].by_item[n][m];
                value.set(n, t, m, scale * (prev.value - cell.value));
                stderr.set(n, t, m, scale * prev.stderr.hypot(cell.stderr));
            }
        }
    }
    Ok((CycleCost::from_slots(costs), Gradient { value, stderr }))
}

/// `d/dp[n][t][m]` of the cycle cost, with user `n`'s silence mass absorbing
/// the change: `(E[C(Y_t) | n requests m] - E[C(Y_t) | n silent]) / T`.
/// Requires an exact engine. Entries are `+inf` where a request the user
/// currently never makes could overload the slot.
pub fn cost_gradient_p(inst: &Instance, alloc: &ProactiveAllocation, cfg: &EvalConfig) -> Result<Cube> {
    check_alloc(inst, alloc)?;
    cfg.check(inst.users(), inst.items(), &inst.cost)?;
    if !cfg.engine.is_exact() {
        return Err(Error::UnsupportedEngine {
            engine: cfg.engine.name(),
            reason: "profile gradients require an exact engine".into(),
        });
    }
    let (users, slots, items) = inst.profile.probs().dims();
    let scale = 1.0 / slots as f64;
    let mut grad = Cube::zeros(users, slots, items);
    for t in 0..slots {
        let dist = slot_distribution(inst, alloc, t);
        for n in 0..users {
            let cond = dist.conditional(n, &inst.cost, Moment::Cost, cfg)?;
            if cond[0].is_infinite() {
                return Err(Error::Domain {
                    load: f64::INFINITY,
                    limit: inst.cost.domain_limit(),
                });
            }
            for m in 0..items {
                grad.set(n, t, m, scale * (cond[m + 1] - cond[0]));
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostModel;
    use crate::demand::DemandProfile;

    fn single(size: f64, probs: &[f64]) -> Instance {
        let rows: Vec<Vec<f64>> = probs.iter().map(|p| vec![*p]).collect();
        Instance::new(
            ItemCatalog::new(vec![size]).unwrap(),
            DemandProfile::homogeneous(1, &rows).unwrap(),
            CostModel::quadratic(),
        )
        .unwrap()
    }

    #[test]
    fn slot_load_by_hand() {
        let catalog = ItemCatalog::new(vec![3.0]).unwrap();
        let mut x = Cube::zeros(1, 2, 1);
        x.set(0, 0, 0, 1.0);
        x.set(0, 1, 0, 0.5);
        let alloc = ProactiveAllocation::new(&catalog, x).unwrap();
        let outcome = RequestOutcome {
            slot: 0,
            choice: vec![1],
        };
        assert!((slot_load(&catalog, &outcome, &alloc, 0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn slot_load_without_prefetch_is_plain_demand() {
        let catalog = ItemCatalog::new(vec![3.0, 2.0, 4.0]).unwrap();
        let alloc = ProactiveAllocation::zeros(3, 1, 3);
        let outcome = RequestOutcome {
            slot: 0,
            choice: vec![1, 0, 3],
        };
        assert_eq!(slot_load(&catalog, &outcome, &alloc, 0), 7.0);
        let silent = RequestOutcome {
            slot: 0,
            choice: vec![0, 0, 0],
        };
        assert_eq!(slot_load(&catalog, &silent, &alloc, 0), 0.0);
    }

    #[test]
    fn deterministic_single_user_cost() {
        let inst = Instance::new(
            ItemCatalog::new(vec![3.0, 2.0, 4.0]).unwrap(),
            DemandProfile::homogeneous(1, &[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap(),
            CostModel::quadratic(),
        )
        .unwrap();
        let c = nonproactive_cost(&inst, &EvalConfig::enumerate()).unwrap();
        assert!((c.value() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn no_users_cost_is_cost_at_zero() {
        let inst = Instance::new(
            ItemCatalog::new(vec![1.0]).unwrap(),
            DemandProfile::from_probs(Cube::zeros(0, 2, 1)).unwrap(),
            CostModel::polynomial(vec![0.7, 0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let c = nonproactive_cost(&inst, &EvalConfig::enumerate()).unwrap();
        assert!((c.value() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn silent_users_only_pay_for_prefetching() {
        let inst = single(3.0, &[0.0, 0.0]);
        let mut x = Cube::zeros(1, 2, 1);
        x.set(0, 1, 0, 1.5);
        let alloc = ProactiveAllocation::new(&inst.catalog, x).unwrap();
        let c = expected_cycle_cost(&inst, &alloc, &EvalConfig::enumerate()).unwrap();
        // slot 0 carries the 1.5 units sent ahead; slot 1 is empty
        assert!((c.value() - 0.5 * 2.25).abs() < 1e-15);
        let g = cost_gradient_x(&inst, &alloc, &EvalConfig::enumerate()).unwrap();
        assert!((g.value.get(0, 1, 0) - 0.5 * 3.0).abs() < 1e-15);
        assert_eq!(g.value.get(0, 0, 0), 0.0);
    }

    #[test]
    fn single_slot_full_demand_cancels() {
        let inst = single(3.0, &[1.0]);
        for v in [0.0, 1.0, 2.5] {
            let x = Cube::from_vec(1, 1, 1, vec![v]).unwrap();
            let alloc = ProactiveAllocation::new(&inst.catalog, x).unwrap();
            let g = cost_gradient_x(&inst, &alloc, &EvalConfig::enumerate()).unwrap();
            assert!(g.value.get(0, 0, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_prefetch_makes_requests_free() {
        let inst = Instance::new(
            ItemCatalog::new(vec![3.0, 2.0]).unwrap(),
            DemandProfile::homogeneous(2, &[vec![0.3, 0.2], vec![0.5, 0.4]]).unwrap(),
            CostModel::quadratic(),
        )
        .unwrap();
        let x = Cube::from_fn(2, 2, 2, |_, _, m| inst.catalog.size(m));
        let alloc = ProactiveAllocation::new(&inst.catalog, x).unwrap();
        let g = cost_gradient_p(&inst, &alloc, &EvalConfig::enumerate()).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn profile_gradient_for_lone_user() {
        let inst = Instance::new(
            ItemCatalog::new(vec![3.0, 2.0, 4.0]).unwrap(),
            DemandProfile::homogeneous(1, &[vec![0.2, 0.3, 0.1]]).unwrap(),
            CostModel::quadratic(),
        )
        .unwrap();
        let g = cost_gradient_p(&inst, &ProactiveAllocation::zeros_for(&inst), &EvalConfig::enumerate())
            .unwrap();
        assert_eq!(g.row(0, 0), &[9.0, 4.0, 16.0]);
    }

    #[test]
    fn profile_gradient_rejects_monte_carlo() {
        let inst = single(1.0, &[0.5]);
        let r = cost_gradient_p(
            &inst,
            &ProactiveAllocation::zeros_for(&inst),
            &EvalConfig::monte_carlo(100, 1),
        );
        assert!(matches!(r, Err(Error::UnsupportedEngine { .. })));
    }

    #[test]
    fn allocation_bounds_are_enforced() {
        let catalog = ItemCatalog::new(vec![2.0]).unwrap();
        assert!(ProactiveAllocation::new(&catalog, Cube::from_vec(1, 1, 1, vec![2.5]).unwrap()).is_err());
        assert!(ProactiveAllocation::new(&catalog, Cube::from_vec(1, 1, 1, vec![-0.1]).unwrap()).is_err());
    }
}
