//! Ready-made experiments: the two-user example and the Zipf scaling family.

use serde::Serialize;

use crate::catalog::ItemCatalog;
use crate::cost::CostModel;
use crate::cube::Cube;
use crate::demand::{zipf_profile, DemandProfile};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig};
use crate::instance::Instance;
use crate::optim::PgOptions;
use crate::proactive::{scaling_curve, solve_proactive, ScalingCurve};
use crate::recommend::{solve_rating, PreferenceMapping, RatingVector};
use crate::shaping::{distance, shape_demand, BoundaryResidual, EbcRegion, ShapeOptions};

pub const TWO_USER_SIZES: [f64; 3] = [3.0, 2.0, 4.0];
pub const TWO_USER_TASTES: [[f64; 3]; 2] = [[0.8, 0.1, 0.1], [0.3, 0.1, 0.6]];
pub const OFF_PEAK_ACTIVITY: f64 = 0.1;
pub const OUTAGE_CAPACITY: f64 = 9.8;
pub const PEAK_SLOT: usize = 1;

pub const SCALING_ITEMS: usize = 50;
pub const SCALING_SIZE_RANGE: (f64, f64) = (10.0, 30.0);
pub const SCALING_ZIPF_POWER: f64 = 4.0;
pub const SCALING_SILENCE: [f64; 8] = [0.9, 0.4, 0.01, 0.8, 0.2, 0.7, 0.05, 0.1];
pub const SCALING_LADDER: [usize; 4] = [25, 50, 100, 200];
pub const SCALING_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoUserCost {
    Quadratic,
    Outage,
}

impl TwoUserCost {
    pub fn model(self) -> CostModel {
        match self {
            TwoUserCost::Quadratic => CostModel::quadratic(),
            TwoUserCost::Outage => CostModel::outage(OUTAGE_CAPACITY).expect("capacity is positive"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TwoUserCost::Quadratic => "two-user-quadratic",
            TwoUserCost::Outage => "two-user-outage",
        }
    }
}

/// Two users, three items, an off-peak slot 0 and a peak slot 1 with activity `peak`.
pub fn two_user_instance(peak: f64, cost: CostModel) -> Result<Instance> {
    if !(0.0..=1.0).contains(&peak) {
        return Err(Error::Invalid(format!("peak activity {peak} outside [0, 1]")));
    }
    let probs = Cube::from_fn(2, 2, 3, |n, t, m| {
        let activity = if t == PEAK_SLOT { peak } else { OFF_PEAK_ACTIVITY };
        activity * TWO_USER_TASTES[n][m]
    });
    Instance::new(
        ItemCatalog::new(TWO_USER_SIZES.to_vec())?,
        DemandProfile::from_probs(probs)?,
        cost,
    )
}

/// `users` identical Zipf users over the scaling catalog, quadratic cost.
pub fn scaling_instance(users: usize, seed: u64) -> Result<Instance> {
    let (low, high) = SCALING_SIZE_RANGE;
    let catalog = ItemCatalog::uniform(SCALING_ITEMS, low, high, seed)?;
    let rows = SCALING_SILENCE
        .iter()
        .map(|q| zipf_profile(SCALING_ITEMS, SCALING_ZIPF_POWER, 1.0 - q))
        .collect::<Result<Vec<_>>>()?;
    Instance::new(catalog, DemandProfile::homogeneous(users, &rows)?, CostModel::quadratic())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub peak: f64,
    pub c_nonproactive: Option<f64>,
    pub c_proactive: Option<f64>,
    /// Error kind when the point could not be evaluated (e.g. overload).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f0: f64,
    pub residual: f64,
}

/// Shaped peak-slot profile and recommended ratings of one user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub user: usize,
    pub original: Vec<f64>,
    pub shaped: Vec<f64>,
    pub ratings: Vec<f64>,
    pub scale: Option<f64>,
    pub radius: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoUserReport {
    pub cost: TwoUserCost,
    pub sweep: Vec<SweepRow>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub table: Vec<TableRow>,
    pub boundary: Vec<BoundaryResidual>,
}

/// Peak activities 0.1, 0.2, ..., 0.9.
pub fn peak_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

pub fn reproduce_two_user(cost: TwoUserCost, alpha: f64, opts: &ShapeOptions) -> Result<TwoUserReport> {
    let cfg = EvalConfig::enumerate();
    let sweep = peak_grid()
        .into_iter()
        .map(|peak| {
            let point = two_user_instance(peak, cost.model()).and_then(|inst| {
                let base = eval::nonproactive_cost(&inst, &cfg)?.value();
                let (_, opt) = solve_proactive(&inst, &cfg, &opts.inner)?;
                Ok((base, opt.value()))
            });
            match point {
                Ok((base, opt)) => Ok(SweepRow {
                    peak,
                    c_nonproactive: Some(base),
                    c_proactive: Some(opt),
                    error: None,
                }),
                Err(e @ (Error::Domain { .. } | Error::NotConverged { .. })) => Ok(SweepRow {
                    peak,
                    c_nonproactive: None,
                    c_proactive: None,
                    error: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let inst = two_user_instance(0.9, cost.model())?;
    let alphas = vec![alpha; inst.users()];
    let shaped = shape_demand(&inst, &alphas, &cfg, opts)?;
    let trace = shaped
        .trace
        .iterates
        .iter()
        .enumerate()
        .map(|(iter, it)| TraceRow {
            iter,
            f0: it.f0,
            residual: it.max_residual,
        })
        .collect();
    let regions = EbcRegion::for_profile(&inst.profile, &alphas)?;
    let mut table = Vec::new();
    for n in 0..inst.users() {
        let q = inst.profile.silence(n, PEAK_SLOT);
        let active = 1.0 - q;
        let original: Vec<f64> = inst.profile.row(n, PEAK_SLOT).iter().map(|p| p / active).collect();
        let target = shaped.profile.row(n, PEAK_SLOT);
        let rating = solve_rating(
            target,
            shaped.profile.silence(n, PEAK_SLOT),
            &RatingVector::new(TWO_USER_TASTES[n].to_vec())?,
            PreferenceMapping::LinearFractional,
        )?;
        let pi: Vec<f64> = target.iter().map(|p| p / active).collect();
        table.push(TableRow {
            user: n,
            distance: distance(&pi, &original),
            radius: regions[n][PEAK_SLOT].radius / active,
            original,
            shaped: pi,
            ratings: rating.ratings.into_vec(),
            scale: rating.scale,
        });
    }
    Ok(TwoUserReport {
        cost,
        sweep,
        trace,
        converged: shaped.trace.converged,
        table,
        boundary: shaped.trace.boundary,
    })
}

/// Optimal cost reduction over the scaling ladder with the analytic engine.
pub fn reproduce_scaling(ladder: &[usize], seed: u64, opts: &PgOptions) -> Result<ScalingCurve> {
    scaling_curve(|n| scaling_instance(n, seed), ladder, &EvalConfig::analytic(), opts)
}
