//! Demand shaping: moving user profiles inside an entropy ball around the
//! original profile, jointly with the proactive downloads.

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::ItemCatalog;
use crate::cube::Cube;
use crate::demand::{entropy, ConditionalProfile, DemandProfile};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, ProactiveAllocation};
use crate::instance::Instance;
use crate::optim::PgOptions;
use crate::proactive::solve_proactive_from;

/// Entropy-ball satisfaction region of one user in one slot:
/// `p >= 0`, `sum p = 1 - q` and `|p - center| <= (1 - q) alpha H(center / (1 - q))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EbcRegion {
    pub center: Vec<f64>,
    pub silence: f64,
    pub alpha: f64,
    pub radius: f64,
}

impl EbcRegion {
    pub fn new(center: Vec<f64>, silence: f64, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        let radius = match ConditionalProfile::from_profile(&center, silence) {
            Some(pi) => (1.0 - silence) * alpha * entropy(&pi),
            None => 0.0,
        };
        Ok(Self {
            center,
            silence,
            alpha,
            radius,
        })
    }

    /// Regions for every `(user, slot)` of a profile, indexed `[n][t]`.
    pub fn for_profile(profile: &DemandProfile, alpha: &[f64]) -> Result<Vec<Vec<Self>>> {
        if alpha.len() != profile.users() {
            return Err(Error::Invalid(format!(
                "{} alpha values for {} users",
                alpha.len(),
                profile.users()
            )));
        }
        (0..profile.users())
            .map(|n| {
                (0..profile.slots())
                    .map(|t| Self::new(profile.row(n, t).to_vec(), profile.silence(n, t), alpha[n]))
                    .collect()
            })
            .collect()
    }

    pub fn mass(&self) -> f64 {
        (1.0 - self.silence).max(0.0)
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.center.len()
            && p.iter().all(|v| *v >= -tol)
            && (p.iter().sum::<f64>() - self.mass()).abs() <= tol
            && distance(p, &self.center) <= self.radius + tol
    }

    /// Whether the ball lies strictly inside the simplex slice, i.e. every
    /// facet `p_i = 0` is farther than the radius within the slice's plane.
    pub fn ball_inside_slice(&self) -> bool {
        let m = self.center.len() as f64;
        if self.radius == 0.0 || m < 2.0 {
            return true;
        }
        let reach = self.radius * (1.0 - 1.0 / m).sqrt();
        self.center.iter().all(|p| *p > reach)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean projection onto `{p >= 0, sum p = mass}`.
pub fn project_simplex_slice(y: &[f64], mass: f64) -> Vec<f64> {
    if y.is_empty() {
        return vec![];
    }
    if mass <= 0.0 {
        return vec![0.0; y.len()];
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - mass) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Minimizes `<g, p>` over the region.
///
/// The minimizer is `P(center - tau g)` for the smallest `tau` at which it
/// reaches the ball's boundary (the distance is nondecreasing in `tau`), or
/// the limit point when the whole minimizing face of the slice is within
/// reach. `tau` is located by bisection to `tol` in distance. Items with an
/// infinite gradient are held at zero.
pub fn linear_min_over_ebc(g: &[f64], region: &EbcRegion, tol: f64) -> Vec<f64> {
    if region.radius <= 0.0 || region.center.len() < 2 {
        return region.center.clone();
    }
    let free: Vec<usize> = (0..g.len()).filter(|&m| g[m].is_finite()).collect();
    if free.is_empty() {
        return region.center.clone();
    }
    if free.len() == g.len() {
        return ball_min(g, &region.center, region.radius, region.mass(), tol, true);
    }
    // pinned coordinates use up part of the radius
    let pinned: f64 = (0..g.len())
        .filter(|m| !g[*m].is_finite())
        .map(|m| region.center[m] * region.center[m])
        .sum();
    let radius = (region.radius * region.radius - pinned).max(0.0).sqrt();
    let sub_g: Vec<f64> = free.iter().map(|&m| g[m]).collect();
    let sub_c: Vec<f64> = free.iter().map(|&m| region.center[m]).collect();
    let sub = ball_min(&sub_g, &sub_c, radius, region.mass(), tol, false);
    let mut out = vec![0.0; g.len()];
    for (k, &m) in free.iter().enumerate() {
        out[m] = sub[k];
    }
    out
}

/// `argmin <g, p>` over the simplex slice of total `mass` within `radius` of
/// `center`; `center` need not lie in the slice but the set must be nonempty.
fn ball_min(g: &[f64], center: &[f64], radius: f64, mass: f64, tol: f64, center_feasible: bool) -> Vec<f64> {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let spread = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
    let at = |tau: f64| -> Vec<f64> {
        let y: Vec<f64> = center.iter().zip(g).map(|(c, gv)| c - tau * (gv - mean)).collect();
        project_simplex_slice(&y, mass)
    };
    let flat = spread <= 1e-300 || spread <= 1e-14 * g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if flat || radius <= 0.0 {
        return if center_feasible { center.to_vec() } else { at(0.0) };
    }

    let mut lo = 0.0;
    let mut hi = radius / spread;
    let mut p_hi = at(hi);
    let mut d_hi = distance(&p_hi, center);
    for _ in 0..200 {
        if d_hi >= radius {
            break;
        }
        let next = at(2.0 * hi);
        let moved = distance(&next, &p_hi);
        lo = hi;
        hi *= 2.0;
        p_hi = next;
        d_hi = distance(&p_hi, center);
        if moved <= 1e-15 {
            // the projection has settled on the minimizing face
            return p_hi;
        }
    }
    if d_hi < radius {
        return p_hi;
    }
    let mut p_lo = if lo == 0.0 && center_feasible { center.to_vec() } else { at(lo) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p_mid = at(mid);
        let d = distance(&p_mid, center);
        if d <= radius {
            lo = mid;
            p_lo = p_mid;
            if radius - d <= tol {
                break;
            }
        } else {
            hi = mid;
        }
    }
    p_lo
}

/// Profile putting every user's active mass on the smallest item.
/// The flag is set when several items share the smallest size, in which
/// case the lowest index is chosen and the optimum is not unique.
pub fn fully_flexible_optimum(catalog: &ItemCatalog, profile: &DemandProfile) -> Result<(DemandProfile, bool)> {
    if catalog.len() != profile.items() {
        return Err(Error::Invalid("catalog and profile disagree on the item count".into()));
    }
    let smallest = catalog.smallest_items();
    let star = smallest[0];
    let (users, slots, items) = profile.probs().dims();
    let probs = Cube::from_fn(users, slots, items, |n, t, m| {
        if m == star {
            1.0 - profile.silence(n, t)
        } else {
            0.0
        }
    });
    let silence = (0..users)
        .flat_map(|n| (0..slots).map(move |t| (n, t)))
        .map(|(n, t)| profile.silence(n, t))
        .collect();
    Ok((DemandProfile::from_parts(probs, silence)?, smallest.len() > 1))
}

/// `sum_m (S(m) - x(m)) (p_orig(m) - p_new(m))` for one user and slot; a
/// positive value certifies that moving to `p_new` lowers that user's load.
pub fn shaping_gain_condition(sizes: &[f64], original: &[f64], candidate: &[f64], x_tilde: &[f64]) -> f64 {
    sizes
        .iter()
        .zip(x_tilde)
        .zip(original.iter().zip(candidate))
        .map(|((s, x), (a, b))| (s - x) * (a - b))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryResidual {
    pub user: usize,
    pub slot: usize,
    /// `| |center - p| - radius |`.
    pub residual: f64,
    pub hypothesis_holds: bool,
    /// Residual within tolerance, or not required because the hypothesis fails.
    pub pass: bool,
}

pub fn boundary_check(shaped: &DemandProfile, regions: &[Vec<EbcRegion>], tol: f64) -> Vec<BoundaryResidual> {
    let mut out = Vec::new();
    for (n, row) in regions.iter().enumerate() {
        for (t, region) in row.iter().enumerate() {
            let residual = if region.radius == 0.0 {
                0.0
            } else {
                (distance(shaped.row(n, t), &region.center) - region.radius).abs()
            };
            let hypothesis_holds = region.ball_inside_slice();
            out.push(BoundaryResidual {
                user: n,
                slot: t,
                residual,
                hypothesis_holds,
                pass: !hypothesis_holds || residual <= tol,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeOptions {
    /// Stop once `|f_k - f_{k-1}| <= tol * (1 + |f_k|)`.
    pub tol: f64,
    pub max_outer: usize,
    /// Accuracy of the per-slot linear subproblems.
    pub subproblem_tol: f64,
    pub inner: PgOptions,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 200,
            subproblem_tol: 1e-12,
            inner: PgOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapingIterate {
    pub profile: Cube,
    pub allocation: Cube,
    pub f0: f64,
    pub max_residual: f64,
    /// Fraction of the linearized profile step actually taken.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapingTrace {
    pub iterates: Vec<ShapingIterate>,
    pub converged: bool,
    pub boundary: Vec<BoundaryResidual>,
}

impl ShapingTrace {
    pub fn objective(&self) -> Vec<f64> {
        self.iterates.iter().map(|it| it.f0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapingResult {
    pub profile: DemandProfile,
    pub allocation: ProactiveAllocation,
    pub trace: ShapingTrace,
}

fn max_residual(profile: &DemandProfile, regions: &[Vec<EbcRegion>]) -> f64 {
    boundary_check(profile, regions, 0.0)
        .iter()
        .map(|b| b.residual)
        .fold(0.0, f64::max)
}

/// Linearized profile step: each `(n, t)` row minimizes the profile gradient
/// over its region.
fn profile_step(inst: &Instance, regions: &[Vec<EbcRegion>], grad: &Cube, tol: f64) -> Cube {
    let (users, slots, items) = inst.profile.probs().dims();
    let rows: Vec<Vec<f64>> = (0..users * slots)
        .into_par_iter()
        .map(|k| {
            let (n, t) = (k / slots, k % slots);
            linear_min_over_ebc(grad.row(n, t), &regions[n][t], tol)
        })
        .collect();
    let mut out = Cube::zeros(users, slots, items);
    for (k, row) in rows.into_iter().enumerate() {
        out.row_mut(k / slots, k % slots).copy_from_slice(&row);
    }
    out
}

/// Successive convex approximation of the joint profile/download problem.
///
/// Starting at the original profile and its optimal downloads, every
/// iteration minimizes the profile-linearized objective over the entropy
/// balls and re-optimizes the downloads for the new profile. When the full
/// profile step would raise the objective (the cost is not linear in the
/// joint profile of several users) the step is halved until it descends.
pub fn shape_demand(inst: &Instance, alpha: &[f64], cfg: &EvalConfig, opts: &ShapeOptions) -> Result<ShapingResult> {
    if !cfg.engine.is_exact() {
        return Err(Error::UnsupportedEngine {
            engine: cfg.engine.name(),
            reason: "demand shaping needs exact profile gradients".into(),
        });
    }
    let regions = EbcRegion::for_profile(&inst.profile, alpha)?;
    let (mut alloc, cost) = solve_proactive_from(inst, cfg, &opts.inner, None)?;
    let mut current = inst.clone();
    let mut f = cost.value();
    let mut iterates = vec![ShapingIterate {
        profile: current.profile.probs().clone(),
        allocation: alloc.cube().clone(),
        f0: f,
        max_residual: max_residual(&current.profile, &regions),
        step: 0.0,
    }];
    let any_room = regions.iter().flatten().any(|r| r.radius > 0.0);
    let mut converged = !any_room;

    let mut k = 0;
    while !converged && k < opts.max_outer {
        k += 1;
        let grad = eval::cost_gradient_p(&current, &alloc, cfg)?;
        let target = profile_step(&current, &regions, &grad, opts.subproblem_tol);
        let base = current.profile.probs();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let probs = if step == 1.0 {
                target.clone()
            } else {
                let mut c = base.clone();
                for (v, tv) in c.as_mut_slice().iter_mut().zip(target.as_slice()) {
                    *v += step * (tv - *v);
                }
                c
            };
            let candidate = current.with_profile(current.profile.with_probs(probs)?)?;
            let (x, c) = solve_proactive_from(&candidate, cfg, &opts.inner, Some(&alloc))?;
            if c.value() <= f + 1e-12 * (1.0 + f.abs()) {
                accepted = Some((candidate, x, c.value()));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, x, fk)) = accepted else {
            // no fraction of the linearized step descends: stationary to working precision
            converged = true;
            break;
        };
        if fk > f {
            return Err(Error::Ascent {
                iteration: k,
                previous: f,
                current: fk,
            });
        }
        if step < 1.0 {
            log::debug!("shaping iteration {k}: profile step damped to {step}");
        }
        let change = (f - fk).abs();
        current = candidate;
        alloc = x;
        f = fk;
        iterates.push(ShapingIterate {
            profile: current.profile.probs().clone(),
            allocation: alloc.cube().clone(),
            f0: f,
            max_residual: max_residual(&current.profile, &regions),
            step,
        });
        converged = change <= opts.tol * (1.0 + f.abs());
    }
    let boundary = boundary_check(&current.profile, &regions, 1e-3);
    Ok(ShapingResult {
        profile: current.profile,
        allocation: alloc,
        trace: ShapingTrace {
            iterates,
            converged,
            boundary,
        },
    })
}
