//! Small deterministic solvers: golden-section search on an interval and
//! projected gradient descent on a box.

use serde::{Deserialize, Serialize};

/// Minimizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// `f` may return `+inf` outside its domain as long as the extended function
/// stays unimodal. Returns the best of the final bracket's points and the ends.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for end in [lo, hi] {
        let fe = f(end);
        if fe < best.1 {
            best = (end, fe);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgOptions {
    /// Stop once `max |x - P(x - grad)| <= tol * (1 + |f|)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial trial step; estimated from a curvature probe when absent.
    #[serde(default)]
    pub step: Option<f64>,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 20_000,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

/// Objective evaluation: `Ok(None)` marks a point outside the domain.
pub type Evaluation = Option<(f64, Vec<f64>)>;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn pg_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xv, gv), (lo, hi))| (xv - (xv - gv).clamp(*lo, *hi)).abs())
        .fold(0.0, f64::max)
}

/// Projected gradient descent on `lower <= x <= upper`.
///
/// Each iteration tries a Barzilai-Borwein step (the first one uses
/// `opts.step` or a probed inverse curvature) and halves it until the Armijo
/// condition holds, so accepted objective values never increase. The start
/// point must be inside the domain.
pub fn projected_gradient<F, E>(
    mut eval: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &PgOptions,
) -> Result<PgResult, E>
where
    F: FnMut(&[f64]) -> Result<Evaluation, E>,
{
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let Some((mut f, mut g)) = eval(&x)? else {
        return Ok(PgResult {
            value: f64::INFINITY,
            pg_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            history: vec![],
            x,
        });
    };
    let mut history = vec![f];
    let mut step = match opts.step {
        Some(s) => s,
        None => probe_step(&mut eval, &x, &g, lower, upper)?,
    };
    let mut iterations = 0;
    loop {
        let norm = pg_norm(&x, &g, lower, upper);
        if norm <= opts.tol * (1.0 + f.abs()) {
            return Ok(PgResult {
                x,
                value: f,
                pg_norm: norm,
                iterations,
                converged: true,
                history,
            });
        }
        if iterations >= opts.max_iters {
            return Ok(PgResult {
                x,
                value: f,
                pg_norm: norm,
                iterations,
                converged: false,
                history,
            });
        }
        iterations += 1;

        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xv, gv)| xv - trial_step * gv).collect();
            project(&mut trial, lower, upper);
            let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gv, (a, b))| gv * (a - b)).sum();
            if decrease == 0.0 {
                break;
            }
            if let Some((ft, gt)) = eval(&trial)? {
                if ft <= f + ARMIJO * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            trial_step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            // No representable decrease left along the projected path.
            return Ok(PgResult {
                x,
                value: f,
                pg_norm: norm,
                iterations,
                converged: false,
                history,
            });
        };

        // Barzilai-Borwein trial step for the next iteration.
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..x.len() {
            let s = trial[i] - x[i];
            let y = gt[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (trial_step * 2.0).min(1e12) };

        x = trial;
        f = ft;
        g = gt;
        history.push(f);
    }
}

/// Inverse of a finite-difference curvature estimate along the gradient.
fn probe_step<F, E>(eval: &mut F, x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64, E>
where
    F: FnMut(&[f64]) -> Result<Evaluation, E>,
{
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm == 0.0 {
        return Ok(1.0);
    }
    let mut h = 1e-4 / gnorm;
    for _ in 0..30 {
        let mut probe: Vec<f64> = x.iter().zip(g).map(|(xv, gv)| xv - h * gv).collect();
        project(&mut probe, lower, upper);
        let (ss, _) = probe.iter().zip(x).fold((0.0, 0.0), |(a, b), (p, xv)| (a + (p - xv) * (p - xv), b));
        if ss == 0.0 {
            return Ok(1.0);
        }
        if let Some((_, gp)) = eval(&probe)? {
            let sy: f64 = probe
                .iter()
                .zip(x)
                .zip(gp.iter().zip(g))
                .map(|((p, xv), (a, b))| (p - xv) * (a - b))
                .sum();
            return Ok(if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1.0 });
        }
        h *= 0.1;
    }
    Ok(1.0)
}
