//! Cyclostationary per-user demand profiles.

use std::fmt;

use serde::Serialize;

use crate::cube::Cube;
use crate::error::{Error, Result};
use crate::stream;

/// Additive tolerance on `q = 1 - sum(p)`.
pub const SUM_TOLERANCE: f64 = 1e-12;
/// Violations up to this size are renormalized (with a warning) instead of rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite { value: f64 },
    Negative { value: f64 },
    SilenceOutOfRange { silence: f64 },
    SumMismatch { total: f64 },
    ShapeMismatch { expected: usize, found: usize },
}

/// One violated profile invariant with its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub user: usize,
    pub slot: usize,
    pub item: Option<usize>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl Violation {
    /// Size of the violation, used to decide between renormalizing and rejecting.
    fn magnitude(&self) -> f64 {
        match self.kind {
            ViolationKind::NonFinite { .. } | ViolationKind::ShapeMismatch { .. } => f64::INFINITY,
            ViolationKind::Negative { value } => -value,
            ViolationKind::SilenceOutOfRange { silence } => {
                if silence < 0.0 {
                    -silence
                } else {
                    silence - 1.0
                }
            }
            ViolationKind::SumMismatch { total } => (total - 1.0).abs(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "user {} slot {}", self.user, self.slot)?;
        if let Some(m) = self.item {
            write!(f, " item {m}")?;
        }
        match &self.kind {
            ViolationKind::NonFinite { value } => write!(f, ": non-finite probability {value}"),
            ViolationKind::Negative { value } => write!(f, ": negative probability {value}"),
            ViolationKind::SilenceOutOfRange { silence } => {
                write!(f, ": silence probability {silence} outside [0, 1]")
            }
            ViolationKind::SumMismatch { total } => {
                write!(f, ": probabilities plus silence sum to {total}, not 1")
            }
            ViolationKind::ShapeMismatch { expected, found } => {
                write!(f, ": expected {expected} entries, found {found}")
            }
        }
    }
}

/// Checks every profile invariant and returns all violations found.
///
/// `silence` is indexed `user * slots + slot`. An empty result means valid.
pub fn validate_profile(probs: &Cube, silence: &[f64]) -> Vec<Violation> {
    let (users, slots, _) = probs.dims();
    let mut out = Vec::new();
    if silence.len() != users * slots {
        out.push(Violation {
            user: 0,
            slot: 0,
            item: None,
            kind: ViolationKind::ShapeMismatch {
                expected: users * slots,
                found: silence.len(),
            },
        });
        return out;
    }
    for n in 0..users {
        for t in 0..slots {
            let row = probs.row(n, t);
            let mut finite = true;
            for (m, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    finite = false;
                    out.push(Violation {
                        user: n,
                        slot: t,
                        item: Some(m),
                        kind: ViolationKind::NonFinite { value: p },
                    });
                } else if p < 0.0 {
                    out.push(Violation {
                        user: n,
                        slot: t,
                        item: Some(m),
                        kind: ViolationKind::Negative { value: p },
                    });
                }
            }
            let q = silence[n * slots + t];
            if !q.is_finite() {
                out.push(Violation {
                    user: n,
                    slot: t,
                    item: None,
                    kind: ViolationKind::NonFinite { value: q },
                });
                continue;
            }
            if !(0.0..=1.0).contains(&q) {
                out.push(Violation {
                    user: n,
                    slot: t,
                    item: None,
                    kind: ViolationKind::SilenceOutOfRange { silence: q },
                });
            }
            if finite {
                let total = row.iter().sum::<f64>() + q;
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    out.push(Violation {
                        user: n,
                        slot: t,
                        item: None,
                        kind: ViolationKind::SumMismatch { total },
                    });
                }
            }
        }
    }
    out
}

/// Request probabilities `p[n][t][m]` and silence probabilities `q[n][t]` over
/// one cycle. Slot indices beyond the cycle wrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandProfile {
    probs: Cube,
    silence: Vec<f64>,
}

impl DemandProfile {
    /// Builds a profile from probabilities and explicit silence probabilities.
    ///
    /// Rows off by at most [`RENORMALIZE_TOLERANCE`] are rescaled to sum to
    /// one; anything larger is rejected with the full violation list.
    pub fn from_parts(mut probs: Cube, mut silence: Vec<f64>) -> Result<Self> {
        let violations = validate_profile(&probs, &silence);
        if violations.iter().any(|v| v.magnitude() > RENORMALIZE_TOLERANCE) {
            return Err(Error::Profile(violations));
        }
        if !violations.is_empty() {
            log::warn!(
                "renormalizing {} profile entries within {RENORMALIZE_TOLERANCE:e} of validity",
                violations.len()
            );
            let slots = probs.slots();
            for v in &violations {
                let row = probs.row_mut(v.user, v.slot);
                for p in row.iter_mut() {
                    *p = p.max(0.0);
                }
                let q = &mut silence[v.user * slots + v.slot];
                *q = q.clamp(0.0, 1.0);
                let total = row.iter().sum::<f64>() + *q;
                row.iter_mut().for_each(|p| *p /= total);
                *q /= total;
            }
        }
        // Store q exactly as 1 - sum(p) so downstream code can rely on the identity.
        let slots = probs.slots();
        for n in 0..probs.users() {
            for t in 0..slots {
                let sum: f64 = probs.row(n, t).iter().sum();
                silence[n * slots + t] = (1.0 - sum).clamp(0.0, 1.0);
            }
        }
        Ok(Self { probs, silence })
    }

    /// Builds a profile whose silence probabilities are `1 - sum(p)`.
    pub fn from_probs(probs: Cube) -> Result<Self> {
        let slots = probs.slots();
        let silence = (0..probs.users())
            .flat_map(|n| (0..slots).map(move |t| (n, t)))
            .map(|(n, t)| 1.0 - probs.row(n, t).iter().sum::<f64>())
            .collect();
        Self::from_parts(probs, silence)
    }

    /// Same per-slot vectors for every user: `rows[t]` is the slot-`t` vector.
    pub fn homogeneous(users: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let slots = rows.len();
        let items = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != items) {
            return Err(Error::Invalid("slot rows must have equal item counts".into()));
        }
        Self::from_probs(Cube::from_fn(users, slots, items, |_, t, m| rows[t][m]))
    }

    pub fn users(&self) -> usize {
        self.probs.users()
    }

    pub fn slots(&self) -> usize {
        self.probs.slots()
    }

    pub fn items(&self) -> usize {
        self.probs.items()
    }

    pub fn probs(&self) -> &Cube {
        &self.probs
    }

    pub fn slot(&self, t: isize) -> usize {
        self.probs.slot(t)
    }

    pub fn row(&self, n: usize, t: usize) -> &[f64] {
        self.probs.row(n, t)
    }

    pub fn prob(&self, n: usize, t: usize, m: usize) -> f64 {
        self.probs.get(n, t, m)
    }

    pub fn silence(&self, n: usize, t: usize) -> f64 {
        self.silence[n * self.slots() + t]
    }

    /// Conditional profile of user `n` at slot `t`; `None` for an always-silent slot.
    pub fn conditional(&self, n: usize, t: usize) -> Option<ConditionalProfile> {
        ConditionalProfile::from_profile(self.row(n, t), self.silence(n, t))
    }

    /// Copy with the `(n, t)` request vector replaced, keeping the same silence.
    pub fn with_row(&self, n: usize, t: usize, row: &[f64]) -> Result<Self> {
        let mut probs = self.probs.clone();
        probs.row_mut(n, t).copy_from_slice(row);
        let mut silence = self.silence.clone();
        let slots = self.slots();
        silence[n * slots + t] = 1.0 - row.iter().sum::<f64>();
        Self::from_parts(probs, silence)
    }

    /// Copy with every request vector replaced; silence is recomputed.
    pub fn with_probs(&self, probs: Cube) -> Result<Self> {
        if probs.dims() != self.probs.dims() {
            return Err(Error::Invalid("replacement profile has different dimensions".into()));
        }
        Self::from_probs(probs)
    }
}

/// Per-slot Zipf request vector: `p(m) = activity * G / m^power`.
pub fn zipf_profile(items: usize, power: f64, activity: f64) -> Result<Vec<f64>> {
    if items == 0 {
        return Err(Error::Invalid("zipf profile needs at least one item".into()));
    }
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Invalid(format!("zipf power must be positive, got {power}")));
    }
    if !(0.0..=1.0).contains(&activity) {
        return Err(Error::Invalid(format!(
            "activity must lie in [0, 1], got {activity}"
        )));
    }
    let weights: Vec<f64> = (1..=items).map(|m| (m as f64).powf(-power)).collect();
    let norm: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| activity * w / norm).collect())
}

/// Request distribution given that the user requests something: `p / (1 - q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalProfile(Vec<f64>);

impl ConditionalProfile {
    /// `None` when the user is always silent (`q = 1`).
    pub fn from_profile(probs: &[f64], silence: f64) -> Option<Self> {
        let active = 1.0 - silence;
        if active <= 0.0 {
            return None;
        }
        Some(Self(probs.iter().map(|p| p / active).collect()))
    }

    /// Wraps an already-normalized distribution.
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        let total: f64 = pi.iter().sum();
        if pi.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "conditional profile must be a distribution (sum {total})"
            )));
        }
        Ok(Self(pi))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(pi: &ConditionalProfile) -> f64 {
    -pi.0
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// One slot's requests: `choice[n] = 0` for silence, `m + 1` for item `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestOutcome {
    pub slot: usize,
    pub choice: Vec<usize>,
}

impl RequestOutcome {
    /// Requested item of user `n`, if any.
    pub fn item(&self, n: usize) -> Option<usize> {
        self.choice[n].checked_sub(1)
    }

    /// Non-proactive load `sum_n S(m_n)`.
    pub fn load(&self, sizes: &[f64]) -> f64 {
        (0..self.choice.len())
            .filter_map(|n| self.item(n))
            .map(|m| sizes[m])
            .sum()
    }
}

/// Maps a uniform draw to a choice: items first in order, silence last.
pub(crate) fn choose(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (m, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return m + 1;
        }
    }
    0
}

/// Draws every user's request at `slot` for sample index `sample`.
pub fn sample_outcome(profile: &DemandProfile, slot: usize, seed: u64, sample: u64) -> RequestOutcome {
    let t = profile.slot(slot as isize);
    let choice = (0..profile.users())
        .map(|n| choose(profile.row(n, t), stream::uniform_at(seed, t, n, sample)))
        .collect();
    RequestOutcome { slot: t, choice }
}
