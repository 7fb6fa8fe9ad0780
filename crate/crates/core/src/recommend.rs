//! Ratings that make a user's demand profile equal a target profile while
//! staying as close as possible to the user's own ratings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Item ratings, every component in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RatingVector(Vec<f64>);

impl RatingVector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if let Some((m, x)) = v.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Invalid(format!("rating {m} = {x} outside [0, 1]")));
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for RatingVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RatingVector> for Vec<f64> {
    fn from(r: RatingVector) -> Self {
        r.0
    }
}

/// How ratings turn into request probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[non_exhaustive]
pub enum PreferenceMapping {
    /// `p(m) = (1 - q) v(m) / sum_j v(j)`.
    #[default]
    LinearFractional,
}

impl PreferenceMapping {
    /// Profile produced by ratings `v` for a user with silence probability `q`.
    pub fn apply(&self, v: &RatingVector, silence: f64) -> Result<Vec<f64>> {
        match self {
            PreferenceMapping::LinearFractional => {
                let active = 1.0 - silence;
                let total: f64 = v.as_slice().iter().sum();
                if active <= 0.0 {
                    return Ok(vec![0.0; v.as_slice().len()]);
                }
                if total <= 0.0 {
                    return Err(Error::Invalid(
                        "all-zero ratings do not define a profile for an active user".into(),
                    ));
                }
                Ok(v.as_slice().iter().map(|x| active * x / total).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingSolution {
    pub ratings: RatingVector,
    /// Multiplier with `ratings = scale * target / (1 - q)`; `None` when unconstrained.
    pub scale: Option<f64>,
    /// The `[0, 1]` box cut the unconstrained scale.
    pub clamped: bool,
    /// The user is always silent, so any ratings realize the target.
    pub unconstrained: bool,
}

/// Closest ratings to `original` whose mapped profile equals `target`.
///
/// Under the linear-fractional mapping the constraints hold exactly for
/// `v = s * pi` with `pi = target / (1 - q)` and `0 < s <= 1 / max pi`, so the
/// problem reduces to projecting `original` onto that segment.
pub fn solve_rating(
    target: &[f64],
    silence: f64,
    original: &RatingVector,
    mapping: PreferenceMapping,
) -> Result<RatingSolution> {
    let r = original.as_slice();
    if target.len() != r.len() {
        return Err(Error::Invalid(format!(
            "target has {} items but ratings have {}",
            target.len(),
            r.len()
        )));
    }
    if target.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Invalid("target profile must be finite and nonnegative".into()));
    }
    let active = 1.0 - silence;
    match mapping {
        PreferenceMapping::LinearFractional => {
            if active <= 0.0 || target.iter().all(|p| *p == 0.0) {
                return Ok(RatingSolution {
                    ratings: original.clone(),
                    scale: None,
                    clamped: false,
                    unconstrained: true,
                });
            }
            let pi: Vec<f64> = target.iter().map(|p| p / active).collect();
            let top = pi.iter().fold(0.0f64, |a, b| a.max(*b));
            let dot: f64 = pi.iter().zip(r).map(|(a, b)| a * b).sum();
            let norm2: f64 = pi.iter().map(|a| a * a).sum();
            let unclamped = dot / norm2;
            let s_max = 1.0 / top;
            let (s, clamped) = if unclamped > s_max {
                (s_max, true)
            } else if unclamped <= 0.0 {
                // the infimum is not attained; take the smallest representable scale
                (f64::MIN_POSITIVE, true)
            } else {
                (unclamped, false)
            };
            let v: Vec<f64> = pi.iter().map(|p| (s * p).min(1.0)).collect();
            Ok(RatingSolution {
                ratings: RatingVector::new(v)?,
                scale: Some(s),
                clamped,
                unconstrained: false,
            })
        }
    }
}

/// Applies the mapping; same as [`PreferenceMapping::apply`].
pub fn verify_mapping(v: &RatingVector, mapping: PreferenceMapping, silence: f64) -> Result<Vec<f64>> {
    mapping.apply(v, silence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rv(v: &[f64]) -> RatingVector {
        RatingVector::new(v.to_vec()).unwrap()
    }

    /// Alternating projections between the line through `pi` and the box,
    /// the direct way to find the closest feasible rating.
    fn dykstra(pi: &[f64], r: &[f64]) -> Vec<f64> {
        let norm2: f64 = pi.iter().map(|a| a * a).sum();
        let mut x = r.to_vec();
        let mut p = vec![0.0; r.len()];
        let mut q = vec![0.0; r.len()];
        for _ in 0..5000 {
            let y0: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
            let s = y0.iter().zip(pi).map(|(a, b)| a * b).sum::<f64>() / norm2;
            let y: Vec<f64> = pi.iter().map(|a| s * a).collect();
            p = y0.iter().zip(&y).map(|(a, b)| a - b).collect();
            let z0: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
            x = z0.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            q = z0.iter().zip(&x).map(|(a, b)| a - b).collect();
        }
        x
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn reproduces_published_rows() {
        let s = solve_rating(
            &[0.8772, 0.1222, 0.0006],
            0.0,
            &rv(&[0.8, 0.1, 0.1]),
            PreferenceMapping::LinearFractional,
        )
        .unwrap();
        let expected = [0.7985, 0.1112, 0.0005];
        for (a, b) in s.ratings.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 5e-4, "{a} vs {b}");
        }
        assert!((s.scale.unwrap() - 0.9103).abs() < 1e-3);
    }

    #[test]
    fn proportional_ratings_are_kept() {
        let r = rv(&[0.2, 0.4, 0.1]);
        let target = [0.2 / 0.7 * 0.5, 0.4 / 0.7 * 0.5, 0.1 / 0.7 * 0.5];
        let s = solve_rating(&target, 0.5, &r, PreferenceMapping::LinearFractional).unwrap();
        assert!(dist(s.ratings.as_slice(), r.as_slice()) < 1e-12);
        assert!(!s.clamped);
    }

    #[test]
    fn clamp_puts_largest_rating_at_one() {
        let s = solve_rating(&[0.5, 0.5], 0.0, &rv(&[1.0, 1.0]), PreferenceMapping::LinearFractional).unwrap();
        assert_eq!(s.ratings.as_slice(), &[1.0, 1.0]);
        let s = solve_rating(&[0.6, 0.4], 0.0, &rv(&[1.0, 1.0]), PreferenceMapping::LinearFractional).unwrap();
        assert!(s.clamped);
        assert_eq!(s.ratings.as_slice()[0], 1.0);
    }

    #[test]
    fn silent_user_keeps_ratings() {
        let r = rv(&[0.3, 0.9]);
        let s = solve_rating(&[0.0, 0.0], 1.0, &r, PreferenceMapping::LinearFractional).unwrap();
        assert!(s.unconstrained);
        assert_eq!(s.ratings, r);
    }

    #[test]
    fn mapping_examples() {
        let m = PreferenceMapping::LinearFractional;
        assert_eq!(m.apply(&rv(&[0.5, 0.5]), 0.0).unwrap(), vec![0.5, 0.5]);
        let a = m.apply(&rv(&[0.2, 0.6]), 0.3).unwrap();
        let b = m.apply(&rv(&[0.1, 0.3]), 0.3).unwrap();
        assert!(dist(&a, &b) < 1e-15);
        assert!(m.apply(&rv(&[0.0, 0.0]), 0.3).is_err());
        assert!(RatingVector::new(vec![1.2]).is_err());
    }

    #[test]
    fn matches_direct_solver_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let m = rng.gen_range(2..6);
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = w.iter().sum();
            let q = rng.gen_range(0.0..0.9);
            let target: Vec<f64> = w.iter().map(|v| (1.0 - q) * v / total).collect();
            let r = rv(&(0..m).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<_>>());
            let s = solve_rating(&target, q, &r, PreferenceMapping::LinearFractional).unwrap();
            let v = s.ratings.as_slice();
            assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
            let best = dist(v, r.as_slice());
            let pi: Vec<f64> = w.iter().map(|x| x / total).collect();
            let top = pi.iter().fold(0.0f64, |a, b| a.max(*b));
            for _ in 0..100 {
                let s = rng.gen_range(1e-9..=1.0 / top);
                let cand: Vec<f64> = pi.iter().map(|p| s * p).collect();
                assert!(best <= dist(&cand, r.as_slice()) + 1e-12);
            }
            let direct = dykstra(&pi, r.as_slice());
            assert!(best <= dist(&direct, r.as_slice()) + 1e-6);
            let back = verify_mapping(&s.ratings, PreferenceMapping::LinearFractional, q).unwrap();
            assert!(dist(&back, &target) < 1e-9);
        }
    }
}
