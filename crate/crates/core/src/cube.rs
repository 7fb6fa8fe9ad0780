use serde::{Deserialize, Serialize};

/// Dense user × slot × item array of reals, stored row-major.
///
/// Used for request probabilities, proactive allocations and gradients. The
/// slot axis always holds exactly one cycle; callers wrap slot indices with
/// [`Cube::slot`] before indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    users: usize,
    slots: usize,
    items: usize,
    data: Vec<f64>,
}

impl Cube {
    pub fn zeros(users: usize, slots: usize, items: usize) -> Self {
        Self {
            users,
            slots,
            items,
            data: vec![0.0; users * slots * items],
        }
    }

    pub fn from_vec(users: usize, slots: usize, items: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == users * slots * items).then_some(Self {
            users,
            slots,
            items,
            data,
        })
    }

    pub fn from_fn(
        users: usize,
        slots: usize,
        items: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(users * slots * items);
        for n in 0..users {
            for t in 0..slots {
                for m in 0..items {
                    data.push(f(n, t, m));
                }
            }
        }
        Self {
            users,
            slots,
            items,
            data,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.users, self.slots, self.items)
    }

    /// Reduces any (possibly negative) slot index into `0..slots`.
    pub fn slot(&self, t: isize) -> usize {
        t.rem_euclid(self.slots as isize) as usize
    }

    #[inline]
    fn offset(&self, n: usize, t: usize, m: usize) -> usize {
        debug_assert!(n < self.users && t < self.slots && m < self.items);
        (n * self.slots + t) * self.items + m
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize, m: usize) -> f64 {
        self.data[self.offset(n, t, m)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, t: usize, m: usize, value: f64) {
        let i = self.offset(n, t, m);
        self.data[i] = value;
    }

    /// The item vector for user `n` at slot `t`.
    pub fn row(&self, n: usize, t: usize) -> &[f64] {
        let start = self.offset(n, t, 0);
        &self.data[start..start + self.items]
    }

    pub fn row_mut(&mut self, n: usize, t: usize) -> &mut [f64] {
        let start = self.offset(n, t, 0);
        let items = self.items;
        &mut self.data[start..start + items]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Total over users and items for one slot.
    pub fn slot_total(&self, t: usize) -> f64 {
        (0..self.users).map(|n| self.row(n, t).iter().sum::<f64>()).sum()
    }

    pub fn max_abs_diff(&self, other: &Cube) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_wraps_in_both_directions() {
        let c = Cube::zeros(1, 4, 1);
        assert_eq!(c.slot(-1), 3);
        assert_eq!(c.slot(4), 0);
        assert_eq!(c.slot(9), 1);
    }

    #[test]
    fn rows_are_contiguous_items() {
        let c = Cube::from_fn(2, 3, 2, |n, t, m| (100 * n + 10 * t + m) as f64);
        assert_eq!(c.row(1, 2), &[120.0, 121.0]);
        assert_eq!(c.get(0, 1, 1), 11.0);
        assert_eq!(c.slot_total(0), 0.0 + 1.0 + 100.0 + 101.0);
    }
}
