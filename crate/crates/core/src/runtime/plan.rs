use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which key positions each query position may attend to. Always a subset
/// of the causal relation and always containing the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityPlan {
    n: usize,
    allowed: Vec<bool>,
}

/// Run-length encoded rows, `[value, run]` pairs over keys `0..=q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDump {
    pub len: usize,
    pub rows: Vec<Vec<(bool, usize)>>,
}

impl VisibilityPlan {
    pub fn full_causal(n: usize) -> Self {
        let mut allowed = vec![false; n * n];
        for q in 0..n {
            allowed[q * n..q * n + q + 1].fill(true);
        }
        VisibilityPlan { n, allowed }
    }

    /// Builds a plan row by row from `rule(q, k)` for `k <= q`.
    pub fn from_fn(n: usize, mut rule: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut allowed = vec![false; n * n];
        for q in 0..n {
            for k in 0..=q {
                allowed[q * n + k] = rule(q, k);
            }
        }
        let plan = VisibilityPlan { n, allowed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_matrix(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut allowed = Vec::with_capacity(n * n);
        for (q, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::InvalidPlan(format!(
                    "row {q} has {} entries, expected {n}",
                    r.len()
                )));
            }
            allowed.extend_from_slice(r);
        }
        let plan = VisibilityPlan { n, allowed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.allowed.len() != self.n * self.n {
            return Err(Error::InvalidPlan("matrix is not square".into()));
        }
        for q in 0..self.n {
            let row = self.row(q);
            if !row[q] {
                return Err(Error::InvalidPlan(format!("position {q} cannot see itself")));
            }
            if let Some(k) = row[q + 1..].iter().position(|&b| b) {
                return Err(Error::InvalidPlan(format!(
                    "position {q} sees future position {}",
                    q + 1 + k
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn allowed(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.n + k]
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.allowed[q * self.n..(q + 1) * self.n]
    }

    pub fn is_full_causal(&self) -> bool {
        (0..self.n).all(|q| self.row(q)[..=q].iter().all(|&b| b))
    }

    pub fn to_matrix(&self) -> Vec<Vec<bool>> {
        (0..self.n).map(|q| self.row(q).to_vec()).collect()
    }

    /// Appends `m` positions that see what the last position sees plus
    /// every appended position up to themselves.
    pub fn extend(&self, m: usize) -> Self {
        if m == 0 {
            return self.clone();
        }
        let n2 = self.n + m;
        let mut allowed = vec![false; n2 * n2];
        for q in 0..self.n {
            allowed[q * n2..q * n2 + self.n].copy_from_slice(self.row(q));
        }
        for q in self.n..n2 {
            if self.n > 0 {
                allowed[q * n2..q * n2 + self.n].copy_from_slice(self.row(self.n - 1));
            }
            allowed[q * n2 + self.n..q * n2 + q + 1].fill(true);
        }
        VisibilityPlan { n: n2, allowed }
    }

    /// Union of both plans (same length).
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(VisibilityPlan {
            n: self.n,
            allowed: self
                .allowed
                .iter()
                .zip(&other.allowed)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    pub fn dump(&self) -> PlanDump {
        let rows = (0..self.n)
            .map(|q| {
                let mut runs: Vec<(bool, usize)> = Vec::new();
                for &b in &self.row(q)[..=q] {
                    match runs.last_mut() {
                        Some((v, c)) if *v == b => *c += 1,
                        _ => runs.push((b, 1)),
                    }
                }
                runs
            })
            .collect();
        PlanDump { len: self.n, rows }
    }

    pub fn from_dump(dump: &PlanDump) -> Result<Self> {
        let n = dump.len;
        let mut rows = Vec::with_capacity(n);
        for runs in &dump.rows {
            let mut r: Vec<bool> = runs.iter().flat_map(|&(v, c)| std::iter::repeat_n(v, c)).collect();
            r.resize(n, false);
            rows.push(r);
        }
        Self::from_matrix(&rows)
    }
}
