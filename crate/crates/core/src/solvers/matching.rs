//! Maximum-weight perfect matching with lexicographic tie-breaking, plus the
//! imputed tables the Optimization task is normalized against.

use serde::{Deserialize, Serialize};

use super::{DecisionValue, SolverError};
use crate::worldgen::optimization::PRIOR_MEAN;
use crate::worldgen::OptimizationWorld;

/// Sum of `table[row][perm[row]]` accumulated in row order.
pub fn matching_value(table: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .fold(0.0, |acc, (row, &col)| acc + table[row][col])
}

fn check_square(table: &[Vec<f64>]) -> Result<usize, SolverError> {
    let n = table.len();
    for (i, row) in table.iter().enumerate() {
        if row.len() != n {
            return Err(SolverError::NotSquare {
                rows: n,
                row: i,
                len: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
    }
    Ok(n)
}

/// Kuhn-Munkres with potentials on the submatrix `rows x cols`
/// (`rows.len() <= cols.len()`), maximizing. Returns the column position
/// chosen for each row position.
fn hungarian(table: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = rows.len();
    let m = cols.len();
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -table[rows[i - 1]][cols[j - 1]];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn sub_optimum(table: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    hungarian(table, rows, cols)
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, &j)| acc + table[rows[i]][cols[j]])
}

/// Maximum-total-weight perfect matching, `decision[row] = col`. Among optimal
/// matchings the lexicographically smallest is returned.
pub fn best_matching(table: &[Vec<f64>]) -> Result<DecisionValue<Vec<usize>>, SolverError> {
    let n = check_square(table)?;
    let all: Vec<usize> = (0..n).collect();
    let optimum = sub_optimum(table, &all, &all);
    let eps = 1e-9 * (1.0 + optimum.abs());

    let mut decision = Vec::with_capacity(n);
    let mut free: Vec<usize> = all.clone();
    let mut acc = 0.0;
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let mut chosen = None;
        for (pos, &col) in free.iter().enumerate() {
            let rest_cols: Vec<usize> = free.iter().copied().filter(|&c| c != col).collect();
            let bound = acc + table[row][col] + sub_optimum(table, &rest_rows, &rest_cols);
            if bound >= optimum - eps {
                chosen = Some(pos);
                break;
            }
        }
        let pos = chosen.expect("an optimal completion always exists");
        let col = free.remove(pos);
        acc += table[row][col];
        decision.push(col);
    }
    Ok(DecisionValue::evaluated(decision, |d| matching_value(table, d)))
}

/// Reference solver: enumerates every permutation in lexicographic order and
/// keeps a candidate only when it is strictly better.
pub fn best_matching_exhaustive(
    table: &[Vec<f64>],
) -> Result<DecisionValue<Vec<usize>>, SolverError> {
    let n = check_square(table)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_value = matching_value(table, &perm);
    while next_permutation(&mut perm) {
        let value = matching_value(table, &perm);
        if value > best_value {
            best_value = value;
            best.clone_from(&perm);
        }
    }
    Ok(DecisionValue::evaluated(best, |d| matching_value(table, d)))
}

/// Advances to the next permutation in lexicographic order; false at the end.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    if perm.len() < 2 {
        return false;
    }
    let mut i = perm.len() - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = perm.len() - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ObservedBy0,
    ObservedBy1,
    ObservedByBoth,
    Imputed,
}

/// A table with unobserved cells replaced by the prior mean, indexed
/// `[reviewer][paper]` like the world table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputedTable {
    pub values: Vec<Vec<f64>>,
    pub provenance: Vec<Vec<Provenance>>,
}

impl ImputedTable {
    /// Transposed copy, `[paper][reviewer]`, the orientation decisions use.
    pub fn by_paper(&self) -> Vec<Vec<f64>> {
        let k = self.values.len();
        (0..k)
            .map(|p| (0..k).map(|r| self.values[r][p]).collect())
            .collect()
    }

    pub fn count(&self, kind: Provenance) -> usize {
        self.provenance
            .iter()
            .flatten()
            .filter(|&&p| p == kind)
            .count()
    }
}

fn impute(world: &OptimizationWorld, sees: [bool; 2]) -> ImputedTable {
    let k = world.k;
    let mut values = vec![vec![PRIOR_MEAN; k]; k];
    let mut provenance = vec![vec![Provenance::Imputed; k]; k];
    for r in 0..k {
        for p in 0..k {
            let a = sees[0] && world.masks[0][r][p];
            let b = sees[1] && world.masks[1][r][p];
            provenance[r][p] = match (a, b) {
                (true, true) => Provenance::ObservedByBoth,
                (true, false) => Provenance::ObservedBy0,
                (false, true) => Provenance::ObservedBy1,
                (false, false) => continue,
            };
            values[r][p] = world.table[r][p];
        }
    }
    ImputedTable { values, provenance }
}

/// Cells either player observes keep their true value; the rest are 50.
pub fn impute_pooled(world: &OptimizationWorld) -> ImputedTable {
    impute(world, [true, true])
}

/// The table as one player knows it.
pub fn impute_solo(world: &OptimizationWorld, player: usize) -> ImputedTable {
    impute(world, [player == 0, player == 1])
}

/// Optimal matching under pooled knowledge, `decision[paper] = reviewer`.
pub fn pooled_best(world: &OptimizationWorld) -> DecisionValue<Vec<usize>> {
    best_matching(&impute_pooled(world).by_paper()).expect("world tables are square")
}

/// The matching `player` would pick alone, `decision[paper] = reviewer`.
pub fn solo_plan(world: &OptimizationWorld, player: usize) -> Vec<usize> {
    best_matching(&impute_solo(world, player).by_paper())
        .expect("world tables are square")
        .decision
}

/// Value of the solo plan measured on the pooled table.
pub fn solo_plan_value(world: &OptimizationWorld, player: usize) -> f64 {
    matching_value(&impute_pooled(world).by_paper(), &solo_plan(world, player))
}
