//! Recovery metrics: R-squared of the ground-truth concept values regressed
//! on the recovered outputs, mean correlation coefficient (MCC) under the
//! best atom matching, and a per-atom affine alignment check.
//!
//! R-squared regresses truth on recovered (not the reverse): it measures
//! whether the learned representation linearly contains the true concept
//! values, which is exactly what identifiability up to linear
//! reparametrization promises. MCC uses absolute correlations because the
//! admissible per-atom scalings may be negative.

use crate::concepts::EnvironmentSystem;
use crate::error::{ForgeError, Result};
use crate::linalg::{self, to_na};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::Serialize;

const VARIANCE_TOL: f64 = 1e-12;
const EXHAUSTIVE_MAX: usize = 8;
const ASSIGNMENT_MAX: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub r2: f64,
    pub mcc: f64,
    /// permutation[j] = recovered column matched to truth column j.
    pub permutation: Vec<usize>,
    /// Signed correlation of each matched pair, indexed by truth column.
    pub per_atom_corr: Vec<f64>,
    pub affine_residual: f64,
    /// Truth columns with (numerically) zero variance, excluded from r2.
    pub skipped_truth_columns: Vec<usize>,
}

/// Ground-truth evaluation map: column i of the result is <a_i, z> per row.
pub fn true_valuations(system: &EnvironmentSystem, z: ArrayView2<f64>) -> Array2<f64> {
    z.dot(&system.atoms().vectors().t())
}

fn column_stats(x: ArrayView1<f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn pearson(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Option<f64> {
    let (mx, vx) = column_stats(x);
    let (my, vy) = column_stats(y);
    if vx < VARIANCE_TOL || vy < VARIANCE_TOL {
        return None;
    }
    let n = x.len() as f64;
    let cov = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n;
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

fn r_squared_detail(
    recovered: ArrayView2<f64>,
    truth: ArrayView2<f64>,
) -> Result<(f64, Vec<usize>)> {
    let rows = recovered.nrows();
    let k = recovered.ncols();
    if truth.nrows() != rows {
        return Err(ForgeError::DimensionMismatch(format!(
            "{} recovered rows vs {} truth rows",
            rows,
            truth.nrows()
        )));
    }
    if rows <= k + 1 {
        return Err(ForgeError::DimensionMismatch(format!(
            "need more than {} rows to regress on {k} columns",
            k + 1
        )));
    }
    // Design matrix [recovered | 1]; one joint solve covers every column.
    let mut design = Array2::ones((rows, k + 1));
    design.slice_mut(ndarray::s![.., ..k]).assign(&recovered);
    let d = to_na(&design);
    let b = to_na(&truth);
    let beta = linalg::lstsq(&d, &b, linalg::RANK_REL_TOL);
    let resid = &b - &d * beta;

    let mut skipped = Vec::new();
    let mut total = 0.0;
    let mut used = 0usize;
    for j in 0..truth.ncols() {
        let (_, sst_var) = column_stats(truth.column(j));
        if sst_var < VARIANCE_TOL {
            skipped.push(j);
            continue;
        }
        let ssr: f64 = (0..rows).map(|r| resid[(r, j)] * resid[(r, j)]).sum();
        let sst = sst_var * rows as f64;
        total += 1.0 - ssr / sst;
        used += 1;
    }
    if used == 0 {
        return Err(ForgeError::DegenerateTruth(
            "every truth column has zero variance".into(),
        ));
    }
    if !skipped.is_empty() {
        log::warn!("r_squared skipped constant truth columns {skipped:?}");
    }
    Ok((total / used as f64, skipped))
}

/// Mean over truth columns of the coefficient of determination from
/// regressing that column on [recovered | 1]. Constant truth columns are
/// skipped; if all are constant the truth is degenerate.
pub fn r_squared(recovered: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    r_squared_detail(recovered, truth).map(|(r2, _)| r2)
}

/// Lexicographically-first permutation maximizing the matched sum, by
/// depth-first search in lexicographic order (strict improvement only).
fn best_assignment_exhaustive(c: &Array2<f64>) -> (f64, Vec<usize>) {
    let n = c.nrows();
    let mut best = f64::NEG_INFINITY;
    let mut best_perm = vec![0usize; n];
    let mut current = vec![0usize; n];
    let mut used = vec![false; n];
    fn recurse(
        c: &Array2<f64>,
        j: usize,
        sum: f64,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut f64,
        best_perm: &mut Vec<usize>,
    ) {
        let n = c.nrows();
        if j == n {
            if sum > *best {
                *best = sum;
                best_perm.copy_from_slice(current);
            }
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                current[j] = i;
                recurse(c, j + 1, sum + c[[i, j]], current, used, best, best_perm);
                used[i] = false;
            }
        }
    }
    recurse(c, 0, 0.0, &mut current, &mut used, &mut best, &mut best_perm);
    (best, best_perm)
}

/// Bitmask dynamic program over used recovered columns; ties resolve to the
/// lexicographically-first permutation because reconstruction scans recovered
/// indices in ascending order against exactly the values the table stored.
fn best_assignment_dp(c: &Array2<f64>) -> (f64, Vec<usize>) {
    let n = c.nrows();
    let full = (1usize << n) - 1;
    // g[mask] = best sum for truth columns popcount(mask).. using recovered
    // columns outside mask.
    let mut g = vec![f64::NEG_INFINITY; full + 1];
    g[full] = 0.0;
    for mask in (0..full).rev() {
        let j = mask.count_ones() as usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                let v = c[[i, j]] + g[mask | (1 << i)];
                if v > best {
                    best = v;
                }
            }
        }
        g[mask] = best;
    }
    let mut perm = Vec::with_capacity(n);
    let mut mask = 0usize;
    for j in 0..n {
        for i in 0..n {
            if mask & (1 << i) == 0 && g[mask] == c[[i, j]] + g[mask | (1 << i)] {
                perm.push(i);
                mask |= 1 << i;
                break;
            }
        }
        debug_assert_eq!(perm.len(), j + 1);
    }
    (g[0], perm)
}

fn abs_correlation_matrix(
    recovered: ArrayView2<f64>,
    truth: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let n = truth.ncols();
    let mut signed = Array2::zeros((recovered.ncols(), n));
    for i in 0..recovered.ncols() {
        for j in 0..n {
            signed[[i, j]] = pearson(recovered.column(i), truth.column(j)).unwrap_or(0.0);
        }
    }
    (signed.mapv(f64::abs), signed)
}

/// Mean correlation coefficient: Pearson correlations between every
/// recovered/truth column pair, matched by the permutation maximizing the
/// sum of absolute correlations. Returns the mean matched |correlation| and
/// the permutation (entry j = recovered column for truth column j).
pub fn mcc(recovered: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<(f64, Vec<usize>)> {
    let n = truth.ncols();
    if recovered.ncols() != n {
        return Err(ForgeError::DimensionMismatch(format!(
            "{} recovered columns vs {n} truth columns",
            recovered.ncols()
        )));
    }
    if recovered.nrows() != truth.nrows() || recovered.nrows() <= 2 {
        return Err(ForgeError::DimensionMismatch(
            "correlation needs matching row counts of at least 3".into(),
        ));
    }
    if n > ASSIGNMENT_MAX {
        return Err(ForgeError::Config(format!(
            "matching supports at most {ASSIGNMENT_MAX} atoms, got {n}"
        )));
    }
    let (abs_c, _) = abs_correlation_matrix(recovered, truth);
    let (total, perm) = if n <= EXHAUSTIVE_MAX {
        best_assignment_exhaustive(&abs_c)
    } else {
        best_assignment_dp(&abs_c)
    };
    Ok((total / n as f64, perm))
}

/// Per-atom affine alignment: for each matched pair, least-squares fit of
/// recovered = lambda * truth + c and report the mean RMSE normalized by the
/// recovered column's standard deviation (1.0 by convention for a constant
/// recovered column). A residual of ~0 certifies recovery up to per-atom
/// permutation, scaling, and shift — strictly stronger than a high MCC.
pub fn affine_alignment_check(recovered: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    let (_, perm) = mcc(recovered, truth)?;
    let rows = recovered.nrows() as f64;
    let mut total = 0.0;
    for (j, &i) in perm.iter().enumerate() {
        let rec = recovered.column(i);
        let tru = truth.column(j);
        let (rec_mean, rec_var) = column_stats(rec);
        if rec_var < VARIANCE_TOL {
            total += 1.0;
            continue;
        }
        let (tru_mean, tru_var) = column_stats(tru);
        let (lambda, c) = if tru_var < VARIANCE_TOL {
            (0.0, rec_mean)
        } else {
            let cov = rec
                .iter()
                .zip(tru.iter())
                .map(|(a, b)| (a - rec_mean) * (b - tru_mean))
                .sum::<f64>()
                / rows;
            let lambda = cov / tru_var;
            (lambda, rec_mean - lambda * tru_mean)
        };
        let mse = rec
            .iter()
            .zip(tru.iter())
            .map(|(a, b)| {
                let r = a - (lambda * b + c);
                r * r
            })
            .sum::<f64>()
            / rows;
        total += mse.sqrt() / rec_var.sqrt();
    }
    Ok(total / perm.len() as f64)
}

/// Full metric bundle for a recovered representation.
pub fn evaluate(recovered: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<EvalReport> {
    let (r2, skipped) = r_squared_detail(recovered, truth)?;
    let (mcc_value, perm) = mcc(recovered, truth)?;
    let (_, signed) = abs_correlation_matrix(recovered, truth);
    let per_atom_corr: Vec<f64> = perm.iter().enumerate().map(|(j, &i)| signed[[i, j]]).collect();
    let affine_residual = affine_alignment_check(recovered, truth)?;
    Ok(EvalReport {
        r2,
        mcc: mcc_value,
        permutation: perm,
        per_atom_corr,
        affine_residual,
        skipped_truth_columns: skipped,
    })
}
