//! Constructive recovery of the environment/atom structure from oracle
//! access to the per-environment log-density differences
//! g^e(z) = ln p⁰(z) − ln pᵉ(z).
//!
//! Filtering a concept multiplies the base density by a Gaussian factor
//! exp(−(⟨a_i,z⟩−b)²/2σ²) per constrained atom, so every g^e is a convex
//! quadratic with Hessian Σ_i M_ei a_i a_iᵀ. Three consequences drive the
//! whole module:
//!
//! * rank(Σ_{e∈T} H_e) counts the atoms constrained anywhere in the
//!   environment subset T, because the atoms are linearly independent;
//! * inclusion–exclusion over those counts yields, for every environment
//!   signature σ, the number of atoms constrained by exactly σ — which is
//!   the incidence matrix up to column order;
//! * with every other atom pinned (minimizing the non-filtering
//!   environments' forms), the minimum of g^{e₂} over the argmin set of
//!   g^{e₁} exceeds its unconstrained minimum by (Δb)²/2σ², where Δb is the
//!   valuation difference between the two environments — which recovers the
//!   valuation table column by column, in noise-standardized units b/σ, up
//!   to the shift and sign freedom the canonical form fixes.
//!
//! Valuation recovery assumes every environment constraining a given atom
//! uses the same noise variance for it (uniform σ² is the common case);
//! mixed variances on one atom make the pairwise gaps dimensionally
//! inconsistent and recovery reports the contradiction instead of guessing.

use crate::concepts::EnvironmentSystem;
use crate::error::{ForgeError, Result};
use crate::linalg::{lstsq, svd_rank, to_na, RANK_REL_TOL};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Largest environment count for exhaustive subset enumeration.
pub const MAX_SUBSET_ENVIRONMENTS: usize = 16;

/// Relative residual above which an oracle is rejected as non-quadratic.
pub const QUADRATIC_FIT_TOL: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-9;
const PLACEMENT_TOL: f64 = 1e-6;
const UNBOUNDED_TOL: f64 = 1e-6;

/// q(z) = ½ zᵀHz + cᵀz + d with symmetric H.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub h: Array2<f64>,
    pub c: Array1<f64>,
    pub d: f64,
}

impl QuadraticForm {
    pub fn new(h: Array2<f64>, c: Array1<f64>, d: f64) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() != c.len() {
            return Err(ForgeError::DimensionMismatch(format!(
                "quadratic form needs square H matching c: H is {:?}, c has {}",
                h.dim(),
                c.len()
            )));
        }
        let scale = h.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..h.nrows() {
            for j in 0..i {
                if (h[[i, j]] - h[[j, i]]).abs() > SYMMETRY_TOL * scale {
                    return Err(ForgeError::Format(format!(
                        "H is not symmetric at ({i},{j}): {} vs {}",
                        h[[i, j]],
                        h[[j, i]]
                    )));
                }
            }
        }
        let h = (&h + &h.t()) * 0.5;
        Ok(QuadraticForm { h, c, d })
    }

    pub fn d_z(&self) -> usize {
        self.c.len()
    }

    pub fn eval(&self, z: ArrayView1<f64>) -> f64 {
        0.5 * z.dot(&self.h.dot(&z)) + self.c.dot(&z) + self.d
    }
}

/// Exact quadratic for one environment's log-density difference: every
/// constrained atom contributes (⟨a_i,z⟩−b)²/2σ², i.e. H = Σ_i M_ei a_i a_iᵀ
/// and c = −Σ_i B_ei a_i. The filtered density's normalizer is dropped from
/// the constant — every quantity computed below is invariant to it.
pub fn environment_form(system: &EnvironmentSystem, e: usize) -> QuadraticForm {
    let d_z = system.d_z();
    let spec = system.concept(e);
    let inv_var = 1.0 / spec.noise_variance;
    let mut h = Array2::zeros((d_z, d_z));
    let mut c = Array1::zeros(d_z);
    let mut d = 0.0;
    for (k, &i) in spec.atom_indices.iter().enumerate() {
        let a = system.atoms().atom(i);
        let b = spec.valuation[k];
        for r in 0..d_z {
            for s in 0..d_z {
                h[[r, s]] += inv_var * a[r] * a[s];
            }
            c[r] -= inv_var * b * a[r];
        }
        d += 0.5 * inv_var * b * b;
    }
    QuadraticForm { h, c, d }
}

/// Point-evaluation oracle for one environment's log-density difference,
/// up to the filtered density's additive normalization constant.
pub fn latent_log_ratio<'a>(
    system: &'a EnvironmentSystem,
    e: usize,
) -> impl Fn(ArrayView1<f64>) -> f64 + 'a {
    let spec = system.concept(e);
    move |z: ArrayView1<f64>| {
        let inv_var = 1.0 / spec.noise_variance;
        spec.atom_indices
            .iter()
            .zip(&spec.valuation)
            .map(|(&i, &b)| {
                let v = system.atoms().atom(i).dot(&z) - b;
                0.5 * inv_var * v * v
            })
            .sum()
    }
}

fn monomial_row(out: &mut DMatrix<f64>, row: usize, z: &Array1<f64>) {
    let d_z = z.len();
    out[(row, 0)] = 1.0;
    for i in 0..d_z {
        out[(row, 1 + i)] = z[i];
    }
    let mut t = 1 + d_z;
    for i in 0..d_z {
        for j in i..d_z {
            out[(row, t)] = z[i] * z[j];
            t += 1;
        }
    }
}

/// Least-squares fit of a quadratic to oracle evaluations at random Gaussian
/// probe points, with a fresh-point residual check that rejects oracles that
/// are not quadratic polynomials.
pub fn fit_quadratic<F>(oracle: F, d_z: usize, rng: &mut impl Rng) -> Result<QuadraticForm>
where
    F: Fn(ArrayView1<f64>) -> f64,
{
    if d_z == 0 {
        return Err(ForgeError::DimensionMismatch(
            "cannot fit a quadratic over zero dimensions".into(),
        ));
    }
    let terms = 1 + d_z + d_z * (d_z + 1) / 2;
    let fit_points = 2 * terms + 16;
    let check_points = terms + 16;
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut phi = DMatrix::zeros(fit_points, terms);
    let mut y = DMatrix::zeros(fit_points, 1);
    for p in 0..fit_points {
        let z = Array1::from_shape_fn(d_z, |_| normal.sample(rng));
        monomial_row(&mut phi, p, &z);
        y[(p, 0)] = oracle(z.view());
    }
    let theta = lstsq(&phi, &y, RANK_REL_TOL);

    let d = theta[(0, 0)];
    let c = Array1::from_shape_fn(d_z, |i| theta[(1 + i, 0)]);
    let mut h = Array2::zeros((d_z, d_z));
    let mut t = 1 + d_z;
    for i in 0..d_z {
        for j in i..d_z {
            let coef = theta[(t, 0)];
            if i == j {
                h[[i, i]] = 2.0 * coef;
            } else {
                h[[i, j]] = coef;
                h[[j, i]] = coef;
            }
            t += 1;
        }
    }
    let form = QuadraticForm { h, c, d };

    let mut max_err = 0.0f64;
    let mut scale = 1.0f64;
    for _ in 0..check_points {
        let z = Array1::from_shape_fn(d_z, |_| normal.sample(rng));
        let truth = oracle(z.view());
        scale = scale.max(truth.abs());
        max_err = max_err.max((form.eval(z.view()) - truth).abs());
    }
    let residual = max_err / scale;
    if residual > QUADRATIC_FIT_TOL {
        return Err(ForgeError::NotQuadratic {
            residual,
            tolerance: QUADRATIC_FIT_TOL,
        });
    }
    Ok(form)
}

fn rank_of_mask(forms: &[QuadraticForm], mask: u32) -> usize {
    let d_z = forms[0].d_z();
    let mut sum = Array2::<f64>::zeros((d_z, d_z));
    for (e, form) in forms.iter().enumerate() {
        if mask >> e & 1 == 1 {
            sum += &form.h;
        }
    }
    svd_rank(&to_na(&sum), RANK_REL_TOL)
}

/// Number of distinct atoms constrained anywhere in the environment subset
/// `t`: the rank of the summed Hessians. The empty subset counts zero atoms.
pub fn subset_concept_count(forms: &[QuadraticForm], t: &[usize]) -> usize {
    if t.is_empty() {
        return 0;
    }
    let mask = t.iter().fold(0u32, |acc, &e| {
        assert!(e < forms.len(), "environment index {e} out of range");
        acc | 1 << e
    });
    rank_of_mask(forms, mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceRecovery {
    /// m×n binary matrix, one column per atom. Columns are in canonical
    /// order: the environment signature read as a bitmask (environment e is
    /// bit 2^e), descending. Atoms no environment constrains come last as
    /// zero columns.
    pub incidence: Array2<f64>,
    /// (signature bitmask, atom multiplicity) in the same descending order.
    pub signatures: Vec<(u32, usize)>,
    /// True when the signatures pin every atom individually: each occurs
    /// once, none is empty, and none contains another. Valuation recovery
    /// relies on this pairwise separation.
    pub separable: bool,
}

/// Recovers which environments constrain which atoms, up to column
/// permutation, from subset ranks alone. `n` is the total atom count; atoms
/// never constrained appear as zero columns.
pub fn recover_incidence(forms: &[QuadraticForm], n: usize) -> Result<IncidenceRecovery> {
    let m = forms.len();
    if m == 0 {
        return Err(ForgeError::Config("no environment forms given".into()));
    }
    if m > MAX_SUBSET_ENVIRONMENTS {
        return Err(ForgeError::SubsetBudget {
            environments: m,
            max: MAX_SUBSET_ENVIRONMENTS,
        });
    }
    let full: u32 = (1u32 << m) - 1;
    let mut rank = vec![0usize; (full as usize) + 1];
    for mask in 1..=full {
        rank[mask as usize] = rank_of_mask(forms, mask);
    }
    if rank[full as usize] > n {
        return Err(ForgeError::RankDeficiency(format!(
            "environment forms span {} independent directions but only {n} atoms were declared",
            rank[full as usize]
        )));
    }

    // u(W) = #atoms whose signature is contained in W; Möbius inversion over
    // the subset lattice turns these into exact multiplicities per signature.
    let covered_by = |w: u32| n - rank[(full ^ w) as usize];
    let mut signatures: Vec<(u32, usize)> = Vec::new();
    for sig in (0..=full).rev() {
        let mut count: i64 = 0;
        let mut w = sig;
        loop {
            let term = covered_by(w) as i64;
            if (sig ^ w).count_ones() % 2 == 0 {
                count += term;
            } else {
                count -= term;
            }
            if w == 0 {
                break;
            }
            w = (w - 1) & sig;
        }
        if count < 0 {
            return Err(ForgeError::NumericalDivergence(format!(
                "negative atom multiplicity {count} for environment signature {sig:#b}; \
                 subset ranks are inconsistent"
            )));
        }
        if count > 0 {
            signatures.push((sig, count as usize));
        }
    }
    debug_assert_eq!(signatures.iter().map(|s| s.1).sum::<usize>(), n);

    let mut incidence = Array2::zeros((m, n));
    let mut col = 0;
    for &(sig, count) in &signatures {
        for _ in 0..count {
            for e in 0..m {
                if sig >> e & 1 == 1 {
                    incidence[[e, col]] = 1.0;
                }
            }
            col += 1;
        }
    }

    let mut separable = signatures.iter().all(|&(sig, count)| sig != 0 && count == 1);
    if separable {
        'pairs: for (a, &(sa, _)) in signatures.iter().enumerate() {
            for &(sb, _) in &signatures[a + 1..] {
                let meet = sa & sb;
                if meet == sa || meet == sb {
                    separable = false;
                    break 'pairs;
                }
            }
        }
    }

    Ok(IncidenceRecovery {
        incidence,
        signatures,
        separable,
    })
}

/// Affine subspace {origin + basis·t} with orthonormal basis columns.
struct Subspace {
    origin: DVector<f64>,
    basis: DMatrix<f64>,
}

fn full_space(d_z: usize) -> Subspace {
    Subspace {
        origin: DVector::zeros(d_z),
        basis: DMatrix::identity(d_z, d_z),
    }
}

fn eval_at(q: &QuadraticForm, point: &DVector<f64>) -> f64 {
    let z = Array1::from_iter(point.iter().copied());
    q.eval(z.view())
}

/// Minimum of a convex quadratic over an affine subspace, together with the
/// argmin set (itself an affine subspace: the null directions of the reduced
/// Hessian).
fn minimize_on(q: &QuadraticForm, sub: &Subspace) -> Result<(f64, Subspace)> {
    let k = sub.basis.ncols();
    if k == 0 {
        return Ok((
            eval_at(q, &sub.origin),
            Subspace {
                origin: sub.origin.clone(),
                basis: sub.basis.clone(),
            },
        ));
    }
    let h = to_na(&q.h);
    let c = DVector::from_iterator(q.c.len(), q.c.iter().copied());
    let hr = sub.basis.transpose() * &h * &sub.basis;
    let hr = (&hr + &hr.transpose()) * 0.5;
    let g = sub.basis.transpose() * (&h * &sub.origin + &c);

    let eig = nalgebra::SymmetricEigen::new(hr);
    // Curvature is judged against the ambient Hessian's scale, not the
    // reduced matrix's own largest eigenvalue: a restriction orthogonal to
    // every constrained direction leaves only rounding noise, and a cutoff
    // relative to that noise would happily "invert" it.
    let ambient_scale = q.h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = RANK_REL_TOL * ambient_scale;
    let g_scale = g.norm().max(1.0);
    let mut t_star = DVector::zeros(k);
    let mut null_cols = Vec::new();
    let mut flat_gradient = 0.0f64;
    for j in 0..k {
        let lam = eig.eigenvalues[j];
        let v = eig.eigenvectors.column(j);
        if lam < -threshold.max(f64::MIN_POSITIVE) {
            return Err(ForgeError::NumericalDivergence(format!(
                "quadratic has negative curvature {lam:e} on the minimization subspace"
            )));
        }
        let gj = v.dot(&g);
        if lam > threshold && ambient_scale > 0.0 {
            t_star += v * (-gj / lam);
        } else {
            flat_gradient = flat_gradient.max(gj.abs());
            null_cols.push(v.into_owned());
        }
    }
    if flat_gradient > UNBOUNDED_TOL * g_scale {
        return Err(ForgeError::NumericalDivergence(format!(
            "quadratic is unbounded below on the subspace: gradient {flat_gradient:e} \
             along a flat direction"
        )));
    }
    let origin = &sub.origin + &sub.basis * t_star;
    let basis = if null_cols.is_empty() {
        DMatrix::zeros(sub.basis.nrows(), 0)
    } else {
        &sub.basis
            * DMatrix::from_columns(&null_cols.iter().map(|c| c.column(0)).collect::<Vec<_>>())
    };
    let value = eval_at(q, &origin);
    Ok((value, Subspace { origin, basis }))
}

fn sum_forms(forms: &[QuadraticForm], envs: &[usize], d_z: usize) -> QuadraticForm {
    let mut h = Array2::zeros((d_z, d_z));
    let mut c = Array1::zeros(d_z);
    let mut d = 0.0;
    for &e in envs {
        h += &forms[e].h;
        c += &forms[e].c;
        d += forms[e].d;
    }
    QuadraticForm { h, c, d }
}

/// Recovers the valuation table, one atom column at a time, from minima
/// differences of the quadratics over nested argmin subspaces. Output
/// columns are canonical: zero mean over the constraining environments,
/// first nonzero entry positive, zeros elsewhere; units are the
/// noise-standardized valuations b/σ.
pub fn recover_valuations(
    forms: &[QuadraticForm],
    incidence: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let m = forms.len();
    let (mi, n) = incidence.dim();
    if mi != m {
        return Err(ForgeError::DimensionMismatch(format!(
            "incidence has {mi} rows for {m} environment forms"
        )));
    }
    let d_z = forms[0].d_z();
    let constrained_cols = (0..n)
        .filter(|&i| (0..m).any(|e| incidence[[e, i]] != 0.0))
        .count();
    let mut b_hat = Array2::zeros((m, n));

    for i in 0..n {
        let support: Vec<usize> = (0..m).filter(|&e| incidence[[e, i]] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let outside: Vec<usize> = (0..m).filter(|&e| incidence[[e, i]] == 0.0).collect();
        let q_outside = sum_forms(forms, &outside, d_z);
        let (_, pinned) = minimize_on(&q_outside, &full_space(d_z))?;
        let expected_free = d_z + 1 - constrained_cols;
        if pinned.basis.ncols() != expected_free {
            return Err(ForgeError::DegenerateSystem(format!(
                "environments not constraining atom column {i} leave {} free directions, \
                 expected {expected_free}: the structure is not pairwise separated",
                pinned.basis.ncols()
            )));
        }
        if support.len() < 2 {
            // One constraining environment carries no pairwise gap; its
            // centered value is zero by construction. A nonzero value here
            // would be unorientable.
            continue;
        }

        let s = support.len();
        let restricted: Vec<Subspace> = support
            .iter()
            .map(|&e1| minimize_on(&forms[e1], &pinned).map(|r| r.1))
            .collect::<Result<_>>()?;
        let floor: Vec<f64> = support
            .iter()
            .map(|&e2| minimize_on(&forms[e2], &pinned).map(|r| r.0))
            .collect::<Result<_>>()?;
        let mut gap = vec![vec![0.0f64; s]; s];
        for a in 0..s {
            for b in 0..s {
                if a == b {
                    continue;
                }
                let (lifted, _) = minimize_on(&forms[support[b]], &restricted[a])?;
                gap[a][b] = (2.0 * (lifted - floor[b]).max(0.0)).sqrt();
            }
        }
        let dist = |a: usize, b: usize| 0.5 * (gap[a][b] + gap[b][a]);

        let (mut p, mut q, mut d_max) = (0, 1, 0.0f64);
        for a in 0..s {
            for b in a + 1..s {
                if dist(a, b) > d_max {
                    d_max = dist(a, b);
                    p = a;
                    q = b;
                }
            }
        }

        let mut x = vec![0.0f64; s];
        if d_max > GAP_TOL {
            x[q] = d_max;
            for r in 0..s {
                if r == p || r == q {
                    continue;
                }
                let dp = dist(p, r);
                let dq = dist(q, r);
                // Everything must lie inside the widest pair's interval.
                if (dp + dq - d_max).abs() > PLACEMENT_TOL * d_max.max(1.0) {
                    return Err(ForgeError::SignAmbiguity(format!(
                        "atom column {i}: environment {} sits {dp:.6e} from one anchor and \
                         {dq:.6e} from the other, inconsistent with anchor gap {d_max:.6e}",
                        support[r]
                    )));
                }
                x[r] = dp;
            }
            let mean = x.iter().sum::<f64>() / s as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            if let Some(first) = x.iter().find(|v| v.abs() > GAP_TOL) {
                if *first < 0.0 {
                    x.iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
        for (r, &e) in support.iter().enumerate() {
            b_hat[[e, i]] = x[r];
        }
    }
    Ok(b_hat)
}

/// Applies the canonical normalization to a raw valuation matrix so it can
/// be compared with `recover_valuations` output: per column, center the
/// entries on `support`'s nonzero pattern to zero mean, zero the rest, and
/// flip the sign so the first nonzero entry is positive.
pub fn canonical_valuations(b: ArrayView2<f64>, support: ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = b.dim();
    let mut out = Array2::zeros((m, n));
    for i in 0..n {
        let rows: Vec<usize> = (0..m).filter(|&e| support[[e, i]] != 0.0).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = rows.iter().map(|&e| b[[e, i]]).sum::<f64>() / rows.len() as f64;
        let mut vals: Vec<f64> = rows.iter().map(|&e| b[[e, i]] - mean).collect();
        if let Some(first) = vals.iter().find(|v| v.abs() > GAP_TOL) {
            if *first < 0.0 {
                vals.iter_mut().for_each(|v| *v = -*v);
            }
        }
        for (k, &e) in rows.iter().enumerate() {
            out[[e, i]] = vals[k];
        }
    }
    out
}

/// Pairs recovered columns with ground-truth columns that have the same
/// environment signature. Returns `perm` with `perm[j]` the truth column for
/// recovered column `j`, or None when the signature multisets differ.
pub fn match_columns(recovered: ArrayView2<f64>, truth: ArrayView2<f64>) -> Option<Vec<usize>> {
    if recovered.dim() != truth.dim() {
        return None;
    }
    let (m, n) = recovered.dim();
    let mask = |mat: ArrayView2<f64>, j: usize| -> u32 {
        (0..m)
            .filter(|&e| mat[[e, j]] != 0.0)
            .fold(0u32, |acc, e| acc | 1 << e)
    };
    let mut used = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for j in 0..n {
        let sig = mask(recovered, j);
        let found = (0..n).find(|&t| !used[t] && mask(truth, t) == sig)?;
        used[found] = true;
        perm.push(found);
    }
    Some(perm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredStructure {
    /// m×n binary incidence in canonical column order.
    pub incidence: Array2<f64>,
    /// m×n canonical valuations (zero column mean on the support, first
    /// nonzero entry positive), in the incidence's column order.
    pub valuations: Array2<f64>,
    /// (signature bitmask, multiplicity) per distinct signature.
    pub signatures: Vec<(u32, usize)>,
    pub separable: bool,
}

/// Full pipeline against a known system: build the per-environment
/// log-density-difference oracles, fit each quadratic from point
/// evaluations, recover the incidence from subset ranks, then the valuation
/// table from constrained minima.
pub fn identify_structure(
    system: &EnvironmentSystem,
    rng: &mut impl Rng,
) -> Result<RecoveredStructure> {
    let forms = (0..system.m())
        .map(|e| fit_quadratic(latent_log_ratio(system, e), system.d_z(), rng))
        .collect::<Result<Vec<_>>>()?;
    let recovered = recover_incidence(&forms, system.n())?;
    let valuations = recover_valuations(&forms, recovered.incidence.view())?;
    Ok(RecoveredStructure {
        incidence: recovered.incidence,
        valuations,
        signatures: recovered.signatures,
        separable: recovered.separable,
    })
}
