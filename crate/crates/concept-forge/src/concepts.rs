//! Ground-truth concept structure: atoms, per-environment concepts, the
//! environment matrices built from them, and the two diversity conditions
//! that make the structure recoverable.

use crate::error::{ForgeError, Result};
use crate::linalg::{left_null_space, svd_rank, to_na, RANK_REL_TOL};
use ndarray::{Array2, ArrayView1};
use rand::Rng;

/// Threshold for diversity-witness entries.
pub const DIVERSITY_TOL: f64 = 1e-6;

/// Number of random null-space probes in the diversity-I search.
const NULL_SPACE_PROBES: usize = 16;

/// Linearly independent latent directions, one per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicConceptSet {
    vectors: Array2<f64>,
}

impl AtomicConceptSet {
    /// `vectors` is n x d_z, row i the direction of atom i. Requires
    /// 1 <= n <= d_z and full row rank.
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        let (n, d_z) = vectors.dim();
        if n == 0 || d_z == 0 {
            return Err(ForgeError::DegenerateSystem("empty atom matrix".into()));
        }
        if n > d_z {
            return Err(ForgeError::DegenerateSystem(format!(
                "{n} atoms cannot be independent in {d_z} dimensions"
            )));
        }
        if svd_rank(&to_na(&vectors), RANK_REL_TOL) != n {
            return Err(ForgeError::DegenerateSystem(
                "atom directions are linearly dependent".into(),
            ));
        }
        Ok(Self { vectors })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d_z(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }
}

/// One environment's concept: which atoms it constrains, to which values,
/// and the variance of the Gaussian filter around those values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSpec {
    pub atom_indices: Vec<usize>,
    pub valuation: Vec<f64>,
    pub noise_variance: f64,
}

impl ConceptSpec {
    pub fn dim(&self) -> usize {
        self.atom_indices.len()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.atom_indices.is_empty() {
            return Err(ForgeError::DegenerateSystem("concept with no atoms".into()));
        }
        let mut seen = vec![false; n];
        for &i in &self.atom_indices {
            if i >= n {
                return Err(ForgeError::DegenerateSystem(format!(
                    "atom index {i} out of range for n={n}"
                )));
            }
            if seen[i] {
                return Err(ForgeError::DegenerateSystem(format!(
                    "atom index {i} repeated within a concept"
                )));
            }
            seen[i] = true;
        }
        if self.valuation.len() != self.atom_indices.len() {
            return Err(ForgeError::DimensionMismatch(format!(
                "valuation length {} != concept dimension {}",
                self.valuation.len(),
                self.atom_indices.len()
            )));
        }
        if !(self.noise_variance > 0.0) {
            return Err(ForgeError::DegenerateSystem(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Atoms plus one concept per environment. Environment indices are 0-based
/// in code; the unconditioned base distribution has no entry here.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSystem {
    atoms: AtomicConceptSet,
    concepts: Vec<ConceptSpec>,
}

impl EnvironmentSystem {
    /// Requires at least one environment and that every atom is constrained
    /// by at least one of them.
    pub fn new(atoms: AtomicConceptSet, concepts: Vec<ConceptSpec>) -> Result<Self> {
        if concepts.is_empty() {
            return Err(ForgeError::DegenerateSystem("no environments".into()));
        }
        let n = atoms.n();
        let mut covered = vec![false; n];
        for spec in &concepts {
            spec.validate(n)?;
            for &i in &spec.atom_indices {
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|&c| !c) {
            return Err(ForgeError::DegenerateSystem(format!(
                "atom {i} appears in no environment"
            )));
        }
        Ok(Self { atoms, concepts })
    }

    pub fn atoms(&self) -> &AtomicConceptSet {
        &self.atoms
    }

    pub fn concepts(&self) -> &[ConceptSpec] {
        &self.concepts
    }

    pub fn concept(&self, e: usize) -> &ConceptSpec {
        &self.concepts[e]
    }

    pub fn n(&self) -> usize {
        self.atoms.n()
    }

    pub fn d_z(&self) -> usize {
        self.atoms.d_z()
    }

    pub fn m(&self) -> usize {
        self.concepts.len()
    }
}

/// The environment-concept matrix M and environment-valuation matrix B,
/// both m x n: M_ei = 1/sigma^2 where environment e constrains atom i (else
/// 0), B_ei the matching valuation divided by sigma^2 (else 0).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvMatrices {
    pub m: Array2<f64>,
    pub b: Array2<f64>,
}

pub fn build_env_matrices(system: &EnvironmentSystem) -> EnvMatrices {
    let (m_envs, n) = (system.m(), system.n());
    let mut m = Array2::zeros((m_envs, n));
    let mut b = Array2::zeros((m_envs, n));
    for (e, spec) in system.concepts().iter().enumerate() {
        let inv_var = 1.0 / spec.noise_variance;
        for (k, &i) in spec.atom_indices.iter().enumerate() {
            m[[e, i]] = inv_var;
            b[[e, i]] = spec.valuation[k] * inv_var;
        }
    }
    EnvMatrices { m, b }
}

#[derive(Debug, Clone)]
pub struct DiversityOneReport {
    pub holds: bool,
    /// Left null vector v of M with every entry of v^T B bounded away from
    /// zero; present iff `holds`.
    pub witness_v: Option<Vec<f64>>,
}

/// Checks the first diversity condition: rank(M) = n and some left null
/// vector of M hits B with all-nonzero entries. The bad set is a finite
/// union of hyperplanes inside the null space, so a few random probes find a
/// witness almost surely whenever one exists.
pub fn check_diversity_one(
    mats: &EnvMatrices,
    rng: &mut impl Rng,
    tolerance: f64,
) -> Result<DiversityOneReport> {
    let (m_envs, n) = mats.m.dim();
    if m_envs < n {
        return Err(ForgeError::DegenerateSystem(format!(
            "{m_envs} environments can never give rank {n}"
        )));
    }
    let m_na = to_na(&mats.m);
    if svd_rank(&m_na, RANK_REL_TOL) != n {
        return Ok(DiversityOneReport {
            holds: false,
            witness_v: None,
        });
    }
    let null = left_null_space(&m_na, RANK_REL_TOL);
    let k = null.ncols();
    if k == 0 {
        return Ok(DiversityOneReport {
            holds: false,
            witness_v: None,
        });
    }
    let b_na = to_na(&mats.b);
    for probe in 0..NULL_SPACE_PROBES {
        // Basis vectors first, then random unit combinations.
        let v = if probe < k {
            null.column(probe).into_owned()
        } else {
            let w = nalgebra::DVector::from_fn(k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let cand = &null * w;
            let norm = cand.norm();
            if norm < 1e-12 {
                continue;
            }
            cand / norm
        };
        let vb = b_na.transpose() * &v;
        let vm = m_na.transpose() * &v;
        let vm_ok = vm.iter().all(|x| x.abs() <= tolerance);
        let vb_ok = vb.iter().all(|x| x.abs() > tolerance);
        if vm_ok && vb_ok {
            return Ok(DiversityOneReport {
                holds: true,
                witness_v: Some(v.iter().copied().collect()),
            });
        }
    }
    Ok(DiversityOneReport {
        holds: false,
        witness_v: None,
    })
}

#[derive(Debug, Clone)]
pub struct DiversityTwoReport {
    pub holds: bool,
    /// Ordered atom pairs (i, j) with no environment containing i but not j.
    pub violating_pairs: Vec<(usize, usize)>,
}

/// Checks the second diversity condition: every ordered pair of distinct
/// atoms is separated by some environment.
pub fn check_diversity_two(system: &EnvironmentSystem) -> DiversityTwoReport {
    let n = system.n();
    let membership: Vec<Vec<bool>> = system
        .concepts()
        .iter()
        .map(|spec| {
            let mut row = vec![false; n];
            for &i in &spec.atom_indices {
                row[i] = true;
            }
            row
        })
        .collect();
    let mut violating_pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let separated = membership.iter().any(|row| row[i] && !row[j]);
            if !separated {
                violating_pairs.push((i, j));
            }
        }
    }
    DiversityTwoReport {
        holds: violating_pairs.is_empty(),
        violating_pairs,
    }
}

const ATOM_ENTRY_RANGE: f64 = 0.3;
const VALUATION_RANGE: f64 = 0.3;
const ATOM_RESAMPLE_LIMIT: usize = 64;

/// Random system with the layout used throughout: environments 0..n each
/// constrain one atom, environment n constrains all of them, any further
/// environments constrain random nonempty subsets. Atom entries are iid
/// Uniform(-0.3, 0.3); valuations are Uniform(-0.3, 0.3) scaled by the atom
/// norm. Requires m >= n+1.
///
/// The all-atoms environment is what makes the first diversity condition
/// hold almost surely at m = n+1: with a singleton base, any left null
/// vector of M is supported on one singleton row plus the extra row, so the
/// extra row must touch every atom or v^T B acquires zero entries.
pub fn generate_random_system(
    n: usize,
    d_z: usize,
    m: usize,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<EnvironmentSystem> {
    if n > d_z {
        return Err(ForgeError::RankDeficiency(format!(
            "cannot place {n} independent atoms in {d_z} dimensions"
        )));
    }
    if m < n + 1 {
        return Err(ForgeError::DegenerateSystem(format!(
            "need at least n+1={} environments, got {m}",
            n + 1
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(ForgeError::DegenerateSystem(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let mut atoms = None;
    for _ in 0..ATOM_RESAMPLE_LIMIT {
        let vectors = Array2::from_shape_fn((n, d_z), |_| {
            rng.random::<f64>() * 2.0 * ATOM_ENTRY_RANGE - ATOM_ENTRY_RANGE
        });
        if let Ok(set) = AtomicConceptSet::new(vectors) {
            atoms = Some(set);
            break;
        }
    }
    let atoms = atoms.ok_or_else(|| {
        ForgeError::RankDeficiency(format!(
            "failed to draw {n} independent atoms in {d_z} dimensions after {ATOM_RESAMPLE_LIMIT} tries"
        ))
    })?;
    let norms: Vec<f64> = (0..n)
        .map(|i| atoms.atom(i).dot(&atoms.atom(i)).sqrt())
        .collect();
    let mut concepts = Vec::with_capacity(m);
    for e in 0..m {
        let atom_indices: Vec<usize> = if e < n {
            vec![e]
        } else if e == n {
            (0..n).collect()
        } else {
            let size = rng.random_range(1..=n);
            let mut pool: Vec<usize> = (0..n).collect();
            for k in 0..size {
                let j = rng.random_range(k..n);
                pool.swap(k, j);
            }
            let mut subset: Vec<usize> = pool[..size].to_vec();
            subset.sort_unstable();
            subset
        };
        let valuation = atom_indices
            .iter()
            .map(|&i| (rng.random::<f64>() * 2.0 * VALUATION_RANGE - VALUATION_RANGE) * norms[i])
            .collect();
        concepts.push(ConceptSpec {
            atom_indices,
            valuation,
            noise_variance: sigma2,
        });
    }
    EnvironmentSystem::new(atoms, concepts)
}
