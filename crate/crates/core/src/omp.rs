//! Orthogonal matching pursuit over overcomplete angle and delay
//! dictionaries.
//!
//! The channel is modelled as `H = A X B^T` with `A` (R x P_theta) and `B`
//! (S x P_tau) holding steering vectors on uniform grids and `X` sparse.
//! [`omp2d`] works on the matrix model directly: correlations are
//! `A^H M conj(B)` and the Gram of selected rank-one atoms factors as
//! `(a_p'^H a_p)(b_q'^H b_q)`. [`omp1d`] runs the textbook algorithm on
//! `vec(H) = (B kron A) vec(X)` with the Kronecker dictionary materialized,
//! and exists as a reference and for complexity comparisons.

use faer::Mat;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{angle_steering, delay_steering, ChannelMatrix};
use crate::error::{Error, Result};
use crate::estimate::{Method, PathEstimate, SignatureEstimate};
use crate::linalg::{solve_gram, to_faer};

/// Default memory cap for the materialized Kronecker dictionary: 2 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    Angle,
    Delay,
}

/// Steering vectors on the uniform grid `p / P`, one per column.
#[derive(Debug, Clone)]
pub struct Dictionary {
    kind: DictionaryKind,
    atoms: Array2<Complex64>,
    grid: Vec<f64>,
    norms: Vec<f64>,
    adjoint: Mat<Complex64>,
}

impl Dictionary {
    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn atoms(&self) -> &Array2<Complex64> {
        &self.atoms
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn column(&self, p: usize) -> ndarray::ArrayView1<'_, Complex64> {
        self.atoms.column(p)
    }
}

pub fn build_dictionary(n: usize, p: usize, kind: DictionaryKind) -> Result<Dictionary> {
    if n < 1 || p < 2 {
        return Err(Error::config(format!("dictionary needs N >= 1 and P >= 2, got {n}x{p}")));
    }
    let grid: Vec<f64> = (0..p).map(|k| k as f64 / p as f64).collect();
    let mut atoms = Array2::zeros((n, p));
    for (k, &g) in grid.iter().enumerate() {
        let v = match kind {
            DictionaryKind::Angle => angle_steering(g, n),
            DictionaryKind::Delay => delay_steering(g, n),
        };
        atoms.column_mut(k).assign(&v);
    }
    let norms = atoms
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let adjoint = to_faer(atoms.view()).adjoint().to_owned();
    Ok(Dictionary {
        kind,
        atoms,
        grid,
        norms,
        adjoint,
    })
}

/// Termination rule for the greedy loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopRule {
    KnownSparsity { paths: usize },
    /// Stop once `||M||_F <= ratio * ||H||_F`.
    ResidualRatio { ratio: f64 },
    MaxIters { iters: usize },
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StopRule::KnownSparsity { paths: 0 } | StopRule::MaxIters { iters: 0 } => {
                Err(Error::config("stop rule count must be at least 1"))
            }
            StopRule::ResidualRatio { ratio } if !(ratio > 0.0 && ratio < 1.0) => {
                Err(Error::config(format!("residual ratio {ratio} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    fn iteration_cap(&self, atoms: usize, observations: usize) -> usize {
        let hard = atoms.min(observations);
        match *self {
            StopRule::KnownSparsity { paths } => paths.min(hard),
            StopRule::MaxIters { iters } => iters.min(hard),
            StopRule::ResidualRatio { .. } => hard,
        }
    }

    fn satisfied(&self, residual: f64, total: f64) -> bool {
        match *self {
            StopRule::ResidualRatio { ratio } => residual <= ratio * total,
            _ => total == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub p_theta: usize,
    pub p_tau: usize,
    pub coeff: Complex64,
}

/// Selected atoms in selection order with their least-squares coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseSupport {
    pub entries: Vec<SupportEntry>,
    /// `||M_t||_F` after each iteration.
    pub residual_norms: Vec<f64>,
}

impl SparseSupport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_dims(h: &ChannelMatrix, a: &Dictionary, b: &Dictionary) -> Result<()> {
    let (r, s) = h.entries.dim();
    if a.rows() != r || b.rows() != s {
        return Err(Error::Dimension(format!(
            "dictionaries have {}x{} rows, channel is {r}x{s}",
            a.rows(),
            b.rows()
        )));
    }
    Ok(())
}

/// Index of the largest normalized correlation. Ties go to the lowest
/// `p_theta`, then the lowest `p_tau`; `None` if every correlation is zero.
fn select_atom(
    p_theta: usize,
    p_tau: usize,
    score: impl Fn(usize, usize) -> f64,
    taken: &[(usize, usize)],
) -> Option<(usize, usize)> {
    let mut best: Option<(f64, (usize, usize))> = None;
    for p in 0..p_theta {
        for q in 0..p_tau {
            let v = score(p, q);
            if best.is_none_or(|(bv, _)| v > bv) && !taken.contains(&(p, q)) {
                best = Some((v, (p, q)));
            }
        }
    }
    best.filter(|(v, _)| *v > 0.0).map(|(_, idx)| idx)
}

fn inner(x: ndarray::ArrayView1<'_, Complex64>, y: ndarray::ArrayView1<'_, Complex64>) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// 2D-OMP on the matrix model.
pub fn omp2d(h: &ChannelMatrix, a: &Dictionary, b: &Dictionary, stop: StopRule) -> Result<SparseSupport> {
    check_dims(h, a, b)?;
    stop.validate()?;
    let (r, s) = h.entries.dim();
    let total = h.frobenius_norm();
    let cap = stop.iteration_cap(a.len() * b.len(), r * s);
    let b_conj = to_faer(b.atoms.view()).conjugate().to_owned();

    let mut selected: Vec<(usize, usize)> = Vec::new();
    let mut coeffs: Vec<Complex64> = Vec::new();
    let mut residual_norms = Vec::new();
    let mut residual = h.entries.clone();
    let mut rhs: Vec<Complex64> = Vec::new();

    while selected.len() < cap && !stop.satisfied(frobenius(&residual), total) {
        let m = to_faer(residual.view());
        let corr = &a.adjoint * &m * &b_conj;
        let pick = select_atom(
            a.len(),
            b.len(),
            |p, q| corr[(p, q)].norm() / (a.norms[p] * b.norms[q]),
            &selected,
        );
        let Some((p, q)) = pick else { break };
        selected.push((p, q));
        // a_p^H H conj(b_q)
        let ap = a.column(p);
        let bq = b.column(q);
        let mut y = Complex64::new(0.0, 0.0);
        for (row, &ar) in h.entries.rows().into_iter().zip(ap.iter()) {
            let t: Complex64 = row.iter().zip(bq.iter()).map(|(hv, bv)| hv * bv.conj()).sum();
            y += ar.conj() * t;
        }
        rhs.push(y);

        let t = selected.len();
        let gram = Array2::from_shape_fn((t, t), |(k, l)| {
            let (pk, qk) = selected[k];
            let (pl, ql) = selected[l];
            inner(a.column(pk), a.column(pl)) * inner(b.column(qk), b.column(ql))
        });
        coeffs = solve_gram(&gram, &rhs)?;

        residual = h.entries.clone();
        for (&(pk, qk), &ck) in selected.iter().zip(&coeffs) {
            let ak = a.column(pk);
            let bk = b.column(qk);
            for (mut row, &av) in residual.rows_mut().into_iter().zip(ak.iter()) {
                let f = ck * av;
                for (mv, &bv) in row.iter_mut().zip(bk.iter()) {
                    *mv -= f * bv;
                }
            }
        }
        residual_norms.push(frobenius(&residual));
    }

    Ok(SparseSupport {
        entries: selected
            .into_iter()
            .zip(coeffs)
            .map(|((p_theta, p_tau), coeff)| SupportEntry {
                p_theta,
                p_tau,
                coeff,
            })
            .collect(),
        residual_norms,
    })
}

fn frobenius(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Bytes needed for the `(R S) x (P_theta P_tau)` Kronecker dictionary.
pub fn kronecker_bytes(r: usize, s: usize, p_theta: usize, p_tau: usize) -> u64 {
    (r as u64) * (s as u64) * (p_theta as u64) * (p_tau as u64) * 16
}

/// 1D-OMP on `vec(H)` with the default memory cap.
pub fn omp1d(h: &ChannelMatrix, a: &Dictionary, b: &Dictionary, stop: StopRule) -> Result<SparseSupport> {
    omp1d_with_cap(h, a, b, stop, DEFAULT_MEMORY_CAP)
}

/// 1D-OMP with the Kronecker dictionary `B kron A` built explicitly. Column
/// `p + P_theta q` is `vec(a_p b_q^T)`, using column-major `vec`.
pub fn omp1d_with_cap(
    h: &ChannelMatrix,
    a: &Dictionary,
    b: &Dictionary,
    stop: StopRule,
    cap_bytes: u64,
) -> Result<SparseSupport> {
    check_dims(h, a, b)?;
    stop.validate()?;
    let (r, s) = h.entries.dim();
    let (pt, pu) = (a.len(), b.len());
    let required = kronecker_bytes(r, s, pt, pu);
    if required > cap_bytes {
        return Err(Error::MemoryCap {
            required,
            cap: cap_bytes,
        });
    }

    let rows = r * s;
    let cols = pt * pu;
    let dict = Mat::<Complex64>::from_fn(rows, cols, |row, col| {
        let (ri, si) = (row % r, row / r);
        let (p, q) = (col % pt, col / pt);
        a.atoms[[ri, p]] * b.atoms[[si, q]]
    });
    let dict_h = dict.adjoint().to_owned();
    let norms: Vec<f64> = (0..cols)
        .map(|k| dict.col(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let hv: Array1<Complex64> = Array1::from_shape_fn(rows, |row| h.entries[[row % r, row / r]]);
    let total = hv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let cap = stop.iteration_cap(cols, rows);

    let mut selected: Vec<(usize, usize)> = Vec::new();
    let mut coeffs: Vec<Complex64> = Vec::new();
    let mut rhs = Vec::new();
    let mut residual = hv.clone();
    let mut residual_norms = Vec::new();
    let col_of = |p: usize, q: usize| p + pt * q;

    while selected.len() < cap && !stop.satisfied(norm(&residual), total) {
        let rvec = Mat::<Complex64>::from_fn(rows, 1, |i, _| residual[i]);
        let corr = &dict_h * &rvec;
        let pick = select_atom(
            pt,
            pu,
            |p, q| {
                let k = col_of(p, q);
                corr[(k, 0)].norm() / norms[k]
            },
            &selected,
        );
        let Some((p, q)) = pick else { break };
        selected.push((p, q));
        let k = col_of(p, q);
        rhs.push((0..rows).map(|i| dict[(i, k)].conj() * hv[i]).sum());

        let t = selected.len();
        let gram = Array2::from_shape_fn((t, t), |(x, y)| {
            let (cx, cy) = (col_of(selected[x].0, selected[x].1), col_of(selected[y].0, selected[y].1));
            (0..rows).map(|i| dict[(i, cx)].conj() * dict[(i, cy)]).sum()
        });
        coeffs = solve_gram(&gram, &rhs)?;

        residual = hv.clone();
        for (&(ps, qs), &c) in selected.iter().zip(&coeffs) {
            let kk = col_of(ps, qs);
            for (i, rv) in residual.iter_mut().enumerate() {
                *rv -= c * dict[(i, kk)];
            }
        }
        residual_norms.push(norm(&residual));
    }

    Ok(SparseSupport {
        entries: selected
            .into_iter()
            .zip(coeffs)
            .map(|((p_theta, p_tau), coeff)| SupportEntry {
                p_theta,
                p_tau,
                coeff,
            })
            .collect(),
        residual_norms,
    })
}

fn norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Reusable angle/delay dictionary pair.
#[derive(Debug, Clone)]
pub struct OmpDictionaries {
    pub angle: Dictionary,
    pub delay: Dictionary,
}

impl OmpDictionaries {
    pub fn new(r: usize, s: usize, p_theta: usize, p_tau: usize) -> Result<Self> {
        Ok(OmpDictionaries {
            angle: build_dictionary(r, p_theta, DictionaryKind::Angle)?,
            delay: build_dictionary(s, p_tau, DictionaryKind::Delay)?,
        })
    }

    pub fn estimate(&self, h: &ChannelMatrix, stop: StopRule) -> Result<SignatureEstimate> {
        let support = omp2d(h, &self.angle, &self.delay, stop)?;
        Ok(self.to_estimate(Method::Omp2d, &support))
    }

    pub fn estimate_1d(&self, h: &ChannelMatrix, stop: StopRule, cap_bytes: u64) -> Result<SignatureEstimate> {
        let support = omp1d_with_cap(h, &self.angle, &self.delay, stop, cap_bytes)?;
        Ok(self.to_estimate(Method::Omp1d, &support))
    }

    pub fn to_estimate(&self, method: Method, support: &SparseSupport) -> SignatureEstimate {
        let paths = support
            .entries
            .iter()
            .map(|e| PathEstimate {
                gain: e.coeff,
                theta_norm: self.angle.grid[e.p_theta],
                tau_norm: self.delay.grid[e.p_tau],
            })
            .collect();
        SignatureEstimate::new(method, paths)
    }
}

/// Builds `P_theta`/`P_tau` grids and runs [`omp2d`].
pub fn estimate_omp(h: &ChannelMatrix, p_theta: usize, p_tau: usize, stop: StopRule) -> Result<SignatureEstimate> {
    let (r, s) = h.entries.dim();
    OmpDictionaries::new(r, s, p_theta, p_tau)?.estimate(h, stop)
}
