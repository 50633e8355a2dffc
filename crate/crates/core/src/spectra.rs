//! Symmetric eigen-solvers shared by the clustering front-ends.
//!
//! Small or eigenvector-hungry problems go through a dense
//! eigendecomposition; everything else runs Lanczos with full
//! reorthogonalization and a growing Krylov basis. Both paths apply one
//! canonical sign convention so results are reproducible bit-for-bit for
//! a fixed seed.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

/// Residual tolerance for accepting a Ritz pair.
pub const EIGEN_TOL: f64 = 1e-8;
/// Hard cap on matrix-vector products, as a multiple of `n`.
pub const MAX_ITER_FACTOR: usize = 10;
/// Largest problem size eligible for the dense fallback path.
pub const DENSE_FALLBACK_MAX_N: usize = 512;

/// Which end of the spectrum to extract, and in what output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// Descending by algebraic value.
    LargestAlgebraic,
    /// Ascending by algebraic value.
    SmallestAlgebraic,
    /// Descending by absolute value.
    LargestMagnitude,
}

/// Eigenvalues with matching unit eigenvectors (one per column).
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

fn rank_indices(values: &[f64], which: Which) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match which {
        Which::LargestAlgebraic => idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap()),
        Which::SmallestAlgebraic => {
            idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        }
        Which::LargestMagnitude => {
            idx.sort_by(|&a, &b| values[b].abs().partial_cmp(&values[a].abs()).unwrap())
        }
    }
    idx
}

/// Dense symmetric eigendecomposition, returning the `k` pairs selected
/// by `which` in that ordering.
pub fn dense_symmetric_eigs(a: &DMatrix<f64>, k: usize, which: Which) -> Result<EigenPairs> {
    let n = check_square(a)?;
    check_rank(k, n)?;
    let eig = a.clone().symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = rank_indices(&values, which);
    let mut out_vals = Vec::with_capacity(k);
    let mut out_vecs = DMatrix::zeros(n, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        out_vals.push(values[i]);
        let mut col = eig.eigenvectors.column(i).clone_owned();
        canonical_sign(&mut col);
        out_vecs.set_column(c, &col);
    }
    Ok(EigenPairs {
        values: out_vals,
        vectors: out_vecs,
    })
}

fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare(a.nrows(), a.ncols()));
    }
    Ok(a.nrows())
}

fn check_rank(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::RankTooLarge { rank: k, n });
    }
    Ok(())
}

fn random_unit(n: usize, rng: &mut StdRng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Lanczos with full reorthogonalization against the whole basis.
///
/// A single Krylov chain cannot see eigenvalue multiplicities, so the
/// iteration does not stop at the first convergence of the wanted Ritz
/// pairs. Instead it injects a random restart direction orthogonal to the
/// whole basis and accepts only once the wanted set is unchanged across
/// such a restart; a restart that surfaces a missing copy of a repeated
/// eigenvalue changes the set and keeps the iteration going. Couplings
/// discarded at restart junctions are retained and charged back into the
/// Ritz residual estimates, so convergence is never declared on stale
/// information. If the basis fills the whole space the problem is solved
/// exactly on that basis.
pub fn lanczos_symmetric<F>(
    apply: F,
    n: usize,
    k: usize,
    which: Which,
    tol: f64,
    seed: u64,
) -> Result<EigenPairs>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_rank(k, n)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let max_matvecs = MAX_ITER_FACTOR * n;

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // betas[j] couples basis[j] and basis[j+1]
                                          // (row, discarded beta) for every restart junction.
    let mut junctions: Vec<(usize, f64)> = Vec::new();
    // Wanted Ritz values at the last convergence event, plus whether a
    // restart has been injected since.
    let mut snapshot: Option<Vec<f64>> = None;
    let mut restarted_since_snapshot = false;

    let mut v = random_unit(n, &mut rng);
    let mut beta_prev = 0.0;
    let mut matvecs = 0;
    // A restart probe must run at least this long before its silence
    // counts as evidence that no eigenvalue copy is missing.
    let min_probe = 12.max(k);
    let mut steps_since_restart = usize::MAX / 2;

    loop {
        let mut w = apply(&v);
        matvecs += 1;
        steps_since_restart += 1;
        let alpha = v.dot(&w);
        w.axpy(-alpha, &v, 1.0);
        if beta_prev != 0.0 {
            if let Some(prev) = basis.last() {
                w.axpy(-beta_prev, prev, 1.0);
            }
        }
        basis.push(v.clone());
        alphas.push(alpha);
        // Two rounds of classical Gram-Schmidt keep the basis orthogonal
        // to working precision.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let m = basis.len();
        let beta = w.norm();
        let breakdown = beta <= 1e-13 * alpha.abs().max(1.0);
        let exhausted = m == n || matvecs >= max_matvecs;

        let mut inject_restart = breakdown;
        if breakdown || exhausted || (m >= k + 2 && m % 4 == 0) {
            match converged_values(&basis, &alphas, &betas, &junctions, beta, k, which, tol) {
                Some((values, s, order)) => {
                    let scale = values
                        .iter()
                        .fold(0.0f64, |a, &x| a.max(x.abs()))
                        .max(1e-300);
                    let wanted: Vec<f64> = order.iter().take(k).map(|&i| values[i]).collect();
                    let stable = snapshot.as_ref().is_some_and(|old| {
                        old.len() == wanted.len()
                            && old
                                .iter()
                                .zip(&wanted)
                                .all(|(a, b)| (a - b).abs() <= tol.max(1e-10) * scale)
                    });
                    if stable && restarted_since_snapshot && steps_since_restart >= min_probe {
                        return Ok(assemble(&basis, &s, &values, &order, k));
                    }
                    if !stable {
                        snapshot = Some(wanted);
                        restarted_since_snapshot = false;
                    }
                    if !restarted_since_snapshot {
                        inject_restart = true;
                    }
                }
                None => {
                    if exhausted && m < n {
                        return Err(Error::EigenNonConvergence {
                            wanted: k,
                            n,
                            iters: matvecs,
                        });
                    }
                }
            }
            if m == n {
                return exact_from_basis(&apply, &basis, k, which);
            }
        }

        if inject_restart {
            // Explore a fresh direction orthogonal to everything so far;
            // the discarded remainder keeps its true norm in `junctions`.
            let mut fresh = random_unit(n, &mut rng);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&fresh);
                    fresh.axpy(-c, b, 1.0);
                }
            }
            let norm = fresh.norm();
            if norm <= 1e-12 {
                return exact_from_basis(&apply, &basis, k, which);
            }
            junctions.push((m - 1, beta));
            v = fresh / norm;
            betas.push(0.0);
            beta_prev = 0.0;
            restarted_since_snapshot = true;
        } else {
            v = w / beta;
            betas.push(beta);
            beta_prev = beta;
        }
    }
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn ritz_pairs(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let eig = tridiagonal(alphas, betas).symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    (values, eig.eigenvectors)
}

fn assemble(
    basis: &[DVector<f64>],
    s: &DMatrix<f64>,
    values: &[f64],
    order: &[usize],
    k: usize,
) -> EigenPairs {
    let n = basis[0].len();
    let mut vectors = DMatrix::zeros(n, k);
    let mut out_vals = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let mut x = DVector::zeros(n);
        for (j, b) in basis.iter().enumerate() {
            x.axpy(s[(j, i)], b, 1.0);
        }
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
        }
        canonical_sign(&mut x);
        out_vals.push(values[i]);
        vectors.set_column(c, &x);
    }
    EigenPairs {
        values: out_vals,
        vectors,
    }
}

/// Ritz data if every wanted pair has a small residual estimate, where
/// the estimate charges both the current tail coupling and every
/// discarded junction coupling.
#[allow(clippy::too_many_arguments)]
fn converged_values(
    basis: &[DVector<f64>],
    alphas: &[f64],
    betas: &[f64],
    junctions: &[(usize, f64)],
    beta_tail: f64,
    k: usize,
    which: Which,
    tol: f64,
) -> Option<(Vec<f64>, DMatrix<f64>, Vec<usize>)> {
    let m = basis.len();
    if m < k {
        return None;
    }
    let (values, s) = ritz_pairs(alphas, betas);
    let order = rank_indices(&values, which);
    let scale = values
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1e-300);
    let last_row = m - 1;
    for &i in order.iter().take(k) {
        let mut residual = (beta_tail * s[(last_row, i)]).abs();
        for &(row, b) in junctions {
            residual += (b * s[(row, i)]).abs();
        }
        if residual > tol * scale {
            return None;
        }
    }
    Some((values, s, order))
}

/// Exact solve on a complete orthonormal basis: project the operator,
/// decompose the projection densely, and lift the eigenvectors back.
fn exact_from_basis<F>(
    apply: &F,
    basis: &[DVector<f64>],
    k: usize,
    which: Which,
) -> Result<EigenPairs>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = basis.len();
    let mut projected = DMatrix::zeros(m, m);
    for (j, b) in basis.iter().enumerate() {
        let ab = apply(b);
        for (i, bi) in basis.iter().enumerate() {
            projected[(i, j)] = bi.dot(&ab);
        }
    }
    // Symmetrize away roundoff so the dense path sees a clean input.
    let projected = (&projected + projected.transpose()) * 0.5;
    let eig = projected.symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = rank_indices(&values, which);
    Ok(assemble(basis, &eig.eigenvectors, &values, &order, k))
}

/// Extracts `k` eigenpairs of a dense symmetric matrix.
///
/// Uses the dense path outright when the matrix is small or `k` is a
/// large fraction of `n`; otherwise runs Lanczos and falls back to the
/// dense decomposition on non-convergence for `n` up to
/// [`DENSE_FALLBACK_MAX_N`]. Non-convergence beyond that size is reported
/// as an error rather than silently accepted.
pub fn symmetric_eigs(a: &DMatrix<f64>, k: usize, which: Which, seed: u64) -> Result<EigenPairs> {
    let n = check_square(a)?;
    check_rank(k, n)?;
    if n <= 64 || 3 * k >= n {
        return dense_symmetric_eigs(a, k, which);
    }
    match lanczos_symmetric(|v| a * v, n, k, which, EIGEN_TOL, seed) {
        Ok(pairs) => Ok(pairs),
        Err(Error::EigenNonConvergence { .. }) if n <= DENSE_FALLBACK_MAX_N => {
            dense_symmetric_eigs(a, k, which)
        }
        Err(e) => Err(e),
    }
}

/// Orthonormal basis of the dominant `k`-dimensional invariant subspace
/// of a (possibly non-symmetric) linear operator, by orthogonal
/// iteration with a seeded start.
///
/// Convergence is measured by the Frobenius residual of the projected
/// update; the final basis is returned after at most `max_iters` rounds
/// even if the tolerance was not met, since downstream clustering only
/// needs an approximately invariant subspace.
pub fn dominant_subspace<F>(
    apply: F,
    dim: usize,
    k: usize,
    tol: f64,
    max_iters: usize,
    seed: u64,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_rank(k, dim)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut q = DMatrix::from_fn(dim, k, |_, _| rng.gen::<f64>() - 0.5);
    q = DMatrix::from(q.qr().q());
    for _ in 0..max_iters {
        let mut z = DMatrix::zeros(dim, k);
        for c in 0..k {
            z.set_column(c, &apply(&q.column(c).clone_owned()));
        }
        let proj = &q * (q.transpose() * &z);
        let resid = (&z - proj).norm();
        let scale = z.norm().max(1e-300);
        let next = DMatrix::from(z.qr().q());
        q = next;
        if resid / scale < tol {
            break;
        }
    }
    Ok(q)
}
