//! Closed-form matting Laplacian and the regularized solve used to refine a
//! rough transmittance map.
//!
//! For every 3x3 window `w_k` lying fully inside the guide image, with mean
//! color `mu_k` and color covariance `S_k`,
//!
//! ```text
//! L(i,j) += delta_ij - (1 + (I_i - mu_k)^T (S_k + eps/9 * Id)^-1 (I_j - mu_k)) / 9
//! ```
//!
//! for all `i, j` in `w_k`. Two pixels share a window only if they are at
//! most two apart on both axes, so each row has at most 25 entries.

use rayon::prelude::*;

use crate::error::{DefogError, Result};
use crate::image::{Image, ScalarMap};

const WINDOW: usize = 9;
const REACH: usize = 2;
const SLOTS: usize = (2 * REACH + 1) * (2 * REACH + 1);

/// Symmetric sparse matrix in compressed sparse row layout. Both triangles
/// are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from CSR arrays. Column indices within a row must be strictly
    /// increasing.
    pub fn from_csr(n: usize, row_offsets: Vec<usize>, col_indices: Vec<usize>, values: Vec<f64>) -> Result<SparseSymMatrix> {
        if row_offsets.len() != n + 1
            || row_offsets[0] != 0
            || row_offsets[n] != col_indices.len()
            || col_indices.len() != values.len()
        {
            return Err(DefogError::InvalidParameter("inconsistent CSR arrays".into()));
        }
        for r in 0..n {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.windows(2).any(|p| p[0] >= p[1]) || cols.iter().any(|&c| c >= n) {
                return Err(DefogError::InvalidParameter(format!("bad column indices in row {r}")));
            }
        }
        Ok(SparseSymMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    /// Entry lookup; zero when not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let (cols, vals) = self.row(r);
            *o = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// Largest `|A(i,j) - A(j,i)|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }
}

/// Window statistics: mean color and the Cholesky factor of the regularized
/// covariance.
#[derive(Clone, Copy)]
struct WindowStats {
    mean: [f64; 3],
    chol: [[f64; 3]; 3],
}

impl WindowStats {
    /// `L^-1 (c - mean)`. Affinities are dot products of these, which stays
    /// positive semi-definite where an explicit inverse of a near-singular
    /// covariance does not.
    #[inline]
    fn whiten(&self, c: [f64; 3]) -> [f64; 3] {
        let l = &self.chol;
        let d = [c[0] - self.mean[0], c[1] - self.mean[1], c[2] - self.mean[2]];
        let y0 = d[0] / l[0][0];
        let y1 = (d[1] - l[1][0] * y0) / l[1][1];
        let y2 = (d[2] - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
        [y0, y1, y2]
    }
}

/// Lower Cholesky factor of a symmetric positive definite 3x3 matrix.
fn cholesky3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..=r {
            let s: f64 = m[r][c] - (0..c).map(|k| l[r][k] * l[c][k]).sum::<f64>();
            l[r][c] = if r == c { s.max(f64::MIN_POSITIVE).sqrt() } else { s / l[c][c] };
        }
    }
    l
}

fn window_stats(guide: &Image, cx: usize, cy: usize, eps: f64) -> WindowStats {
    let mut px = [[0.0; 3]; WINDOW];
    let mut k = 0;
    for y in cy - 1..=cy + 1 {
        for x in cx - 1..=cx + 1 {
            px[k] = guide.pixel(x, y);
            k += 1;
        }
    }
    let mut mean = [0.0; 3];
    for p in &px {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    for m in mean.iter_mut() {
        *m /= WINDOW as f64;
    }
    let mut cov = [[0.0; 3]; 3];
    for p in &px {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..=r {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    let reg = eps / WINDOW as f64;
    for r in 0..3 {
        for c in 0..=r {
            cov[r][c] /= WINDOW as f64;
        }
        cov[r][r] += reg;
    }
    WindowStats {
        mean,
        chol: cholesky3(cov),
    }
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Builds the matting Laplacian of `guide` with regularizer `eps`.
pub fn build_matting_laplacian(guide: &Image, eps: f64) -> Result<SparseSymMatrix> {
    let (w, h) = guide.dims();
    if w < 3 || h < 3 {
        return Err(DefogError::ImageTooSmall { width: w, height: h });
    }
    if !(eps > 0.0) {
        return Err(DefogError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    // windows indexed by their center, (w-2) x (h-2) of them
    let ww = w - 2;
    let stats: Vec<WindowStats> = (0..ww * (h - 2))
        .into_par_iter()
        .map(|k| window_stats(guide, k % ww + 1, k / ww + 1, eps))
        .collect();

    let rows: Vec<([f64; SLOTS], [bool; SLOTS])> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (ix, iy) = (i % w, i / w);
            let ci = guide.pixel(ix, iy);
            let mut acc = [0.0; SLOTS];
            let mut touched = [false; SLOTS];
            // window centers within one pixel of i, kept inside the border
            let cy0 = iy.saturating_sub(1).max(1);
            let cy1 = (iy + 1).min(h - 2);
            let cx0 = ix.saturating_sub(1).max(1);
            let cx1 = (ix + 1).min(w - 2);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    let st = &stats[(cy - 1) * ww + (cx - 1)];
                    let a = st.whiten(ci);
                    for jy in cy - 1..=cy + 1 {
                        for jx in cx - 1..=cx + 1 {
                            let b = st.whiten(guide.pixel(jx, jy));
                            let affinity = dot3(&a, &b);
                            let delta = if jx == ix && jy == iy { 1.0 } else { 0.0 };
                            let slot = (jy + REACH - iy) * (2 * REACH + 1) + (jx + REACH - ix);
                            acc[slot] += delta - (1.0 + affinity) / WINDOW as f64;
                            touched[slot] = true;
                        }
                    }
                }
            }
            (acc, touched)
        })
        .collect();

    let mut row_offsets = Vec::with_capacity(w * h + 1);
    let mut col_indices = Vec::with_capacity(w * h * SLOTS);
    let mut values = Vec::with_capacity(w * h * SLOTS);
    row_offsets.push(0);
    for (i, (acc, touched)) in rows.iter().enumerate() {
        let (ix, iy) = (i % w, i / w);
        for slot in 0..SLOTS {
            if touched[slot] {
                let jx = ix + slot % (2 * REACH + 1) - REACH;
                let jy = iy + slot / (2 * REACH + 1) - REACH;
                col_indices.push(jy * w + jx);
                values.push(acc[slot]);
            }
        }
        row_offsets.push(col_indices.len());
    }
    Ok(SparseSymMatrix {
        n: w * h,
        row_offsets,
        col_indices,
        values,
    })
}

/// Conjugate-gradient settings for [`refine_transmittance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual `|b - Ax| / |b|` at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `(L + lambda * Id) t = lambda * t_rough` with Jacobi-preconditioned
/// conjugate gradients started from `t_rough`, then clamps to `[0, 1]`.
///
/// Non-convergence is not an error: the best iterate is returned together
/// with a report whose `converged` flag is false.
pub fn refine_transmittance(
    laplacian: &SparseSymMatrix,
    t_rough: &ScalarMap,
    lambda: f64,
    options: SolverOptions,
) -> Result<(ScalarMap, SolveReport)> {
    let n = laplacian.n();
    if n != t_rough.values().len() {
        return Err(DefogError::InvalidParameter(format!(
            "Laplacian dimension {n} does not match {} map pixels",
            t_rough.values().len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(DefogError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let rhs: Vec<f64> = t_rough.values().iter().map(|&v| lambda * v).collect();
    let inv_diag: Vec<f64> = laplacian.diagonal().iter().map(|&d| 1.0 / (d + lambda)).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        laplacian.mul_vec_into(x, out);
        out.par_iter_mut().zip(x.par_iter()).for_each(|(o, &xi)| *o += lambda * xi);
    };
    let (x, report) = pcg(apply, &rhs, t_rough.values().to_vec(), &inv_diag, options);
    let (w, h) = t_rough.dims();
    Ok((ScalarMap::new(w, h, x)?.clamp01(), report))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn pcg<F>(apply: F, rhs: &[f64], mut x: Vec<f64>, inv_diag: &[f64], options: SolverOptions) -> (Vec<f64>, SolveReport)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let mut scratch = vec![0.0; n];
    apply(&x, &mut scratch);
    let mut r: Vec<f64> = rhs.iter().zip(&scratch).map(|(b, ax)| b - ax).collect();

    let rhs_norm = norm(rhs);
    // zero right-hand side: measure absolute residual instead
    let scale = if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
    let initial_residual = norm(&r) / scale;
    let mut report = SolveReport {
        iterations: 0,
        initial_residual,
        relative_residual: initial_residual,
        converged: initial_residual <= options.tolerance,
    };
    if report.converged {
        return (x, report);
    }

    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, m)| ri * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    let mut best_x = x.clone();
    let mut best_res = initial_residual;

    for it in 1..=options.max_iterations {
        apply(&p, &mut scratch);
        let pap = dot(&p, &scratch);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * scratch[k];
        }
        let res = norm(&r) / scale;
        report.iterations = it;
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= options.tolerance {
            report.relative_residual = res;
            report.converged = true;
            return (x, report);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    report.relative_residual = best_res;
    (best_x, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_spd_3x3() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let l = cholesky3(m);
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| l[r][k] * l[c][k]).sum();
                assert!((v - m[r][c]).abs() < 1e-14);
            }
        }
        assert_eq!(l[0][1], 0.0);
    }

    #[test]
    fn constant_3x3_guide() {
        let guide = Image::filled(3, 3, [0.4, 0.5, 0.6]).unwrap();
        let lap = build_matting_laplacian(&guide, 1e-7).unwrap();
        assert_eq!(lap.n(), 9);
        assert_eq!(lap.nnz(), 81);
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 - 1.0 / 9.0 } else { -1.0 / 9.0 };
                assert!((lap.get(i, j) - want).abs() < 1e-12);
            }
        }
        assert!(lap.mul_vec(&[1.0; 9]).iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn rows_hold_at_most_25_entries() {
        let guide = Image::from_fn(9, 7, |x, y| [x as f64 / 9.0, y as f64 / 7.0, ((x * y) % 5) as f64 / 5.0]).unwrap();
        let lap = build_matting_laplacian(&guide, 1e-7).unwrap();
        for r in 0..lap.n() {
            assert!(lap.row(r).0.len() <= 25);
        }
        // interior pixel sees the full 5x5 neighbourhood
        assert_eq!(lap.row(3 * 9 + 4).0.len(), 25);
        // a corner pixel belongs to exactly one window
        assert_eq!(lap.row(0).0.len(), 9);
    }

    #[test]
    fn too_small_guide() {
        let guide = Image::filled(2, 5, [0.5; 3]).unwrap();
        assert!(matches!(
            build_matting_laplacian(&guide, 1e-7),
            Err(DefogError::ImageTooSmall { .. })
        ));
        let guide = Image::filled(3, 3, [0.5; 3]).unwrap();
        assert!(build_matting_laplacian(&guide, 0.0).is_err());
    }

    #[test]
    fn constant_rough_map_is_fixed_point() {
        let guide = Image::from_fn(6, 6, |x, y| [x as f64 / 6.0, y as f64 / 6.0, 0.3]).unwrap();
        let lap = build_matting_laplacian(&guide, 1e-7).unwrap();
        let rough = ScalarMap::filled(6, 6, 0.37).unwrap();
        let (t, report) = refine_transmittance(&lap, &rough, 1e-4, SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert!(t.values().iter().all(|&v| (v - 0.37).abs() < 1e-10));
    }

    #[test]
    fn huge_lambda_keeps_rough_map() {
        let guide = Image::from_fn(8, 8, |x, y| [((x * 7 + y * 3) % 11) as f64 / 11.0, 0.5, y as f64 / 8.0]).unwrap();
        let lap = build_matting_laplacian(&guide, 1e-7).unwrap();
        let rough = ScalarMap::from_fn(8, 8, |x, y| ((x + 2 * y) % 9) as f64 / 9.0).unwrap();
        let (t, _) = refine_transmittance(&lap, &rough, 1e6, SolverOptions::default()).unwrap();
        for (a, b) in t.values().iter().zip(rough.values()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let guide = Image::filled(4, 4, [0.5; 3]).unwrap();
        let lap = build_matting_laplacian(&guide, 1e-7).unwrap();
        let rough = ScalarMap::filled(5, 4, 0.5).unwrap();
        assert!(refine_transmittance(&lap, &rough, 1e-4, SolverOptions::default()).is_err());
        let rough = ScalarMap::filled(4, 4, 0.5).unwrap();
        assert!(refine_transmittance(&lap, &rough, 0.0, SolverOptions::default()).is_err());
    }

    #[test]
    fn csr_validation() {
        assert!(SparseSymMatrix::from_csr(2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
        assert!(SparseSymMatrix::from_csr(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseSymMatrix::from_csr(2, vec![0, 1], vec![0], vec![1.0]).is_err());
    }
}
