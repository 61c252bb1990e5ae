//! Symmetric banded matrices: selected eigenpairs and shifted solves.
//!
//! Eigenvalues come from an orthogonal reduction to tridiagonal form (Givens
//! rotations with bulge chasing) followed by Sturm-sequence bisection, one
//! independent bisection per eigenvalue index. Eigenvectors come from inverse
//! iteration on the original band with a partially pivoted band LU.

use crate::error::{Error, Result};
use crate::sweep;

/// Symmetric matrix with `A(i, j) = 0` for `|i - j| > bandwidth`, stored by
/// lower diagonals: `diag[d][i] = A(i + d, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bandwidth: usize,
    diag: Vec<Vec<f64>>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let diag = (0..=bandwidth).map(|d| vec![0.0; n.saturating_sub(d)]).collect();
        Self { n, bandwidth, diag }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bandwidth {
            0.0
        } else {
            self.diag[d][lo]
        }
    }

    /// Sets `A(i, j)` and `A(j, i)`. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(d <= self.bandwidth, "({i}, {j}) lies outside the band");
        self.diag[d][lo] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.diag[0][i] * x[i];
        }
        for d in 1..=self.bandwidth {
            for (lo, &a) in self.diag[d].iter().enumerate() {
                y[lo + d] += a * x[lo];
                y[lo] += a * x[lo + d];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.bandwidth);
            let hi = (i + self.bandwidth).min(self.n - 1);
            for (j, v) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *v = self.get(i, j);
            }
        }
        m
    }

    /// Orthogonally similar tridiagonal matrix `(diagonal, off-diagonal)`.
    pub fn tridiagonalize(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        if self.bandwidth <= 1 || n < 3 {
            let d = self.diag[0].clone();
            let e = if self.bandwidth == 0 { vec![0.0; n.saturating_sub(1)] } else { self.diag[1].clone() };
            return (d, e);
        }
        // Work storage with one extra diagonal for the bulge.
        let w = self.bandwidth + 1;
        let mut a = BulgeBand::new(n, w);
        for d in 0..=self.bandwidth {
            a.diag[d][..self.diag[d].len()].copy_from_slice(&self.diag[d]);
        }
        for b in (2..=self.bandwidth).rev() {
            for j in 0..n.saturating_sub(b) {
                // zero A(j + b, j), then chase the bulge down the band
                let (mut row, mut col) = (j + b, j);
                loop {
                    let x = a.get(row - 1, col);
                    let y = a.get(row, col);
                    if y != 0.0 {
                        let r = x.hypot(y);
                        let (c, s) = (x / r, y / r);
                        a.rotate(row - 1, c, s);
                        a.set(row, col, 0.0);
                        a.set(row - 1, col, r);
                    }
                    if row + b >= n {
                        break;
                    }
                    col = row - 1;
                    row += b;
                }
            }
        }
        (a.diag[0].clone(), a.diag[1].clone())
    }
}

/// Band storage that tolerates transient entries one diagonal past the band.
struct BulgeBand {
    n: usize,
    w: usize,
    diag: Vec<Vec<f64>>,
}

impl BulgeBand {
    fn new(n: usize, w: usize) -> Self {
        let diag = (0..=w).map(|d| vec![0.0; n.saturating_sub(d)]).collect();
        Self { n, w, diag }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.w {
            0.0
        } else {
            self.diag[d][lo]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d <= self.w {
            self.diag[d][lo] = v;
        } else {
            debug_assert!(v == 0.0, "write outside the working band");
        }
    }

    /// `A <- G A G^T` with `G` the rotation `[c s; -s c]` in rows/cols `(p, p + 1)`.
    fn rotate(&mut self, p: usize, c: f64, s: f64) {
        let q = p + 1;
        let lo = p.saturating_sub(self.w);
        let hi = (q + self.w).min(self.n - 1);
        for k in lo..=hi {
            if k == p || k == q {
                continue;
            }
            let x = self.get(k, p);
            let y = self.get(k, q);
            if x == 0.0 && y == 0.0 {
                continue;
            }
            self.set(k, p, c * x + s * y);
            self.set(k, q, -s * x + c * y);
        }
        let app = self.get(p, p);
        let aqq = self.get(q, q);
        let apq = self.get(p, q);
        self.set(p, p, c * c * app + 2.0 * c * s * apq + s * s * aqq);
        self.set(q, q, s * s * app - 2.0 * c * s * apq + c * c * aqq);
        self.set(p, q, c * s * (aqq - app) + (c * c - s * s) * apq);
    }
}

/// Number of eigenvalues of the tridiagonal `(d, e)` strictly below `x`.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        if q == 0.0 {
            q = tiny;
        }
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let pad = 1e-12 * (hi - lo).abs().max(1.0);
    (lo - pad, hi + pad)
}

/// The `k`-th smallest eigenvalue (0-based) of the tridiagonal `(d, e)`.
pub fn tridiagonal_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let (mut lo, mut hi) = gershgorin(d, e);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `count` smallest eigenvalues, ascending.
pub fn lowest_eigenvalues(d: &[f64], e: &[f64], count: usize) -> Vec<f64> {
    let idx: Vec<usize> = (0..count.min(d.len())).collect();
    sweep::map(&idx, |&k| tridiagonal_eigenvalue(d, e, k))
}

/// Partially pivoted LU of a band matrix `A - sigma I`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    /// Row `i` of `U`, columns `i ..= i + 2 kl`.
    upper: Vec<Vec<f64>>,
    /// Multipliers of step `k` for rows `k + 1 ..= k + kl`.
    lower: Vec<Vec<f64>>,
    pivot: Vec<usize>,
}

impl BandLu {
    pub fn new(a: &SymBand, sigma: f64) -> Result<Self> {
        let n = a.n;
        let kl = a.bandwidth;
        let width = 2 * kl + 1;
        // rows[i][c] holds column i - kl + c
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = vec![0.0; width + kl];
                for j in i.saturating_sub(kl)..=(i + kl).min(n - 1) {
                    let v = a.get(i, j) - if i == j { sigma } else { 0.0 };
                    r[j + kl - i] = v;
                }
                r
            })
            .collect();
        let col = |i: usize, j: usize| j + kl - i;
        let scale = rows.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut lower = vec![Vec::with_capacity(kl); n];
        let mut pivot = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = rows[k][col(k, k)].abs();
            for i in k + 1..=last {
                let v = rows[i][col(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivot[k] = p;
            let right = (k + 2 * kl).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (ck, cp) = (col(k, j), col(p, j));
                    let t = rows[k][ck];
                    rows[k][ck] = rows[p][cp];
                    rows[p][cp] = t;
                }
            }
            if rows[k][col(k, k)] == 0.0 {
                rows[k][col(k, k)] = f64::EPSILON * scale;
            }
            let piv = rows[k][col(k, k)];
            for i in k + 1..=last {
                let m = rows[i][col(i, k)] / piv;
                lower[k].push(m);
                rows[i][col(i, k)] = 0.0;
                if m != 0.0 {
                    for j in k + 1..=right {
                        let u = rows[k][col(k, j)];
                        rows[i][col(i, j)] -= m * u;
                    }
                }
            }
        }
        let upper = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| (0..=2 * kl).map(|c| r[kl + c]).take(n - i).collect())
            .collect();
        if !pivot.iter().all(|&p| p < n) {
            return Err(Error::NoConvergence("band LU failed".into()));
        }
        Ok(Self { n, upper, lower, pivot })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for k in 0..self.n {
            let p = self.pivot[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for (off, m) in self.lower[k].iter().enumerate() {
                x[k + 1 + off] -= m * xk;
            }
        }
        for i in (0..self.n).rev() {
            let row = &self.upper[i];
            let mut s = x[i];
            for (c, u) in row.iter().enumerate().skip(1) {
                s -= u * x[i + c];
            }
            x[i] = s / row[0];
        }
        x
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Unit eigenvector for an accurately known eigenvalue `lambda`.
pub fn eigenvector(a: &SymBand, lambda: f64) -> Result<Vec<f64>> {
    let n = a.n;
    let shift = lambda + 1e-13 * lambda.abs().max(1.0);
    let lu = BandLu::new(a, shift)?;
    // deterministic, generic start
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    normalize(&mut v);
    for _ in 0..4 {
        v = lu.solve(&v);
        if normalize(&mut v) == 0.0 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NoConvergence("inverse iteration broke down".into()));
        }
    }
    Ok(v)
}

/// Lowest `count` eigenpairs, ascending.
pub fn lowest_eigenpairs(a: &SymBand, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let (d, e) = a.tridiagonalize();
    let values = lowest_eigenvalues(&d, &e, count);
    sweep::map(&values, |&lam| eigenvector(a, lam).map(|v| (lam, v)))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;

    fn random_band(n: usize, b: usize, seed: u64) -> SymBand {
        let mut a = SymBand::zeros(n, b);
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..n {
            for d in 0..=b {
                if i + d < n {
                    a.set(i + d, i, next());
                }
            }
        }
        a
    }

    fn dense_eigs(a: &SymBand) -> Vec<f64> {
        let n = a.n();
        let d = a.to_dense();
        let m = DMatrix::from_fn(n, n, |i, j| d[i][j]);
        let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn tridiagonal_reduction_preserves_spectrum() {
        for &(n, b) in &[(40, 3), (57, 2), (30, 5), (8, 3)] {
            let a = random_band(n, b, n as u64);
            let (d, e) = a.tridiagonalize();
            let mine = lowest_eigenvalues(&d, &e, n);
            let reference = dense_eigs(&a);
            for (x, y) in mine.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn band_lu_solves() {
        let a = random_band(60, 3, 9);
        let x: Vec<f64> = (0..60).map(|i| (i as f64).cos()).collect();
        let sigma = 0.37;
        let mut b = a.matvec(&x);
        for (bi, xi) in b.iter_mut().zip(&x) {
            *bi -= sigma * xi;
        }
        let lu = BandLu::new(&a, sigma).unwrap();
        let y = lu.solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn eigenpairs_satisfy_the_equation() {
        let a = random_band(80, 3, 4);
        for (lam, v) in lowest_eigenpairs(&a, 5).unwrap() {
            let av = a.matvec(&v);
            let res = av.iter().zip(&v).map(|(x, y)| (x - lam * y).abs()).fold(0.0, f64::max);
            assert!(res < 1e-10, "residual {res}");
        }
    }

    #[test]
    fn laplacian_spectrum_is_exact() {
        let n = 50;
        let mut a = SymBand::zeros(n, 1);
        for i in 0..n {
            a.set(i, i, 2.0);
            if i + 1 < n {
                a.set(i + 1, i, -1.0);
            }
        }
        let (d, e) = a.tridiagonalize();
        let vals = lowest_eigenvalues(&d, &e, 3);
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13);
        }
        assert_eq!(sturm_count(&d, &e, 0.0), 0);
        assert_eq!(sturm_count(&d, &e, 5.0), n);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sturm_counts_match_dense(seed in 0u64..1000, x in -1.0_f64..1.0) {
            let a = random_band(35, 3, seed);
            let (d, e) = a.tridiagonalize();
            let dense = dense_eigs(&a);
            let expected = dense.iter().filter(|&&v| v < x).count();
            prop_assume!(dense.iter().all(|v| (v - x).abs() > 1e-9));
            prop_assert_eq!(sturm_count(&d, &e, x), expected);
        }
    }
}
