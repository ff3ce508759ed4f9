//! Small dense linear-algebra helpers: orthonormalization, principal
//! angles, and a log-scaled SVD of matrix products.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Modified Gram–Schmidt in column order. Fails with `RankCollapse` when a
/// column drops below `tol` after projection.
pub fn orthonormalize_mgs(mut m: DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let k = m.ncols();
    for j in 0..k {
        for i in 0..j {
            let qi = m.column(i).clone_owned();
            let proj = qi.dot(&m.column(j));
            let mut col = m.column_mut(j);
            col.axpy(-proj, &qi, 1.0);
        }
        let norm = m.column(j).norm();
        if norm <= tol {
            return Err(Error::RankCollapse { column: j });
        }
        m.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(m)
}

/// Orients each column so that its last significant component is positive.
///
/// This fixes the sign freedom of SVD-derived basis vectors in a scale-free,
/// deterministic way; it only matters when no previous basis is available to
/// align against.
pub fn canonicalize_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let max = col.amax();
        if max == 0.0 {
            continue;
        }
        let mut pivot = 0.0;
        for i in (0..col.nrows()).rev() {
            if col[i].abs() > 1e-12 * max {
                pivot = col[i];
                break;
            }
        }
        if pivot < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
    m
}

/// Cosines of the principal angles between the spans of two orthonormal
/// bases, sorted descending (largest cosine = smallest angle first).
pub fn principal_angle_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let overlap = a.transpose() * b;
    let mut cos: Vec<f64> = overlap
        .svd(false, false)
        .singular_values
        .iter()
        .map(|s| s.min(1.0))
        .collect();
    cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
    cos
}

/// Largest principal angle (radians) between two subspaces of equal dimension.
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let cos = principal_angle_cosines(a, b);
    cos.last().map(|c| c.acos()).unwrap_or(0.0)
}

/// Principal vector in the span of `a` attaining the smallest principal
/// angle against the span of `b`. Returns (unit vector, angle in radians).
pub fn closest_principal_vector(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let overlap = a.transpose() * b;
    let svd = overlap.svd(true, false);
    let u = svd.u.as_ref().expect("svd with u requested");
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > best_s {
            best_s = *s;
            best = i;
        }
    }
    let dir = a * u.column(best);
    let angle = best_s.min(1.0).acos();
    (dir.normalize(), angle)
}

/// Log-scaled singular value decomposition of a matrix product.
///
/// Accumulates `F_m · … · F_1` (factors applied oldest first) as
/// `U · diag(exp(log_sv)) · Vᵀ`, rescaling after every factor so that no
/// intermediate overflows even when the product itself would.
#[derive(Debug, Clone)]
pub struct ProductSvd {
    pub u: DMatrix<f64>,
    /// Natural logarithms of the singular values, descending.
    pub log_sv: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl ProductSvd {
    pub fn identity(dim: usize) -> Self {
        ProductSvd {
            u: DMatrix::identity(dim, dim),
            log_sv: vec![0.0; dim],
            v: DMatrix::identity(dim, dim),
        }
    }

    /// Left-multiplies the accumulated product by `factor`.
    pub fn push_left(&mut self, factor: &DMatrix<f64>) {
        let dim = self.log_sv.len();
        let shift = self.log_sv[0];
        let mut scaled = factor * &self.u;
        for j in 0..dim {
            let s = (self.log_sv[j] - shift).exp();
            scaled.column_mut(j).scale_mut(s);
        }
        let svd = scaled.svd(true, true);
        let u = svd.u.expect("svd u");
        let vt = svd.v_t.expect("svd v_t");
        // nalgebra returns singular values unsorted in general; sort descending.
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
        });
        let mut new_u = DMatrix::zeros(dim, dim);
        let mut new_w = DMatrix::zeros(dim, dim);
        let mut new_log = vec![0.0; dim];
        for (pos, &idx) in order.iter().enumerate() {
            new_u.set_column(pos, &u.column(idx));
            new_w.set_column(pos, &vt.row(idx).transpose());
            let s = svd.singular_values[idx];
            new_log[pos] = if s > 0.0 { s.ln() + shift } else { f64::NEG_INFINITY };
        }
        self.u = new_u;
        self.v = &self.v * new_w;
        self.log_sv = new_log;
    }

    /// Reconstructs the dense product, failing on overflow.
    pub fn dense(&self) -> Option<DMatrix<f64>> {
        if self.log_sv[0] > 700.0 {
            return None;
        }
        let dim = self.log_sv.len();
        let mut scaled = self.u.clone();
        for j in 0..dim {
            let s = if self.log_sv[j] == f64::NEG_INFINITY {
                0.0
            } else {
                self.log_sv[j].exp()
            };
            scaled.column_mut(j).scale_mut(s);
        }
        Some(scaled * self.v.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_matrix(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn mgs_produces_orthonormal_columns() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 4);
        let q = orthonormalize_mgs(m, 1e-12).unwrap();
        let gram = q.transpose() * &q;
        assert_relative_eq!(gram, DMatrix::identity(4, 4), epsilon = 1e-12);
    }

    #[test]
    fn mgs_detects_rank_collapse() {
        let mut m = DMatrix::zeros(3, 2);
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 1.0; // second column parallel to the first
        match orthonormalize_mgs(m, 1e-12) {
            Err(Error::RankCollapse { column: 1 }) => {}
            other => panic!("expected rank collapse, got {other:?}"),
        }
    }

    #[test]
    fn product_svd_matches_dense_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d = 3;
        let factors: Vec<_> = (0..5).map(|_| random_matrix(&mut rng, d)).collect();
        let mut acc = ProductSvd::identity(d);
        let mut dense = DMatrix::identity(d, d);
        for f in &factors {
            acc.push_left(f);
            dense = f * dense;
        }
        let rebuilt = acc.dense().unwrap();
        assert_relative_eq!(rebuilt, dense, epsilon = 1e-10);
        // singular values descending
        for w in acc.log_sv.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn product_svd_survives_would_be_overflow() {
        // Product of 50 copies of diag(e^20, e^-20): raw entries ~ e^1000.
        let f = DMatrix::from_diagonal(&DVector::from_vec(vec![20f64.exp(), (-20f64).exp()]));
        let mut acc = ProductSvd::identity(2);
        for _ in 0..50 {
            acc.push_left(&f);
        }
        assert_relative_eq!(acc.log_sv[0], 1000.0, epsilon = 1e-6);
        // the tiny direction saturates once the spread exceeds f64 range,
        // but its right singular vector stays pinned as the complement
        assert!(acc.log_sv[1] <= -700.0);
        assert_relative_eq!(acc.v.column(0)[0].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(acc.v.column(1)[1].abs(), 1.0, epsilon = 1e-12);
        assert!(acc.dense().is_none());
    }

    #[test]
    fn product_svd_tracks_moderate_spread_exactly() {
        let f = DMatrix::from_diagonal(&DVector::from_vec(vec![2f64.exp(), (-2f64).exp()]));
        let mut acc = ProductSvd::identity(2);
        for _ in 0..10 {
            acc.push_left(&f);
        }
        assert_relative_eq!(acc.log_sv[0], 20.0, epsilon = 1e-10);
        assert_relative_eq!(acc.log_sv[1], -20.0, epsilon = 1e-10);
    }

    #[test]
    fn principal_angles_between_rotated_planes() {
        let a = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
        ]);
        let theta: f64 = 0.3;
        let b = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, theta.cos(), theta.sin()]),
        ]);
        let angle = subspace_angle(&a, &b);
        assert_relative_eq!(angle, theta, epsilon = 1e-12);
        let (dir, smallest) = closest_principal_vector(&a, &b);
        assert_relative_eq!(smallest, 0.0, epsilon = 1e-7);
        assert_relative_eq!(dir[0].abs(), 1.0, epsilon = 1e-10);
    }
}
