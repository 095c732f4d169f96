//! Ground-truth low-rank matrices and phaseless measurement sets.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{cnormal, sample_cnormal, CMatrix, CVector, RMatrix, SeededRng, C64};

/// A complex `N x M` matrix, either a ground truth or an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub x: CMatrix,
    /// Known rank, when the matrix was built as a product of rank-`r` factors.
    pub rank_hint: Option<usize>,
}

impl SignalMatrix {
    pub fn new(x: CMatrix, rank_hint: Option<usize>) -> Self {
        SignalMatrix { x, rank_hint }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        SignalMatrix::new(CMatrix::zeros(n, m), None)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, m: usize) -> CVector {
        self.x.column(m).into_owned()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.x.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

/// Per-column sensing matrices `A_m` (`P x N`, rows are `a_{p,m}^H`) and the
/// magnitudes `y` (`P x M`).
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    a: Vec<CMatrix>,
    y: RMatrix,
    beta_true: Option<f64>,
    grams: OnceLock<Vec<CMatrix>>,
}

impl PartialEq for MeasurementSet {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.y == other.y && self.beta_true == other.beta_true
    }
}

impl MeasurementSet {
    pub fn new(a: Vec<CMatrix>, y: RMatrix, beta_true: Option<f64>) -> Result<Self> {
        let m = a.len();
        if m == 0 {
            return Err(Error::DimensionMismatch("no measurement columns".into()));
        }
        let (p, n) = a[0].shape();
        if p == 0 || n == 0 {
            return Err(Error::DimensionMismatch("empty sensing matrix".into()));
        }
        if let Some((idx, bad)) = a.iter().enumerate().find(|(_, am)| am.shape() != (p, n)) {
            return Err(Error::DimensionMismatch(format!(
                "A_{idx} is {}x{}, expected {p}x{n}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        if y.shape() != (p, m) {
            return Err(Error::DimensionMismatch(format!(
                "y is {}x{}, expected {p}x{m}",
                y.nrows(),
                y.ncols()
            )));
        }
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DimensionMismatch(
                "magnitudes must be finite and nonnegative".into(),
            ));
        }
        if let Some(beta) = beta_true {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidConfig(format!("beta_true must be positive, got {beta}")));
            }
        }
        Ok(MeasurementSet {
            a,
            y,
            beta_true,
            grams: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.a[0].ncols()
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn p(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn a(&self, m: usize) -> &CMatrix {
        &self.a[m]
    }

    pub fn sensing(&self) -> &[CMatrix] {
        &self.a
    }

    pub fn y(&self) -> &RMatrix {
        &self.y
    }

    pub fn beta_true(&self) -> Option<f64> {
        self.beta_true
    }

    /// `y_m` as a complex vector with zero phase.
    pub fn y_column(&self, m: usize) -> CVector {
        CVector::from_iterator(self.p(), self.y.column(m).iter().map(|&v| C64::new(v, 0.0)))
    }

    /// `A_m^H A_m`, computed once per set.
    pub fn gram(&self, m: usize) -> &CMatrix {
        &self.grams.get_or_init(|| self.a.iter().map(|am| am.ad_mul(am)).collect())[m]
    }

    /// New set with columns reordered so that output column `k` is input column `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let a = order.iter().map(|&k| self.a[k].clone()).collect();
        let mut y = RMatrix::zeros(self.p(), order.len());
        for (dst, &src) in order.iter().enumerate() {
            y.set_column(dst, &self.y.column(src));
        }
        MeasurementSet::new(a, y, self.beta_true)
    }
}

/// `X = E F` with `E` (`n x r`) and `F` (`r x m`) i.i.d. CN(0, 1).
pub fn gen_lowrank(rng: &mut SeededRng, n: usize, m: usize, r: usize) -> Result<SignalMatrix> {
    let max = n.min(m);
    if r == 0 || r > max {
        return Err(Error::InvalidRank { rank: r, max });
    }
    let e = sample_cnormal(rng, n, r);
    let f = sample_cnormal(rng, r, m);
    Ok(SignalMatrix::new(e * f, Some(r)))
}

/// Draws `A_m` i.i.d. CN(0, 1) per column and records `y_{p,m} = |a_{p,m}^H x_m + w_{p,m}|`,
/// with `w ~ CN(0, 1/beta_true)` or no noise at all.
pub fn gen_measurements(
    rng: &mut SeededRng,
    x: &SignalMatrix,
    p: usize,
    beta_true: Option<f64>,
) -> Result<MeasurementSet> {
    if p == 0 {
        return Err(Error::InvalidConfig("P must be at least 1".into()));
    }
    let (n, m) = x.x.shape();
    let noise_sd = match beta_true {
        Some(beta) if beta > 0.0 && beta.is_finite() => Some(beta.sqrt().recip()),
        Some(beta) => {
            return Err(Error::InvalidConfig(format!("beta_true must be positive, got {beta}")))
        }
        None => None,
    };
    let mut a = Vec::with_capacity(m);
    let mut y = RMatrix::zeros(p, m);
    for col in 0..m {
        let am = sample_cnormal(rng, p, n);
        let mut clean = &am * x.x.column(col);
        if let Some(sd) = noise_sd {
            for v in clean.iter_mut() {
                *v += cnormal(rng) * sd;
            }
        }
        for (row, v) in clean.iter().enumerate() {
            y[(row, col)] = v.norm();
        }
        a.push(am);
    }
    MeasurementSet::new(a, y, beta_true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowrank_has_the_requested_rank() {
        let mut rng = SeededRng::new(1);
        let x = gen_lowrank(&mut rng, 100, 100, 5).unwrap();
        assert_eq!(x.x.shape(), (100, 100));
        assert_eq!(x.rank_hint, Some(5));
        let sv = x.singular_values();
        for s in &sv[5..] {
            assert!(*s <= 1e-10 * sv[0], "{s} vs {}", sv[0]);
        }
        assert!(sv[4] > 1e-3 * sv[0]);
    }

    #[test]
    fn full_rank_when_r_is_min_dim() {
        let mut rng = SeededRng::new(2);
        let x = gen_lowrank(&mut rng, 5, 7, 5).unwrap();
        let sv = x.singular_values();
        assert!(sv[4] > 1e-6 * sv[0]);
    }

    #[test]
    fn rank_two_matches_its_svd_truncation() {
        let mut rng = SeededRng::new(3);
        let x = gen_lowrank(&mut rng, 6, 6, 2).unwrap();
        let svd = x.x.clone().svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut trunc = CMatrix::zeros(6, 6);
        for &k in &idx[..2] {
            trunc += u.column(k) * vt.row(k) * C64::new(svd.singular_values[k], 0.0);
        }
        assert!((trunc - &x.x).norm() <= 1e-10 * x.x.norm().max(1.0));
    }

    #[test]
    fn invalid_rank_is_rejected() {
        let mut rng = SeededRng::new(0);
        assert!(matches!(gen_lowrank(&mut rng, 4, 3, 0), Err(Error::InvalidRank { .. })));
        assert!(matches!(gen_lowrank(&mut rng, 4, 3, 4), Err(Error::InvalidRank { max: 3, .. })));
    }

    #[test]
    fn zero_signal_gives_zero_magnitudes() {
        let mut rng = SeededRng::new(4);
        let x = SignalMatrix::zeros(3, 2);
        let ms = gen_measurements(&mut rng, &x, 5, None).unwrap();
        assert!(ms.y().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_magnitudes_are_recomputable_bit_exactly() {
        let mut rng = SeededRng::new(5);
        let x = gen_lowrank(&mut rng, 4, 3, 2).unwrap();
        let ms = gen_measurements(&mut rng, &x, 7, None).unwrap();
        for m in 0..3 {
            let ax = ms.a(m) * x.x.column(m);
            for p in 0..7 {
                assert_eq!(ms.y()[(p, m)], ax[p].norm());
            }
        }
    }

    #[test]
    fn noiseless_measurements_scale_with_the_signal() {
        let mut rng = SeededRng::new(6);
        let x = gen_lowrank(&mut rng, 5, 4, 2).unwrap();
        let base = gen_measurements(&mut SeededRng::new(60), &x, 9, None).unwrap();
        for c in [C64::new(-2.0, 0.0), C64::new(0.0, 4.0), C64::new(0.25, 0.0)] {
            let scaled = SignalMatrix::new(&x.x * c, x.rank_hint);
            let ms = gen_measurements(&mut SeededRng::new(60), &scaled, 9, None).unwrap();
            assert_eq!(ms.y(), &(base.y() * c.norm()));
        }
    }

    #[test]
    fn noise_power_matches_precision() {
        let mut rng = SeededRng::new(7);
        let x = SignalMatrix::zeros(1, 100);
        let ms = gen_measurements(&mut rng, &x, 1000, Some(100.0)).unwrap();
        let mean_sq = ms.y().iter().map(|v| v * v).sum::<f64>() / ms.y().len() as f64;
        assert!((0.0095..=0.0105).contains(&mean_sq), "{mean_sq}");
    }

    #[test]
    fn dimensions_and_gram() {
        let mut rng = SeededRng::new(8);
        let x = gen_lowrank(&mut rng, 3, 2, 1).unwrap();
        let ms = gen_measurements(&mut rng, &x, 4, None).unwrap();
        assert_eq!((ms.n(), ms.m(), ms.p()), (3, 2, 4));
        let g = ms.gram(1);
        assert!((g - ms.a(1).adjoint() * ms.a(1)).norm() < 1e-12);
    }

    #[test]
    fn constructor_validates() {
        let a = vec![CMatrix::zeros(2, 3), CMatrix::zeros(2, 2)];
        assert!(MeasurementSet::new(a, RMatrix::zeros(2, 2), None).is_err());
        let a = vec![CMatrix::zeros(2, 3)];
        assert!(MeasurementSet::new(a.clone(), RMatrix::zeros(3, 1), None).is_err());
        let mut y = RMatrix::zeros(2, 1);
        y[(0, 0)] = -1.0;
        assert!(MeasurementSet::new(a, y, None).is_err());
    }
}
