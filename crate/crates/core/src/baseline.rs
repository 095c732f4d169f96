//! Alternating-minimization baseline over phases and low-rank factors `X = U B`.
//!
//! Each iteration minimizes `Σ_m ‖ỹ_m - A_m U b_m‖²` with `ỹ_m = e^{jθ_{·,m}} ⊙ y_m`
//! exactly over the phases, then over `B`, then over `U`, so the objective never
//! increases between sub-steps.

use crate::datagen::{MeasurementSet, SignalMatrix};
use crate::error::{Error, Result};
use crate::linalg::{top_eigpairs, CMatrix, CVector, HermitianPd, RMatrix, C64};
use crate::vem::{optimal_phase, relative_change, PhaseEstimate};

/// `X = U B` with orthonormal `U` (`N x r`) and `B` (`r x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: CMatrix,
    pub bmat: CMatrix,
}

impl FactorPair {
    /// `U` from the top-`r` left singular vectors of `X₀`, `B = U^H X₀`.
    pub fn from_estimate(x0: &SignalMatrix, r: usize) -> Result<Self> {
        let n = x0.n();
        if r == 0 || r > n {
            return Err(Error::InvalidRank { rank: r, max: n });
        }
        let gram = &x0.x * x0.x.adjoint();
        let u = top_eigpairs(&gram, r)?.vectors;
        let bmat = u.ad_mul(&x0.x);
        Ok(FactorPair { u, bmat })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn estimate(&self) -> SignalMatrix {
        SignalMatrix::new(&self.u * &self.bmat, Some(self.rank()))
    }

    /// `‖U^H U - I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rank();
        let g = self.u.ad_mul(&self.u) - CMatrix::identity(r, r);
        g.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `Σ_m ‖ỹ_m - A_m U b_m‖²`.
pub fn am_objective(ms: &MeasurementSet, phase: &PhaseEstimate, factors: &FactorPair) -> f64 {
    (0..ms.m())
        .map(|m| {
            let xm = &factors.u * factors.bmat.column(m);
            (phase.rotate(ms, m) - ms.a(m) * xm).norm_squared()
        })
        .sum()
}

/// `θ_{p,m} = arg(a_{p,m}^H U b_m)`.
pub fn am_phase_update(ms: &MeasurementSet, factors: &FactorPair) -> PhaseEstimate {
    let mut theta = RMatrix::zeros(ms.p(), ms.m());
    for m in 0..ms.m() {
        let proj = ms.a(m) * (&factors.u * factors.bmat.column(m));
        for (p, z) in proj.iter().enumerate() {
            theta[(p, m)] = optimal_phase(ms.y()[(p, m)], *z);
        }
    }
    PhaseEstimate { theta }
}

/// Output of [`am_b_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct BUpdate {
    pub bmat: CMatrix,
    /// Columns whose `A_m U` lost column rank; their `b_m` is the minimum-norm solution.
    pub deficient_columns: Vec<usize>,
}

fn lstsq(design: &CMatrix, rhs: &CVector) -> Result<(CVector, bool)> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * design.nrows().max(design.ncols()) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let solution = if smax == 0.0 {
        CVector::zeros(design.ncols())
    } else {
        svd.solve(rhs, eps).map_err(|e| Error::NumericalOverflow(e.into()))?
    };
    Ok((solution, rank < design.ncols()))
}

/// `b_m = argmin_b ‖ỹ_m - (A_m U) b‖²` for every column.
pub fn am_b_update(ms: &MeasurementSet, phase: &PhaseEstimate, u: &CMatrix) -> Result<BUpdate> {
    let r = u.ncols();
    let mut bmat = CMatrix::zeros(r, ms.m());
    let mut deficient_columns = Vec::new();
    for m in 0..ms.m() {
        let design = ms.a(m) * u;
        let (b, deficient) = lstsq(&design, &phase.rotate(ms, m))?;
        if deficient {
            deficient_columns.push(m);
        }
        bmat.set_column(m, &b);
    }
    Ok(BUpdate {
        bmat,
        deficient_columns,
    })
}

/// Normal equations of the `U` step:
/// `Σ_m (conj(b_m b_m^H) ⊗ A_m^H A_m) vec(U) = vec(Σ_m A_m^H ỹ_m b_m^H)`.
pub fn u_normal_equations(ms: &MeasurementSet, phase: &PhaseEstimate, bmat: &CMatrix) -> (CMatrix, CVector) {
    let (n, r) = (ms.n(), bmat.nrows());
    let mut lhs = CMatrix::zeros(n * r, n * r);
    let mut rhs = CMatrix::zeros(n, r);
    for m in 0..ms.m() {
        let b = bmat.column(m);
        let gram = ms.gram(m);
        for j in 0..r {
            for i in 0..r {
                let w = (b[i] * b[j].conj()).conj();
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let mut block = lhs.view_mut((i * n, j * n), (n, n));
                block.zip_apply(gram, |dst, g| *dst += w * g);
            }
        }
        let proj = ms.a(m).ad_mul(&phase.rotate(ms, m));
        rhs.ger(C64::new(1.0, 0.0), &proj, &b.conjugate(), C64::new(1.0, 0.0));
    }
    let rhs = CVector::from_column_slice(rhs.as_slice());
    (lhs, rhs)
}

/// `U = argmin_U Σ_m ‖ỹ_m - A_m U b_m‖²`, then re-orthonormalized by a QR step with
/// the triangular factor absorbed into `B` (the product `U B` is unchanged).
pub fn am_u_update(ms: &MeasurementSet, phase: &PhaseEstimate, bmat: &CMatrix) -> Result<FactorPair> {
    let (n, r) = (ms.n(), bmat.nrows());
    if bmat.ncols() != ms.m() {
        return Err(Error::DimensionMismatch(format!(
            "B has {} columns, expected {}",
            bmat.ncols(),
            ms.m()
        )));
    }
    let (lhs, rhs) = u_normal_equations(ms, phase, bmat);
    let factor = HermitianPd::from_hermitian_part(&lhs).cholesky()?;
    let vec_u = factor.solve(&rhs);
    let u_ls = CMatrix::from_column_slice(n, r, vec_u.as_slice());
    let qr = u_ls.qr();
    let (q, rfac) = qr.unpack();
    Ok(FactorPair {
        u: q,
        bmat: rfac * bmat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AmOptions {
    fn default() -> Self {
        AmOptions {
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

impl AmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmIterationLog {
    pub iteration: usize,
    /// Same column-change metric as the variational loop, on `U b_m`.
    pub change: f64,
    /// Objective after the phase, `B` and `U` sub-steps.
    pub objective: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct AmRun {
    pub estimate: SignalMatrix,
    pub factors: FactorPair,
    pub phase: PhaseEstimate,
    pub trace: Vec<AmIterationLog>,
    pub converged: bool,
    /// Set when any `B` step met a rank-deficient design.
    pub rank_deficient: bool,
}

fn columns(x: &SignalMatrix) -> Vec<CVector> {
    (0..x.m()).map(|m| x.column(m)).collect()
}

/// Alternates phase, `B` and `U` updates from the rank-`r` truncation of `x0`.
pub fn run_am(ms: &MeasurementSet, r: usize, x0: &SignalMatrix, opts: &AmOptions) -> Result<AmRun> {
    opts.validate()?;
    if x0.x.shape() != (ms.n(), ms.m()) {
        return Err(Error::DimensionMismatch(format!(
            "initial point is {:?}, expected ({}, {})",
            x0.x.shape(),
            ms.n(),
            ms.m()
        )));
    }
    let mut factors = FactorPair::from_estimate(x0, r)?;
    let mut phase = PhaseEstimate::zeros(ms.p(), ms.m());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rank_deficient = false;
    for iteration in 1..=opts.max_iter {
        let before = factors.estimate();
        phase = am_phase_update(ms, &factors);
        let after_phase = am_objective(ms, &phase, &factors);

        let b_step = am_b_update(ms, &phase, &factors.u)?;
        rank_deficient |= !b_step.deficient_columns.is_empty();
        factors.bmat = b_step.bmat;
        let after_b = am_objective(ms, &phase, &factors);

        factors = am_u_update(ms, &phase, &factors.bmat)?;
        let after_u = am_objective(ms, &phase, &factors);
        if !after_u.is_finite() {
            return Err(Error::NumericalOverflow(format!("objective became {after_u}")));
        }

        let after = factors.estimate();
        let change = relative_change(&columns(&before), &columns(&after));
        trace.push(AmIterationLog {
            iteration,
            change,
            objective: [after_phase, after_b, after_u],
        });
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(AmRun {
        estimate: factors.estimate(),
        factors,
        phase,
        trace,
        converged,
        rank_deficient,
    })
}
