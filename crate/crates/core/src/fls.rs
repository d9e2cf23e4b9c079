//! Normalised Gaussian fuzzy basis functions.
//!
//! Rule `l` fires with strength `prod_j exp(-(x_j - c_lj)^2 / (2 w^2))`; the basis
//! vector is the strengths normalised to sum to one, and the system output is
//! `theta . Phi(x)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlsError {
    #[error("membership grid needs at least one rule and one input")]
    EmptyGrid,
    #[error("membership width must be positive, got {0}")]
    BadWidth(f64),
    #[error("input has dimension {got}, grid expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("weight vector has length {got}, grid has {expected} rules")]
    WeightLength { expected: usize, got: usize },
    #[error("all rule strengths underflowed: input is far outside every center")]
    DegenerateBasis,
    #[error("design matrix has rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipGrid {
    /// `P x n`: one row of centers per rule.
    centers: DMatrix<f64>,
    width: f64,
}

impl MembershipGrid {
    pub fn new(centers: DMatrix<f64>, width: f64) -> Result<Self, FlsError> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(FlsError::EmptyGrid);
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(FlsError::BadWidth(width));
        }
        Ok(Self { centers, width })
    }

    /// One rule per scalar center, reusing that center in every input dimension.
    pub fn diagonal(centers: &[f64], dims: usize, width: f64) -> Result<Self, FlsError> {
        let p = centers.len();
        Self::new(DMatrix::from_fn(p, dims, |l, _| centers[l]), width)
    }

    pub fn rules(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dims(&self) -> usize {
        self.centers.ncols()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySystem {
    grid: MembershipGrid,
}

impl FuzzySystem {
    pub fn new(grid: MembershipGrid) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &MembershipGrid {
        &self.grid
    }

    pub fn rules(&self) -> usize {
        self.grid.rules()
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    /// Writes `Phi(x)` into `out` (length `P`).
    pub fn basis_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), FlsError> {
        let n = self.grid.dims();
        if x.len() != n {
            return Err(FlsError::Dimension { expected: n, got: x.len() });
        }
        debug_assert_eq!(out.len(), self.grid.rules());
        let scale = -0.5 / (self.grid.width * self.grid.width);
        let mut total = 0.0;
        for (l, slot) in out.iter_mut().enumerate() {
            let mut d2 = 0.0;
            for (j, xj) in x.iter().enumerate() {
                let d = xj - self.grid.centers[(l, j)];
                d2 += d * d;
            }
            let s = (scale * d2).exp();
            *slot = s;
            total += s;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(FlsError::DegenerateBasis);
        }
        for slot in out.iter_mut() {
            *slot /= total;
        }
        Ok(())
    }

    pub fn basis(&self, x: &[f64]) -> Result<Vec<f64>, FlsError> {
        let mut out = vec![0.0; self.grid.rules()];
        self.basis_into(x, &mut out)?;
        Ok(out)
    }

    /// Euclidean norm `||Phi(x)||`, computed without materialising `Phi`.
    pub fn basis_norm(&self, x: &[f64]) -> Result<f64, FlsError> {
        let n = self.grid.dims();
        if x.len() != n {
            return Err(FlsError::Dimension { expected: n, got: x.len() });
        }
        let scale = -0.5 / (self.grid.width * self.grid.width);
        let (mut total, mut squares) = (0.0, 0.0);
        for l in 0..self.grid.rules() {
            let mut d2 = 0.0;
            for (j, xj) in x.iter().enumerate() {
                let d = xj - self.grid.centers[(l, j)];
                d2 += d * d;
            }
            let s = (scale * d2).exp();
            total += s;
            squares += s * s;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(FlsError::DegenerateBasis);
        }
        Ok(squares.sqrt() / total)
    }

    pub fn evaluate(&self, theta: &[f64], x: &[f64]) -> Result<f64, FlsError> {
        if theta.len() != self.grid.rules() {
            return Err(FlsError::WeightLength { expected: self.grid.rules(), got: theta.len() });
        }
        let phi = self.basis(x)?;
        Ok(theta.iter().zip(&phi).map(|(a, b)| a * b).sum())
    }

    /// Least-squares rule weights for the given `(x, target)` samples.
    pub fn fit_least_squares(&self, samples: &[(Vec<f64>, f64)]) -> Result<Vec<f64>, FlsError> {
        let p = self.grid.rules();
        let rows = samples.len();
        let mut design = DMatrix::zeros(rows, p);
        let mut rhs = DVector::zeros(rows);
        let mut phi = vec![0.0; p];
        for (r, (x, y)) in samples.iter().enumerate() {
            self.basis_into(x, &mut phi)?;
            for l in 0..p {
                design[(r, l)] = phi[l];
            }
            rhs[r] = *y;
        }
        if rows < p {
            return Err(FlsError::RankDeficient { rank: rows, needed: p });
        }
        let svd = design.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * (rows.max(p) as f64) * f64::EPSILON;
        let rank = svd.rank(tol);
        if rank < p {
            return Err(FlsError::RankDeficient { rank, needed: p });
        }
        let theta = svd.solve(&rhs, tol).expect("u and v were computed");
        Ok(theta.iter().copied().collect())
    }
}
