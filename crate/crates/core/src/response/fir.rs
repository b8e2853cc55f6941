//! Finite impulse response transfer matrices `G(z) = sum_t G[t] z^{-t}`.

use nalgebra::DMatrix;

use crate::error::{Result, SlsError};
use crate::linalg::max_abs;

/// Transfer matrix with finitely many spectral components `G[0..=T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirMatrix {
    rows: usize,
    cols: usize,
    coeffs: Vec<DMatrix<f64>>,
}

impl FirMatrix {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| SlsError::Domain("FIR needs at least one coefficient".into()))?;
        let (rows, cols) = first.shape();
        if let Some((t, bad)) = coeffs.iter().enumerate().find(|(_, c)| c.shape() != (rows, cols)) {
            return Err(SlsError::Dimension(format!(
                "coefficient {t} is {}x{}, expected {rows}x{cols}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        Ok(Self { rows, cols, coeffs })
    }

    pub fn zeros(rows: usize, cols: usize, horizon: usize) -> Self {
        Self {
            rows,
            cols,
            coeffs: vec![DMatrix::zeros(rows, cols); horizon + 1],
        }
    }

    /// Static gain, horizon 0.
    pub fn constant(m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self {
            rows,
            cols,
            coeffs: vec![m],
        }
    }

    /// `m z^{-k}`.
    pub fn delayed(m: DMatrix<f64>, k: usize) -> Self {
        let (rows, cols) = m.shape();
        let mut coeffs = vec![DMatrix::zeros(rows, cols); k + 1];
        coeffs[k] = m;
        Self { rows, cols, coeffs }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn horizon(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<DMatrix<f64>> {
        self.coeffs
    }

    /// Component `t`, or `None` past the horizon.
    pub fn get(&self, t: usize) -> Option<&DMatrix<f64>> {
        self.coeffs.get(t)
    }

    /// Component `t`, zero past the horizon.
    pub fn coeff(&self, t: usize) -> DMatrix<f64> {
        self.coeffs
            .get(t)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.rows, self.cols))
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.coeffs[0].iter().all(|&v| v == 0.0)
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(SlsError::Domain(format!(
                "{op}: shapes {}x{} and {}x{} differ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Zero-pads to at least `horizon`.
    pub fn padded(&self, horizon: usize) -> Self {
        let mut out = self.clone();
        while out.coeffs.len() < horizon + 1 {
            out.coeffs.push(DMatrix::zeros(self.rows, self.cols));
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        let h = self.horizon().max(other.horizon());
        let coeffs = (0..=h).map(|t| self.coeff(t) + other.coeff(t)).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Convolution `(F G)[t] = sum_tau F[tau] G[t - tau]`; the output
    /// horizon is the sum of the input horizons.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(SlsError::Domain(format!(
                "multiply: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let h = self.horizon() + other.horizon();
        let mut coeffs = vec![DMatrix::zeros(self.rows, other.cols); h + 1];
        for (i, f) in self.coeffs.iter().enumerate() {
            if f.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (j, g) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += f * g;
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            coeffs,
        })
    }

    /// Keeps components `0..=horizon` (pads with zeros if shorter).
    pub fn truncate(&self, horizon: usize) -> Self {
        let mut out = self.padded(horizon);
        out.coeffs.truncate(horizon + 1);
        out
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            coeffs: self.coeffs.iter().map(|c| c.transpose()).collect(),
        }
    }

    /// Multiplication by `z^{-k}`.
    pub fn shift(&self, k: usize) -> Self {
        let mut coeffs = vec![DMatrix::zeros(self.rows, self.cols); k];
        coeffs.extend(self.coeffs.iter().cloned());
        Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        }
    }

    /// Multiplication by `z`, dropping `G[0]`. Fails if `G[0]` exceeds `tol`
    /// in max-norm, since the result would not be proper.
    pub fn advance(&self, tol: f64) -> Result<Self> {
        let lead = max_abs(&self.coeffs[0]);
        if lead > tol {
            return Err(SlsError::Domain(format!(
                "z * G is improper: leading component has magnitude {lead:.3e}"
            )));
        }
        let coeffs = if self.coeffs.len() == 1 {
            vec![DMatrix::zeros(self.rows, self.cols)]
        } else {
            self.coeffs[1..].to_vec()
        };
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        })
    }

    /// `M G`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.rows {
            return Err(SlsError::Domain(format!(
                "left multiply: {}x{} times {}x{}",
                m.nrows(),
                m.ncols(),
                self.rows,
                self.cols
            )));
        }
        Ok(Self {
            rows: m.nrows(),
            cols: self.cols,
            coeffs: self.coeffs.iter().map(|c| m * c).collect(),
        })
    }

    /// `G M`.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != self.cols {
            return Err(SlsError::Domain(format!(
                "right multiply: {}x{} times {}x{}",
                self.rows,
                self.cols,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: m.ncols(),
            coeffs: self.coeffs.iter().map(|c| c * m).collect(),
        })
    }

    /// `(zI - A) G` for strictly proper `G`: component `k` is
    /// `G[k+1] - A G[k]`. The result is proper with the same horizon.
    pub fn apply_shift_operator(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.rows || a.ncols() != self.rows {
            return Err(SlsError::Domain("(zI - A) G: A does not match G rows".into()));
        }
        let h = self.horizon();
        let coeffs = (0..=h)
            .map(|k| self.coeff(k + 1) - a * &self.coeffs[k])
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Max-entry distance, treating components past either horizon as zero.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// `sum_t ||G[t]||_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_squared()).sum()
    }

    /// Truncated power-series inverse: returns `X` with horizon `horizon`
    /// such that `G X = I + O(z^{-(horizon+1)})`. Requires square `G` with
    /// invertible `G[0]`.
    pub fn series_inverse(&self, horizon: usize) -> Result<Self> {
        if self.rows != self.cols {
            return Err(SlsError::Domain("series inverse needs a square FIR".into()));
        }
        let lead_inv = self.coeffs[0].clone().try_inverse().ok_or_else(|| {
            SlsError::Domain("series inverse: leading component is singular".into())
        })?;
        let n = self.rows;
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
        out.push(lead_inv.clone());
        for t in 1..=horizon {
            let mut acc = DMatrix::zeros(n, n);
            for k in 1..=t.min(self.horizon()) {
                acc += &self.coeffs[k] * &out[t - k];
            }
            out.push(-&lead_inv * acc);
        }
        Self::new(out)
    }

    /// Component index past which everything is below `tol` (`0` for a
    /// numerically zero matrix).
    pub fn effective_horizon(&self, tol: f64) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| max_abs(c) > tol)
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fir(rng: &mut ChaCha8Rng, r: usize, c: usize, h: usize) -> FirMatrix {
        FirMatrix::new(
            (0..=h)
                .map(|_| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    /// Impulse response of the product as a cascade of two filters driven
    /// by unit impulses, sample by sample.
    fn cascade_impulse(f: &FirMatrix, g: &FirMatrix, steps: usize) -> Vec<DMatrix<f64>> {
        let (rows, inner, cols) = (f.rows(), f.cols(), g.cols());
        let mut out = vec![DMatrix::zeros(rows, cols); steps];
        for j in 0..cols {
            // signal through g
            let mut mid = vec![nalgebra::DVector::zeros(inner); steps];
            for (t, m) in mid.iter_mut().enumerate() {
                if let Some(gt) = g.get(t) {
                    *m = gt.column(j).into_owned();
                }
            }
            for t in 0..steps {
                let mut y = nalgebra::DVector::zeros(rows);
                for tau in 0..=t {
                    if let Some(ft) = f.get(tau) {
                        y += ft * &mid[t - tau];
                    }
                }
                out[t].set_column(j, &y);
            }
        }
        out
    }

    #[test]
    fn delay_composition() {
        let d = FirMatrix::delayed(DMatrix::identity(2, 2), 1);
        let p = d.mul(&d).unwrap();
        assert_eq!(p, FirMatrix::delayed(DMatrix::identity(2, 2), 2));
    }

    #[test]
    fn multiply_by_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_fir(&mut rng, 2, 3, 2);
        let z = FirMatrix::zeros(3, 2, 1);
        assert_eq!(f.mul(&z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn convolution_matches_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_fir(&mut rng, 2, 2, 2);
        let g = random_fir(&mut rng, 2, 2, 2);
        let p = f.mul(&g).unwrap();
        let oracle = cascade_impulse(&f, &g, 6);
        for (t, o) in oracle.iter().enumerate() {
            assert!(max_abs(&(p.coeff(t) - o)) < 1e-14, "t={t}");
        }
    }

    #[test]
    fn shape_errors() {
        let a = FirMatrix::zeros(2, 3, 1);
        let b = FirMatrix::zeros(2, 3, 1);
        assert!(matches!(a.mul(&b), Err(SlsError::Domain(_))));
        assert!(matches!(a.add(&FirMatrix::zeros(3, 2, 0)), Err(SlsError::Domain(_))));
        assert!(FirMatrix::new(vec![]).is_err());
        assert!(FirMatrix::new(vec![DMatrix::zeros(1, 1), DMatrix::zeros(2, 1)]).is_err());
    }

    #[test]
    fn advance_and_shift() {
        let m = DMatrix::from_row_slice(1, 1, &[3.0]);
        let g = FirMatrix::delayed(m.clone(), 2);
        assert_eq!(g.advance(0.0).unwrap(), FirMatrix::delayed(m.clone(), 1));
        assert!(FirMatrix::constant(m.clone()).advance(1e-12).is_err());
        assert_eq!(FirMatrix::constant(m.clone()).shift(2), g);
        assert!(g.is_strictly_proper());
    }

    #[test]
    fn series_inverse_scalar() {
        // 1 / (1 - 0.5 z^-1) = sum 0.5^t z^-t
        let g = FirMatrix::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -0.5),
        ])
        .unwrap();
        let inv = g.series_inverse(5).unwrap();
        for t in 0..=5 {
            assert_abs_diff_eq!(inv.coeff(t)[(0, 0)], 0.5f64.powi(t as i32), epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn transpose_reverses_products(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_fir(&mut rng, 2, 3, 2);
            let g = random_fir(&mut rng, 3, 2, 3);
            let lhs = f.mul(&g).unwrap().transpose();
            let rhs = g.transpose().mul(&f.transpose()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-13);
        }

        #[test]
        fn product_distributes_over_sum(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_fir(&mut rng, 2, 2, 1);
            let g = random_fir(&mut rng, 2, 2, 3);
            let h = random_fir(&mut rng, 2, 2, 2);
            let lhs = f.mul(&g.add(&h).unwrap()).unwrap();
            let rhs = f.mul(&g).unwrap().add(&f.mul(&h).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-13);
        }

        #[test]
        fn series_inverse_is_right_inverse(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = random_fir(&mut rng, 3, 3, 2);
            g.coeffs_mut()[0] = DMatrix::identity(3, 3) * 2.0 + &g.coeffs()[0] * 0.1;
            let x = g.series_inverse(6).unwrap();
            let p = g.mul(&x).unwrap().truncate(6);
            let err = p.max_abs_diff(&FirMatrix::identity(3)).unwrap();
            prop_assert!(err < 1e-10, "err {}", err);
        }
    }
}
