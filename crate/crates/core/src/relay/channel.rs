use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// Default ceiling on the 2-norm condition number of accepted channel matrices.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e6;

/// Uplink and downlink channel matrices with cached inverses.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h_u: DMatrix<C64>,
    h_d: DMatrix<C64>,
    h_u_inv: DMatrix<C64>,
    h_d_inv: DMatrix<C64>,
    condition_bound: f64,
}

impl ChannelRealization {
    pub fn new(h_u: DMatrix<C64>, h_d: DMatrix<C64>, condition_bound: f64) -> Result<Self> {
        let n = h_u.nrows();
        if n == 0 || !h_u.is_square() {
            return Err(Error::InvalidSize {
                n,
                reason: "uplink matrix must be square and non-empty".into(),
            });
        }
        if h_d.shape() != (n, n) {
            return Err(Error::SizeMismatch {
                expected: n,
                found: h_d.nrows(),
            });
        }
        if !(condition_bound > 1.0) {
            return Err(Error::InvalidParams(format!(
                "condition bound must exceed 1, got {condition_bound}"
            )));
        }
        let h_u_inv = checked_inverse(&h_u, "uplink", condition_bound)?;
        let h_d_inv = checked_inverse(&h_d, "downlink", condition_bound)?;
        Ok(Self {
            h_u,
            h_d,
            h_u_inv,
            h_d_inv,
            condition_bound,
        })
    }

    /// Reciprocal channel: the downlink is the transpose of the uplink.
    pub fn reciprocal(h_u: DMatrix<C64>, condition_bound: f64) -> Result<Self> {
        let h_d = h_u.transpose();
        Self::new(h_u, h_d, condition_bound)
    }

    pub fn identity(n: usize) -> Self {
        let eye = DMatrix::<C64>::identity(n, n);
        Self {
            h_u: eye.clone(),
            h_d: eye.clone(),
            h_u_inv: eye.clone(),
            h_d_inv: eye,
            condition_bound: DEFAULT_CONDITION_BOUND,
        }
    }

    pub fn n(&self) -> usize {
        self.h_u.nrows()
    }

    pub fn h_u(&self) -> &DMatrix<C64> {
        &self.h_u
    }

    pub fn h_d(&self) -> &DMatrix<C64> {
        &self.h_d
    }

    pub fn h_u_inv(&self) -> &DMatrix<C64> {
        &self.h_u_inv
    }

    pub fn h_d_inv(&self) -> &DMatrix<C64> {
        &self.h_d_inv
    }

    pub fn condition_bound(&self) -> f64 {
        self.condition_bound
    }

    /// Exact (bitwise) check that `h_d == h_u^T`.
    pub fn is_reciprocal(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| self.h_d[(i, j)] == self.h_u[(j, i)]))
    }
}

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn checked_inverse(m: &DMatrix<C64>, block: &str, bound: f64) -> Result<DMatrix<C64>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularChannel(format!("{block} matrix has non-finite entries")));
    }
    let cond = condition_number(m);
    if !(cond <= bound) {
        return Err(Error::SingularChannel(format!(
            "{block} matrix is not invertible within condition bound {bound:e} (condition number {cond:e})"
        )));
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularChannel(format!("{block} matrix is singular")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn reciprocal_transposes_uplink() {
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.2, 0.0), c(-0.3, 1.0), c(2.0, -1.0)]);
        let ch = ChannelRealization::reciprocal(h.clone(), DEFAULT_CONDITION_BOUND).unwrap();
        assert!(ch.is_reciprocal());
        assert_eq!(ch.h_d()[(0, 1)], h[(1, 0)]);
        let prod = ch.h_u() * ch.h_u_inv();
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected_with_block_name() {
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        let err = ChannelRealization::reciprocal(h, DEFAULT_CONDITION_BOUND).unwrap_err();
        match err {
            Error::SingularChannel(msg) => assert!(msg.contains("uplink")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ill_conditioned_matrix_is_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1e-7, 0.0)]);
        assert!(ChannelRealization::reciprocal(h.clone(), 1e6).is_err());
        assert!(ChannelRealization::reciprocal(h, 1e8).is_ok());
    }

    #[test]
    fn identity_channel_is_reciprocal() {
        let ch = ChannelRealization::identity(3);
        assert!(ch.is_reciprocal());
        assert_eq!(condition_number(ch.h_u()), 1.0);
    }
}
