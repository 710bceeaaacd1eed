//! Learned invertible linear mixing between coupling blocks.
//!
//! The map is `y = P(x) · W` with `W = L · U`: `P` an optional fixed
//! permutation, `L` unit-diagonal lower triangular, `U` upper triangular
//! with its diagonal stored separately. The factored form gives an exact
//! log-determinant, `Σ log|U_ii|`, and an inverse by two triangular solves.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Real;
use crate::rng::DetRng;
use crate::tensor::{Precision, Tensor};

#[derive(Debug, Clone)]
pub struct MixingLayer {
    pub dim: usize,
    /// Fixed (non-learned) input permutation; `None` is the identity.
    pub perm: Option<Vec<usize>>,
    /// `[dim, dim]`; only the strictly lower triangle is used.
    pub lower: Tensor,
    /// `[dim]`; the diagonal of `U`.
    pub u_diag: Tensor,
    /// `[dim, dim]`; only the strictly upper triangle is used.
    pub upper: Tensor,
}

impl MixingLayer {
    /// Identity mixing: no permutation, zero triangles, unit diagonal.
    pub fn identity(dim: usize) -> MixingLayer {
        MixingLayer {
            dim,
            perm: None,
            lower: Tensor::zeros(&[dim, dim], Precision::Double),
            u_diag: Tensor::vector(alloc::vec![1.0; dim]),
            upper: Tensor::zeros(&[dim, dim], Precision::Double),
        }
    }

    /// Pure coordinate permutation: `y_i = x[perm[i]]`, `|det| = 1`.
    pub fn permutation(perm: Vec<usize>) -> Result<MixingLayer> {
        let dim = perm.len();
        let mut seen = alloc::vec![false; dim];
        for &i in &perm {
            if i >= dim || seen[i] {
                return Err(Error::contract("permutation is not a bijection"));
            }
            seen[i] = true;
        }
        let mut layer = MixingLayer::identity(dim);
        layer.perm = Some(perm);
        Ok(layer)
    }

    /// Random well-conditioned mixing for property tests: small triangles,
    /// diagonal bounded away from zero.
    pub fn random(dim: usize, rng: &mut DetRng) -> MixingLayer {
        let tri = |rng: &mut DetRng| -> Vec<f64> {
            (0..dim * dim).map(|_| rng.uniform_in(-0.3, 0.3)).collect()
        };
        let lower = tri(rng);
        let upper = tri(rng);
        let diag: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.5, 1.5)).collect();
        MixingLayer {
            dim,
            perm: None,
            lower: Tensor::from_f64(&[dim, dim], lower).expect("shape matches"),
            u_diag: Tensor::vector(diag),
            upper: Tensor::from_f64(&[dim, dim], upper).expect("shape matches"),
        }
    }

    pub(crate) fn inference<E: Real>(&self) -> MixInfer<E> {
        let d = self.dim;
        let lower = self.lower.to_elems::<E>();
        let upper = self.upper.to_elems::<E>();
        let diag = self.u_diag.to_elems::<E>();
        // Dense W = L_eff · U_eff with the triangles masked to their
        // definitional parts.
        let mut w = alloc::vec![E::ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                // L_eff[i, k] nonzero for k < i (stored) and k == i (unit).
                // U_eff[k, j] nonzero for k < j (stored) and k == j (diag).
                let mut acc = E::ZERO;
                for k in 0..=i.min(j) {
                    let l = if k == i { E::ONE } else { lower[i * d + k] };
                    let u = if k == j { diag[j] } else { upper[k * d + j] };
                    acc += l * u;
                }
                w[i * d + j] = acc;
            }
        }
        let mut logdet = E::ZERO;
        for &v in &diag {
            logdet += v.abs().ln();
        }
        MixInfer {
            dim: d,
            perm: self.perm.clone(),
            w,
            lower,
            upper,
            diag,
            logdet,
        }
    }
}

pub(crate) struct MixInfer<E> {
    pub dim: usize,
    perm: Option<Vec<usize>>,
    w: Vec<E>,
    lower: Vec<E>,
    upper: Vec<E>,
    diag: Vec<E>,
    pub logdet: E,
}

impl<E: Real> MixInfer<E> {
    /// `y = P(x) · W` for a row vector `x`.
    pub fn forward(&self, x: &[E]) -> Vec<E> {
        let d = self.dim;
        let xp: Vec<E> = match &self.perm {
            Some(p) => p.iter().map(|&i| x[i]).collect(),
            None => x.to_vec(),
        };
        let mut y = alloc::vec![E::ZERO; d];
        for i in 0..d {
            let xi = xp[i];
            let row = &self.w[i * d..(i + 1) * d];
            for j in 0..d {
                y[j] += xi * row[j];
            }
        }
        y
    }

    /// Solves `P(x) · L · U = y` by two triangular substitutions, then
    /// undoes the permutation.
    pub fn inverse(&self, y: &[E]) -> Result<Vec<E>> {
        let d = self.dim;
        // v · U = y, forward over columns.
        let mut v = alloc::vec![E::ZERO; d];
        for j in 0..d {
            let mut acc = y[j];
            for i in 0..j {
                acc = acc - v[i] * self.upper[i * d + j];
            }
            let djj = self.diag[j];
            if !djj.is_finite() || djj.abs() <= E::from_f64(1e-300) {
                return Err(Error::numeric("mixing inverse diagonal underflow", None));
            }
            v[j] = acc / djj;
        }
        // xp · L = v with unit diagonal, backward over columns.
        let mut xp = alloc::vec![E::ZERO; d];
        for j in (0..d).rev() {
            let mut acc = v[j];
            for i in j + 1..d {
                acc = acc - xp[i] * self.lower[i * d + j];
            }
            xp[j] = acc;
        }
        match &self.perm {
            None => Ok(xp),
            Some(p) => {
                let mut x = alloc::vec![E::ZERO; d];
                for (i, &src) in p.iter().enumerate() {
                    x[src] = xp[i];
                }
                Ok(x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_is_identity_with_zero_logdet() {
        let m = MixingLayer::identity(4).inference::<f64>();
        let x = [0.3, -1.0, 2.5, 0.0];
        assert_eq!(m.forward(&x), x.to_vec());
        assert_eq!(m.logdet, 0.0);
        assert_eq!(m.inverse(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn permutation_layer_permutes_and_inverts() {
        let layer = MixingLayer::permutation(alloc::vec![2, 0, 1]).unwrap();
        let m = layer.inference::<f64>();
        let x = [10.0, 20.0, 30.0];
        let y = m.forward(&x);
        assert_eq!(y, alloc::vec![30.0, 10.0, 20.0]);
        assert_eq!(m.logdet, 0.0);
        assert_eq!(m.inverse(&y).unwrap(), x.to_vec());
    }

    #[test]
    fn invalid_permutation_is_rejected() {
        assert!(MixingLayer::permutation(alloc::vec![0, 0, 1]).is_err());
        assert!(MixingLayer::permutation(alloc::vec![0, 3]).is_err());
    }

    #[test]
    fn forward_inverse_round_trip() {
        let mut rng = DetRng::from_seed(31);
        for _ in 0..8 {
            let layer = MixingLayer::random(5, &mut rng);
            let m = layer.inference::<f64>();
            let x = rng.normal_vec(5);
            let y = m.forward(&x);
            let back = m.inverse(&y).unwrap();
            for i in 0..5 {
                assert!((back[i] - x[i]).abs() < 1e-11, "{} vs {}", back[i], x[i]);
            }
        }
    }

    #[test]
    fn logdet_matches_dense_determinant() {
        let mut rng = DetRng::from_seed(8);
        let layer = MixingLayer::random(4, &mut rng);
        let m = layer.inference::<f64>();
        // Build the dense W and eliminate.
        let d = 4;
        let mut w = alloc::vec![0.0; d * d];
        for i in 0..d {
            let mut e = alloc::vec![0.0; d];
            e[i] = 1.0;
            let row = m.forward(&e);
            for j in 0..d {
                w[i * d + j] = row[j];
            }
        }
        let det = det4(&w);
        assert!((m.logdet - crate::math::ln(crate::math::abs(det))).abs() < 1e-10);
    }

    fn det4(w: &[f64]) -> f64 {
        // Gaussian elimination with partial pivoting on a copy.
        let d = 4;
        let mut a = w.to_vec();
        let mut det = 1.0;
        for c in 0..d {
            let mut p = c;
            for r in c + 1..d {
                if a[r * d + c].abs() > a[p * d + c].abs() {
                    p = r;
                }
            }
            if p != c {
                for j in 0..d {
                    a.swap(c * d + j, p * d + j);
                }
                det = -det;
            }
            det *= a[c * d + c];
            for r in c + 1..d {
                let f = a[r * d + c] / a[c * d + c];
                for j in c..d {
                    a[r * d + j] -= f * a[c * d + j];
                }
            }
        }
        det
    }
}
