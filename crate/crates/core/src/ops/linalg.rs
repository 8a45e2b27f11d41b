//! Matrix products.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `c[m×n] = a[m×k] · b[k×n]`
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        crow.iter_mut().for_each(|v| *v = T::zero());
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[m×n] = a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_bt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
}

/// `c[m×n] = a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_at<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    c.iter_mut().for_each(|v| *v = T::zero());
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("cannot multiply {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::from_parts(vec![m, n], out);
        Ok(self.record("matmul", &[a, b], value, move |inputs, _, g| {
            let mut ga = vec![T::zero(); m * k];
            gemm_bt(g.data(), inputs[1].data(), &mut ga, m, n, k);
            let mut gb = vec![T::zero(); k * n];
            gemm_at(inputs[0].data(), g.data(), &mut gb, k, m, n);
            vec![
                Some(Tensor::from_parts(vec![m, k], ga)),
                Some(Tensor::from_parts(vec![k, n], gb)),
            ]
        }))
    }

    /// Batched matrix product of `[batch, m, k]` and `[batch, k, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::dim("bmm", format!("cannot multiply {sa:?} by {sb:?}")));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); bs * m * n];
        {
            let (ad, bd) = (self.value(a).data(), self.value(b).data());
            for i in 0..bs {
                gemm(
                    &ad[i * m * k..(i + 1) * m * k],
                    &bd[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let value = Tensor::from_parts(vec![bs, m, n], out);
        Ok(self.record("bmm", &[a, b], value, move |inputs, _, g| {
            let (ad, bd, gd) = (inputs[0].data(), inputs[1].data(), g.data());
            let mut ga = vec![T::zero(); bs * m * k];
            let mut gb = vec![T::zero(); bs * k * n];
            for i in 0..bs {
                let gi = &gd[i * m * n..(i + 1) * m * n];
                gemm_bt(
                    gi,
                    &bd[i * k * n..(i + 1) * k * n],
                    &mut ga[i * m * k..(i + 1) * m * k],
                    m,
                    n,
                    k,
                );
                gemm_at(
                    &ad[i * m * k..(i + 1) * m * k],
                    gi,
                    &mut gb[i * k * n..(i + 1) * k * n],
                    k,
                    m,
                    n,
                );
            }
            vec![
                Some(Tensor::from_parts(vec![bs, m, k], ga)),
                Some(Tensor::from_parts(vec![bs, k, n], gb)),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix() {
        let mut tape = Tape::<f64>::new();
        let i = tape.constant(Tensor::from_f64([2, 2], &[1., 0., 0., 1.]).unwrap());
        let m = tape.constant(Tensor::from_f64([2, 2], &[1., 2., 3., 4.]).unwrap());
        let p = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(p).data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn row_times_column() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::from_f64([1, 2], &[1., 2.]).unwrap());
        let b = tape.constant(Tensor::from_f64([2, 1], &[3., 4.]).unwrap());
        let p = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(p).data(), &[11.]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros([2, 3]));
        let b = tape.constant(Tensor::zeros([2, 3]));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("by [2, 3]"), "{msg}");
    }

    #[test]
    fn transposed_kernels_agree_with_plain_gemm() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c1 = [0.0; 4];
        let mut c2 = [0.0; 4];
        let mut c3 = [0.0; 4];
        gemm(&a, &b, &mut c1, 2, 3, 2);
        gemm_bt(&a, &bt, &mut c2, 2, 3, 2);
        gemm_at(&at, &b, &mut c3, 2, 3, 2);
        assert_eq!(c1, [58.0, 64.0, 139.0, 154.0]);
        assert_eq!(c1, c2);
        assert_eq!(c1, c3);
    }
}
