//! Dense kernels. Reductions accumulate in `f64` and always run in a fixed
//! order, so results are bit-stable across runs.

use alloc::vec;
use alloc::vec::Vec;

use super::Real;

/// `a (n×k) · b (k×m)`.
pub(crate) fn matmul<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    let mut acc = vec![0.0f64; m];
    for i in 0..n {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let av = av.as_f64();
            let brow = &b[p * m..(p + 1) * m];
            for (s, &bv) in acc.iter_mut().zip(brow) {
                *s += av * bv.as_f64();
            }
        }
        for (o, &s) in out[i * m..(i + 1) * m].iter_mut().zip(&acc) {
            *o = T::of(s);
        }
    }
    out
}

/// `a (n×m) · bᵀ` with `b (k×m)`, giving `n×k`.
pub(crate) fn matmul_nt<T: Real>(a: &[T], b: &[T], n: usize, m: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            let mut s = 0.0f64;
            for (&x, &y) in arow.iter().zip(brow) {
                s += x.as_f64() * y.as_f64();
            }
            out[i * k + p] = T::of(s);
        }
    }
    out
}

/// `aᵀ · b` with `a (n×k)` and `b (n×m)`, giving `k×m`.
pub(crate) fn matmul_tn<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut acc = vec![0.0f64; k * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let av = av.as_f64();
            for (s, &bv) in acc[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *s += av * bv.as_f64();
            }
        }
    }
    acc.into_iter().map(T::of).collect()
}

/// Unfolds 3×3 zero-padded neighbourhoods of an `h×w×c` grid (cells as rows)
/// into `(h·w) × (9·c)` columns ordered `(dy, dx, channel)`.
pub(crate) fn im2col3<T: Real>(x: &[T], h: usize, w: usize, c: usize) -> Vec<T> {
    let mut cols = vec![T::zero(); h * w * 9 * c];
    for r in 0..h {
        for q in 0..w {
            let dst = &mut cols[(r * w + q) * 9 * c..(r * w + q + 1) * 9 * c];
            for dy in 0..3 {
                let rr = r as isize + dy as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dx in 0..3 {
                    let qq = q as isize + dx as isize - 1;
                    if qq < 0 || qq >= w as isize {
                        continue;
                    }
                    let src = (rr as usize * w + qq as usize) * c;
                    let off = (dy * 3 + dx) * c;
                    dst[off..off + c].copy_from_slice(&x[src..src + c]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3`].
pub(crate) fn col2im3<T: Real>(cols: &[T], h: usize, w: usize, c: usize) -> Vec<T> {
    let mut acc = vec![0.0f64; h * w * c];
    for r in 0..h {
        for q in 0..w {
            let src = &cols[(r * w + q) * 9 * c..(r * w + q + 1) * 9 * c];
            for dy in 0..3 {
                let rr = r as isize + dy as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dx in 0..3 {
                    let qq = q as isize + dx as isize - 1;
                    if qq < 0 || qq >= w as isize {
                        continue;
                    }
                    let dst = (rr as usize * w + qq as usize) * c;
                    let off = (dy * 3 + dx) * c;
                    for ch in 0..c {
                        acc[dst + ch] += src[off + ch].as_f64();
                    }
                }
            }
        }
    }
    acc.into_iter().map(T::of).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3×2
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![4.0, 5.0, 10.0, 11.0]);
        // bᵀ stored as 2×3
        let bt = [1.0f64, 0.0, 1.0, 0.0, 1.0, 1.0];
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 2), vec![4.0, 5.0, 10.0, 11.0]);
        // aᵀ·a for a 2×3
        let ata = matmul_tn(&a, &a, 2, 3, 3);
        assert_eq!(ata[0], 17.0);
        assert_eq!(ata[4], 29.0);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (h, w, c) = (3, 4, 2);
        let x: Vec<f64> = (0..h * w * c).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..h * w * 9 * c).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = im2col3(&x, h, w, c).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im3(&y, h, w, c)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
