//! Matrix exponential by scaling and squaring with the degree-13 Padé approximant.

use crate::error::{Error, Result};
use crate::linalg::{Dense, Lu};
use crate::scalar::Real;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn combo<T: Real>(terms: &[(&Dense<T>, f64)], n: usize) -> Dense<T> {
    let mut out = Dense::zeros(n);
    for (m, c) in terms {
        let c = T::lit(*c);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = out[(i, j)] + c * m[(i, j)];
            }
        }
    }
    out
}

/// `exp(A)`.
pub fn expm<T: Real>(a: &Dense<T>) -> Result<Dense<T>> {
    let n = a.n;
    if a.norm1().is_nan() {
        return Err(Error::Domain("matrix exponential of a non-finite matrix".into()));
    }
    let norm = a.norm1().to_f64_lossy();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scale(T::lit(2f64.powi(-s)));
    let id = Dense::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = PADE13;
    let u_inner = a6
        .matmul(&combo(&[(&a6, b[13]), (&a4, b[11]), (&a2, b[9])], n))
        .add(&combo(&[(&a6, b[7]), (&a4, b[5]), (&a2, b[3]), (&id, b[1])], n));
    let u = a.matmul(&u_inner);
    let v = a6
        .matmul(&combo(&[(&a6, b[12]), (&a4, b[10]), (&a2, b[8])], n))
        .add(&combo(&[(&a6, b[6]), (&a4, b[4]), (&a2, b[2]), (&id, b[0])], n));
    let lu = Lu::factor(v.add(&u.scale(-T::one())))?;
    let rhs = v.add(&u);
    let mut x = Dense::zeros(n);
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = rhs[(i, j)];
        }
        lu.solve(&mut col);
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    for _ in 0..s {
        x = x.matmul(&x);
    }
    Ok(x)
}

/// `exp(t·M)·v`.
pub fn expm_action<T: Real>(m: &Dense<T>, t: T, v: &[T]) -> Result<Vec<T>> {
    if v.len() != m.n {
        return Err(Error::Dimension(format!("matrix is {0}×{0}, vector has {1}", m.n, v.len())));
    }
    if !t.is_finite() {
        return Err(Error::Domain("non-finite time".into()));
    }
    let e = expm(&m.scale(t))?;
    let mut out = vec![T::zero(); v.len()];
    e.matvec(v, &mut out);
    Ok(out)
}
