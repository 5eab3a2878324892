//! Forward and backward kernels.
//!
//! Forward kernels are shared by [`Tape`](super::Tape) and
//! [`Eager`](super::Eager); backward kernels accumulate into caller-owned
//! gradient buffers.

use super::{Permutation, Real, Tensor};
use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn leading_shape(shape: &[usize]) -> Vec<usize> {
    shape[..shape.len() - 1].to_vec()
}

fn with_last(shape: &[usize], last: usize) -> Vec<usize> {
    let mut s = leading_shape(shape);
    s.push(last);
    s
}

pub fn check_same_shape<T: Real>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- affine

pub fn affine_check<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<()> {
    if w.rank() != 2 {
        return Err(Error::dim(format!("affine: weight must be rank 2, got {:?}", w.shape())));
    }
    let (p, q) = (w.shape()[0], w.shape()[1]);
    if x.features() != p {
        return Err(Error::dim(format!(
            "affine: input feature extent {} does not match weight {:?}",
            x.features(),
            w.shape()
        )));
    }
    if let Some(b) = b {
        if b.shape() != [q] {
            return Err(Error::dim(format!(
                "affine: bias {:?} does not match output extent {q}",
                b.shape()
            )));
        }
    }
    Ok(())
}

pub fn affine<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    affine_check(x, w, b)?;
    let (p, q) = (w.shape()[0], w.shape()[1]);
    let rows = x.rows();
    let mut out = vec![T::zero(); rows * q];
    if let Some(b) = b {
        for row in out.chunks_exact_mut(q) {
            row.copy_from_slice(b.data());
        }
    }
    T::gemm(rows, p, q, x.data(), false, w.data(), false, &mut out, b.is_some());
    Tensor::new(with_last(x.shape(), q), out)
}

pub fn affine_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &[T],
    gx: Option<&mut [T]>,
    gw: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    let (p, q) = (w.shape()[0], w.shape()[1]);
    let rows = x.rows();
    if let Some(gx) = gx {
        T::gemm(rows, q, p, gout, false, w.data(), true, gx, true);
    }
    if let Some(gw) = gw {
        T::gemm(p, rows, q, x.data(), true, gout, false, gw, true);
    }
    if let Some(gb) = gb {
        for row in gout.chunks_exact(q) {
            for (acc, &g) in gb.iter_mut().zip(row) {
                *acc += g;
            }
        }
    }
}

// ------------------------------------------------------------- layernorm

/// Normalizes every row of the last axis to zero mean and unit variance.
/// Returns the output and the per-row `1/sqrt(var + eps)`.
pub fn layernorm<T: Real>(x: &Tensor<T>, eps: f64) -> (Tensor<T>, Vec<T>) {
    let p = x.features();
    let eps = T::lit(eps);
    let inv_p = T::lit(1.0 / p as f64);
    let mut out = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(x.rows());
    for row in x.data().chunks_exact(p) {
        let mean = row.iter().copied().sum::<T>() * inv_p;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_p;
        let s = (var + eps).sqrt().recip();
        out.extend(row.iter().map(|&v| (v - mean) * s));
        inv_std.push(s);
    }
    (
        Tensor::new(x.shape().to_vec(), out).expect("same shape"),
        inv_std,
    )
}

/// `dx = s·(dy − mean(dy) − y·mean(dy·y))` per row.
pub fn layernorm_backward<T: Real>(y: &Tensor<T>, inv_std: &[T], gout: &[T], gx: &mut [T]) {
    let p = y.features();
    let inv_p = T::lit(1.0 / p as f64);
    for (((yr, gr), gxr), &s) in y
        .data()
        .chunks_exact(p)
        .zip(gout.chunks_exact(p))
        .zip(gx.chunks_exact_mut(p))
        .zip(inv_std)
    {
        let mean_g = gr.iter().copied().sum::<T>() * inv_p;
        let mean_gy = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum::<T>() * inv_p;
        for ((acc, &g), &yv) in gxr.iter_mut().zip(gr).zip(yr) {
            *acc += s * (g - mean_g - yv * mean_gy);
        }
    }
}

// ------------------------------------------------------------ elementwise

#[inline]
pub fn gelu_scalar<T: Real>(x: T) -> T {
    x * T::lit(0.5) * (T::one() + (x / T::lit(SQRT_2)).erf())
}

#[inline]
pub fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let u = x / T::lit(SQRT_2);
    let cdf = T::lit(0.5) * (T::one() + u.erf());
    // d/dx Φ(x) = erf'(x/√2) / (2√2), the Gaussian density for exact erf.
    let pdf = T::lit(0.5 / SQRT_2) * u.erf_deriv();
    cdf + x * pdf
}

/// GELU of every element together with its derivative.
pub fn gelu_with_grad<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let half = T::lit(0.5);
    let scale = T::lit(0.5 / SQRT_2);
    let inv_sqrt2 = T::lit(1.0 / SQRT_2);
    let mut out = vec![T::zero(); x.len()];
    let mut grad = vec![T::zero(); x.len()];
    for ((&v, o), d) in x.data().iter().zip(&mut out).zip(&mut grad) {
        let (e, de) = (v * inv_sqrt2).erf_with_deriv();
        let cdf = half * (T::one() + e);
        *o = v * cdf;
        *d = cdf + v * scale * de;
    }
    (Tensor::new(x.shape().to_vec(), out).expect("same shape"), grad)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn map<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        .expect("same shape")
}

pub fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}

pub fn mul_features_check<T: Real>(x: &Tensor<T>, v: &Tensor<T>) -> Result<()> {
    if v.shape() != [x.features()] {
        return Err(Error::dim(format!(
            "mul_features: vector {:?} does not match feature extent {}",
            v.shape(),
            x.features()
        )));
    }
    Ok(())
}

pub fn mul_features<T: Real>(x: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    mul_features_check(x, v)?;
    let d = x.features();
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(d) {
        out.extend(row.iter().zip(v.data()).map(|(&a, &b)| a * b));
    }
    Tensor::new(x.shape().to_vec(), out)
}

// ----------------------------------------------------------- permutations

pub fn permute_seq_check<T: Real>(x: &Tensor<T>, perm: &Permutation) -> Result<()> {
    if x.rank() < 2 || x.shape()[x.rank() - 2] != perm.len() {
        return Err(Error::dim(format!(
            "permute_seq: sequence axis of {:?} does not match permutation of size {}",
            x.shape(),
            perm.len()
        )));
    }
    Ok(())
}

/// `out[.., perm[a], :] = x[.., a, :]` along the second-to-last axis.
pub fn permute_seq<T: Real>(x: &Tensor<T>, perm: &Permutation) -> Result<Tensor<T>> {
    permute_seq_check(x, perm)?;
    let m = x.features();
    let n = perm.len();
    let mut out = vec![T::zero(); x.len()];
    for (src, dst) in x.data().chunks_exact(n * m).zip(out.chunks_exact_mut(n * m)) {
        for (a, &to) in perm.as_slice().iter().enumerate() {
            dst[to * m..(to + 1) * m].copy_from_slice(&src[a * m..(a + 1) * m]);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn permute_seq_backward<T: Real>(perm: &Permutation, m: usize, gout: &[T], gx: &mut [T]) {
    let n = perm.len();
    for (g, acc) in gout.chunks_exact(n * m).zip(gx.chunks_exact_mut(n * m)) {
        for (a, &to) in perm.as_slice().iter().enumerate() {
            for (dst, &src) in acc[a * m..(a + 1) * m].iter_mut().zip(&g[to * m..(to + 1) * m]) {
                *dst += src;
            }
        }
    }
}

/// `out[.., j] = x[.., idx[j]]` along the last axis.
pub fn gather_features<T: Real>(x: &Tensor<T>, idx: &Permutation) -> Result<Tensor<T>> {
    let d = x.features();
    if idx.len() != d {
        return Err(Error::dim(format!(
            "gather_features: index map of size {} for feature extent {d}",
            idx.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(d) {
        out.extend(idx.as_slice().iter().map(|&i| row[i]));
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn gather_features_backward<T: Real>(idx: &Permutation, gout: &[T], gx: &mut [T]) {
    let d = idx.len();
    for (g, acc) in gout.chunks_exact(d).zip(gx.chunks_exact_mut(d)) {
        for (j, &i) in idx.as_slice().iter().enumerate() {
            acc[i] += g[j];
        }
    }
}

pub fn concat_features<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if leading_shape(a.shape()) != leading_shape(b.shape()) {
        return Err(Error::dim(format!(
            "concat_features: leading shapes of {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    let (da, db) = (a.features(), b.features());
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.data().chunks_exact(da).zip(b.data().chunks_exact(db)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    Tensor::new(with_last(a.shape(), da + db), out)
}

pub fn concat_features_backward<T: Real>(
    da: usize,
    db: usize,
    gout: &[T],
    ga: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    if let Some(ga) = ga {
        for (g, acc) in gout.chunks_exact(da + db).zip(ga.chunks_exact_mut(da)) {
            for (x, &y) in acc.iter_mut().zip(&g[..da]) {
                *x += y;
            }
        }
    }
    if let Some(gb) = gb {
        for (g, acc) in gout.chunks_exact(da + db).zip(gb.chunks_exact_mut(db)) {
            for (x, &y) in acc.iter_mut().zip(&g[da..]) {
                *x += y;
            }
        }
    }
}

// -------------------------------------------------------------- gathering

pub fn embedding<T: Real>(table: &Tensor<T>, ids: &[usize], shape: &[usize]) -> Result<Tensor<T>> {
    if table.rank() != 2 {
        return Err(Error::dim(format!("embedding: table must be rank 2, got {:?}", table.shape())));
    }
    if shape.iter().product::<usize>() != ids.len() {
        return Err(Error::dim(format!(
            "embedding: {} ids cannot take shape {shape:?}",
            ids.len()
        )));
    }
    let (vocab, m) = (table.shape()[0], table.shape()[1]);
    let mut out = Vec::with_capacity(ids.len() * m);
    for &id in ids {
        if id >= vocab {
            return Err(Error::invalid(format!("embedding: id {id} outside vocabulary of {vocab}")));
        }
        out.extend_from_slice(&table.data()[id * m..(id + 1) * m]);
    }
    let mut out_shape = shape.to_vec();
    out_shape.push(m);
    Tensor::new(out_shape, out)
}

pub fn embedding_backward<T: Real>(m: usize, ids: &[usize], gout: &[T], gtable: &mut [T]) {
    for (&id, g) in ids.iter().zip(gout.chunks_exact(m)) {
        for (acc, &v) in gtable[id * m..(id + 1) * m].iter_mut().zip(g) {
            *acc += v;
        }
    }
}

/// Picks element `pos` of the second-to-last axis: `[.., n, m] -> [.., m]`.
pub fn select_position<T: Real>(x: &Tensor<T>, pos: usize) -> Result<Tensor<T>> {
    if x.rank() < 2 {
        return Err(Error::dim("select_position: need rank >= 2"));
    }
    let n = x.shape()[x.rank() - 2];
    if pos >= n {
        return Err(Error::dim(format!("select_position: {pos} outside length {n}")));
    }
    let m = x.features();
    let mut out = Vec::with_capacity(x.len() / n);
    for chunk in x.data().chunks_exact(n * m) {
        out.extend_from_slice(&chunk[pos * m..(pos + 1) * m]);
    }
    let mut shape = x.shape()[..x.rank() - 2].to_vec();
    shape.push(m);
    Tensor::new(shape, out)
}

pub fn select_position_backward<T: Real>(n: usize, m: usize, pos: usize, gout: &[T], gx: &mut [T]) {
    for (g, acc) in gout.chunks_exact(m).zip(gx.chunks_exact_mut(n * m)) {
        for (dst, &v) in acc[pos * m..(pos + 1) * m].iter_mut().zip(g) {
            *dst += v;
        }
    }
}

// ------------------------------------------------------------ convolution

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub batch: usize,
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub width: usize,
    pub stride: usize,
    pub n_out: usize,
    pub pad_left: usize,
}

/// "Same" zero padding: output length is `ceil(n / stride)`.
pub fn conv_geometry<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<ConvGeometry> {
    if stride == 0 {
        return Err(Error::invalid("conv1d: stride must be >= 1"));
    }
    if kernel.rank() != 3 {
        return Err(Error::dim(format!("conv1d: kernel must be [w, cin, cout], got {:?}", kernel.shape())));
    }
    let (width, cin, cout) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    let (batch, n) = match x.rank() {
        2 => (1, x.shape()[0]),
        3 => (x.shape()[0], x.shape()[1]),
        _ => return Err(Error::dim(format!("conv1d: input must be [n, cin] or [b, n, cin], got {:?}", x.shape()))),
    };
    if x.features() != cin {
        return Err(Error::dim(format!(
            "conv1d: input channels {} do not match kernel {:?}",
            x.features(),
            kernel.shape()
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::dim(format!("conv1d: bias {:?} for {cout} output channels", bias.shape())));
    }
    let n_out = n.div_ceil(stride);
    let pad_total = ((n_out - 1) * stride + width).saturating_sub(n);
    if width > n + pad_total {
        return Err(Error::dim(format!(
            "conv1d: kernel width {width} exceeds padded input length {}",
            n + pad_total
        )));
    }
    Ok(ConvGeometry {
        batch,
        n,
        cin,
        cout,
        width,
        stride,
        n_out,
        pad_left: pad_total / 2,
    })
}

fn im2col<T: Real>(geo: &ConvGeometry, x: &[T]) -> Vec<T> {
    let row_len = geo.width * geo.cin;
    let mut cols = vec![T::zero(); geo.batch * geo.n_out * row_len];
    for b in 0..geo.batch {
        let xb = &x[b * geo.n * geo.cin..(b + 1) * geo.n * geo.cin];
        for t in 0..geo.n_out {
            let row = &mut cols[(b * geo.n_out + t) * row_len..(b * geo.n_out + t + 1) * row_len];
            for j in 0..geo.width {
                let pos = (t * geo.stride + j) as isize - geo.pad_left as isize;
                if pos >= 0 && (pos as usize) < geo.n {
                    let p = pos as usize;
                    row[j * geo.cin..(j + 1) * geo.cin].copy_from_slice(&xb[p * geo.cin..(p + 1) * geo.cin]);
                }
            }
        }
    }
    cols
}

pub fn conv1d<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let geo = conv_geometry(x, kernel, bias, stride)?;
    let cols = im2col(&geo, x.data());
    let rows = geo.batch * geo.n_out;
    let mut out = vec![T::zero(); rows * geo.cout];
    for row in out.chunks_exact_mut(geo.cout) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(rows, geo.width * geo.cin, geo.cout, &cols, false, kernel.data(), false, &mut out, true);
    let shape = if x.rank() == 2 {
        vec![geo.n_out, geo.cout]
    } else {
        vec![geo.batch, geo.n_out, geo.cout]
    };
    Tensor::new(shape, out)
}

pub fn conv1d_backward<T: Real>(
    geo: &ConvGeometry,
    x: &[T],
    kernel: &[T],
    gout: &[T],
    gx: Option<&mut [T]>,
    gk: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    let rows = geo.batch * geo.n_out;
    let row_len = geo.width * geo.cin;
    if let Some(gk) = gk {
        let cols = im2col(geo, x);
        T::gemm(row_len, rows, geo.cout, &cols, true, gout, false, gk, true);
    }
    if let Some(gb) = gb {
        for row in gout.chunks_exact(geo.cout) {
            for (acc, &g) in gb.iter_mut().zip(row) {
                *acc += g;
            }
        }
    }
    if let Some(gx) = gx {
        let mut gcols = vec![T::zero(); rows * row_len];
        T::gemm(rows, geo.cout, row_len, gout, false, kernel, true, &mut gcols, false);
        for b in 0..geo.batch {
            let gxb = &mut gx[b * geo.n * geo.cin..(b + 1) * geo.n * geo.cin];
            for t in 0..geo.n_out {
                let row = &gcols[(b * geo.n_out + t) * row_len..(b * geo.n_out + t + 1) * row_len];
                for j in 0..geo.width {
                    let pos = (t * geo.stride + j) as isize - geo.pad_left as isize;
                    if pos >= 0 && (pos as usize) < geo.n {
                        let p = pos as usize;
                        for (acc, &g) in gxb[p * geo.cin..(p + 1) * geo.cin]
                            .iter_mut()
                            .zip(&row[j * geo.cin..(j + 1) * geo.cin])
                        {
                            *acc += g;
                        }
                    }
                }
            }
        }
    }
}

// ------------------------------------------------------------------ loss

/// Mask-weighted mean of `−log softmax(logits)[label]` over rows.
/// Returns the loss and the row-wise softmax probabilities.
pub fn softmax_xent<T: Real>(logits: &Tensor<T>, labels: &[usize], mask: &[T]) -> Result<(T, Vec<T>)> {
    let c = logits.features();
    let rows = logits.rows();
    if labels.len() != rows || mask.len() != rows {
        return Err(Error::dim(format!(
            "softmax_xent: {rows} rows but {} labels and {} mask weights",
            labels.len(),
            mask.len()
        )));
    }
    let total: T = mask.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::invalid("softmax_xent: mask selects no positions"));
    }
    let mut probs = Vec::with_capacity(logits.len());
    let mut loss = T::zero();
    for ((row, &label), &w) in logits.data().chunks_exact(c).zip(labels).zip(mask) {
        if label >= c {
            return Err(Error::invalid(format!("softmax_xent: label {label} outside {c} classes")));
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let denom: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_denom = denom.ln();
        probs.extend(row.iter().map(|&v| (v - max).exp() / denom));
        if w != T::zero() {
            loss += w * (log_denom - (row[label] - max));
        }
    }
    Ok((loss / total, probs))
}

pub fn softmax_xent_backward<T: Real>(
    c: usize,
    probs: &[T],
    labels: &[usize],
    mask: &[T],
    gout: T,
    glogits: &mut [T],
) {
    let total: T = mask.iter().copied().sum();
    for (((p, &label), &w), acc) in probs
        .chunks_exact(c)
        .zip(labels)
        .zip(mask)
        .zip(glogits.chunks_exact_mut(c))
    {
        if w == T::zero() {
            continue;
        }
        let scale = gout * w / total;
        for (j, (a, &pj)) in acc.iter_mut().zip(p).enumerate() {
            let onehot = if j == label { T::one() } else { T::zero() };
            *a += scale * (pj - onehot);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn affine_identity_and_hand_example() {
        let x = t(&[2], &[1.0, 0.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(affine(&x, &eye, None).unwrap().data(), &[1.0, 0.0]);

        // [1,2]·[[1,1],[1,-1]] + [0,1] = [3, -1] + [0, 1]
        let x = t(&[2], &[1.0, 2.0]);
        let w = t(&[2, 2], &[1.0, 1.0, 1.0, -1.0]);
        let b = t(&[2], &[0.0, 1.0]);
        assert_eq!(affine(&x, &w, Some(&b)).unwrap().data(), &[3.0, 0.0]);
    }

    #[test]
    fn affine_rejects_mismatch() {
        let x = t(&[3], &[1.0, 2.0, 3.0]);
        let w = t(&[2, 2], &[1.0; 4]);
        assert!(matches!(affine(&x, &w, None), Err(Error::Dimension(_))));
        let x = t(&[2], &[1.0, 2.0]);
        let b = t(&[3], &[0.0; 3]);
        assert!(matches!(affine(&x, &w, Some(&b)), Err(Error::Dimension(_))));
    }

    #[test]
    fn layernorm_hand_values() {
        // Population std of [1,2,3,4] is sqrt(1.25).
        let (y, _) = layernorm(&t(&[4], &[1.0, 2.0, 3.0, 4.0]), 1e-5);
        let s = (1.25f64 + 1e-5).sqrt();
        let want = [-1.5 / s, -0.5 / s, 0.5 / s, 1.5 / s];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in y.data().iter().zip([-1.3416, -0.4472, 0.4472, 1.3416]) {
            assert!((a - b).abs() < 1e-3);
        }
        let (y, _) = layernorm(&t(&[4], &[5.0; 4]), 1e-5);
        assert_eq!(y.data(), &[0.0; 4]);
    }

    #[test]
    fn layernorm_fixed_point() {
        let v = [1.0, -1.0, 1.0, -1.0];
        let (y, _) = layernorm(&t(&[4], &v), 1e-5);
        for (a, b) in y.data().iter().zip(v) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn scalar_activations() {
        let x = Tensor::<f64>::from_f64([5], &[-3.0, -0.5, 0.0, 0.7, 2.5]).unwrap();
        let (y, dy) = gelu_with_grad(&x);
        for ((&xi, &yi), &di) in x.data().iter().zip(y.data()).zip(&dy) {
            assert!((yi - gelu_scalar(xi)).abs() < 1e-15);
            assert!((di - gelu_grad_scalar(xi)).abs() < 1e-15);
        }
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        assert!((gelu_scalar(1.0f64) - 0.841_344_746).abs() < 1e-6);
        assert!(gelu_scalar(-10.0f64).abs() < 1e-6);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!((sigmoid_scalar(9f64.ln()) - 0.9).abs() < 1e-15);
        assert!(sigmoid_scalar(-800.0f64).is_finite());
        assert_eq!(sigmoid_scalar(1000.0f64), 1.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[5, 1], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let k = t(&[1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv1d(&x, &k, &b, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_same_padding_halves_length() {
        let x = Tensor::<f64>::zeros([4096, 1]);
        let k = Tensor::zeros([4, 1, 8]);
        let b = Tensor::zeros([8]);
        let y = conv1d(&x, &k, &b, 2).unwrap();
        assert_eq!(y.shape(), &[2048, 8]);
        let k2 = Tensor::zeros([4, 8, 8]);
        let y = conv1d(&y, &k2, &b, 2).unwrap();
        assert_eq!(y.shape(), &[1024, 8]);
        assert!(matches!(conv1d(&x, &k, &b, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn conv_hand_example() {
        // width 2, stride 2, n=4: pad_total 0 -> windows [x0,x1], [x2,x3].
        let x = t(&[4, 1], &[1.0, 2.0, 3.0, 4.0]);
        let k = t(&[2, 1, 1], &[1.0, 10.0]);
        let b = t(&[1], &[0.5]);
        let y = conv1d(&x, &k, &b, 2).unwrap();
        assert_eq!(y.data(), &[21.5, 43.5]);
    }

    #[test]
    fn xent_closed_forms() {
        let logits = t(&[1, 4], &[0.0; 4]);
        let (loss, _) = softmax_xent(&logits, &[2], &[1.0]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        let logits = t(&[1, 2], &[0.0, 3f64.ln()]);
        let (loss, _) = softmax_xent(&logits, &[1], &[1.0]).unwrap();
        assert!((loss + (0.75f64).ln()).abs() < 1e-12);
        assert!((loss - 0.2877).abs() < 1e-4);
        assert!(matches!(
            softmax_xent(&logits, &[1], &[0.0]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            softmax_xent(&logits, &[2], &[1.0]),
            Err(Error::Validation(_))
        ));
    }
}
