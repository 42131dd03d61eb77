//! Dense multi-way arrays and the handful of contractions the solver needs.
//!
//! Storage is column-major: the first index varies fastest. With this layout
//! the mode-`p` unfolding places entry `(i_1, …, i_N)` in row `i_p` and column
//! `Σ_{q≠p} i_q · Π_{s<q, s≠p} I_s`, which is the ordering for which
//!
//! ```text
//! (A ×_1 V_1 ⋯ ×_N V_N)_(p) = V_p A_(p) (V_N ⊗ ⋯ ⊗ V_{p+1} ⊗ V_{p-1} ⊗ ⋯ ⊗ V_1)ᵀ
//! ```
//!
//! holds. Modes are zero-based throughout the API.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Dimension("tensor needs at least one mode".into()));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Dimension(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    /// Two-way tensor with the same entries as `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        // nalgebra is column-major as well, so the buffer carries over unchanged.
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Index(format!(
                "index of length {} for order-{} tensor",
                index.len(),
                self.shape.len()
            )));
        }
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return Err(Error::Index(format!("{index:?} outside {:?}", self.shape)));
            }
            lin += i * stride;
            stride *= extent;
        }
        Ok(lin)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.linear_index(index)?])
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.shape.len() {
            return Err(Error::Index(format!(
                "mode {mode} for order-{} tensor",
                self.shape.len()
            )));
        }
        Ok(())
    }

    /// Product of the extents before and after `mode`.
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left: usize = self.shape[..mode].iter().product();
        let right: usize = self.shape[mode + 1..].iter().product();
        (left, self.shape[mode], right)
    }

    /// `self ×_mode mat`: replaces extent `I_mode` by `mat.nrows()`.
    pub fn mode_product(&self, mat: &DMatrix<f64>, mode: usize) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let (left, extent, right) = self.split(mode);
        if mat.ncols() != extent {
            return Err(Error::Dimension(format!(
                "mode-{mode} product: matrix has {} columns, extent is {extent}",
                mat.ncols()
            )));
        }
        let rows = mat.nrows();
        let mut out = vec![0.0; left * rows * right];
        for rt in 0..right {
            let src = &self.data[rt * left * extent..(rt + 1) * left * extent];
            let dst = &mut out[rt * left * rows..(rt + 1) * left * rows];
            for i in 0..extent {
                let fiber = &src[i * left..(i + 1) * left];
                for j in 0..rows {
                    let m = mat[(j, i)];
                    if m == 0.0 {
                        continue;
                    }
                    let target = &mut dst[j * left..(j + 1) * left];
                    for (t, s) in target.iter_mut().zip(fiber) {
                        *t += m * s;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[mode] = rows;
        DenseTensor::new(shape, out)
    }

    /// Mode-`mode` unfolding, `I_mode × Π_{q≠mode} I_q`.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        self.check_mode(mode)?;
        let (left, extent, right) = self.split(mode);
        let mut out = DMatrix::zeros(extent, left * right);
        for rt in 0..right {
            for i in 0..extent {
                let base = left * (i + extent * rt);
                for l in 0..left {
                    out[(i, l + left * rt)] = self.data[base + l];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(mat: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
        let mut t = DenseTensor::zeros(shape.to_vec())?;
        t.check_mode(mode)?;
        let (left, extent, right) = t.split(mode);
        if mat.nrows() != extent || mat.ncols() != left * right {
            return Err(Error::Dimension(format!(
                "cannot fold {}x{} into {shape:?} along mode {mode}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        for rt in 0..right {
            for i in 0..extent {
                let base = left * (i + extent * rt);
                for l in 0..left {
                    t.data[base + l] = mat[(i, l + left * rt)];
                }
            }
        }
        Ok(t)
    }
}

/// Frobenius inner product.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::Dimension(format!(
            "inner product of {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Appends the Kronecker expansion `acc ⊗ v` in column-major order.
fn expand_outer(acc: &[f64], v: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(acc.len() * v.len());
    for &vj in v {
        out.extend(acc.iter().map(|a| a * vj));
    }
}

pub fn outer_product(vectors: &[DVector<f64>]) -> Result<DenseTensor> {
    if vectors.len() < 2 {
        return Err(Error::Arity(format!(
            "outer product needs at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    if vectors.iter().any(|v| v.is_empty()) {
        return Err(Error::Dimension("outer product of an empty vector".into()));
    }
    let mut acc = vectors[0].as_slice().to_vec();
    let mut next = Vec::new();
    for v in &vectors[1..] {
        expand_outer(&acc, v.as_slice(), &mut next);
        std::mem::swap(&mut acc, &mut next);
    }
    DenseTensor::new(vectors.iter().map(|v| v.len()).collect(), acc)
}

/// Sample covariance tensor `(1/N) Σ_n x_{1n} ∘ ⋯ ∘ x_{mn}` of views stored
/// as `d_p × N` matrices.
pub fn covariance_tensor(views: &[DMatrix<f64>]) -> Result<DenseTensor> {
    if views.is_empty() {
        return Err(Error::Dataset("no views".into()));
    }
    let n = views[0].ncols();
    if n == 0 {
        return Err(Error::Dataset("views have no samples".into()));
    }
    if let Some((p, v)) = views.iter().enumerate().find(|(_, v)| v.ncols() != n) {
        return Err(Error::Dataset(format!(
            "view {p} has {} samples, view 0 has {n}",
            v.ncols()
        )));
    }
    let shape: Vec<usize> = views.iter().map(|v| v.nrows()).collect();
    let len: usize = shape.iter().product();
    let mut sum = vec![0.0; len];
    let mut acc = Vec::with_capacity(len);
    let mut next = Vec::with_capacity(len);
    for s in 0..n {
        acc.clear();
        acc.extend(views[0].column(s).iter());
        for v in &views[1..] {
            let col: Vec<f64> = v.column(s).iter().copied().collect();
            expand_outer(&acc, &col, &mut next);
            std::mem::swap(&mut acc, &mut next);
        }
        for (t, a) in sum.iter_mut().zip(&acc) {
            *t += a;
        }
    }
    let scale = 1.0 / n as f64;
    sum.iter_mut().for_each(|v| *v *= scale);
    DenseTensor::new(shape, sum)
}

fn check_projections(c: &DenseTensor, projections: &[DMatrix<f64>]) -> Result<()> {
    if projections.len() != c.order() {
        return Err(Error::Dimension(format!(
            "{} projections for an order-{} tensor",
            projections.len(),
            c.order()
        )));
    }
    for (q, h) in projections.iter().enumerate() {
        if h.nrows() != c.shape()[q] {
            return Err(Error::Dimension(format!(
                "projection {q} has {} rows, mode extent is {}",
                h.nrows(),
                c.shape()[q]
            )));
        }
        if h.ncols() != projections[0].ncols() {
            return Err(Error::Dimension(format!(
                "projection {q} has {} columns, projection 0 has {}",
                h.ncols(),
                projections[0].ncols()
            )));
        }
    }
    Ok(())
}

/// `c ×_{q≠skip} H_qᵀ`, applied in ascending mode order.
pub fn contract_all_but(
    c: &DenseTensor,
    projections: &[DMatrix<f64>],
    skip: usize,
) -> Result<DenseTensor> {
    check_projections(c, projections)?;
    c.check_mode(skip)?;
    let mut t = c.clone();
    for (q, h) in projections.iter().enumerate() {
        if q != skip {
            t = t.mode_product(&h.transpose(), q)?;
        }
    }
    Ok(t)
}

/// The correlation tensor `c ×_1 H_1ᵀ ⋯ ×_m H_mᵀ`.
pub fn contract_all(c: &DenseTensor, projections: &[DMatrix<f64>]) -> Result<DenseTensor> {
    check_projections(c, projections)?;
    let mut t = c.clone();
    for (q, h) in projections.iter().enumerate() {
        t = t.mode_product(&h.transpose(), q)?;
    }
    Ok(t)
}
