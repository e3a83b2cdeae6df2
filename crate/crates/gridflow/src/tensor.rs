//! Dense row-major f64 tensors and the matrix kernels the network runs on.

use crate::error::{Error, Result};

/// Dense tensor with row-major storage. Rank is 1 or 2 in practice
/// (weight matrices, bias vectors, activation batches).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a rank-2 tensor (a rank-1 tensor is one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on rank-{} tensor", self.shape.len()),
        }
    }

    /// Number of columns of a rank-1 or rank-2 tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "{} must be rank 2, got shape {:?}",
            what, t.shape
        )));
    }
    Ok((t.shape[0], t.shape[1]))
}

/// C = A[m,k] · B[k,n]
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = dims2(a, "matmul lhs")?;
    let (kb, n) = dims2(b, "matmul rhs")?;
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul inner dims {} vs {}",
            ka, kb
        )));
    }
    let mut c = Tensor::zeros(&[m, n]);
    dgemm(m, ka, n, &a.data, ka as isize, 1, &b.data, n as isize, 1, &mut c.data);
    Ok(c)
}

/// C = Aᵀ[m,k] · B[k,n] where A is stored as [k,m]. Used for weight gradients.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ka, m) = dims2(a, "matmul_tn lhs")?;
    let (kb, n) = dims2(b, "matmul_tn rhs")?;
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul_tn inner dims {} vs {}",
            ka, kb
        )));
    }
    let mut c = Tensor::zeros(&[m, n]);
    dgemm(m, ka, n, &a.data, 1, m as isize, &b.data, n as isize, 1, &mut c.data);
    Ok(c)
}

/// C = A[m,k] · Bᵀ[k,n] where B is stored as [n,k]. Used for input gradients.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = dims2(a, "matmul_nt lhs")?;
    let (n, kb) = dims2(b, "matmul_nt rhs")?;
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul_nt inner dims {} vs {}",
            ka, kb
        )));
    }
    let mut c = Tensor::zeros(&[m, n]);
    dgemm(m, ka, n, &a.data, ka as isize, 1, &b.data, 1, kb as isize, &mut c.data);
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    // Strides validated by the shape checks above; output is freshly zeroed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Add a bias row vector to every row of a rank-2 tensor in place.
pub fn add_bias_rows(t: &mut Tensor, bias: &Tensor) -> Result<()> {
    let (_, n) = dims2(t, "add_bias_rows target")?;
    if bias.len() != n {
        return Err(Error::Dimension(format!(
            "bias length {} vs {} columns",
            bias.len(),
            n
        )));
    }
    for row in t.data.chunks_mut(n) {
        for (x, b) in row.iter_mut().zip(bias.data.iter()) {
            *x += b;
        }
    }
    Ok(())
}

/// Column sums of a rank-2 tensor, as a rank-1 tensor. Used for bias gradients.
pub fn col_sums(t: &Tensor) -> Result<Tensor> {
    let (_, n) = dims2(t, "col_sums input")?;
    let mut out = Tensor::zeros(&[n]);
    for row in t.data.chunks(n) {
        for (o, x) in out.data.iter_mut().zip(row.iter()) {
            *o += x;
        }
    }
    Ok(out)
}
