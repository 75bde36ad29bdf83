use crate::error::{Error, Result};

/// Dense row-major `f64` tensor with up to four axes. A scalar has shape `[]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub const MAX_RANK: usize = 4;

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > MAX_RANK {
            return Err(Error::arg(format!("tensor rank {} exceeds {MAX_RANK}", shape.len())));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::arg("ragged rows"));
        }
        Tensor::new(vec![m, d], rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Size of the last axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

/// Sum that does not depend on the order of the terms.
pub fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}
