//! Tensor checkpoints: for every tensor an ASCII header line
//! `name rows cols\n` followed by `rows·cols` little-endian `f64` values in
//! row-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{BdlError, Result};
use crate::net::NetParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_matrix<T: Scalar>(name: &str, m: &Array2<T>) -> Self {
        Tensor {
            name: name.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn from_vector<T: Scalar>(name: &str, v: &Array1<T>) -> Self {
        Tensor {
            name: name.to_string(),
            rows: 1,
            cols: v.len(),
            data: v.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn to_matrix<T: Scalar>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| {
            T::of(self.data[i * self.cols + j])
        })
    }

    pub fn to_vector<T: Scalar>(&self) -> Array1<T> {
        self.data.iter().map(|&x| T::of(x)).collect()
    }
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[Tensor]) -> std::io::Result<()> {
    for t in tensors {
        writeln!(w, "{} {} {}", t.name, t.rows, t.cols)?;
        for x in &t.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_tensors<R: Read>(r: R) -> Result<Vec<Tensor>> {
    let mut r = BufReader::new(r);
    let mut out = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|e| BdlError::io("<checkpoint>", e))?;
        if n == 0 {
            break;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(BdlError::Parse {
                line: out.len() + 1,
                msg: format!("bad tensor header `{}`", line.trim_end()),
            });
        }
        let dims = |s: &str| {
            s.parse::<usize>().map_err(|_| BdlError::Parse {
                line: out.len() + 1,
                msg: format!("bad tensor dimension `{}`", s),
            })
        };
        let rows = dims(toks[1])?;
        let cols = dims(toks[2])?;
        let mut buf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut buf)
            .map_err(|e| BdlError::io("<checkpoint>", e))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Tensor {
            name: toks[0].to_string(),
            rows,
            cols,
            data,
        });
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| BdlError::io(path, e))?;
    write_tensors(std::io::BufWriter::new(f), tensors).map_err(|e| BdlError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| BdlError::io(path, e))?;
    read_tensors(f)
}

pub fn find<'a>(tensors: &'a [Tensor], name: &str) -> Option<&'a Tensor> {
    tensors.iter().find(|t| t.name == name)
}

/// `W1, b1, W2, b2, ...`
pub fn net_tensors<T: Scalar>(p: &NetParams<T>) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(2 * p.n_layers());
    for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
        out.push(Tensor::from_matrix(&format!("W{}", l + 1), w));
        out.push(Tensor::from_vector(&format!("b{}", l + 1), b));
    }
    out
}

pub fn net_from_tensors<T: Scalar>(tensors: &[Tensor]) -> Result<NetParams<T>> {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 1.. {
        match (find(tensors, &format!("W{}", l)), find(tensors, &format!("b{}", l))) {
            (Some(w), Some(b)) => {
                weights.push(w.to_matrix());
                biases.push(b.to_vector());
            }
            _ => break,
        }
    }
    NetParams::new(weights, biases)
}
