//! Three-dimensional discrete Fourier transform on x-fastest grids.
//!
//! Forward is unnormalized, `X[k] = sum_x f[x] exp(-2 pi i k.x / n)`; inverse
//! carries the `1/N` factor so `inverse(forward(f)) == f`. Any axis length
//! works (rustfft picks mixed-radix, Rader or Bluestein plans per length).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

pub fn dft3(field: &[Complex64], dims: Dims, direction: Direction) -> Result<Vec<Complex64>> {
    if dims.nx == 0 || dims.ny == 0 || dims.nz == 0 {
        return Err(Error::Shape(format!("zero-length axis in {:?}", dims.as_array())));
    }
    if field.len() != dims.len() {
        return Err(Error::Shape(format!("field has {} values, grid needs {}", field.len(), dims.len())));
    }
    let mut planner = FftPlanner::new();
    let mut data = field.to_vec();
    let n = dims.as_array();
    let strides = [1, dims.nx, dims.nx * dims.ny];
    for axis in 0..3 {
        let fft: Arc<dyn Fft<f64>> = match direction {
            Direction::Forward => planner.plan_fft_forward(n[axis]),
            Direction::Inverse => planner.plan_fft_inverse(n[axis]),
        };
        transform_axis(&mut data, dims, axis, strides, fft.as_ref());
    }
    if direction == Direction::Inverse {
        let scale = 1.0 / dims.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(data)
}

/// Real input convenience wrapper around [`dft3`].
pub fn dft3_real(field: &[f64], dims: Dims) -> Result<Vec<Complex64>> {
    let c: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft3(&c, dims, Direction::Forward)
}

fn transform_axis(data: &mut [Complex64], dims: Dims, axis: usize, strides: [usize; 3], fft: &dyn Fft<f64>) {
    let n = dims.as_array();
    let len = n[axis];
    let stride = strides[axis];
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let lines = n[a] * n[b];
    // gather every line into one contiguous buffer and transform in one call
    let mut buf = vec![Complex64::default(); lines * len];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = 0;
    for v in 0..n[b] {
        for u in 0..n[a] {
            let base = u * strides[a] + v * strides[b];
            for t in 0..len {
                buf[line * len + t] = data[base + t * stride];
            }
            line += 1;
        }
    }
    fft.process_with_scratch(&mut buf, &mut scratch);
    line = 0;
    for v in 0..n[b] {
        for u in 0..n[a] {
            let base = u * strides[a] + v * strides[b];
            for t in 0..len {
                data[base + t * stride] = buf[line * len + t];
            }
            line += 1;
        }
    }
}
