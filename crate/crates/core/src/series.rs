use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Uniformly sampled multichannel signal. Rows are time steps, columns are
/// channels; `NaN` marks a missing sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    /// Time of the first row.
    pub t0: f64,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, t0: f64, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("time step must be positive"));
        }
        if names.len() != values.ncols() {
            return Err(Error::dim(format!(
                "{} channel names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        Ok(TimeSeries {
            dt,
            t0,
            names,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    /// Column-wise concatenation of series sharing the same time base.
    pub fn hstack(parts: &[&TimeSeries]) -> Result<TimeSeries> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let rows = first.len();
        let cols: usize = parts.iter().map(|p| p.n_channels()).sum();
        let mut values = DMatrix::zeros(rows, cols);
        let mut names = Vec::with_capacity(cols);
        let mut c = 0;
        for p in parts {
            if p.len() != rows || (p.dt - first.dt).abs() > 1e-12 * first.dt {
                return Err(Error::dim("series differ in length or time step"));
            }
            values.view_mut((0, c), (rows, p.n_channels())).copy_from(&p.values);
            names.extend(p.names.iter().cloned());
            c += p.n_channels();
        }
        TimeSeries::new(first.dt, first.t0, names, values)
    }
}
