//! Importance sampling of lighting-matrix entries and low-rank completion.

mod admm;

pub use admm::{admm_nmf, admm_nmf_channel, AdmmParams, AdmmStats, ChannelFactors, ColorFactors};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::Color;

const ABSENT: u32 = u32::MAX;

/// Known entries of one slice matrix.
#[derive(Clone, Debug)]
pub struct SparseObservations {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize)>,
    values: Vec<Color>,
    /// Row-major `rows x cols` map from entry to its position in `entries`.
    slot: Vec<u32>,
}

impl SparseObservations {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseObservations {
            rows,
            cols,
            entries: Vec::new(),
            values: Vec::new(),
            slot: vec![ABSENT; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.slot[row * self.cols + col] != ABSENT
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Color> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        match self.slot[row * self.cols + col] {
            ABSENT => None,
            k => Some(self.values[k as usize]),
        }
    }

    /// Adds an entry. Returns `Ok(false)` if it was already known.
    pub fn insert(&mut self, row: usize, col: usize, value: Color) -> Result<bool> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::DimensionMismatch(format!(
                "entry ({row}, {col}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        if !(value.is_finite() && value.is_nonnegative()) {
            return Err(Error::InvalidParameter(format!(
                "entry ({row}, {col}) must be finite and nonnegative"
            )));
        }
        let s = &mut self.slot[row * self.cols + col];
        if *s != ABSENT {
            return Ok(false);
        }
        *s = self.entries.len() as u32;
        self.entries.push((row, col));
        self.values.push(value);
        Ok(true)
    }

    /// `(row, col, value)` in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Color)> + '_ {
        self.entries.iter().zip(&self.values).map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.cols];
        for &(_, j) in &self.entries {
            c[j] += 1;
        }
        c
    }

    /// Observed `(col, value)` pairs per row, each row sorted by column.
    pub fn by_row(&self) -> Vec<Vec<(usize, Color)>> {
        let mut rows = vec![Vec::new(); self.rows];
        for (i, j, v) in self.iter() {
            rows[i].push((j, v));
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(j, _)| j);
        }
        rows
    }
}

/// Range of observed luminances in column `j`: `max - min`. `None` when the
/// column has no observation.
pub fn light_importance(obs: &SparseObservations, j: usize) -> Option<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, col, v) in obs.iter() {
        if col == j {
            let l = v.luminance();
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    (hi >= lo).then_some(hi - lo)
}

fn all_importances(obs: &SparseObservations) -> Vec<Option<f64>> {
    let mut lo = vec![f64::INFINITY; obs.cols()];
    let mut hi = vec![f64::NEG_INFINITY; obs.cols()];
    for (_, j, v) in obs.iter() {
        let l = v.luminance();
        lo[j] = lo[j].min(l);
        hi[j] = hi[j].max(l);
    }
    lo.iter().zip(&hi).map(|(&l, &h)| (h >= l).then_some(h - l)).collect()
}

/// Separable sampling density `pdf(i, j) = f(i) g(j) / normalization`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pdf {
    pub column_weights: Vec<f64>,
    pub row_weights: Vec<f64>,
    pub normalization: f64,
}

impl Pdf {
    pub fn uniform(rows: usize, cols: usize) -> Self {
        Pdf {
            column_weights: vec![1.0; cols],
            row_weights: vec![1.0; rows],
            normalization: (rows * cols) as f64,
        }
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.row_weights[row] * self.column_weights[col] / self.normalization
    }

    /// Probability of drawing column `j`.
    pub fn column_marginal(&self, col: usize) -> f64 {
        let total: f64 = self.column_weights.iter().sum();
        self.column_weights[col] / total
    }
}

/// Builds the sampling density from what is already observed: uniform rows,
/// columns weighted by their importance plus `floor`. Unobserved columns get
/// the mean importance of the observed ones.
pub fn build_pdf(obs: &SparseObservations, floor: f64) -> Pdf {
    let imp = all_importances(obs);
    let observed: Vec<f64> = imp.iter().flatten().copied().collect();
    let mean = if observed.is_empty() {
        0.0
    } else {
        observed.iter().sum::<f64>() / observed.len() as f64
    };
    let weights: Vec<f64> = imp.iter().map(|g| g.unwrap_or(mean) + floor).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Pdf::uniform(obs.rows(), obs.cols());
    }
    Pdf {
        column_weights: weights,
        row_weights: vec![1.0; obs.rows()],
        normalization: total * obs.rows() as f64,
    }
}

/// Number of observations `rate` asks for, capped at the matrix size.
pub fn target_count(rows: usize, cols: usize, rate: f64) -> usize {
    let full = rows * cols;
    ((rate * full as f64).ceil() as usize).min(full)
}

/// Draws entries (column by the pdf's column marginal, then a uniform row)
/// until `obs` holds at least `rate * rows * cols` entries. Repeated draws
/// are skipped without evaluation. After `10x` the missing count in draws,
/// the rest is filled by scanning unobserved entries in row-major order.
/// Returns the number of evaluations made.
pub fn sample_entries<R: Rng + ?Sized>(
    obs: &mut SparseObservations,
    rate: f64,
    pdf: &Pdf,
    rng: &mut R,
    mut evaluate: impl FnMut(usize, usize) -> Color,
) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidParameter(format!("sampling rate {rate} outside (0, 1]")));
    }
    let target = target_count(obs.rows(), obs.cols(), rate);
    if obs.len() >= target {
        return Ok(0);
    }
    let budget = 10 * (target - obs.len());
    let columns =
        WeightedIndex::new(&pdf.column_weights).map_err(|e| Error::InvalidParameter(format!("column weights: {e}")))?;
    let mut evaluations = 0;
    let mut draws = 0;
    while obs.len() < target && draws < budget {
        draws += 1;
        let j = columns.sample(rng);
        let i = rng.random_range(0..obs.rows());
        if obs.contains(i, j) {
            continue;
        }
        obs.insert(i, j, evaluate(i, j))?;
        evaluations += 1;
    }
    'scan: for i in 0..obs.rows() {
        for j in 0..obs.cols() {
            if obs.len() >= target {
                break 'scan;
            }
            if !obs.contains(i, j) {
                obs.insert(i, j, evaluate(i, j))?;
                evaluations += 1;
            }
        }
    }
    Ok(evaluations)
}

/// Gives every column without observations one entry at a random row.
pub fn fill_empty_columns<R: Rng + ?Sized>(
    obs: &mut SparseObservations,
    rng: &mut R,
    mut evaluate: impl FnMut(usize, usize) -> Color,
) -> Result<usize> {
    let counts = obs.column_counts();
    let mut n = 0;
    for (j, _) in counts.iter().enumerate().filter(|(_, &c)| c == 0) {
        let i = rng.random_range(0..obs.rows());
        obs.insert(i, j, evaluate(i, j))?;
        n += 1;
    }
    Ok(n)
}

/// `||P_Omega(XY - M)||_F / ||P_Omega(M)||_F` over all three channels. When
/// the observed data are all zero the unnormalized norm is returned.
pub fn completion_residual(obs: &SparseObservations, factors: &ColorFactors) -> Result<f64> {
    if factors.rows() != obs.rows() || factors.cols() != obs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "factors are {}x{}, observations {}x{}",
            factors.rows(),
            factors.cols(),
            obs.rows(),
            obs.cols()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j, v) in obs.iter() {
        let p = factors.entry(i, j);
        for c in 0..3 {
            let e = p.channel(c) - v.channel(c);
            num += e * e;
            den += v.channel(c) * v.channel(c);
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}
