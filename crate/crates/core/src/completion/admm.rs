//! Nonnegative matrix completion by the alternating direction method.
//!
//! Solves `min ||P_Omega(XY - M)||_F^2` subject to `X, Y >= 0` through the
//! splitting `X = U, Y = V, U >= 0, V >= 0, P_Omega(Z - M) = 0` with
//! multipliers `Lambda` (for `X - U`) and `Pi` (for `Y - V`). One iteration:
//!
//! ```text
//! X  <- (Z Y' + a U - Lambda) (Y Y' + a I)^-1
//! Y  <- (X' X + b I)^-1 (X' Z + b V - Pi)
//! Z  <- X Y, then Z = M on Omega
//! U  <- max(X + Lambda / a, 0)
//! V  <- max(Y + Pi / b, 0)
//! Lambda <- Lambda + g a (X - U)
//! Pi     <- Pi + g b (Y - V)
//! ```
//!
//! The nonnegative pair `(U, V)` is what gets returned.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use super::SparseObservations;
use crate::error::{Error, Result};
use crate::math::Color;
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmParams {
    pub rank: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Multiplier step, strictly inside `(0, 1.618)`.
    pub gamma: f64,
    pub max_iter: usize,
    /// Stop once the observed-entry residual changes by less than this, relatively.
    pub tol: f64,
    pub seed: u64,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            rank: 16,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.6,
            max_iter: 100,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.rank == 0 {
            return bad("rank must be >= 1");
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return bad("alpha and beta must be > 0");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.618) {
            return bad("gamma must lie in (0, 1.618)");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdmmStats {
    pub iterations: usize,
    /// Relative observed-entry residual of `U V` after each iteration.
    pub residual_history: Vec<f64>,
}

impl AdmmStats {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// One channel's factor pair: `x` is `m x q`, `y` is `q x n`, both `>= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelFactors {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl ChannelFactors {
    pub fn zeros(rows: usize, cols: usize, rank: usize) -> Self {
        ChannelFactors {
            x: DMatrix::zeros(rows, rank),
            y: DMatrix::zeros(rank, cols),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.x
            .row(i)
            .iter()
            .zip(self.y.column(j).iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `X (Y e)`: the row sums of `XY` without forming it.
    pub fn row_sums(&self) -> DVector<f64> {
        let ye: DVector<f64> = DVector::from_iterator(self.y.nrows(), self.y.row_iter().map(|r| r.sum()));
        &self.x * ye
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorFactors {
    pub channels: [ChannelFactors; 3],
    pub stats: [AdmmStats; 3],
}

impl ColorFactors {
    pub fn rows(&self) -> usize {
        self.channels[0].x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.channels[0].y.ncols()
    }

    pub fn rank(&self) -> usize {
        self.channels[0].x.ncols()
    }

    pub fn entry(&self, i: usize, j: usize) -> Color {
        Color::new(
            self.channels[0].entry(i, j),
            self.channels[1].entry(i, j),
            self.channels[2].entry(i, j),
        )
    }

    pub fn row_sums(&self) -> Vec<Color> {
        let s = self.channels.each_ref().map(ChannelFactors::row_sums);
        (0..self.rows())
            .map(|i| Color::new(s[0][i], s[1][i], s[2][i]))
            .collect()
    }

    pub fn iterations(&self) -> usize {
        self.stats.iter().map(|s| s.iterations).max().unwrap_or(0)
    }
}

/// Completes each color channel independently. Every channel starts from the
/// same seeded initial factors.
pub fn admm_nmf(obs: &SparseObservations, params: &AdmmParams) -> Result<ColorFactors> {
    let mut channels = Vec::with_capacity(3);
    let mut stats = Vec::with_capacity(3);
    for c in 0..3 {
        let entries: Vec<(usize, usize, f64)> = obs.iter().map(|(i, j, v)| (i, j, v.channel(c))).collect();
        let (f, s) = admm_nmf_channel(obs.rows(), obs.cols(), &entries, params)?;
        channels.push(f);
        stats.push(s);
    }
    let channels: [ChannelFactors; 3] = channels.try_into().expect("three channels");
    let stats: [AdmmStats; 3] = stats.try_into().expect("three channels");
    Ok(ColorFactors { channels, stats })
}

/// Single-channel completion of a `rows x cols` matrix known at `entries`.
///
/// Data are scaled to a unit maximum before iterating so that the penalty
/// parameters act on a fixed scale; the factors are scaled back on return.
/// Scaling by the mean instead lets bright outliers dominate the penalties and
/// the iteration oscillates on lighting data.
pub fn admm_nmf_channel(
    rows: usize,
    cols: usize,
    entries: &[(usize, usize, f64)],
    params: &AdmmParams,
) -> Result<(ChannelFactors, AdmmStats)> {
    params.validate()?;
    let q = params.rank;
    if q > rows.min(cols) {
        return Err(Error::RankExceedsDimensions { rank: q, rows, cols });
    }
    if entries.is_empty() {
        return Err(Error::InvalidParameter("no observed entries".into()));
    }
    for &(i, j, v) in entries {
        if i >= rows || j >= cols {
            return Err(Error::DimensionMismatch(format!(
                "entry ({i}, {j}) outside {rows}x{cols}"
            )));
        }
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("entry ({i}, {j}) = {v} is not >= 0")));
        }
    }

    let scale = entries.iter().map(|e| e.2).fold(0.0, f64::max);
    if scale == 0.0 {
        // All observations are zero: the zero factorization fits them exactly.
        return Ok((ChannelFactors::zeros(rows, cols, q), AdmmStats::default()));
    }
    let data: Vec<(usize, usize, f64)> = entries.iter().map(|&(i, j, v)| (i, j, v / scale)).collect();
    let data_norm = data.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
    let mean = data.iter().map(|e| e.2).sum::<f64>() / data.len() as f64;

    // Uniform [0, 1) entries, scaled so that E[(XY)_ij] matches the data mean.
    let init = (4.0 * mean / q as f64).sqrt();
    let mut rng = stream_rng(params.seed, 0x0ad4);
    let mut uniform = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * init);
    // X0 is overwritten by the first update before it is read.
    let _ = uniform(rows, q);
    let mut y = uniform(q, cols);
    let mut u = uniform(rows, q);
    let mut v = uniform(q, cols);
    let mut z = DMatrix::zeros(rows, cols);
    for &(i, j, m) in &data {
        z[(i, j)] = m;
    }
    let mut lambda = DMatrix::zeros(rows, q);
    let mut pi = DMatrix::zeros(q, cols);
    let (alpha, beta, gamma) = (params.alpha, params.beta, params.gamma);
    let eye = DMatrix::<f64>::identity(q, q);

    let mut x;
    let mut stats = AdmmStats::default();
    for k in 0..params.max_iter {
        let a = &y * y.transpose() + &eye * alpha;
        let rhs = &z * y.transpose() + &u * alpha - &lambda;
        let chol = Cholesky::new(a).ok_or(Error::Diverged { iterations: k })?;
        x = chol.solve(&rhs.transpose()).transpose();

        let c = x.transpose() * &x + &eye * beta;
        let rhs = x.transpose() * &z + &v * beta - &pi;
        let chol = Cholesky::new(c).ok_or(Error::Diverged { iterations: k })?;
        y = chol.solve(&rhs);

        z = &x * &y;
        for &(i, j, m) in &data {
            z[(i, j)] = m;
        }

        u = (&x + &lambda / alpha).map(|e| e.max(0.0));
        v = (&y + &pi / beta).map(|e| e.max(0.0));
        lambda += (&x - &u) * (gamma * alpha);
        pi += (&y - &v) * (gamma * beta);

        if !(x.iter().all(|e| e.is_finite()) && y.iter().all(|e| e.is_finite())) {
            return Err(Error::Diverged { iterations: k + 1 });
        }

        let err = data
            .iter()
            .map(|&(i, j, m)| {
                let p: f64 = u.row(i).iter().zip(v.column(j).iter()).map(|(a, b)| a * b).sum();
                (p - m) * (p - m)
            })
            .sum::<f64>()
            .sqrt()
            / data_norm;
        stats.iterations = k + 1;
        let prev = stats.residual_history.last().copied();
        stats.residual_history.push(err);
        if err == 0.0 {
            break;
        }
        if let Some(prev) = prev {
            if (prev - err).abs() <= params.tol * prev {
                break;
            }
        }
    }

    u *= scale;
    Ok((ChannelFactors { x: u, y: v }, stats))
}
