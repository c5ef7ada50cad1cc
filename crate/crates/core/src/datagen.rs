//! Reference data: analytic 2D Taylor-Green snapshots, smooth 3D fields,
//! and seeded synthetic matrices of known rank.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so outputs are reproducible across platforms.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sketch::{multi_index, GridGeom};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qoi {
    U1,
    U2,
    P,
}

impl Qoi {
    pub fn name(self) -> &'static str {
        match self {
            Qoi::U1 => "u1",
            Qoi::U2 => "u2",
            Qoi::P => "p",
        }
    }
}

impl std::str::FromStr for Qoi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u1" => Ok(Qoi::U1),
            "u2" => Ok(Qoi::U2),
            "p" => Ok(Qoi::P),
            other => Err(Error::InvalidConfig(format!("unknown QoI {other:?}"))),
        }
    }
}

/// Analytic incompressible Taylor-Green vortex on `[0, 2π)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorGreenParams {
    pub nu: f64,
    pub rho: f64,
    pub grid: GridGeom,
    /// Snapshot interval in seconds; snapshot `j` is taken at `t = j·dt`.
    pub dt: f64,
    pub n: usize,
    pub qoi: Qoi,
}

impl TaylorGreenParams {
    /// 20×20 periodic grid, 100 snapshots 0.1 s apart, ν = 0.1, ρ = 1.
    pub fn reference(qoi: Qoi) -> Self {
        Self {
            nu: 0.1,
            rho: 1.0,
            grid: GridGeom::structured(vec![20, 20], vec![true, true]).expect("valid grid"),
            dt: 0.1,
            n: 100,
            qoi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.nu) || !positive(self.rho) || !positive(self.dt) {
            return Err(Error::InvalidConfig(
                "nu, rho and dt must be positive".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("need at least one snapshot".into()));
        }
        if self.grid.axis_count() != 2 {
            return Err(Error::InvalidGeometry(
                "Taylor-Green grid must be 2D".into(),
            ));
        }
        Ok(())
    }
}

/// Point coordinates of a grid. Structured axes are spread uniformly over
/// `[0, 2π)`, matching the doubly periodic Taylor-Green domain.
pub fn grid_points(geom: &GridGeom) -> Vec<Vec<f64>> {
    match geom {
        GridGeom::Structured { dims, .. } => (0..geom.num_points())
            .map(|flat| {
                multi_index(dims, flat)
                    .iter()
                    .zip(dims)
                    .map(|(&i, &d)| 2.0 * PI * i as f64 / d as f64)
                    .collect()
            })
            .collect(),
        GridGeom::Unstructured { points } => points.clone(),
    }
}

fn tg_value(qoi: Qoi, nu: f64, rho: f64, x1: f64, x2: f64, t: f64) -> f64 {
    match qoi {
        Qoi::U1 => x1.sin() * x2.cos() * (-2.0 * nu * t).exp(),
        Qoi::U2 => -x1.cos() * x2.sin() * (-2.0 * nu * t).exp(),
        Qoi::P => rho / 4.0 * ((2.0 * x1).cos() + (2.0 * x2).sin()) * (-4.0 * nu * t).exp(),
    }
}

pub fn taylor_green_snapshot(params: &TaylorGreenParams, t: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("time {t} must be >= 0")));
    }
    Ok(grid_points(&params.grid)
        .iter()
        .map(|p| tg_value(params.qoi, params.nu, params.rho, p[0], p[1], t))
        .collect())
}

/// All `n` snapshots as an `m × n` matrix.
pub fn taylor_green_matrix(params: &TaylorGreenParams) -> Result<DenseMatrix> {
    let cols = (0..params.n)
        .map(|j| taylor_green_snapshot(params, j as f64 * params.dt))
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(&cols)
}

/// Smooth 3D velocity-like field `sin(x)cos(y)cos(z)·exp(-3νt)` sampled on a
/// non-periodic grid spanning `[0, π]` per axis, the same points per
/// wavelength as a `2d`-point periodic grid over `[0, 2π)`.
pub fn smooth_field_3d(dims: [usize; 3], nu: f64, t: f64) -> Vec<f64> {
    let coord = |i: usize, d: usize| PI * i as f64 / (d - 1) as f64;
    let mut out = Vec::with_capacity(dims.iter().product());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let (x, y, z) = (coord(i, dims[0]), coord(j, dims[1]), coord(k, dims[2]));
                out.push(x.sin() * y.cos() * z.cos() * (-3.0 * nu * t).exp());
            }
        }
    }
    out
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    // Column-major fill order is part of the reproducibility contract.
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    DenseMatrix::new(rows, cols, data).expect("non-empty shape")
}

fn exact_rank_from(m: usize, n: usize, r: usize, rng: &mut SeededRng) -> DenseMatrix {
    if r == 0 {
        return DenseMatrix::zeros(m, n);
    }
    let left = uniform_matrix(m, r, rng);
    let right = uniform_matrix(r, n, rng);
    left.matmul(&right).expect("inner dimensions agree")
}

/// Seeded product of `m × r` and `r × n` factors with entries in `[-1, 1]`.
/// `r = 0` yields the zero matrix.
pub fn gen_exact_rank(m: usize, n: usize, r: usize, seed: u64) -> Result<DenseMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig("empty shape".into()));
    }
    if r > m.min(n) {
        return Err(Error::InvalidConfig(format!(
            "rank {r} exceeds min({m}, {n})"
        )));
    }
    Ok(exact_rank_from(m, n, r, &mut rng(seed)))
}

/// Row blocks `(rows, rank)` stacked vertically, each an independent exact-rank
/// block sharing one seeded stream.
pub fn gen_locally_low_rank(blocks: &[(usize, usize)], n: usize, seed: u64) -> Result<DenseMatrix> {
    if blocks.is_empty() || n == 0 || blocks.iter().any(|&(rows, _)| rows == 0) {
        return Err(Error::InvalidConfig(
            "need non-empty blocks and columns".into(),
        ));
    }
    if let Some(&(rows, r)) = blocks.iter().find(|&&(rows, r)| r > rows.min(n)) {
        return Err(Error::InvalidConfig(format!(
            "block rank {r} exceeds min({rows}, {n})"
        )));
    }
    let mut rng = rng(seed);
    let parts: Vec<DenseMatrix> = blocks
        .iter()
        .map(|&(rows, r)| exact_rank_from(rows, n, r, &mut rng))
        .collect();
    let m: usize = blocks.iter().map(|b| b.0).sum();
    let mut out = DenseMatrix::zeros(m, n);
    let mut offset = 0;
    for p in &parts {
        for j in 0..n {
            out.col_mut(j)[offset..offset + p.rows()].copy_from_slice(p.col(j));
        }
        offset += p.rows();
    }
    Ok(out)
}

/// `Σ_i decay^i · u_i v_iᵀ` over `min(m, n)` terms with uniform `[-1, 1]`
/// vectors: full rank with a geometrically decaying spectrum.
pub fn gen_decaying_spectrum(m: usize, n: usize, decay: f64, seed: u64) -> Result<DenseMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig("empty shape".into()));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "decay {decay} must lie in (0, 1)"
        )));
    }
    let r = m.min(n);
    let mut left = uniform_matrix(m, r, &mut rng(seed));
    let right = uniform_matrix(r, n, &mut rng(seed ^ 0x9e37_79b9_7f4a_7c15));
    for i in 0..r {
        left.col_mut(i)
            .iter_mut()
            .for_each(|v| *v *= decay.powi(i as i32));
    }
    left.matmul(&right)
}

/// Random combinations of `modes` smooth separable cosine modes on a
/// structured grid, coordinates normalized to `[0, 1]` per axis.
pub fn gen_smooth_fields(dims: &[usize], n: usize, modes: usize, seed: u64) -> Result<DenseMatrix> {
    if dims.is_empty() || dims.iter().any(|&d| d < 2) || n == 0 || modes == 0 {
        return Err(Error::InvalidConfig(
            "need dims >= 2, n >= 1 and modes >= 1".into(),
        ));
    }
    let mut rng = rng(seed);
    let shapes: Vec<Vec<(f64, f64)>> = (0..modes)
        .map(|_| {
            dims.iter()
                .map(|_| (rng.gen_range(0.0..2.0) * PI, rng.gen_range(0.0..2.0 * PI)))
                .collect()
        })
        .collect();
    let m: usize = dims.iter().product();
    let basis: Vec<Vec<f64>> = shapes
        .iter()
        .map(|shape| {
            (0..m)
                .map(|flat| {
                    multi_index(dims, flat)
                        .iter()
                        .zip(dims)
                        .zip(shape)
                        .map(|((&i, &d), &(f, phase))| {
                            (f * i as f64 / (d - 1) as f64 + phase).cos()
                        })
                        .product()
                })
                .collect()
        })
        .collect();
    let weights = uniform_matrix(modes, n, &mut rng);
    DenseMatrix::from_columns(&basis)?.matmul(&weights)
}

/// `m` seeded uniform points in the axis-aligned box `domain`.
pub fn gen_unstructured_grid(m: usize, seed: u64, domain: &[(f64, f64)]) -> Result<GridGeom> {
    if m == 0 {
        return Err(Error::InvalidConfig("need at least one point".into()));
    }
    if domain.is_empty() || domain.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidConfig(
            "domain needs lo < hi on every axis".into(),
        ));
    }
    let mut rng = rng(seed);
    let points = (0..m)
        .map(|_| {
            domain
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect()
        })
        .collect();
    GridGeom::unstructured(points)
}
