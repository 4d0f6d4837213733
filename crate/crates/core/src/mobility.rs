//! Brownian eye movement over a 2D view split into FoV tiles.
//!
//! The view is a `cols x rows` rectangle of square tiles of side `tile_side`,
//! numbered row-major from the origin. Each slot the eye position moves by an
//! independent `Normal(0, 2D)` displacement per axis; the displacement is
//! clamped to one tile per axis and the position to the rectangle, so the
//! next FoV is always the current tile or one of its 8-neighbours.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FovIndex;
use crate::rng::standard_normal;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams<T> {
    pub n_fov: usize,
    pub cols: usize,
    pub rows: usize,
    /// Tile side in view units; D is expressed in squared view units.
    pub tile_side: T,
    /// Diffusion coefficient D; per-axis displacement variance is 2D.
    pub diffusion: T,
}

impl<T: Scalar> Default for MobilityParams<T> {
    fn default() -> Self {
        Self {
            n_fov: 8,
            cols: 4,
            rows: 2,
            tile_side: T::lit(100.0),
            diffusion: T::lit(3.0),
        }
    }
}

impl<T: Scalar> MobilityParams<T> {
    pub fn grid(&self) -> Result<FovGrid<T>> {
        FovGrid::new(self.n_fov, self.cols, self.rows, self.tile_side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovGrid<T> {
    n_fov: usize,
    cols: usize,
    rows: usize,
    tile_side: T,
}

impl<T: Scalar> FovGrid<T> {
    pub fn new(n_fov: usize, cols: usize, rows: usize, tile_side: T) -> Result<Self> {
        if n_fov == 0 || cols * rows != n_fov {
            return Err(Error::InvalidParameter(format!(
                "grid {cols}x{rows} does not hold {n_fov} FoVs"
            )));
        }
        if !(tile_side > T::zero()) {
            return Err(Error::InvalidParameter("tile_side must be positive".into()));
        }
        Ok(Self {
            n_fov,
            cols,
            rows,
            tile_side,
        })
    }

    pub fn n_fov(&self) -> usize {
        self.n_fov
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn tile_side(&self) -> T {
        self.tile_side
    }

    pub fn width(&self) -> T {
        self.tile_side * T::lit(self.cols as f64)
    }

    pub fn height(&self) -> T {
        self.tile_side * T::lit(self.rows as f64)
    }

    /// Column and row of a tile.
    pub fn cell(&self, fov: FovIndex) -> (usize, usize) {
        (fov.value() % self.cols, fov.value() / self.cols)
    }

    pub fn center(&self, fov: FovIndex) -> (T, T) {
        let (c, r) = self.cell(fov);
        let half = T::lit(0.5);
        (
            (T::lit(c as f64) + half) * self.tile_side,
            (T::lit(r as f64) + half) * self.tile_side,
        )
    }

    fn axis_cell(&self, v: T, count: usize) -> usize {
        if v <= T::zero() {
            return 0;
        }
        // boundaries belong to the lower tile
        let c = (v / self.tile_side)
            .ceil()
            .to_usize()
            .unwrap_or(count)
            .saturating_sub(1);
        c.min(count - 1)
    }
}

/// Row-major tile containing `(x, y)`; points on a tile boundary go to the
/// lower-index tile.
pub fn fov_of<T: Scalar>(x: T, y: T, grid: &FovGrid<T>) -> Result<FovIndex> {
    let inside = |v: T, hi: T| v >= T::zero() && v <= hi;
    if !inside(x, grid.width()) || !inside(y, grid.height()) {
        return Err(Error::OutOfGrid {
            x: x.to_f64_lossy(),
            y: y.to_f64_lossy(),
        });
    }
    let col = grid.axis_cell(x, grid.cols);
    let row = grid.axis_cell(y, grid.rows);
    FovIndex::new(row * grid.cols + col, grid.n_fov)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeState<T> {
    pub x: T,
    pub y: T,
    pub diffusion: T,
    pub current_fov: FovIndex,
}

impl<T: Scalar> EyeState<T> {
    pub fn new(x: T, y: T, diffusion: T, grid: &FovGrid<T>) -> Result<Self> {
        Ok(Self {
            x,
            y,
            diffusion,
            current_fov: fov_of(x, y, grid)?,
        })
    }

    /// Eye resting at the center of tile `fov`.
    pub fn at_tile(fov: FovIndex, diffusion: T, grid: &FovGrid<T>) -> Self {
        let (x, y) = grid.center(fov);
        Self {
            x,
            y,
            diffusion,
            current_fov: fov,
        }
    }

    /// Eye placed uniformly at random inside the grid.
    pub fn random<R: Rng + ?Sized>(diffusion: T, grid: &FovGrid<T>, rng: &mut R) -> Self {
        let x = grid.width() * T::lit(rng.random::<f64>());
        let y = grid.height() * T::lit(rng.random::<f64>());
        Self::new(x, y, diffusion, grid).expect("sampled point inside grid")
    }
}

/// Unclamped per-axis displacement, each axis `Normal(0, 2D)`.
pub fn sample_displacement<T: Scalar, R: Rng + ?Sized>(diffusion: T, rng: &mut R) -> (T, T) {
    let std = (T::lit(2.0) * diffusion).max(T::zero()).sqrt();
    let dx = T::lit(standard_normal(rng)) * std;
    let dy = T::lit(standard_normal(rng)) * std;
    (dx, dy)
}

pub fn step_eye<T: Scalar, R: Rng + ?Sized>(
    state: &EyeState<T>,
    grid: &FovGrid<T>,
    rng: &mut R,
) -> EyeState<T> {
    let (dx, dy) = sample_displacement(state.diffusion, rng);
    let limit = grid.tile_side;
    let clamp = |v: T, lo: T, hi: T| v.max(lo).min(hi);
    let x = clamp(state.x + clamp(dx, -limit, limit), T::zero(), grid.width());
    let y = clamp(state.y + clamp(dy, -limit, limit), T::zero(), grid.height());
    EyeState {
        x,
        y,
        diffusion: state.diffusion,
        current_fov: fov_of(x, y, grid).expect("clamped point inside grid"),
    }
}

/// Advances every eye `slots - 1` times; entry `t` of each sequence is the
/// FoV after `t` steps, so entry 0 is the starting tile.
pub fn generate_trace<T: Scalar, R: Rng + ?Sized>(
    users: &mut [EyeState<T>],
    grid: &FovGrid<T>,
    slots: usize,
    rng: &mut R,
) -> Result<Vec<Vec<FovIndex>>> {
    if slots == 0 {
        return Err(Error::InvalidParameter("trace needs at least one slot".into()));
    }
    let mut traces: Vec<Vec<FovIndex>> = users
        .iter()
        .map(|u| {
            let mut v = Vec::with_capacity(slots);
            v.push(u.current_fov);
            v
        })
        .collect();
    for _ in 1..slots {
        for (eye, trace) in users.iter_mut().zip(traces.iter_mut()) {
            *eye = step_eye(eye, grid, rng);
            trace.push(eye.current_fov);
        }
    }
    Ok(traces)
}

/// Writes traces as CSV with header `slot,user_id,fov`.
pub fn write_trace_csv<W: Write>(traces: &[Vec<FovIndex>], mut out: W) -> Result<()> {
    writeln!(out, "slot,user_id,fov")?;
    let slots = traces.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..slots {
        for (user, trace) in traces.iter().enumerate() {
            if let Some(f) = trace.get(t) {
                writeln!(out, "{t},{user},{f}")?;
            }
        }
    }
    Ok(())
}

/// Parses the CSV written by [`write_trace_csv`].
pub fn read_trace_csv(text: &str, n_fov: usize) -> Result<Vec<Vec<FovIndex>>> {
    let mut traces: Vec<Vec<FovIndex>> = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "trace line {}: expected 3 fields",
                lineno + 1
            )));
        }
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| {
                Error::InvalidParameter(format!("trace line {}: bad field {s:?}", lineno + 1))
            })
        };
        let (slot, user, fov) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
        if traces.len() <= user {
            traces.resize_with(user + 1, Vec::new);
        }
        if traces[user].len() != slot {
            return Err(Error::InvalidParameter(format!(
                "trace line {}: slot {slot} out of order for user {user}",
                lineno + 1
            )));
        }
        traces[user].push(FovIndex::new(fov, n_fov)?);
    }
    Ok(traces)
}
