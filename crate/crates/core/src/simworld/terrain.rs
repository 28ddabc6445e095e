//! Regular-grid heightfield terrain.
//!
//! Grid node `(col, row)` sits at world `(origin_x + col * cell_size,
//! origin_y + row * cell_size)`; elevations are stored row-major.
//!
//! ASCII grid file layout, one header key per line followed by the
//! elevations (whitespace separated, row 0 first):
//!
//! ```text
//! ncols 4
//! nrows 3
//! cellsize 25.0
//! origin_x -50.0
//! origin_y -25.0
//! 0 0 0 0
//! 1 1 1 1
//! 2 2 2 2
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::noise::{octave_seed, value_noise};
use super::SimError;

/// Bisection stops once the bracketing interval is shorter than this (m).
const BISECTION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    ncols: usize,
    nrows: usize,
    cell_size: f64,
    origin: Vector2<f64>,
    grid: Vec<f64>,
    min_elevation: f64,
    max_elevation: f64,
}

/// Parameters of the fractal heightfield generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProceduralTerrain {
    pub ncols: usize,
    pub nrows: usize,
    pub cell_size: f64,
    pub origin: Vector2<f64>,
    /// Peak-to-peak elevation range of the generated field (m).
    pub relief: f64,
    /// Elevation of the midpoint of the relief range (m).
    pub base_elevation: f64,
    /// Wavelength of the coarsest octave (m).
    pub base_wavelength: f64,
    pub octaves: u32,
    /// Amplitude ratio between consecutive octaves.
    pub persistence: f64,
    pub seed: u64,
}

impl ProceduralTerrain {
    /// Square grid of `half_extent` meters around the world origin.
    pub fn centered(half_extent: f64, cell_size: f64, relief: f64, seed: u64) -> Self {
        let n = (2.0 * half_extent / cell_size).ceil() as usize + 1;
        Self {
            ncols: n,
            nrows: n,
            cell_size,
            origin: Vector2::new(-half_extent, -half_extent),
            relief,
            base_elevation: 0.0,
            base_wavelength: 8000.0,
            octaves: 5,
            persistence: 0.5,
            seed,
        }
    }

    pub fn generate(&self) -> Result<Terrain, SimError> {
        let mut grid = Vec::with_capacity(self.ncols * self.nrows);
        for row in 0..self.nrows {
            for col in 0..self.ncols {
                let x = self.origin.x + col as f64 * self.cell_size;
                let y = self.origin.y + row as f64 * self.cell_size;
                let mut sum = 0.0;
                let mut amplitude = 1.0;
                let mut wavelength = self.base_wavelength;
                for k in 0..self.octaves {
                    sum += amplitude
                        * value_noise(octave_seed(self.seed, k), x / wavelength, y / wavelength);
                    amplitude *= self.persistence;
                    wavelength *= 0.5;
                }
                grid.push(sum);
            }
        }
        let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for z in grid.iter_mut() {
            let unit = if span > 0.0 {
                (*z - lo) / span - 0.5
            } else {
                0.0
            };
            *z = self.base_elevation + unit * self.relief;
        }
        Terrain::from_grid(self.ncols, self.nrows, self.cell_size, self.origin, grid)
    }
}

impl Terrain {
    pub fn from_grid(
        ncols: usize,
        nrows: usize,
        cell_size: f64,
        origin: Vector2<f64>,
        grid: Vec<f64>,
    ) -> Result<Self, SimError> {
        if ncols < 2 || nrows < 2 {
            return Err(SimError::InvalidTerrain(format!(
                "grid must be at least 2x2, got {ncols}x{nrows}"
            )));
        }
        if !(cell_size > 0.0) {
            return Err(SimError::InvalidTerrain(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if grid.len() != ncols * nrows {
            return Err(SimError::InvalidTerrain(format!(
                "expected {} elevations, got {}",
                ncols * nrows,
                grid.len()
            )));
        }
        if grid.iter().any(|z| !z.is_finite()) {
            return Err(SimError::InvalidTerrain("non-finite elevation".into()));
        }
        let min_elevation = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_elevation = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            ncols,
            nrows,
            cell_size,
            origin,
            grid,
            min_elevation,
            max_elevation,
        })
    }

    /// Constant-elevation terrain covering `[-half_extent, half_extent]^2`.
    pub fn flat(half_extent: f64, elevation: f64) -> Self {
        let origin = Vector2::new(-half_extent, -half_extent);
        Self::from_grid(2, 2, 2.0 * half_extent, origin, vec![elevation; 4])
            .expect("valid flat terrain")
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn min_elevation(&self) -> f64 {
        self.min_elevation
    }

    pub fn max_elevation(&self) -> f64 {
        self.max_elevation
    }

    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.grid[row * self.ncols + col]
    }

    /// Upper corner of the grid extent.
    pub fn extent_max(&self) -> Vector2<f64> {
        self.origin
            + Vector2::new(
                (self.ncols - 1) as f64 * self.cell_size,
                (self.nrows - 1) as f64 * self.cell_size,
            )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let hi = self.extent_max();
        x >= self.origin.x && y >= self.origin.y && x <= hi.x && y <= hi.y
    }

    /// Bilinear elevation at `(x, y)`.
    pub fn elevation_at(&self, x: f64, y: f64) -> Result<f64, SimError> {
        if !self.contains(x, y) {
            return Err(SimError::OutOfExtent { x, y });
        }
        Ok(self.elevation_unchecked(x, y))
    }

    fn cell_coords(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let gx = (x - self.origin.x) / self.cell_size;
        let gy = (y - self.origin.y) / self.cell_size;
        let col = (gx.floor() as usize).min(self.ncols - 2);
        let row = (gy.floor() as usize).min(self.nrows - 2);
        (col, row, gx - col as f64, gy - row as f64)
    }

    fn elevation_unchecked(&self, x: f64, y: f64) -> f64 {
        let (col, row, tx, ty) = self.cell_coords(x, y);
        let z00 = self.node(col, row);
        let z10 = self.node(col + 1, row);
        let z01 = self.node(col, row + 1);
        let z11 = self.node(col + 1, row + 1);
        let a = z00 + (z10 - z00) * tx;
        let b = z01 + (z11 - z01) * tx;
        a + (b - a) * ty
    }

    /// Upward unit surface normal of the bilinear patch at `(x, y)`.
    pub fn normal_at(&self, x: f64, y: f64) -> Result<Vector3<f64>, SimError> {
        if !self.contains(x, y) {
            return Err(SimError::OutOfExtent { x, y });
        }
        let (col, row, tx, ty) = self.cell_coords(x, y);
        let z00 = self.node(col, row);
        let z10 = self.node(col + 1, row);
        let z01 = self.node(col, row + 1);
        let z11 = self.node(col + 1, row + 1);
        let dzdx = ((z10 - z00) * (1.0 - ty) + (z11 - z01) * ty) / self.cell_size;
        let dzdy = ((z01 - z00) * (1.0 - tx) + (z11 - z10) * tx) / self.cell_size;
        Ok(Vector3::new(-dzdx, -dzdy, 1.0).normalize())
    }

    /// Range along the unit ray `dir` from `origin` to the first terrain
    /// crossing. Stepped march at a quarter cell, refined by bisection.
    pub fn ray_intersect(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
    ) -> Result<f64, SimError> {
        let miss = SimError::RayMiss;
        let Some((t_enter, t_exit)) = self.clip_ray(origin, dir) else {
            return Err(miss);
        };
        let height_above = |t: f64| {
            let p = origin + dir * t;
            p.z - self.elevation_unchecked(p.x, p.y)
        };
        let step = self.cell_size / 4.0;
        let mut t_prev = t_enter;
        if height_above(t_prev) <= 0.0 {
            // Origin already at or below the surface.
            return if t_prev <= 0.0 {
                Err(SimError::BelowSurface)
            } else {
                Ok(t_prev)
            };
        }
        while t_prev < t_exit {
            let t = (t_prev + step).min(t_exit);
            let f = height_above(t);
            if f <= 0.0 {
                let (mut lo, mut hi) = (t_prev, t);
                while hi - lo > BISECTION_TOLERANCE {
                    let mid = 0.5 * (lo + hi);
                    if height_above(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
            t_prev = t;
        }
        Err(miss)
    }

    /// Parametric interval where the ray lies inside the grid extent and the
    /// elevation band of the terrain.
    fn clip_ray(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let hi = self.extent_max();
        // The band floor is padded so a ray grazing a flat floor still crosses it.
        let lo3 = [self.origin.x, self.origin.y, self.min_elevation - 1e-3];
        let hi3 = [hi.x, hi.y, self.max_elevation];
        let mut t0: f64 = 0.0;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let o = origin[axis];
            let d = dir[axis];
            if d.abs() < 1e-15 {
                if o < lo3[axis] || o > hi3[axis] {
                    return None;
                }
                continue;
            }
            let (mut a, mut b) = ((lo3[axis] - o) / d, (hi3[axis] - o) / d);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1 && t1.is_finite()).then_some((t0, t1))
    }

    pub fn load_ascii(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_ascii(&text)
    }

    pub fn parse_ascii(text: &str) -> Result<Self, SimError> {
        let mut tokens = text.split_whitespace();
        let mut header = |key: &str| -> Result<f64, SimError> {
            match (tokens.next(), tokens.next()) {
                (Some(k), Some(v)) if k.eq_ignore_ascii_case(key) => v
                    .parse::<f64>()
                    .map_err(|_| SimError::InvalidTerrain(format!("bad value for {key}: {v}"))),
                _ => Err(SimError::InvalidTerrain(format!(
                    "expected header key {key}"
                ))),
            }
        };
        let ncols = header("ncols")? as usize;
        let nrows = header("nrows")? as usize;
        let cell_size = header("cellsize")?;
        let origin = Vector2::new(header("origin_x")?, header("origin_y")?);
        let grid = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| SimError::InvalidTerrain(format!("bad elevation: {t}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_grid(ncols, nrows, cell_size, origin, grid)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "cellsize {}", self.cell_size);
        let _ = writeln!(out, "origin_x {}", self.origin.x);
        let _ = writeln!(out, "origin_y {}", self.origin.y);
        for row in self.grid.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|z| format!("{z}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Elevation range (max - min) over the square of half-size `radius`
    /// centered at `(x, y)`, sampled at grid resolution.
    pub fn local_relief(&self, x: f64, y: f64, radius: f64) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let n = (2.0 * radius / self.cell_size).ceil().max(1.0) as usize;
        for i in 0..=n {
            for j in 0..=n {
                let px = x - radius + 2.0 * radius * i as f64 / n as f64;
                let py = y - radius + 2.0 * radius * j as f64 / n as f64;
                if let Ok(z) = self.elevation_at(px, py) {
                    lo = lo.min(z);
                    hi = hi.max(z);
                }
            }
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp_cell() -> Terrain {
        Terrain::from_grid(2, 2, 1.0, Vector2::zeros(), vec![0.0, 0.0, 0.0, 4.0]).unwrap()
    }

    #[test]
    fn node_queries_return_node_elevation() {
        let t = ProceduralTerrain::centered(200.0, 10.0, 50.0, 1)
            .generate()
            .unwrap();
        for (col, row) in [(0, 0), (3, 7), (40, 40), (12, 29)] {
            let x = t.origin().x + col as f64 * t.cell_size();
            let y = t.origin().y + row as f64 * t.cell_size();
            assert!((t.elevation_at(x, y).unwrap() - t.node(col, row)).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_terrain_is_constant() {
        let t = Terrain::flat(1000.0, 100.0);
        for (x, y) in [(0.0, 0.0), (-999.0, 500.0), (1000.0, 1000.0)] {
            assert_eq!(t.elevation_at(x, y).unwrap(), 100.0);
        }
    }

    #[test]
    fn bilinear_cell_midpoint() {
        // Corners (0, 0, 0, 4): the center averages to 1.
        assert!((ramp_cell().elevation_at(0.5, 0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_extent_query_fails() {
        assert!(matches!(
            ramp_cell().elevation_at(1.5, 0.5),
            Err(SimError::OutOfExtent { .. })
        ));
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(Terrain::from_grid(1, 2, 1.0, Vector2::zeros(), vec![0.0; 2]).is_err());
        assert!(Terrain::from_grid(2, 2, 0.0, Vector2::zeros(), vec![0.0; 4]).is_err());
        assert!(
            Terrain::from_grid(2, 2, 1.0, Vector2::zeros(), vec![0.0, f64::NAN, 0.0, 0.0]).is_err()
        );
    }

    #[test]
    fn nadir_ray_over_flat_ground() {
        let t = Terrain::flat(20000.0, 0.0);
        let r = t
            .ray_intersect(&Vector3::new(10.0, -3.0, 12000.0), &-Vector3::z())
            .unwrap();
        assert!((r - 12000.0).abs() < 1e-3);
    }

    #[test]
    fn oblique_ray_over_flat_ground() {
        let t = Terrain::flat(20000.0, 0.0);
        let h = 750.0;
        let dir = Vector3::new(1.0, 0.0, -1.0).normalize();
        let r = t.ray_intersect(&Vector3::new(0.0, 0.0, h), &dir).unwrap();
        assert!((r - h * 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn upward_ray_misses() {
        let t = Terrain::flat(100.0, 0.0);
        assert!(matches!(
            t.ray_intersect(&Vector3::new(0.0, 0.0, 10.0), &Vector3::z()),
            Err(SimError::RayMiss)
        ));
    }

    /// Dense fixed-step march, independent of the stepping + bisection path.
    fn brute_force_range(t: &Terrain, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let step = 1e-4;
        let mut s: f64 = 0.0;
        loop {
            let p = o + d * s;
            let z = t.elevation_at(p.x, p.y).ok()?;
            if p.z <= z {
                return Some(s);
            }
            s += step;
        }
    }

    #[test]
    fn ray_matches_brute_force_march() {
        let terrain = ProceduralTerrain {
            ncols: 41,
            nrows: 41,
            cell_size: 5.0,
            origin: Vector2::zeros(),
            relief: 40.0,
            base_elevation: 0.0,
            base_wavelength: 80.0,
            octaves: 4,
            persistence: 0.55,
            seed: 99,
        }
        .generate()
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 100 {
            let o = Vector3::new(
                rng.random_range(60.0..140.0),
                rng.random_range(60.0..140.0),
                rng.random_range(25.0..45.0),
            );
            let d = Vector3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                -1.0,
            )
            .normalize();
            let Some(expected) = brute_force_range(&terrain, &o, &d) else {
                continue;
            };
            let got = terrain.ray_intersect(&o, &d).unwrap();
            assert!(
                (got - expected).abs() < 1e-2,
                "ray {checked}: {got} vs {expected}"
            );
            checked += 1;
        }
    }

    #[test]
    fn ascii_round_trip() {
        let t = ProceduralTerrain::centered(50.0, 10.0, 30.0, 4)
            .generate()
            .unwrap();
        let back = Terrain::parse_ascii(&t.to_ascii()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn ascii_header_errors() {
        assert!(Terrain::parse_ascii("nrows 2\nncols 2").is_err());
        assert!(Terrain::parse_ascii(
            "ncols 2\nnrows 2\ncellsize 1\norigin_x 0\norigin_y 0\n1 2 3"
        )
        .is_err());
    }

    #[test]
    fn procedural_relief_is_exact() {
        let t = ProceduralTerrain::centered(2000.0, 50.0, 800.0, 11)
            .generate()
            .unwrap();
        assert!((t.max_elevation() - t.min_elevation() - 800.0).abs() < 1e-9);
    }
}
