//! Grayscale images and the procedural terrain renderer.

use std::io::{Read, Write};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::simworld::{Terrain, Texture};

use super::FrontendError;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FrontendError> {
        if data.len() != width * height {
            return Err(FrontendError::BadDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Binary PGM (P5), 8 bits per pixel.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.write_all(&bytes)
    }

    pub fn read_pgm<R: Read>(mut input: R) -> Result<Self, FrontendError> {
        let mut buf = Vec::new();
        input
            .read_to_end(&mut buf)
            .map_err(|e| FrontendError::Pgm(e.to_string()))?;
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(FrontendError::Pgm("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(FrontendError::Pgm(
                "only 8-bit P5 images are supported".into(),
            ));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| FrontendError::Pgm(format!("bad dimension {s}")))
        };
        let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
        let pixels = buf
            .get(pos..pos + width * height)
            .ok_or_else(|| FrontendError::Pgm("truncated pixels".into()))?;
        Self::new(
            width,
            height,
            pixels.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }
}

/// Lambertian lighting for the renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shading {
    /// Unit direction towards the sun, world frame.
    pub sun: Vector3<f64>,
    pub ambient: f64,
    /// Intensity of pixels whose ray misses the terrain.
    pub sky: f64,
}

impl Default for Shading {
    fn default() -> Self {
        Self {
            sun: Vector3::new(0.4, 0.3, 0.866).normalize(),
            ambient: 0.3,
            sky: 0.0,
        }
    }
}

fn render_pixel(
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    terrain: &Terrain,
    texture: &dyn Texture,
    shading: &Shading,
    px: f64,
    py: f64,
) -> f64 {
    let uv = intrinsics.pixel_to_normalized(&Vector2::new(px, py));
    let dir = (pose.body_to_world() * Vector3::new(uv.x, uv.y, 1.0)).normalize();
    let Ok(range) = terrain.ray_intersect(&pose.position, &dir) else {
        return shading.sky;
    };
    let hit = pose.position + dir * range;
    let footprint = range / intrinsics.focal();
    let a = texture.albedo(hit.x, hit.y, footprint);
    let lambert = terrain
        .normal_at(hit.x, hit.y)
        .map(|n| n.dot(&shading.sun).max(0.0))
        .unwrap_or(1.0);
    (a * (shading.ambient + (1.0 - shading.ambient) * lambert)).clamp(0.0, 1.0)
}

/// Ray-casts every pixel of the camera image.
pub fn render_image(
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    terrain: &Terrain,
    texture: &dyn Texture,
    shading: &Shading,
) -> GrayImage {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                render_pixel(
                    pose, intrinsics, terrain, texture, shading, x as f64, y as f64,
                )
            })
        })
        .collect();
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

/// Renders only the `(2 half + 1)^2` pixel patch centered on the camera
/// pixel `center`; patch pixel `(half, half)` is `center`.
pub fn render_window(
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    terrain: &Terrain,
    texture: &dyn Texture,
    shading: &Shading,
    center: Vector2<f64>,
    half: usize,
) -> GrayImage {
    let n = 2 * half + 1;
    GrayImage::from_fn(n, n, |x, y| {
        let px = center.x + x as f64 - half as f64;
        let py = center.y + y as f64 - half as f64;
        render_pixel(pose, intrinsics, terrain, texture, shading, px, py)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::{sample_lrf, Albedo, ProceduralTerrain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_constant_albedo_renders_constant_image() {
        let terrain = Terrain::flat(10000.0, 0.0);
        let k = CameraIntrinsics::new(90.0, 32, 24).unwrap();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 1000.0), 0.0);
        let img = render_image(
            &pose,
            &k,
            &terrain,
            &Albedo::constant(0.6),
            &Shading::default(),
        );
        let first = img.get(0, 0);
        assert!(first > 0.0);
        assert!(img.data().iter().all(|v| (v - first).abs() < 1e-12));
    }

    #[test]
    fn doubling_altitude_halves_patch_extent() {
        // Bright 200 m square on a dark background.
        let terrain = Terrain::flat(10000.0, 0.0);
        let k = CameraIntrinsics::new(90.0, 129, 129).unwrap();
        let patch = |x: f64, y: f64, _fp: f64| {
            if x.abs() < 100.0 && y.abs() < 100.0 {
                1.0
            } else {
                0.1
            }
        };
        let patch_width = |altitude: f64| {
            let pose = Pose::nadir(Vector3::new(0.0, 0.0, altitude), 0.0);
            let img = render_image(
                &pose,
                &k,
                &terrain,
                &patch,
                &Shading {
                    ambient: 1.0,
                    ..Shading::default()
                },
            );
            (0..129).filter(|&x| img.get(x, 64) > 0.5).count() as f64
        };
        let near = patch_width(400.0);
        let far = patch_width(800.0);
        assert!((near / far - 2.0).abs() < 0.1, "{near} vs {far}");
    }

    #[test]
    fn central_pixel_range_matches_range_finder() {
        let terrain = ProceduralTerrain::centered(6000.0, 50.0, 1500.0, 3)
            .generate()
            .unwrap();
        let pose = Pose::nadir(Vector3::new(120.0, -340.0, 3000.0), 0.2);
        // Odd image size puts a pixel center exactly on the optical axis.
        let k = CameraIntrinsics::new(90.0, 65, 65).unwrap();
        let uv = k.pixel_to_normalized(&k.principal_point());
        let dir = (pose.body_to_world() * Vector3::new(uv.x, uv.y, 1.0)).normalize();
        let pixel_range = terrain.ray_intersect(&pose.position, &dir).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lrf = sample_lrf(&pose, &terrain, 0.0, &mut rng).unwrap();
        assert!((pixel_range - lrf).abs() < 1e-9);
    }

    #[test]
    fn window_matches_full_render() {
        let terrain = ProceduralTerrain::centered(3000.0, 25.0, 300.0, 8)
            .generate()
            .unwrap();
        let k = CameraIntrinsics::new(90.0, 40, 30).unwrap();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 900.0), 0.0);
        let (albedo, shading) = (Albedo::default(), Shading::default());
        let full = render_image(&pose, &k, &terrain, &albedo, &shading);
        let win = render_window(
            &pose,
            &k,
            &terrain,
            &albedo,
            &shading,
            Vector2::new(20.0, 15.0),
            3,
        );
        for y in 0..7 {
            for x in 0..7 {
                assert_eq!(win.get(x, y), full.get(17 + x, 12 + y));
            }
        }
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 5 + y) as f64 / 40.0).min(1.0));
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = GrayImage::read_pgm(buf.as_slice()).unwrap();
        assert_eq!((back.width(), back.height()), (7, 5));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
