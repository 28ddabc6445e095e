//! Deterministic lattice value noise used for procedural elevation and albedo.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pseudo-random lattice value in [-1, 1].
fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64((ix as u64).wrapping_mul(0x5851_F42D_4C95_7F2D) ^ (iy as u64)),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smooth value noise with unit lattice spacing, range [-1, 1].
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ix, iy) = (x0 as i64, y0 as i64);
    let (tx, ty) = (fade(x - x0), fade(y - y0));
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Octave `k` of a fractal sum gets its own seed so octaves decorrelate.
pub fn octave_seed(seed: u64, k: u32) -> u64 {
    splitmix64(seed.wrapping_add((k as u64).wrapping_mul(0x632B_E59B_D9B4_E019)))
}
