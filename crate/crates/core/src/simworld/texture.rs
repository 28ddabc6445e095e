//! Procedural surface albedo.

use super::noise::{octave_seed, value_noise};

/// Surface reflectance as a function of world position and the ground
/// footprint of one sample (m).
pub trait Texture: Sync {
    fn albedo(&self, x: f64, y: f64, footprint: f64) -> f64;
}

impl<F: Fn(f64, f64, f64) -> f64 + Sync> Texture for F {
    fn albedo(&self, x: f64, y: f64, footprint: f64) -> f64 {
        self(x, y, footprint)
    }
}

impl Texture for Albedo {
    fn albedo(&self, x: f64, y: f64, footprint: f64) -> f64 {
        self.sample(x, y, footprint)
    }
}

/// Fractal albedo field, band-limited to the sampling footprint so that a
/// pixel never aliases octaves finer than itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Albedo {
    pub seed: u64,
    /// Wavelength of the coarsest octave (m).
    pub coarsest_wavelength: f64,
    /// Wavelength of the finest octave (m).
    pub finest_wavelength: f64,
    pub persistence: f64,
    /// Mean albedo and peak deviation around it; intensities stay in [0, 1].
    pub mean: f64,
    pub contrast: f64,
}

impl Default for Albedo {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            coarsest_wavelength: 4096.0,
            finest_wavelength: 1.0,
            persistence: 0.8,
            mean: 0.5,
            contrast: 0.45,
        }
    }
}

impl Albedo {
    pub fn constant(value: f64) -> Self {
        Self {
            mean: value,
            contrast: 0.0,
            ..Self::default()
        }
    }

    /// Albedo at world `(x, y)` seen with a ground footprint of `footprint`
    /// meters per sample. Octaves shorter than two footprints fade out.
    pub fn sample(&self, x: f64, y: f64, footprint: f64) -> f64 {
        if self.contrast == 0.0 {
            return self.mean;
        }
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut amplitude = 1.0;
        let mut wavelength = self.coarsest_wavelength;
        let mut k = 0;
        while wavelength >= self.finest_wavelength {
            // Full weight above four footprints, none below two.
            let w = ((wavelength / footprint.max(1e-9) - 2.0) / 2.0).clamp(0.0, 1.0);
            if w > 0.0 {
                sum += w
                    * amplitude
                    * value_noise(octave_seed(self.seed, k), x / wavelength, y / wavelength);
            }
            norm += amplitude;
            amplitude *= self.persistence;
            wavelength *= 0.5;
            k += 1;
        }
        // Octave values are roughly uniform, so the sum rarely reaches the
        // bound; the scale keeps the field visibly textured.
        let v = if norm > 0.0 { 2.5 * sum / norm } else { 0.0 };
        (self.mean + self.contrast * v.clamp(-1.0, 1.0)).clamp(0.0, 1.0)
    }
}
