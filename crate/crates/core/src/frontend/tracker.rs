//! Oracle feature tracker: projects known terrain landmarks through the true
//! camera pose and perturbs them with pixel noise.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{project_normalized, CameraIntrinsics, Pose};
use crate::simworld::Terrain;

/// Image measurement of a tracked feature in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMatch {
    pub feature_id: u64,
    pub normalized: Vector2<f64>,
    pub pixel: Vector2<f64>,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Track {
    id: u64,
    landmark: Vector3<f64>,
    length: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackerOutput {
    pub matches: Vec<FeatureMatch>,
    /// Tracks retired this frame because their landmark left the image.
    pub lost: Vec<u64>,
    /// Fewer than three landmarks visible after replenishment.
    pub starved: bool,
}

#[derive(Debug, Clone)]
pub struct OracleTracker {
    intrinsics: CameraIntrinsics,
    pixel_sigma: f64,
    budget: usize,
    /// Landmarks closer than this to the image border are retired (px).
    border_margin: f64,
    /// New landmarks are sampled at least this far from existing ones (px).
    min_separation: f64,
    tracks: Vec<Track>,
    next_id: u64,
}

impl OracleTracker {
    pub fn new(intrinsics: CameraIntrinsics, pixel_sigma: f64, budget: usize) -> Self {
        let min_separation = 0.12 * intrinsics.width.min(intrinsics.height) as f64;
        Self {
            intrinsics,
            pixel_sigma,
            budget,
            border_margin: 2.0,
            min_separation,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn with_border_margin(mut self, margin: f64) -> Self {
        self.border_margin = margin;
        self
    }

    pub fn with_min_separation(mut self, px: f64) -> Self {
        self.min_separation = px;
        self
    }

    /// Issues feature ids starting at `id`, for keeping trackers disjoint.
    pub fn with_first_id(mut self, id: u64) -> Self {
        self.next_id = id;
        self
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn landmark(&self, id: u64) -> Option<Vector3<f64>> {
        self.tracks.iter().find(|t| t.id == id).map(|t| t.landmark)
    }

    /// Starts tracking a given world point; returns its feature id.
    pub fn add_landmark(&mut self, landmark: Vector3<f64>) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(Track {
            id,
            landmark,
            length: 0,
        });
        id
    }

    pub fn remove(&mut self, id: u64) {
        self.tracks.retain(|t| t.id != id);
    }

    fn pixel_of(&self, pose: &Pose, landmark: &Vector3<f64>) -> Option<Vector2<f64>> {
        let uv = project_normalized(&pose.to_body(landmark)).ok()?;
        let px = self.intrinsics.normalized_to_pixel(&uv);
        let m = self.border_margin;
        let (w, h) = (self.intrinsics.width as f64, self.intrinsics.height as f64);
        (px.x >= m - 0.5 && px.y >= m - 0.5 && px.x <= w - 0.5 - m && px.y <= h - 0.5 - m)
            .then_some(px)
    }

    /// Tracks all landmarks into the frame seen from the true `pose`, retires
    /// the ones that left the image and then samples new terrain landmarks
    /// until the budget is met.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        pose: &Pose,
        frame_index: usize,
        terrain: &Terrain,
        rng: &mut R,
    ) -> TrackerOutput {
        let mut out = TrackerOutput::default();
        let mut kept = Vec::with_capacity(self.tracks.len());
        let tracks = std::mem::take(&mut self.tracks);
        for mut track in tracks {
            match self.measure(pose, &track.landmark, frame_index, track.id, rng) {
                Some(m) => {
                    track.length += 1;
                    out.matches.push(m);
                    kept.push(track);
                }
                None => out.lost.push(track.id),
            }
        }
        self.tracks = kept;
        self.replenish(pose, frame_index, terrain, rng, &mut out);
        out.starved = out.matches.len() < 3;
        out
    }

    fn measure<R: Rng + ?Sized>(
        &self,
        pose: &Pose,
        landmark: &Vector3<f64>,
        frame_index: usize,
        id: u64,
        rng: &mut R,
    ) -> Option<FeatureMatch> {
        let clean = self.pixel_of(pose, landmark)?;
        let noise = if self.pixel_sigma > 0.0 {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            Vector2::new(nx, ny) * self.pixel_sigma
        } else {
            Vector2::zeros()
        };
        let pixel = clean + noise;
        if !self.intrinsics.contains_pixel(&pixel) {
            return None;
        }
        Some(FeatureMatch {
            feature_id: id,
            normalized: self.intrinsics.pixel_to_normalized(&pixel),
            pixel,
            frame_index,
        })
    }

    fn replenish<R: Rng + ?Sized>(
        &mut self,
        pose: &Pose,
        frame_index: usize,
        terrain: &Terrain,
        rng: &mut R,
        out: &mut TrackerOutput,
    ) {
        let (w, h) = (self.intrinsics.width as f64, self.intrinsics.height as f64);
        let inset = self.border_margin + 0.1 * w.min(h);
        let mut attempts = 0;
        while self.tracks.len() < self.budget && attempts < 50 * self.budget {
            attempts += 1;
            let px = Vector2::new(
                rng.random_range(inset..w - 1.0 - inset),
                rng.random_range(inset..h - 1.0 - inset),
            );
            let crowded = out
                .matches
                .iter()
                .any(|m| (m.pixel - px).norm() < self.min_separation);
            if crowded {
                continue;
            }
            let uv = self.intrinsics.pixel_to_normalized(&px);
            let dir = (pose.body_to_world() * Vector3::new(uv.x, uv.y, 1.0)).normalize();
            let Ok(range) = terrain.ray_intersect(&pose.position, &dir) else {
                continue;
            };
            let landmark = pose.position + dir * range;
            let id = self.add_landmark(landmark);
            match self.measure(pose, &landmark, frame_index, id, rng) {
                Some(m) => {
                    self.tracks.last_mut().expect("just pushed").length = 1;
                    out.matches.push(m);
                }
                None => self.remove(id),
            }
        }
    }

    /// Measurement of a single landmark already registered with
    /// [`add_landmark`](Self::add_landmark), for tracks started mid-frame.
    pub fn observe_one<R: Rng + ?Sized>(
        &mut self,
        id: u64,
        pose: &Pose,
        frame_index: usize,
        rng: &mut R,
    ) -> Option<FeatureMatch> {
        let landmark = self.landmark(id)?;
        let m = self.measure(pose, &landmark, frame_index, id, rng);
        match m {
            Some(_) => {
                if let Some(t) = self.tracks.iter_mut().find(|t| t.id == id) {
                    t.length += 1;
                }
            }
            None => self.remove(id),
        }
        m
    }
}
