//! Browser bindings: render a recorded interaction frame by frame, solve
//! inverse kinematics for a clicked target, and sample the mask curriculum.
//!
//! Every export has a plain-Rust counterpart so the logic is testable off
//! the browser.

use compgen_core::datagen::{episode_rng, generate_episode, Combo, Condition, Episode, Split};
use compgen_core::kinematics::{Action, ArmModel, IkSettings};
use compgen_core::language::{sample_mask_config, MaskConfig};
use compgen_core::scene::{ColorId, ShapeId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct EpisodeView {
    episode: Episode,
}

impl EpisodeView {
    pub fn build(action: u8, color: u8, shape: u8, seed: u32, distractor: bool) -> Result<Self, String> {
        let combo = Combo {
            action: Action::from_index(action.into()).ok_or("action index out of range")?,
            color: ColorId::from_index(color.into()).ok_or("color index out of range")?,
            shape: ShapeId::from_index(shape.into()).ok_or("shape index out of range")?,
        };
        // Every pair is legal in the widest condition.
        let cond = Condition {
            actions: 4,
            visible: if distractor { 2 } else { 1 },
            shapes: 9,
            colors: 6,
            exclusive: false,
            joints: true,
        };
        let mut rng = episode_rng(seed.into(), Split::Train, 0);
        let episode = generate_episode(combo, &cond, &mut rng, MaskConfig::FULL, false).map_err(|e| e.to_string())?;
        Ok(Self { episode })
    }
}

#[wasm_bindgen]
impl EpisodeView {
    #[wasm_bindgen(constructor)]
    pub fn new(action: u8, color: u8, shape: u8, seed: u32, distractor: bool) -> Result<EpisodeView, JsError> {
        Self::build(action, color, shape, seed, distractor).map_err(|e| JsError::new(&e))
    }

    pub fn frame_count(&self) -> usize {
        self.episode.frames.len()
    }

    pub fn width(&self) -> usize {
        self.episode.frames[0].raster.width()
    }

    pub fn height(&self) -> usize {
        self.episode.frames[0].raster.height()
    }

    /// RGBA bytes of one frame (row-major, opaque), ready for `ImageData`.
    /// Out-of-range frames clamp to the last one.
    pub fn rgba(&self, frame: usize) -> Vec<u8> {
        let f = &self.episode.frames[frame.min(self.frame_count() - 1)];
        let mut out = Vec::with_capacity(f.raster.len() / 3 * 4);
        for px in f.raster.levels().chunks_exact(3) {
            out.extend(px.iter().map(|&l| (u16::from(l) * 255 / 240) as u8));
            out.push(255);
        }
        out
    }

    /// Joint angles in degrees at one frame.
    pub fn joints(&self, frame: usize) -> Vec<f64> {
        self.episode.frames[frame.min(self.frame_count() - 1)].joints.clone()
    }

    /// Target word at one frame ("n/a" outside the utterance).
    pub fn word(&self, frame: usize) -> String {
        self.episode.frames[frame.min(self.frame_count() - 1)].lang_target.word().to_string()
    }

    pub fn sentence(&self) -> String {
        self.episode.sentence().to_string()
    }
}

/// Damped-least-squares IK from the home pose. Returns the six joint angles in
/// degrees followed by the residual (m), the iteration count and 1/0 for
/// convergence.
#[wasm_bindgen]
pub fn solve_ik(x: f64, y: f64, z: f64) -> Vec<f64> {
    let arm = ArmModel::default();
    let sol = arm.solve_ik_dls([x, y, z], arm.home(), &IkSettings::default());
    let mut out = sol.q.to_degrees().to_vec();
    out.push(sol.residual);
    out.push(sol.iterations as f64);
    out.push(if sol.converged { 1.0 } else { 0.0 });
    out
}

/// Draws `samples` curriculum masks and counts them by number of active
/// words: `[one, two, three]`.
#[wasm_bindgen]
pub fn mask_histogram(samples: u32, seed: u32) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.into());
    let mut counts = vec![0u32; 3];
    for _ in 0..samples {
        counts[sample_mask_config(&mut rng).active_count() - 1] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_view_exposes_frames() {
        let v = EpisodeView::build(0, 4, 0, 1, false).unwrap();
        assert_eq!(v.frame_count(), 28);
        assert_eq!(v.rgba(0).len(), v.width() * v.height() * 4);
        assert_eq!(v.sentence(), "push right white football");
        assert_eq!(v.word(0), "n/a");
        assert_eq!(v.word(20), "push right");
        assert_eq!(v.joints(3).len(), 6);
        assert!(EpisodeView::build(9, 0, 0, 1, false).is_err());
    }

    #[test]
    fn ik_reaches_workspace_point() {
        let out = solve_ik(0.1, 0.35, 0.05);
        assert_eq!(out.len(), 9);
        assert_eq!(out[8], 1.0);
        assert!(out[6] < 1e-3);
    }

    #[test]
    fn histogram_counts_all_samples() {
        let h = mask_histogram(3000, 4);
        assert_eq!(h.iter().sum::<u32>(), 3000);
        assert!(h[1] > h[0] && h[2] > h[0]);
    }
}
