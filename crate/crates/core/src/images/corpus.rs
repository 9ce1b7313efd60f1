//! A synthetic stand-in for two cameras watching rotating objects.
//!
//! Each frame shows two objects, each a bright blob on a circular arm
//! rotating with its own frequency. Camera 1 sees `U` and the common object
//! `C`; camera 2 sees `C` from a different viewpoint (squashed orbit,
//! different color and phase) together with `V`.

use std::f64::consts::TAU;

use image::{Rgb, RgbImage};

use crate::dataset::Truth;
use crate::datagen::{OMEGA_C, OMEGA_U, OMEGA_V};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusOptions {
    pub n_frames: usize,
    pub width: u32,
    pub height: u32,
    /// Time between frames.
    pub dt: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            n_frames: 400,
            width: 320,
            height: 240,
            dt: 0.37,
        }
    }
}

pub struct Corpus {
    pub camera1: Vec<RgbImage>,
    pub camera2: Vec<RgbImage>,
    /// `theta_u`, `theta_v`, `theta_c` per frame.
    pub truth: Truth,
}

#[derive(Clone, Copy)]
struct Orbit {
    center: (f64, f64),
    radius: (f64, f64),
    phase: f64,
    sigma: f64,
    color: [f64; 3],
}

impl Orbit {
    fn paint(&self, img: &mut [f64], w: u32, h: u32, theta: f64) {
        let a = theta + self.phase;
        let (bx, by) = (
            self.center.0 + self.radius.0 * a.cos(),
            self.center.1 + self.radius.1 * a.sin(),
        );
        let reach = 4.0 * self.sigma;
        let x0 = (bx - reach).floor().max(0.0) as u32;
        let x1 = ((bx + reach).ceil() as u32).min(w.saturating_sub(1));
        let y0 = (by - reach).floor().max(0.0) as u32;
        let y1 = ((by + reach).ceil() as u32).min(h.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                let g = (-d2 / (2.0 * self.sigma * self.sigma)).exp();
                let p = ((y * w + x) * 3) as usize;
                for c in 0..3 {
                    img[p + c] += self.color[c] * g;
                }
            }
        }
    }
}

fn render(w: u32, h: u32, objects: &[(Orbit, f64)]) -> RgbImage {
    let mut buf = vec![20.0; (w * h * 3) as usize];
    for (orbit, theta) in objects {
        orbit.paint(&mut buf, w, h, *theta);
    }
    RgbImage::from_fn(w, h, |x, y| {
        let p = ((y * w + x) * 3) as usize;
        Rgb([0, 1, 2].map(|c| buf[p + c].round().clamp(0.0, 255.0) as u8))
    })
}

pub fn rotating_pattern_corpus(opts: CorpusOptions) -> Result<Corpus> {
    let (w, h) = (opts.width, opts.height);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let r = h as f64 * 0.18;
    let sigma = h as f64 * 0.05;
    let left = (cx - h as f64 * 0.22, cy);
    let right = (cx + h as f64 * 0.22, cy);
    let u = Orbit { center: left, radius: (r, r), phase: 0.0, sigma, color: [230.0, 80.0, 60.0] };
    let c1 = Orbit { center: right, radius: (r, r), phase: 0.0, sigma, color: [60.0, 160.0, 230.0] };
    let c2 = Orbit { center: left, radius: (r, 0.6 * r), phase: 0.7, sigma: 1.2 * sigma, color: [80.0, 210.0, 120.0] };
    let v = Orbit { center: right, radius: (0.9 * r, 0.9 * r), phase: 0.0, sigma, color: [200.0, 200.0, 60.0] };
    let mut camera1 = Vec::with_capacity(opts.n_frames);
    let mut camera2 = Vec::with_capacity(opts.n_frames);
    let mut truth = Matrix::zeros(opts.n_frames, 3);
    for i in 0..opts.n_frames {
        let t = i as f64 * opts.dt;
        let angle = |omega: f64| (TAU * omega * t).rem_euclid(TAU);
        let (tu, tv, tc) = (angle(OMEGA_U), angle(OMEGA_V), angle(OMEGA_C));
        camera1.push(render(w, h, &[(u, tu), (c1, tc)]));
        camera2.push(render(w, h, &[(c2, tc), (v, tv)]));
        truth.row_mut(i).copy_from_slice(&[tu, tv, tc]);
    }
    Ok(Corpus {
        camera1,
        camera2,
        truth: Truth {
            names: ["theta_u", "theta_v", "theta_c"].map(String::from).to_vec(),
            values: truth,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::images::preprocess;

    #[test]
    fn frames_have_camera_dimensions_and_crop_to_square() {
        let c = rotating_pattern_corpus(CorpusOptions { n_frames: 3, ..Default::default() }).unwrap();
        assert_eq!(c.camera1[0].dimensions(), (320, 240));
        let b = preprocess(&c.camera1, 240, vec![]).unwrap();
        assert_eq!((b.width, b.height, b.len()), (240, 240, 3));
        assert!(b.pixels.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn common_object_moves_both_cameras() {
        let c = rotating_pattern_corpus(CorpusOptions { n_frames: 2, ..Default::default() }).unwrap();
        assert_ne!(c.camera1[0], c.camera1[1]);
        assert_ne!(c.camera2[0], c.camera2[1]);
        assert_ne!(c.camera1[0], c.camera2[0]);
    }
}
