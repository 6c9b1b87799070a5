//! Projector verification against independent oracles: dense ray sampling
//! and exact linearity.

use rand::Rng;
use scorepaint_core::geometry::ProjectionGeometry;
use scorepaint_core::projector::{forward_project, ray_integral};
use scorepaint_core::rng::substream;
use scorepaint_core::volume::Volume3D;

/// Fixed-step midpoint sampling along the ray; the independent reference
/// for the exact-intersection-length traversal.
fn dense_ray_integral(vol: &Volume3D<f64>, p1: [f64; 3], p2: [f64; 3], step_mm: f64) -> f64 {
    let dir = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]];
    let length = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let n = (length / step_mm).ceil() as usize;
    let h = length / n as f64;
    let lo = vol.lower();
    let hi = vol.upper();
    let dims = vol.dims();
    let inv = 1.0 / vol.spacing();
    let mut acc = 0.0;
    for k in 0..n {
        let s = (k as f64 + 0.5) / n as f64;
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let pos = p1[a] + s * dir[a];
            if pos < lo[a] || pos >= hi[a] {
                inside = false;
                break;
            }
            let i = ((pos - lo[a]) * inv).floor();
            if i < 0.0 || i >= dims[a] as f64 {
                inside = false;
                break;
            }
            idx[a] = i as usize;
        }
        if inside {
            acc += h * vol.get(idx[0], idx[1], idx[2]);
        }
    }
    acc
}

fn random_volume(rng: &mut impl Rng, n: usize, spacing: f64) -> Volume3D<f64> {
    let mut vol = Volume3D::<f64>::centered([n, n, n], spacing).unwrap();
    for v in vol.data_mut() {
        // physically plausible attenuation scale, up to metal-like 0.3/mm
        *v = 0.3 * rng.gen::<f64>();
    }
    vol
}

#[test]
fn siddon_matches_dense_sampling_on_random_volumes() {
    let mut rng = substream(2024, "oracle/siddon");
    for case in 0..20 {
        let n = rng.gen_range(8..=32usize);
        let spacing = rng.gen_range(0.4..1.2);
        let vol = random_volume(&mut rng, n, spacing);
        let half = 0.5 * n as f64 * spacing;
        // random ray guaranteed to pass near the volume
        let p1 = [
            rng.gen_range(-4.0 * half..-2.0 * half),
            rng.gen_range(-half..half),
            rng.gen_range(-half..half),
        ];
        let p2 = [
            rng.gen_range(2.0 * half..4.0 * half),
            rng.gen_range(-half..half),
            rng.gen_range(-half..half),
        ];
        let exact = ray_integral(&vol, p1, p2);
        let sampled = dense_ray_integral(&vol, p1, p2, 1e-3);
        assert!(
            (exact - sampled).abs() < 1e-3,
            "case {case}: exact {exact} vs dense {sampled}"
        );
    }
}

#[test]
fn forward_projection_is_linear() {
    let geom = ProjectionGeometry {
        sdd: 291.0,
        sid: 155.5,
        detector_px: (16, 16),
        pixel_mm: 1.16,
        angular_range_deg: 360.0,
        angular_step_deg: 120.0,
    };
    let mut rng = substream(7, "oracle/linear");
    let v1 = random_volume(&mut rng, 16, 1.0);
    let v2 = random_volume(&mut rng, 16, 1.0);
    let (a, b) = (1.7, -0.4);
    let combo = v1.scaled_add(a, &v2, b).unwrap();
    for &angle in &[0.0, 120.0, 240.0] {
        let pa = forward_project(&v1, &geom, angle).unwrap();
        let pb = forward_project(&v2, &geom, angle).unwrap();
        let pc = forward_project(&combo, &geom, angle).unwrap();
        for i in 0..pc.len() {
            let want = a * pa.as_slice()[i] + b * pb.as_slice()[i];
            let got = pc.as_slice()[i];
            let denom = want.abs().max(1e-9);
            assert!(
                ((got - want) / denom).abs() < 1e-6,
                "angle {angle} px {i}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn ray_total_length_equals_box_chord() {
    // with unit attenuation the integral is the chord length through the box
    let mut rng = substream(91, "oracle/chord");
    for _ in 0..50 {
        let n = rng.gen_range(4..=16usize);
        let spacing = rng.gen_range(0.5..1.5);
        let mut vol = Volume3D::<f64>::centered([n, n, n], spacing).unwrap();
        for v in vol.data_mut() {
            *v = 1.0;
        }
        let half = 0.5 * n as f64 * spacing;
        let p1 = [-3.0 * half, rng.gen_range(-half..half), rng.gen_range(-half..half)];
        let p2 = [3.0 * half, rng.gen_range(-half..half), rng.gen_range(-half..half)];
        let got = ray_integral(&vol, p1, p2);
        // chord from slab intersection
        let dir = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let mut s0: f64 = 0.0;
        let mut s1: f64 = 1.0;
        for a in 0..3 {
            if dir[a] == 0.0 {
                continue;
            }
            let mut lo = (-half - p1[a]) / dir[a];
            let mut hi = (half - p1[a]) / dir[a];
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            s0 = s0.max(lo);
            s1 = s1.min(hi);
        }
        let chord = if s1 > s0 { (s1 - s0) * len } else { 0.0 };
        assert!(
            (got - chord).abs() < 1e-9 * chord.max(1.0),
            "{got} vs chord {chord}"
        );
    }
}
