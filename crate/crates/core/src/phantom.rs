//! Procedural phantoms: simple solids rasterized onto a voxel grid, with a
//! tissue/metal tag separating anatomy from implants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::substream;
use crate::volume::Volume3D;
use crate::{real, Real};

/// Material tag deciding which output volume a part lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Tissue,
    Metal,
}

/// Solid primitive in its local frame, placed by `center`/`rotation`.
///
/// Rotation is intrinsic Euler z-y-x in degrees applied to the local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Primitive {
    /// Ellipsoid with the given semi-axes (mm).
    Ellipsoid { semi_axes: [f64; 3] },
    /// Cylinder along the local z axis.
    Cylinder { radius: f64, half_length: f64 },
    /// Box with through-holes along the local x axis (an implant plate).
    /// Holes are drilled on the local z axis, `hole_pitch` apart around
    /// the plate center.
    PlateWithHoles {
        half_extent: [f64; 3],
        hole_radius: f64,
        hole_count: usize,
        hole_pitch: f64,
    },
}

/// A placed, valued primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomPart {
    pub primitive: Primitive,
    /// Placement of the local origin, mm from the isocenter.
    pub center: [f64; 3],
    /// Intrinsic z-y-x Euler angles, degrees.
    pub rotation_deg: [f64; 3],
    /// Attenuation value (unitless·mm⁻¹ scale, >= 0).
    pub attenuation: f64,
    pub material: Material,
}

/// Grid plus part list; fully describes a phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: f64,
    /// mm offset of voxel (0,0,0) corner from the isocenter; `None` centers
    /// the grid.
    pub origin: Option<[f64; 3]>,
    pub parts: Vec<PhantomPart>,
}

fn rotation_matrix(euler_zyx_deg: [f64; 3]) -> [[f64; 3]; 3] {
    let (cz, sz) = {
        let a = euler_zyx_deg[0].to_radians();
        (a.cos(), a.sin())
    };
    let (cy, sy) = {
        let a = euler_zyx_deg[1].to_radians();
        (a.cos(), a.sin())
    };
    let (cx, sx) = {
        let a = euler_zyx_deg[2].to_radians();
        (a.cos(), a.sin())
    };
    // R = Rz * Ry * Rx
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

impl PhantomPart {
    /// Radius of a ball around `center` guaranteed to contain the part.
    fn bounding_radius(&self) -> f64 {
        match &self.primitive {
            Primitive::Ellipsoid { semi_axes } => semi_axes.iter().fold(0.0f64, |m, &a| m.max(a)),
            Primitive::Cylinder {
                radius,
                half_length,
            } => (radius * radius + half_length * half_length).sqrt(),
            Primitive::PlateWithHoles { half_extent, .. } => {
                (half_extent[0] * half_extent[0]
                    + half_extent[1] * half_extent[1]
                    + half_extent[2] * half_extent[2])
                    .sqrt()
            }
        }
    }

    /// Point-inside test in world coordinates.
    fn contains(&self, world: [f64; 3], rot_t: &[[f64; 3]; 3]) -> bool {
        // transform into the local frame: p_local = R^T (world - center)
        let d = [
            world[0] - self.center[0],
            world[1] - self.center[1],
            world[2] - self.center[2],
        ];
        let p = [
            rot_t[0][0] * d[0] + rot_t[0][1] * d[1] + rot_t[0][2] * d[2],
            rot_t[1][0] * d[0] + rot_t[1][1] * d[1] + rot_t[1][2] * d[2],
            rot_t[2][0] * d[0] + rot_t[2][1] * d[1] + rot_t[2][2] * d[2],
        ];
        match &self.primitive {
            Primitive::Ellipsoid { semi_axes } => {
                let q = (p[0] / semi_axes[0]).powi(2)
                    + (p[1] / semi_axes[1]).powi(2)
                    + (p[2] / semi_axes[2]).powi(2);
                q <= 1.0
            }
            Primitive::Cylinder {
                radius,
                half_length,
            } => p[2].abs() <= *half_length && p[0] * p[0] + p[1] * p[1] <= radius * radius,
            Primitive::PlateWithHoles {
                half_extent,
                hole_radius,
                hole_count,
                hole_pitch,
            } => {
                if p[0].abs() > half_extent[0]
                    || p[1].abs() > half_extent[1]
                    || p[2].abs() > half_extent[2]
                {
                    return false;
                }
                // holes drilled along local x, spread along local z
                let first = -0.5 * (*hole_count as f64 - 1.0) * hole_pitch;
                for k in 0..*hole_count {
                    let zc = first + k as f64 * hole_pitch;
                    let dz = p[2] - zc;
                    if p[1] * p[1] + dz * dz <= hole_radius * hole_radius {
                        return false;
                    }
                }
                true
            }
        }
    }
}

/// Rasterize the spec onto its grid: non-metal parts land in the tissue
/// volume, metal parts in the metal volume (later parts overwrite earlier
/// ones where they overlap). Deterministic; rejects parts entirely outside
/// the grid and negative attenuations.
pub fn build_phantom<T: Real>(spec: &PhantomSpec) -> Result<(Volume3D<T>, Volume3D<T>)> {
    let origin = spec.origin.unwrap_or([
        -0.5 * spec.dims[0] as f64 * spec.spacing,
        -0.5 * spec.dims[1] as f64 * spec.spacing,
        -0.5 * spec.dims[2] as f64 * spec.spacing,
    ]);
    let mut tissue = Volume3D::<T>::zeros(spec.dims, spec.spacing, origin)?;
    let mut metal = Volume3D::<T>::zeros(spec.dims, spec.spacing, origin)?;

    let lo = tissue.lower();
    let hi = tissue.upper();
    for (k, part) in spec.parts.iter().enumerate() {
        if !(part.attenuation >= 0.0 && part.attenuation.is_finite()) {
            return Err(CoreError::Phantom(format!(
                "part {k}: attenuation must be finite and >= 0"
            )));
        }
        let r = part.bounding_radius();
        let outside = (0..3).any(|a| part.center[a] + r < lo[a] || part.center[a] - r > hi[a]);
        if outside {
            return Err(CoreError::Phantom(format!(
                "part {k} lies entirely outside the volume bounds"
            )));
        }
    }

    for part in &spec.parts {
        let rot = rotation_matrix(part.rotation_deg);
        // transpose for world -> local
        let rot_t = [
            [rot[0][0], rot[1][0], rot[2][0]],
            [rot[0][1], rot[1][1], rot[2][1]],
            [rot[0][2], rot[1][2], rot[2][2]],
        ];
        let target = match part.material {
            Material::Tissue => &mut tissue,
            Material::Metal => &mut metal,
        };
        let value: T = real(part.attenuation);
        // only visit voxels in the part's bounding box
        let r = part.bounding_radius();
        let clamp = |x: f64, a: usize| -> usize {
            let n = spec.dims[a] as f64;
            x.max(0.0).min(n - 1.0) as usize
        };
        let i0 = [
            clamp(((part.center[0] - r - origin[0]) / spec.spacing).floor(), 0),
            clamp(((part.center[1] - r - origin[1]) / spec.spacing).floor(), 1),
            clamp(((part.center[2] - r - origin[2]) / spec.spacing).floor(), 2),
        ];
        let i1 = [
            clamp(((part.center[0] + r - origin[0]) / spec.spacing).ceil(), 0),
            clamp(((part.center[1] + r - origin[1]) / spec.spacing).ceil(), 1),
            clamp(((part.center[2] + r - origin[2]) / spec.spacing).ceil(), 2),
        ];
        for iz in i0[2]..=i1[2] {
            for iy in i0[1]..=i1[1] {
                for ix in i0[0]..=i1[0] {
                    let c = target.voxel_center(ix, iy, iz);
                    if part.contains(c, &rot_t) {
                        target.set(ix, iy, iz, value);
                    }
                }
            }
        }
    }
    Ok((tissue, metal))
}

/// Attenuation values used by the random phantom generator (unitless·mm⁻¹).
pub mod mu {
    pub const SOFT_TISSUE: f64 = 0.02;
    pub const BONE: f64 = 0.06;
    pub const METAL: f64 = 0.5;
}

/// Draw a leg-segment-like phantom: a soft-tissue ellipsoid around two bone
/// cylinders, plus `n_implants` randomly chosen and placed metal parts
/// (wires, screws, a plate with holes). Deterministic per seed.
pub fn sample_leg_phantom(
    seed: u64,
    dims: [usize; 3],
    spacing: f64,
    n_implants: usize,
) -> PhantomSpec {
    let mut rng = substream(seed, "phantom");
    let half = [
        0.5 * dims[0] as f64 * spacing,
        0.5 * dims[1] as f64 * spacing,
        0.5 * dims[2] as f64 * spacing,
    ];
    let u = |rng: &mut rand_chacha::ChaCha12Rng, lo: f64, hi: f64| rng.gen_range(lo..hi);

    let mut parts = Vec::new();

    // soft tissue envelope, slightly off-center and tilted
    let tissue_axes = [
        u(&mut rng, 0.55, 0.7) * half[0],
        u(&mut rng, 0.55, 0.7) * half[1],
        u(&mut rng, 0.85, 0.95) * half[2],
    ];
    let tissue_center = [
        u(&mut rng, -0.08, 0.08) * half[0],
        u(&mut rng, -0.08, 0.08) * half[1],
        0.0,
    ];
    parts.push(PhantomPart {
        primitive: Primitive::Ellipsoid {
            semi_axes: tissue_axes,
        },
        center: tissue_center,
        rotation_deg: [u(&mut rng, -10.0, 10.0), 0.0, 0.0],
        attenuation: mu::SOFT_TISSUE * u(&mut rng, 0.9, 1.1),
        material: Material::Tissue,
    });

    // two bones, tibia-and-fibula style: one thick, one thin
    for (scale, offset) in [(1.0, -0.25), (0.45, 0.3)] {
        let radius = scale * u(&mut rng, 0.16, 0.2) * tissue_axes[0].min(tissue_axes[1]);
        parts.push(PhantomPart {
            primitive: Primitive::Cylinder {
                radius,
                half_length: 0.92 * tissue_axes[2],
            },
            center: [
                tissue_center[0] + offset * tissue_axes[0],
                tissue_center[1] + offset * 0.6 * tissue_axes[1],
                0.0,
            ],
            rotation_deg: [0.0, u(&mut rng, -4.0, 4.0), u(&mut rng, -4.0, 4.0)],
            attenuation: mu::BONE * u(&mut rng, 0.9, 1.1),
            material: Material::Tissue,
        });
    }

    // implants placed uniformly inside the tissue bounding box
    for _ in 0..n_implants {
        let center = [
            tissue_center[0] + u(&mut rng, -0.7, 0.7) * tissue_axes[0],
            tissue_center[1] + u(&mut rng, -0.7, 0.7) * tissue_axes[1],
            u(&mut rng, -0.6, 0.6) * tissue_axes[2],
        ];
        let rotation_deg = [
            u(&mut rng, 0.0, 360.0),
            u(&mut rng, -90.0, 90.0),
            u(&mut rng, -90.0, 90.0),
        ];
        let kind = rng.gen_range(0..3u32);
        let primitive = match kind {
            // K-wire: long thin cylinder
            0 => Primitive::Cylinder {
                radius: u(&mut rng, 0.02, 0.035) * half[0],
                half_length: u(&mut rng, 0.5, 0.8) * half[2],
            },
            // screw: shorter, thicker
            1 => Primitive::Cylinder {
                radius: u(&mut rng, 0.05, 0.08) * half[0],
                half_length: u(&mut rng, 0.2, 0.35) * half[2],
            },
            // plate with holes
            _ => Primitive::PlateWithHoles {
                half_extent: [
                    u(&mut rng, 0.04, 0.07) * half[0],
                    u(&mut rng, 0.12, 0.2) * half[1],
                    u(&mut rng, 0.3, 0.45) * half[2],
                ],
                hole_radius: u(&mut rng, 0.03, 0.05) * half[0],
                hole_count: rng.gen_range(2..5),
                hole_pitch: u(&mut rng, 0.18, 0.24) * half[2],
            },
        };
        parts.push(PhantomPart {
            primitive,
            center,
            rotation_deg,
            attenuation: mu::METAL * u(&mut rng, 0.8, 1.4),
            material: Material::Metal,
        });
    }

    PhantomSpec {
        seed,
        dims,
        spacing,
        origin: None,
        parts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_ellipsoid(material: Material) -> PhantomSpec {
        PhantomSpec {
            seed: 0,
            dims: [32, 32, 32],
            spacing: 1.0,
            origin: None,
            parts: vec![PhantomPart {
                primitive: Primitive::Ellipsoid {
                    semi_axes: [8.0, 6.0, 10.0],
                },
                center: [0.0, 0.0, 0.0],
                rotation_deg: [0.0, 0.0, 0.0],
                attenuation: 1.0,
                material,
            }],
        }
    }

    #[test]
    fn tissue_only_leaves_metal_empty() {
        let (tissue, metal) = build_phantom::<f32>(&one_ellipsoid(Material::Tissue)).unwrap();
        assert!(tissue.data().iter().any(|&v| v > 0.0));
        assert!(metal.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_given_spec() {
        let spec = sample_leg_phantom(99, [24, 24, 24], 1.0, 2);
        let (t1, m1) = build_phantom::<f32>(&spec).unwrap();
        let (t2, m2) = build_phantom::<f32>(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(m1, m2);
        // and the sampled spec itself is a pure function of the seed
        let again = sample_leg_phantom(99, [24, 24, 24], 1.0, 2);
        assert_eq!(spec, again);
    }

    #[test]
    fn cylinder_voxel_count_near_analytic() {
        // radius 5 mm, attenuation 1, axis-aligned: voxel count within 2% of
        // pi r^2 h / spacing^3
        let spacing = 0.5;
        let spec = PhantomSpec {
            seed: 0,
            dims: [48, 48, 48],
            spacing,
            origin: None,
            parts: vec![PhantomPart {
                primitive: Primitive::Cylinder {
                    radius: 5.0,
                    half_length: 8.0,
                },
                center: [0.0, 0.0, 0.0],
                rotation_deg: [0.0, 0.0, 0.0],
                attenuation: 1.0,
                material: Material::Tissue,
            }],
        };
        let (tissue, _) = build_phantom::<f64>(&spec).unwrap();
        let count = tissue.data().iter().filter(|&&v| v > 0.0).count() as f64;
        let analytic = std::f64::consts::PI * 5.0 * 5.0 * 16.0 / spacing.powi(3);
        assert!(
            (count - analytic).abs() / analytic < 0.02,
            "count {count} vs analytic {analytic}"
        );
    }

    #[test]
    fn rejects_part_outside_bounds() {
        let mut spec = one_ellipsoid(Material::Tissue);
        spec.parts[0].center = [500.0, 0.0, 0.0];
        assert!(build_phantom::<f32>(&spec).is_err());
    }

    #[test]
    fn rejects_negative_attenuation() {
        let mut spec = one_ellipsoid(Material::Tissue);
        spec.parts[0].attenuation = -0.5;
        assert!(build_phantom::<f32>(&spec).is_err());
    }

    #[test]
    fn plate_holes_are_empty() {
        let spec = PhantomSpec {
            seed: 0,
            dims: [40, 40, 40],
            spacing: 0.5,
            origin: None,
            parts: vec![PhantomPart {
                primitive: Primitive::PlateWithHoles {
                    half_extent: [1.5, 3.0, 8.0],
                    hole_radius: 1.2,
                    hole_count: 3,
                    hole_pitch: 5.0,
                },
                center: [0.0, 0.0, 0.0],
                rotation_deg: [0.0, 0.0, 0.0],
                attenuation: 1.0,
                material: Material::Metal,
            }],
        };
        let (_, metal) = build_phantom::<f64>(&spec).unwrap();
        // center of the middle hole is empty, plate corners are solid
        let c = metal.dims().map(|d| d / 2);
        assert_eq!(metal.get(c[0], c[1], c[2]), 0.0);
        assert!(metal.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn leg_phantom_has_metal_iff_implants_requested() {
        let spec = sample_leg_phantom(7, [32, 32, 32], 1.0, 0);
        let (_, metal) = build_phantom::<f32>(&spec).unwrap();
        assert!(metal.data().iter().all(|&v| v == 0.0));
        let spec = sample_leg_phantom(7, [32, 32, 32], 1.0, 3);
        let (_, metal) = build_phantom::<f32>(&spec).unwrap();
        assert!(metal.data().iter().any(|&v| v > 0.0));
    }
}
