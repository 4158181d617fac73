//! Analytic test geometries and synthetic slice generation.
//!
//! Each catalog entry is an implicit volume `{Φ < 0}` on the unit cube. The
//! branching vessels come with a second, wider level set; points between the
//! two form an ambiguous band used by the noise model.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::slice_data::{SlicePlane, SliceStack};

/// Implicit function `Φ(x, y, z)`; the volume is where it is negative.
pub type LevelSet = fn(f64, f64, f64) -> f64;

/// Inner/outer level sets with a noise magnitude.
#[derive(Clone, Copy, Debug)]
pub struct NoisyGeometry {
    pub inner: LevelSet,
    pub outer: LevelSet,
    pub sigma: f64,
}

/// Reconstruction settings used for a geometry in the reference experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryDefaults {
    pub slices: usize,
    pub points_per_plane: usize,
    pub sigma: f64,
    pub threshold: f64,
    pub eps_z: f64,
    pub hidden_width: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Geometry {
    pub name: &'static str,
    pub inner: LevelSet,
    /// Outer level set for geometries with an ambiguous band.
    pub outer: Option<LevelSet>,
    pub defaults: GeometryDefaults,
}

impl Geometry {
    /// The noise model for this geometry. Without an outer level set the band is empty.
    pub fn noisy(&self, sigma: f64) -> NoisyGeometry {
        NoisyGeometry {
            inner: self.inner,
            outer: self.outer.unwrap_or(self.inner),
            sigma,
        }
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

pub fn hourglass(x: f64, y: f64, z: f64) -> f64 {
    sq(x - 0.5) + sq(y - 0.5) - 3.0 * sq(sq(z - 0.5)) / 2.0 - 0.01
}

pub fn cylinder(x: f64, y: f64, _z: f64) -> f64 {
    sq(x - 0.5) + sq(y - 0.5) - 0.2
}

pub fn sideways_cylinder(_x: f64, y: f64, z: f64) -> f64 {
    sq(z - 0.5) + sq(y - 0.5) - 0.2
}

fn two_way_core(x: f64, y: f64, z: f64) -> f64 {
    sq((2.0 * std::f64::consts::PI * x).cos() - (1.0 - 2.0 * z)) + 9.0 * sq(y - 0.5)
}

pub fn two_way_branch_inner(x: f64, y: f64, z: f64) -> f64 {
    two_way_core(x, y, z) - 0.2
}

pub fn two_way_branch_outer(x: f64, y: f64, z: f64) -> f64 {
    two_way_core(x, y, z) - 0.5
}

fn four_way_core(x: f64, y: f64, z: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let w = 1.0 - 2.0 * z * z * z;
    sq((tau * x).cos() - w) + 9.0 * sq(y - 0.5) + sq((tau * y).cos() - w) + 9.0 * sq(x - 0.5)
}

pub fn four_way_branch_inner(x: f64, y: f64, z: f64) -> f64 {
    four_way_core(x, y, z) - 2.75
}

pub fn four_way_branch_outer(x: f64, y: f64, z: f64) -> f64 {
    four_way_core(x, y, z) - 3.25
}

pub fn hollow_tilted_cylinder(x: f64, y: f64, z: f64) -> f64 {
    let r2 = sq(x - z / 5.0 - 0.4) + sq(y - 0.5);
    (r2 - 0.15) * (r2 - 0.05)
}

const fn defaults(slices: usize, points_per_plane: usize, eps_z: f64) -> GeometryDefaults {
    GeometryDefaults {
        slices,
        points_per_plane,
        sigma: 0.0,
        threshold: 0.75,
        eps_z,
        hidden_width: 30,
    }
}

static CATALOG: [Geometry; 6] = [
    Geometry {
        name: "hourglass",
        inner: hourglass,
        outer: None,
        defaults: defaults(3, 1600, 5.0),
    },
    Geometry {
        name: "cylinder",
        inner: cylinder,
        outer: None,
        defaults: defaults(2, 1600, 10.0),
    },
    Geometry {
        name: "sideways_cylinder",
        inner: sideways_cylinder,
        outer: None,
        defaults: defaults(5, 1600, 2.5),
    },
    Geometry {
        name: "two_way_branch",
        inner: two_way_branch_inner,
        outer: Some(two_way_branch_outer),
        defaults: GeometryDefaults {
            sigma: 0.1,
            ..defaults(4, 400, 5.0)
        },
    },
    Geometry {
        name: "four_way_branch",
        inner: four_way_branch_inner,
        outer: Some(four_way_branch_outer),
        defaults: GeometryDefaults {
            sigma: 0.3,
            ..defaults(5, 625, 5.0)
        },
    },
    Geometry {
        name: "hollow_tilted_cylinder",
        inner: hollow_tilted_cylinder,
        outer: None,
        defaults: GeometryDefaults {
            hidden_width: 50,
            ..defaults(3, 1600, 1.0)
        },
    },
];

pub fn catalog() -> &'static [Geometry] {
    &CATALOG
}

pub fn geometry_names() -> Vec<&'static str> {
    CATALOG.iter().map(|g| g.name).collect()
}

pub fn lookup(name: &str) -> Result<&'static Geometry> {
    CATALOG
        .iter()
        .find(|g| g.name == name)
        .ok_or_else(|| Error::UnknownGeometry(name.to_string()))
}

/// `S` equally spaced heights including both faces; a single plane sits at `z = ½`.
pub fn default_z_planes(slices: usize) -> Vec<f64> {
    match slices {
        0 => Vec::new(),
        1 => vec![0.5],
        s => (0..s).map(|i| i as f64 / (s - 1) as f64).collect(),
    }
}

/// Side length of a square plane holding `n` points.
pub fn grid_side(n: usize) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if n == 0 || side * side != n {
        return Err(Error::BadGrid(n));
    }
    Ok(side)
}

fn check_planes(slices: usize, z_planes: &[f64]) -> Result<()> {
    if slices == 0 || z_planes.len() != slices {
        return Err(Error::Config(format!(
            "expected {slices} slice heights, got {}",
            z_planes.len()
        )));
    }
    Ok(())
}

fn build_stack(
    side: usize,
    z_planes: &[f64],
    mut pixel: impl FnMut([f64; 3]) -> f64,
) -> Result<SliceStack> {
    let n = side as f64;
    let planes = z_planes
        .iter()
        .map(|&z| {
            let mut pixels = Vec::with_capacity(side * side);
            for row in 0..side {
                for col in 0..side {
                    pixels.push(pixel([(col as f64 + 0.5) / n, (row as f64 + 0.5) / n, z]));
                }
            }
            SlicePlane::new(z, side, pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    SliceStack::new(planes)
}

/// Binary slices: 1 where `Φ < 0`, else 0.
pub fn sample_noiseless(
    level_set: LevelSet,
    slices: usize,
    points_per_plane: usize,
    z_planes: &[f64],
) -> Result<SliceStack> {
    let side = grid_side(points_per_plane)?;
    check_planes(slices, z_planes)?;
    build_stack(side, z_planes, |[x, y, z]| {
        if level_set(x, y, z) < 0.0 {
            1.0
        } else {
            0.0
        }
    })
}

/// Noisy slices. Interior pixels (both level sets negative) read `1 − σ + σU`,
/// band pixels (`Φ^O < 0 ≤ Φ^I`) read `U`, and the rest read `σU`, with one
/// uniform draw per pixel in row-major order, plane by plane.
pub fn sample_noisy(
    geometry: &NoisyGeometry,
    slices: usize,
    points_per_plane: usize,
    z_planes: &[f64],
    seed: u64,
) -> Result<SliceStack> {
    let sigma = geometry.sigma;
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::Config(format!("noise magnitude must lie in [0, 1), got {sigma}")));
    }
    let side = grid_side(points_per_plane)?;
    check_planes(slices, z_planes)?;
    let mut rng: Rng = rng::seeded(seed);
    build_stack(side, z_planes, |[x, y, z]| {
        let u: f64 = rng.gen();
        let inner = (geometry.inner)(x, y, z);
        let outer = (geometry.outer)(x, y, z);
        if inner < 0.0 && outer < 0.0 {
            (1.0 - sigma) + sigma * u
        } else if outer < 0.0 {
            u
        } else {
            sigma * u
        }
    })
}
