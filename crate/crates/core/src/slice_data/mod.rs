//! Slice measurement data: planes of grayscale pixels, denoising, and phase
//! labeling of the blurred pixels.
//!
//! Pixel `(row, col)` of an `n × n` plane at height `z` sits at the
//! cell-centered point `((col + ½)/n, (row + ½)/n, z)` of the unit cube.

use crate::error::{Error, Result};

mod io;

pub use io::{encode_csv_values, encode_pgm_values, load_stack, read_image, save_stack, ImageFormat, StackMetadata};

/// One measured plane `z = const`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePlane {
    z: f64,
    size: usize,
    /// Row-major `size × size`.
    pixels: Vec<f64>,
}

impl SlicePlane {
    pub fn new(z: f64, size: usize, pixels: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::Format("plane grid is empty".into()));
        }
        if pixels.len() != size * size {
            return Err(Error::Format(format!(
                "plane has {} pixels, expected {size}×{size}",
                pixels.len()
            )));
        }
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Format(format!("plane z = {z} lies outside [0, 1]")));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("pixel value {bad} lies outside [0, 1]")));
        }
        Ok(SlicePlane { z, size, pixels })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Pixels per side.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    /// Spatial coordinate of pixel `(row, col)`.
    pub fn point(&self, row: usize, col: usize) -> [f64; 3] {
        let n = self.size as f64;
        [(col as f64 + 0.5) / n, (row as f64 + 0.5) / n, self.z]
    }
}

/// The full measurement: `S` planes sharing one in-plane grid over `[0,1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStack {
    planes: Vec<SlicePlane>,
}

impl SliceStack {
    pub fn new(planes: Vec<SlicePlane>) -> Result<Self> {
        let Some(first) = planes.first() else {
            return Err(Error::Format("slice stack has no planes".into()));
        };
        if let Some(p) = planes.iter().find(|p| p.size != first.size) {
            return Err(Error::Format(format!(
                "mismatched plane grids: {0}×{0} and {1}×{1}",
                first.size, p.size
            )));
        }
        Ok(SliceStack { planes })
    }

    pub fn planes(&self) -> &[SlicePlane] {
        &self.planes
    }

    /// Pixels per side of every plane.
    pub fn grid_size(&self) -> usize {
        self.planes[0].size
    }

    /// `S · N`.
    pub fn total_points(&self) -> usize {
        self.planes.len() * self.grid_size() * self.grid_size()
    }
}

/// Points labeled inside (`φ̂ ≥ c`) and outside (`φ̂ < 1 − c`) after blurring.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseLabels {
    pub inside: Vec<[f64; 3]>,
    pub outside: Vec<[f64; 3]>,
    pub unassigned: usize,
    pub threshold: f64,
}

impl PhaseLabels {
    /// `S*`, the number of labeled points.
    pub fn assigned(&self) -> usize {
        self.inside.len() + self.outside.len()
    }

    pub fn total(&self) -> usize {
        self.assigned() + self.unassigned
    }
}

/// One pass of the 3×3 mean filter with edge-replicating padding (index −1 reads 0,
/// index n reads n − 1).
pub fn blur_plane(plane: &SlicePlane) -> SlicePlane {
    let n = plane.size;
    let clamp = |i: isize| -> usize { i.clamp(0, n as isize - 1) as usize };
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let mut sum = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    sum += plane.get(clamp(row as isize + dr), clamp(col as isize + dc));
                }
            }
            out.push(sum / 9.0);
        }
    }
    SlicePlane {
        z: plane.z,
        size: n,
        pixels: out,
    }
}

pub fn validate_threshold(c: f64) -> Result<()> {
    if (0.5..1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold c = {c} must lie in [0.5, 1)")))
    }
}

/// Blur every plane, then label each pixel inside if `φ̂ ≥ c`, outside if
/// `φ̂ < 1 − c`, and leave the rest unassigned.
pub fn assign_phases(stack: &SliceStack, c: f64) -> Result<PhaseLabels> {
    validate_threshold(c)?;
    let mut labels = PhaseLabels {
        inside: Vec::new(),
        outside: Vec::new(),
        unassigned: 0,
        threshold: c,
    };
    for plane in &stack.planes {
        let blurred = blur_plane(plane);
        for row in 0..plane.size {
            for col in 0..plane.size {
                let v = blurred.get(row, col);
                if v < 1.0 - c {
                    labels.outside.push(plane.point(row, col));
                } else if v >= c {
                    labels.inside.push(plane.point(row, col));
                } else {
                    labels.unassigned += 1;
                }
            }
        }
    }
    if labels.assigned() == 0 {
        return Err(Error::DegenerateLabels);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(size: usize, pixels: Vec<f64>) -> SlicePlane {
        SlicePlane::new(0.5, size, pixels).unwrap()
    }

    #[test]
    fn blur_preserves_constants() {
        for v in [0.0, 0.3, 1.0] {
            let p = plane(5, vec![v; 25]);
            let b = blur_plane(&p);
            assert!(b.pixels().iter().all(|&x| (x - v).abs() < 1e-15));
        }
        let single = plane(1, vec![0.7]);
        assert!((blur_plane(&single).pixels()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn blur_center_spike() {
        let mut px = vec![0.0; 9];
        px[4] = 1.0;
        let b = blur_plane(&plane(3, px));
        assert!((b.get(1, 1) - 1.0 / 9.0).abs() < 1e-15);
        // Corner (0,0): neighborhood rows/cols {0,0,1} → the spike at (1,1) counted once.
        assert!((b.get(0, 0) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn blur_mirror_edge() {
        // Column pattern [1, 0, 0, 0]: at col 0 the padded neighborhood is
        // cols {0, 0, 1} → mean 2/3.
        let px: Vec<f64> = (0..16).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        let b = blur_plane(&plane(4, px));
        assert!((b.get(2, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.get(2, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.get(2, 2), 0.0);
    }

    #[test]
    fn threshold_predicates() {
        // A constant plane blurs to itself.
        let stack = |v: f64| SliceStack::new(vec![plane(2, vec![v; 4])]).unwrap();
        let l = assign_phases(&stack(0.9), 0.75).unwrap();
        assert_eq!((l.inside.len(), l.outside.len(), l.unassigned), (4, 0, 0));
        assert!(matches!(assign_phases(&stack(0.5), 0.75), Err(Error::DegenerateLabels)));
        let l = assign_phases(&stack(0.75), 0.75).unwrap();
        assert_eq!(l.inside.len(), 4);
        // 1 − c = 0.25 is unassigned, not outside (strict <).
        assert!(matches!(assign_phases(&stack(0.25), 0.75), Err(Error::DegenerateLabels)));
        let l = assign_phases(&stack(0.2), 0.75).unwrap();
        assert_eq!(l.outside.len(), 4);
    }

    #[test]
    fn threshold_range_checked() {
        let s = SliceStack::new(vec![plane(2, vec![1.0; 4])]).unwrap();
        assert!(matches!(assign_phases(&s, 0.49), Err(Error::Config(_))));
        assert!(matches!(assign_phases(&s, 1.0), Err(Error::Config(_))));
        assert!(assign_phases(&s, 0.5).is_ok());
    }

    #[test]
    fn uniform_binary_images_fully_assigned() {
        for v in [0.0, 1.0] {
            let s = SliceStack::new(vec![plane(6, vec![v; 36]), plane(6, vec![v; 36])]).unwrap();
            let l = assign_phases(&s, 0.5).unwrap();
            assert_eq!(l.unassigned, 0);
            assert_eq!(l.total(), 72);
        }
    }

    #[test]
    fn coordinates_are_cell_centered() {
        let p = SlicePlane::new(0.25, 4, vec![0.0; 16]).unwrap();
        assert_eq!(p.point(0, 0), [0.125, 0.125, 0.25]);
        assert_eq!(p.point(3, 1), [0.375, 0.875, 0.25]);
    }

    #[test]
    fn invariant_violations_rejected() {
        assert!(SlicePlane::new(1.2, 1, vec![0.0]).is_err());
        assert!(SlicePlane::new(0.5, 2, vec![0.0; 3]).is_err());
        assert!(SlicePlane::new(0.5, 1, vec![1.5]).is_err());
        assert!(SlicePlane::new(0.5, 0, vec![]).is_err());
        let a = plane(2, vec![0.0; 4]);
        let b = plane(3, vec![0.0; 9]);
        assert!(matches!(SliceStack::new(vec![a, b]), Err(Error::Format(_))));
        assert!(SliceStack::new(vec![]).is_err());
    }

    fn arb_plane() -> impl Strategy<Value = SlicePlane> {
        (1usize..8).prop_flat_map(|n| {
            prop::collection::vec(0.0f64..=1.0, n * n).prop_map(move |px| SlicePlane::new(0.5, n, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn blur_is_bounded_by_input_range(p in arb_plane()) {
            let lo = p.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.pixels().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &v in blur_plane(&p).pixels() {
                prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }

        #[test]
        fn labels_partition_and_shrink(p in arb_plane(), c1 in 0.5f64..0.99, dc in 0.0f64..0.5) {
            let c2 = (c1 + dc).min(0.999);
            let stack = SliceStack::new(vec![p]).unwrap();
            let (Ok(a), b) = (assign_phases(&stack, c1), assign_phases(&stack, c2)) else {
                return Ok(());
            };
            prop_assert_eq!(a.total(), stack.total_points());
            prop_assert!(a.inside.iter().all(|x| !a.outside.contains(x)));
            if let Ok(b) = b {
                prop_assert_eq!(b.total(), stack.total_points());
                prop_assert!(b.inside.iter().all(|x| a.inside.contains(x)));
                prop_assert!(b.outside.iter().all(|x| a.outside.contains(x)));
            }
        }
    }
}
