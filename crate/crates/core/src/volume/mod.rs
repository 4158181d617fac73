//! Inspecting a reconstructed phase field: probe grids, connected components
//! of the volume `{û ≥ ½}`, isosurface meshes, and planar cross-sections.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::net::PhaseFieldNet;
use crate::slice_data::{encode_csv_values, encode_pgm_values};

mod mc_tables;

use mc_tables::{CORNERS, EDGES, TRIANGLES};

/// Iso level defining the reconstructed boundary.
pub const ISO: f64 = 0.5;

/// Samples of a field at the cell centers of an `n³` grid, `x` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGrid {
    n: usize,
    values: Vec<f64>,
}

impl ProbeGrid {
    pub fn from_fn(n: usize, mut f: impl FnMut([f64; 3]) -> f64) -> Result<Self> {
        check_resolution(n)?;
        let values = (0..n * n * n).map(|k| f(Self::point_of(n, k))).collect();
        Ok(ProbeGrid { n, values })
    }

    /// Sample `net` at the cell centers.
    pub fn probe(net: &PhaseFieldNet, n: usize) -> Result<Self> {
        check_resolution(n)?;
        let points: Vec<[f64; 3]> = (0..n * n * n).map(|k| Self::point_of(n, k)).collect();
        Ok(ProbeGrid {
            n,
            values: net.values(&points),
        })
    }

    fn point_of(n: usize, k: usize) -> [f64; 3] {
        let h = 1.0 / n as f64;
        let (ix, iy, iz) = (k % n, (k / n) % n, k / (n * n));
        [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h, (iz as f64 + 0.5) * h]
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.n + iy) * self.n + ix
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.index(ix, iy, iz)]
    }

    /// Spatial position of grid node `(ix, iy, iz)`.
    pub fn node(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        Self::point_of(self.n, self.index(ix, iy, iz))
    }
}

fn check_resolution(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("probe resolution must be at least 2, got {n}")));
    }
    Ok(())
}

/// 6-connected components of `{value ≥ iso}`; labels are 1-based and assigned
/// in scan order, 0 marks voxels outside the set. Returns the voxel count of each.
pub fn label_components(grid: &ProbeGrid, iso: f64) -> (Vec<u32>, Vec<usize>) {
    let n = grid.n;
    let mut labels = vec![0u32; grid.values.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..grid.values.len() {
        if labels[start] != 0 || grid.values[start] < iso {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[start] = label;
        stack.push(start);
        while let Some(k) = stack.pop() {
            size += 1;
            let (ix, iy, iz) = (k % n, (k / n) % n, k / (n * n));
            let mut visit = |j: usize| {
                if labels[j] == 0 && grid.values[j] >= iso {
                    labels[j] = label;
                    stack.push(j);
                }
            };
            if ix > 0 {
                visit(k - 1);
            }
            if ix + 1 < n {
                visit(k + 1);
            }
            if iy > 0 {
                visit(k - n);
            }
            if iy + 1 < n {
                visit(k + n);
            }
            if iz > 0 {
                visit(k - n * n);
            }
            if iz + 1 < n {
                visit(k + n * n);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Fraction of a cross-section's samples in `{û ≥ iso}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionArea {
    pub z: f64,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub resolution: usize,
    pub iso: f64,
    pub component_count: usize,
    /// Voxels per component, in labeling order.
    pub component_sizes: Vec<usize>,
    pub section_areas: Vec<SectionArea>,
}

impl ComponentReport {
    pub fn from_grid(grid: &ProbeGrid, iso: f64, section_areas: Vec<SectionArea>) -> Self {
        let (_, sizes) = label_components(grid, iso);
        ComponentReport {
            resolution: grid.n,
            iso,
            component_count: sizes.len(),
            component_sizes: sizes,
            section_areas,
        }
    }

    /// Probe `net` and measure areas of the `z = const` sections in `section_zs`.
    pub fn analyze(net: &PhaseFieldNet, resolution: usize, section_zs: &[f64], section_resolution: usize) -> Result<Self> {
        let grid = ProbeGrid::probe(net, resolution)?;
        let areas = section_zs
            .iter()
            .map(|&z| {
                let s = cross_section(net, Axis::Z, z, section_resolution)?;
                Ok(SectionArea { z, area: s.area(ISO) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_grid(&grid, ISO, areas))
    }

    pub fn section_area(&self, z: f64) -> Option<f64> {
        self.section_areas.iter().find(|s| s.z == z).map(|s| s.area)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} connected component(s) of {{u >= {}}} on a {}^3 probe grid",
            self.component_count, self.iso, self.resolution
        );
        for (i, size) in self.component_sizes.iter().enumerate() {
            let _ = writeln!(out, "  component {}: {} voxels", i + 1, size);
        }
        for s in &self.section_areas {
            let _ = writeln!(out, "  section z={}: area fraction {:.6}", s.z, s.area);
        }
        out
    }

    /// One `key=value` per line.
    pub fn to_key_values(&self) -> String {
        let sizes: Vec<String> = self.component_sizes.iter().map(|s| s.to_string()).collect();
        let mut out = format!(
            "resolution={}\niso={}\ncomponent_count={}\ncomponent_sizes={}\n",
            self.resolution,
            self.iso,
            self.component_count,
            sizes.join(",")
        );
        for s in &self.section_areas {
            let _ = writeln!(out, "section_area.z{}={}", s.z, s.area);
        }
        out
    }
}

/// Triangle mesh of an isosurface.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VolumeMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

const MIN_TRIANGLE_AREA: f64 = 1e-12;

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

impl VolumeMesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize]))
            .sum()
    }

    /// ASCII Wavefront OBJ.
    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()));
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    /// Parse the `v` and triangular `f` records of an OBJ file.
    pub fn from_obj(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Format(format!("unsupported OBJ line `{line}`"));
        let mut mesh = VolumeMesh::default();
        for line in text.lines() {
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("v") => {
                    let c: Vec<f64> = fields.map(f64::from_str).collect::<std::result::Result<_, _>>().map_err(|_| bad(line))?;
                    let [x, y, z] = c[..] else { return Err(bad(line)) };
                    mesh.vertices.push([x, y, z]);
                }
                Some("f") => {
                    let idx: Vec<u32> = fields
                        .map(|f| f.split('/').next().unwrap_or("").parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(line))?;
                    let [a, b, c] = idx[..] else { return Err(bad(line)) };
                    if [a, b, c].iter().any(|&i| i == 0 || i as usize > mesh.vertices.len()) {
                        return Err(Error::Format(format!("face index out of range in `{line}`")));
                    }
                    mesh.triangles.push([a - 1, b - 1, c - 1]);
                }
                _ => {}
            }
        }
        Ok(mesh)
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_obj().as_bytes())
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj(&text)
    }
}

/// Marching cubes over the probe grid's cells, with vertices linearly
/// interpolated along cell edges and shared between neighbouring cells.
pub fn extract_isosurface(grid: &ProbeGrid, iso: f64) -> Result<VolumeMesh> {
    let n = grid.n;
    let mut mesh = VolumeMesh::default();
    // Vertex on the grid edge leaving node `k` along `axis`, keyed by `3k + axis`.
    let mut edge_vertex: HashMap<usize, u32> = HashMap::new();
    let mut crossed = false;
    for iz in 0..n - 1 {
        for iy in 0..n - 1 {
            for ix in 0..n - 1 {
                let corner = |c: usize| {
                    let [dx, dy, dz] = CORNERS[c];
                    (ix + dx, iy + dy, iz + dz)
                };
                let mut case = 0usize;
                for c in 0..8 {
                    let (x, y, z) = corner(c);
                    if grid.get(x, y, z) < iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                crossed = true;
                let mut vertex_of = |edge: usize| {
                    let [a, b] = EDGES[edge];
                    let (pa, pb) = (corner(a), corner(b));
                    let lo = if (pa.0, pa.1, pa.2) <= (pb.0, pb.1, pb.2) { pa } else { pb };
                    let axis = if pa.0 != pb.0 { 0 } else if pa.1 != pb.1 { 1 } else { 2 };
                    let key = 3 * grid.index(lo.0, lo.1, lo.2) + axis;
                    *edge_vertex.entry(key).or_insert_with(|| {
                        let (va, vb) = (grid.get(pa.0, pa.1, pa.2), grid.get(pb.0, pb.1, pb.2));
                        let t = (iso - va) / (vb - va);
                        let (xa, xb) = (grid.node(pa.0, pa.1, pa.2), grid.node(pb.0, pb.1, pb.2));
                        mesh.vertices.push([
                            xa[0] + t * (xb[0] - xa[0]),
                            xa[1] + t * (xb[1] - xa[1]),
                            xa[2] + t * (xb[2] - xa[2]),
                        ]);
                        (mesh.vertices.len() - 1) as u32
                    })
                };
                let row = &TRIANGLES[case];
                let mut tris = Vec::with_capacity(5);
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    tris.push([vertex_of(tri[0] as usize), vertex_of(tri[1] as usize), vertex_of(tri[2] as usize)]);
                }
                for t in tris {
                    let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
                    if triangle_area(a, b, c) > MIN_TRIANGLE_AREA {
                        mesh.triangles.push(t);
                    }
                }
            }
        }
    }
    if !crossed {
        return Err(Error::EmptySurface(iso));
    }
    Ok(mesh)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::Config(format!("axis must be x, y or z, got `{s}`"))),
        }
    }
}

/// Square image of the field on a plane `axis = coordinate`.
///
/// The in-plane axes are the remaining two in `x, y, z` order; the first
/// runs along rows (column index) and the second down the image (row index).
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub axis: Axis,
    pub coordinate: f64,
    pub resolution: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

pub fn cross_section(net: &PhaseFieldNet, axis: Axis, coordinate: f64, resolution: usize) -> Result<Section> {
    if !(0.0..=1.0).contains(&coordinate) {
        return Err(Error::Config(format!("section coordinate {coordinate} lies outside [0, 1]")));
    }
    if resolution == 0 {
        return Err(Error::Config("section resolution must be positive".into()));
    }
    let h = 1.0 / resolution as f64;
    let points: Vec<[f64; 3]> = (0..resolution * resolution)
        .map(|k| {
            let a = ((k % resolution) as f64 + 0.5) * h;
            let b = ((k / resolution) as f64 + 0.5) * h;
            match axis {
                Axis::X => [coordinate, a, b],
                Axis::Y => [a, coordinate, b],
                Axis::Z => [a, b, coordinate],
            }
        })
        .collect();
    Ok(Section {
        axis,
        coordinate,
        resolution,
        values: net.values(&points),
    })
}

/// Transition widths measured along the rows and columns of a section.
///
/// A crossing is censored when its profile stops short of one of the two
/// levels, at the section edge or at the next crossing. It then contributes
/// the distance to its extreme value, which bounds its width from below.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceWidth {
    pub mean: f64,
    pub crossings: usize,
    pub censored: usize,
}

impl Section {
    pub fn area(&self, iso: f64) -> f64 {
        self.values.iter().filter(|&&v| v >= iso).count() as f64 / self.values.len() as f64
    }

    pub fn to_pgm(&self) -> Result<Vec<u8>> {
        encode_pgm_values(self.resolution, self.resolution, &self.values)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        encode_csv_values(self.resolution, &self.values)
    }

    /// Write as CSV when `path` ends in `.csv`, otherwise as a graymap.
    pub fn save(&self, path: &Path) -> Result<()> {
        let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let bytes = if csv { self.to_csv()? } else { self.to_pgm()? };
        fsutil::write_atomic(path, &bytes)
    }

    /// Mean distance over which the field climbs from `low` to `high` across
    /// each crossing of the midpoint level, along every row and column.
    /// Returns `None` when the midpoint level is never crossed.
    pub fn interface_width(&self, low: f64, high: f64) -> Option<InterfaceWidth> {
        let r = self.resolution;
        let h = 1.0 / r as f64;
        let mid = 0.5 * (low + high);
        let mut total = ProfileWidths::default();
        let mut profile = vec![0.0; r];
        for line in 0..2 * r {
            for (i, p) in profile.iter_mut().enumerate() {
                *p = if line < r { self.values[line * r + i] } else { self.values[i * r + (line - r)] };
            }
            let w = profile_widths(&profile, low, mid, high);
            total.sum += w.sum * h;
            total.count += w.count;
            total.censored += w.censored;
        }
        (total.count > 0).then(|| InterfaceWidth {
            mean: total.sum / total.count as f64,
            crossings: total.count,
            censored: total.censored,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct ProfileWidths {
    /// In sample spacings.
    sum: f64,
    count: usize,
    censored: usize,
}

fn profile_widths(p: &[f64], low: f64, mid: f64, high: f64) -> ProfileWidths {
    let crossings: Vec<usize> = (0..p.len().saturating_sub(1))
        .filter(|&i| (p[i] < mid) != (p[i + 1] < mid))
        .collect();
    let mut out = ProfileWidths::default();
    for (c, &i) in crossings.iter().enumerate() {
        let prev = if c > 0 { crossings[c - 1] + 1 } else { 0 };
        let next = crossings.get(c + 1).copied().unwrap_or(p.len() - 1);
        // Indices i and i + 1 straddle the midpoint; `up` when the field rises with the index.
        let up = p[i] < mid;
        let (low_side, high_side) = if up {
            (level_crossing(p, i, i + 1, prev, low, false), level_crossing(p, i + 1, i, next, high, true))
        } else {
            (level_crossing(p, i + 1, i, next, low, false), level_crossing(p, i, i + 1, prev, high, true))
        };
        out.sum += (high_side.0 - low_side.0).abs();
        out.count += 1;
        out.censored += usize::from(!(low_side.1 && high_side.1));
    }
    out
}

/// Walk away from the midpoint crossing between `other` and `from`, at most
/// to `limit`, until the profile reaches `level` (from below when `rising`,
/// from above otherwise). Returns the interpolated position and `true`, or
/// the position of the extreme value on the way and `false`.
fn level_crossing(p: &[f64], from: usize, other: usize, limit: usize, level: f64, rising: bool) -> (f64, bool) {
    let reached = |v: f64| if rising { v >= level } else { v <= level };
    if reached(p[from]) {
        return (interp(p, other, from, level), true);
    }
    let step: isize = if from > other { 1 } else { -1 };
    let mut j = from as isize;
    let mut extreme = from;
    while j != limit as isize {
        let k = j + step;
        if reached(p[k as usize]) {
            return (interp(p, j as usize, k as usize, level), true);
        }
        let beyond = if rising { p[k as usize] > p[extreme] } else { p[k as usize] < p[extreme] };
        if beyond {
            extreme = k as usize;
        }
        j = k;
    }
    (extreme as f64, false)
}

fn interp(p: &[f64], a: usize, b: usize, level: f64) -> f64 {
    let t = (level - p[a]) / (p[b] - p[a]);
    a as f64 + t * (b as f64 - a as f64)
}

/// Components of the complement `{û < iso}` within a section, 4-connected.
pub fn section_complement_components(section: &Section, iso: f64) -> usize {
    let r = section.resolution;
    let mut seen = vec![false; r * r];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..r * r {
        if seen[start] || section.values[start] >= iso {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (col, row) = (k % r, k / r);
            let neighbours = [
                (col > 0).then(|| k - 1),
                (col + 1 < r).then(|| k + 1),
                (row > 0).then(|| k - r),
                (row + 1 < r).then(|| k + r),
            ];
            for j in neighbours.into_iter().flatten() {
                if !seen[j] && section.values[j] < iso {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}
