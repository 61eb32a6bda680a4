//! Synthetic indoor scenes: a dense reference scan and a simulated mobile
//! scan whose per-point error depends on local geometry (edges, range from
//! the trajectory, point density) plus a smooth drift.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::seeds;

/// Axis-aligned block standing on the floor (box obstacle or thick wall).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

impl Block {
    fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min[0] - x).max(x - self.max[0]).max(0.0);
        let dy = (self.min[1] - y).max(y - self.max[1]).max(0.0);
        dx.hypot(dy)
    }

    fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    fn inflated(&self, m: f64) -> Block {
        Block {
            min: [self.min[0] - m, self.min[1] - m],
            max: [self.max[0] + m, self.max[1] + m],
            height: self.height,
        }
    }

    fn overlaps(&self, o: &Block) -> bool {
        self.min[0] < o.max[0] && o.min[0] < self.max[0] && self.min[1] < o.max[1] && o.min[1] < self.max[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Floor extent along x and y (m).
    pub extent: [f64; 2],
    /// Height of the perimeter walls (m); 0 disables them.
    pub wall_height: f64,
    /// Interior walls as thin blocks.
    pub interior_walls: Vec<Block>,
    pub n_boxes: usize,
    /// Footprint side range of the boxes (m).
    pub box_size: [f64; 2],
    pub box_height: [f64; 2],
    /// Small clutter objects per m² of floor.
    pub clutter_density: f64,
    /// Reference sampling density (points per m²).
    pub density: f64,
    /// Set from the run's root seed, not from configuration.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let wall = |x0: f64, y0: f64, x1: f64, y1: f64| Block {
            min: [x0, y0],
            max: [x1, y1],
            height: 2.5,
        };
        SceneSpec {
            extent: [30.0, 20.0],
            wall_height: 3.0,
            interior_walls: vec![
                wall(8.0, 0.0, 8.2, 6.0),
                wall(20.0, 14.0, 20.2, 20.0),
                wall(12.0, 13.0, 17.0, 13.2),
                wall(23.0, 6.0, 28.0, 6.2),
            ],
            n_boxes: 8,
            box_size: [0.8, 2.5],
            box_height: [0.5, 2.0],
            clutter_density: 0.03,
            density: 400.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Floor only, no walls or objects.
    pub fn floor_only(extent: [f64; 2], density: f64, seed: u64) -> Self {
        SceneSpec {
            extent,
            wall_height: 0.0,
            interior_walls: Vec::new(),
            n_boxes: 0,
            clutter_density: 0.0,
            density,
            seed,
            ..SceneSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return Err(Error::invalid("scene extent must be positive"));
        }
        if !(self.density > 0.0) {
            return Err(Error::invalid("scene density must be positive"));
        }
        if self.wall_height < 0.0 || self.clutter_density < 0.0 {
            return Err(Error::invalid("wall height and clutter density must be non-negative"));
        }
        if !(self.box_size[0] > 0.0 && self.box_size[0] <= self.box_size[1])
            || !(self.box_height[0] > 0.0 && self.box_height[0] <= self.box_height[1])
        {
            return Err(Error::invalid("box size and height ranges must be positive and ordered"));
        }
        for w in &self.interior_walls {
            if !(w.max[0] > w.min[0] && w.max[1] > w.min[1] && w.height > 0.0) {
                return Err(Error::invalid("interior walls need positive size"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceTag {
    Floor,
    Wall,
    InteriorWall,
    Box,
    Clutter,
}

impl SurfaceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceTag::Floor => "floor",
            SurfaceTag::Wall => "wall",
            SurfaceTag::InteriorWall => "interior_wall",
            SurfaceTag::Box => "box",
            SurfaceTag::Clutter => "clutter",
        }
    }
}

impl fmt::Display for SurfaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Planar rectangle `origin + s·u + t·v`, `s, t ∈ [0, 1]`.
#[derive(Clone, Debug)]
struct Rect {
    origin: Point3<f64>,
    u: Point3<f64>,
    v: Point3<f64>,
    normal: Point3<f64>,
    tag: SurfaceTag,
}

impl Rect {
    fn area(&self) -> f64 {
        self.u.norm() * self.v.norm()
    }
}

/// Five visible faces of a block: top and four sides, normals outward.
fn block_faces(b: &Block, tag: SurfaceTag) -> Vec<Rect> {
    let (x0, y0, x1, y1, h) = (b.min[0], b.min[1], b.max[0], b.max[1], b.height);
    let p = Point3::new;
    let up = p(0.0, 0.0, h);
    vec![
        Rect { origin: p(x0, y0, h), u: p(x1 - x0, 0.0, 0.0), v: p(0.0, y1 - y0, 0.0), normal: p(0.0, 0.0, 1.0), tag },
        Rect { origin: p(x0, y0, 0.0), u: p(x1 - x0, 0.0, 0.0), v: up, normal: p(0.0, -1.0, 0.0), tag },
        Rect { origin: p(x0, y1, 0.0), u: p(x1 - x0, 0.0, 0.0), v: up, normal: p(0.0, 1.0, 0.0), tag },
        Rect { origin: p(x0, y0, 0.0), u: p(0.0, y1 - y0, 0.0), v: up, normal: p(-1.0, 0.0, 0.0), tag },
        Rect { origin: p(x1, y0, 0.0), u: p(0.0, y1 - y0, 0.0), v: up, normal: p(1.0, 0.0, 0.0), tag },
    ]
}

/// Reference scan with per-point ground-truth attributes.
#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: SceneSpec,
    pub cloud: PointCloud<f64>,
    /// Unit surface normal of each point.
    pub normals: Vec<Point3<f64>>,
    pub tags: Vec<SurfaceTag>,
    /// Distance (m) to the nearest surface edge or crease.
    pub edge_distance: Vec<f64>,
    /// Obstacles standing on the floor (boxes, clutter, interior walls).
    pub blocks: Vec<Block>,
}

fn place_blocks(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> (Vec<Block>, Vec<Block>) {
    let [w, d] = spec.extent;
    let mut taken: Vec<Block> = spec.interior_walls.clone();
    let mut place = |size: [f64; 2], height: [f64; 2], n: usize, gap: f64, rng: &mut ChaCha8Rng| {
        let mut out = Vec::new();
        for _ in 0..n {
            for _attempt in 0..200 {
                let sx = rng.random_range(size[0]..=size[1]);
                let sy = rng.random_range(size[0]..=size[1]);
                let h = rng.random_range(height[0]..=height[1]);
                if sx + 2.0 * gap >= w || sy + 2.0 * gap >= d {
                    break;
                }
                let x = rng.random_range(gap..w - gap - sx);
                let y = rng.random_range(gap..d - gap - sy);
                let b = Block { min: [x, y], max: [x + sx, y + sy], height: h };
                if taken.iter().all(|t| !t.inflated(gap).overlaps(&b)) {
                    taken.push(b);
                    out.push(b);
                    break;
                }
            }
        }
        out
    };
    let boxes = place(spec.box_size, spec.box_height, spec.n_boxes, 0.8, rng);
    let n_clutter = (spec.clutter_density * w * d).round() as usize;
    let clutter = place([0.15, 0.4], [0.1, 0.6], n_clutter, 0.3, rng);
    (boxes, clutter)
}

/// Samples the scene surfaces uniformly at the reference density; each
/// surface receives `round(density × visible area)` points.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.seed, seeds::SCENE));
    let (boxes, clutter) = place_blocks(spec, &mut rng);
    let [w, d] = spec.extent;
    let p = Point3::new;

    let mut rects = vec![Rect {
        origin: p(0.0, 0.0, 0.0),
        u: p(w, 0.0, 0.0),
        v: p(0.0, d, 0.0),
        normal: p(0.0, 0.0, 1.0),
        tag: SurfaceTag::Floor,
    }];
    if spec.wall_height > 0.0 {
        let h = p(0.0, 0.0, spec.wall_height);
        let tag = SurfaceTag::Wall;
        rects.push(Rect { origin: p(0.0, 0.0, 0.0), u: p(w, 0.0, 0.0), v: h, normal: p(0.0, 1.0, 0.0), tag });
        rects.push(Rect { origin: p(0.0, d, 0.0), u: p(w, 0.0, 0.0), v: h, normal: p(0.0, -1.0, 0.0), tag });
        rects.push(Rect { origin: p(0.0, 0.0, 0.0), u: p(0.0, d, 0.0), v: h, normal: p(1.0, 0.0, 0.0), tag });
        rects.push(Rect { origin: p(w, 0.0, 0.0), u: p(0.0, d, 0.0), v: h, normal: p(-1.0, 0.0, 0.0), tag });
    }
    for b in &spec.interior_walls {
        rects.extend(block_faces(b, SurfaceTag::InteriorWall));
    }
    for b in &boxes {
        rects.extend(block_faces(b, SurfaceTag::Box));
    }
    for b in &clutter {
        rects.extend(block_faces(b, SurfaceTag::Clutter));
    }
    let mut blocks = spec.interior_walls.clone();
    blocks.extend(&boxes);
    blocks.extend(&clutter);
    let covered: f64 = blocks.iter().map(|b| (b.max[0] - b.min[0]) * (b.max[1] - b.min[1])).sum();

    let base_seed = seeds::derive(spec.seed, seeds::SCENE);
    let parts: Vec<Vec<(Point3<f64>, f64)>> = rects
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::per_fold(base_seed, 1, i + 1));
            let is_floor = r.tag == SurfaceTag::Floor;
            let area = if is_floor { r.area() - covered } else { r.area() };
            let n = (spec.density * area.max(0.0)).round() as usize;
            let (lu, lv) = (r.u.norm(), r.v.norm());
            let mut pts = Vec::with_capacity(n);
            while pts.len() < n {
                let s: f64 = rng.random();
                let t: f64 = rng.random();
                let q = r.origin + r.u * s + r.v * t;
                let mut edge = (s * lu).min((1.0 - s) * lu).min(t * lv).min((1.0 - t) * lv);
                if is_floor {
                    if blocks.iter().any(|b| b.contains_xy(q.x, q.y)) {
                        continue;
                    }
                    for b in &blocks {
                        edge = edge.min(b.footprint_distance(q.x, q.y));
                    }
                }
                pts.push((q, edge));
            }
            pts
        })
        .collect();

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut tags = Vec::new();
    let mut edge_distance = Vec::new();
    for (r, part) in rects.iter().zip(parts) {
        for (q, e) in part {
            points.push(q);
            normals.push(r.normal);
            tags.push(r.tag);
            edge_distance.push(e);
        }
    }
    Ok(Scene {
        spec: spec.clone(),
        cloud: PointCloud::new(points)?,
        normals,
        tags,
        edge_distance,
        blocks,
    })
}

/// Reference cloud of a scene.
pub fn generate_reference(spec: &SceneSpec) -> Result<PointCloud<f64>> {
    Ok(generate_scene(spec)?.cloud)
}

/// Mobile-scan simulation. The scanner follows a rectangular loop inset
/// from the floor boundary; the keep probability of a reference point falls
/// off with its range `r` as `keep_near / (1 + (r / keep_range)²)`, and
/// the displacement along the surface normal is
/// `drift(x, y) + N(0, σ)` with
/// `σ = σ0 (1 + edge_gain·e^{-d_edge/edge_radius}) (1 + sparse_gain·(1 - keep/keep_near)) (1 + range_gain·r / 10)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModel {
    /// Base noise σ0 (m).
    pub sigma0: f64,
    pub edge_gain: f64,
    /// Edge influence radius (m).
    pub edge_radius: f64,
    /// Amplification in sparsely sampled regions.
    pub sparse_gain: f64,
    pub range_gain: f64,
    /// Amplitude (m) of the smooth drift field.
    pub drift: f64,
    /// Drift wavelength (m).
    pub drift_wavelength: f64,
    /// Keep probability at zero range.
    pub keep_near: f64,
    /// Range (m) at which the keep probability halves; 0 disables dropout.
    pub keep_range: f64,
    pub trajectory_height: f64,
    /// Distance (m) of the trajectory loop from the floor boundary.
    pub trajectory_inset: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel {
            sigma0: 0.0105,
            edge_gain: 1.5,
            edge_radius: 0.25,
            sparse_gain: 1.5,
            range_gain: 0.5,
            drift: 0.004,
            drift_wavelength: 12.0,
            keep_near: 0.65,
            keep_range: 5.0,
            trajectory_height: 1.0,
            trajectory_inset: 4.0,
        }
    }
}

impl ErrorModel {
    /// No noise, no drift, no dropout: the scan equals the reference.
    pub fn zero() -> Self {
        ErrorModel {
            sigma0: 0.0,
            edge_gain: 0.0,
            sparse_gain: 0.0,
            range_gain: 0.0,
            drift: 0.0,
            keep_near: 1.0,
            keep_range: 0.0,
            ..ErrorModel::default()
        }
    }

    /// Constant `σ0` noise without amplification, drift or dropout.
    pub fn plain(sigma0: f64) -> Self {
        ErrorModel {
            sigma0,
            ..ErrorModel::zero()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.sigma0,
            self.edge_gain,
            self.sparse_gain,
            self.range_gain,
            self.drift,
            self.keep_range,
            self.trajectory_inset,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("error model amplitudes must be non-negative"));
        }
        if !(self.edge_radius > 0.0 && self.drift_wavelength > 0.0) {
            return Err(Error::invalid("edge radius and drift wavelength must be positive"));
        }
        if !(self.keep_near > 0.0 && self.keep_near <= 1.0) {
            return Err(Error::invalid("keep_near must be in (0, 1]"));
        }
        Ok(())
    }

    fn keep(&self, range: f64) -> f64 {
        if self.keep_range == 0.0 {
            self.keep_near
        } else {
            self.keep_near / (1.0 + (range / self.keep_range).powi(2))
        }
    }

    fn sigma(&self, range: f64, edge: f64) -> f64 {
        let sparse = 1.0 - self.keep(range) / self.keep_near;
        self.sigma0
            * (1.0 + self.edge_gain * (-edge / self.edge_radius).exp())
            * (1.0 + self.sparse_gain * sparse)
            * (1.0 + self.range_gain * range / 10.0)
    }
}

/// Simulated mobile scan.
#[derive(Clone, Debug)]
pub struct MlsScan {
    pub cloud: PointCloud<f64>,
    /// Reference point each scan point was derived from.
    pub source: Vec<usize>,
    /// Injected displacement magnitude (m).
    pub true_error: Vec<f64>,
    pub tags: Vec<SurfaceTag>,
}

fn segment_distance(p: Point3<f64>, a: Point3<f64>, b: Point3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn trajectory(scene: &Scene, model: &ErrorModel) -> Vec<Point3<f64>> {
    let [w, d] = scene.spec.extent;
    let i = model.trajectory_inset.min(0.5 * w).min(0.5 * d);
    let h = model.trajectory_height;
    let p = Point3::new;
    vec![p(i, i, h), p(w - i, i, h), p(w - i, d - i, h), p(i, d - i, h), p(i, i, h)]
}

/// Distance from `p` to the scanner trajectory.
pub fn trajectory_range(scene: &Scene, model: &ErrorModel, p: Point3<f64>) -> f64 {
    let path = trajectory(scene, model);
    path.windows(2).map(|s| segment_distance(p, s[0], s[1])).fold(f64::INFINITY, f64::min)
}

pub fn generate_mls(scene: &Scene, model: &ErrorModel, seed: u64) -> Result<MlsScan> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::MLS));
    let phase: [f64; 2] = [rng.random::<f64>() * std::f64::consts::TAU, rng.random::<f64>() * std::f64::consts::TAU];
    let k = std::f64::consts::TAU / model.drift_wavelength;
    let path = trajectory(scene, model);
    let mut out = MlsScan {
        cloud: PointCloud::new(Vec::new())?,
        source: Vec::new(),
        true_error: Vec::new(),
        tags: Vec::new(),
    };
    let mut points = Vec::new();
    for (i, &q) in scene.cloud.iter().enumerate() {
        let range = path.windows(2).map(|s| segment_distance(q, s[0], s[1])).fold(f64::INFINITY, f64::min);
        // Draw both variates for every point so the noise stream does not
        // depend on which points are dropped.
        let u: f64 = rng.random();
        let sigma = model.sigma(range, scene.edge_distance[i]);
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
        if u >= model.keep(range) {
            continue;
        }
        let drift = model.drift * (k * q.x + phase[0]).sin() * (k * q.y + phase[1]).cos();
        let offset = drift + sigma * z;
        points.push(q + scene.normals[i] * offset);
        out.source.push(i);
        out.true_error.push(offset.abs());
        out.tags.push(scene.tags[i]);
    }
    out.cloud = PointCloud::new(points)?;
    Ok(out)
}
