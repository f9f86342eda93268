//! Street-canyon scene description and a deterministic image-method ray
//! tracer.
//!
//! A [`Scene`] holds base-station (BS) mount points, planar reflectors
//! (ground, building facades) and axis-aligned box blockers (parked
//! vehicles). [`trace`] enumerates the line-of-sight path and up to
//! double-bounce specular reflections from one BS to a user location using
//! mirror images of the user across the reflector planes. Every path carries
//! its propagation delay, free-space pathloss, complex gain (reflection
//! losses and carrier phase) and the arrival direction in the BS array frame.
//!
//! The tracer is fully deterministic: no randomness, fixed iteration order,
//! and a total ordering on returned paths (strongest first).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Propagation speed used for delay computation, in metres per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A point or direction in 3-D space, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// An infinite planar reflector with a scalar amplitude reflection
/// coefficient in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    /// Any point on the plane.
    pub point: Vec3,
    /// Unit normal.
    pub normal: Vec3,
    /// Amplitude reflection coefficient.
    pub reflection: f64,
}

/// An axis-aligned box that blocks propagation (e.g. a parked bus).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedBox {
    pub min: Vec3,
    pub max: Vec3,
}

/// Static deployment: BS mounts, their array broadside directions, planar
/// reflectors, box blockers and the carrier frequency in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile", into = "SceneFile")]
pub struct Scene {
    pub bs_positions: Vec<Vec3>,
    /// Unit broadside (boresight) direction of each BS array.
    pub bs_array_normals: Vec<Vec3>,
    pub surfaces: Vec<Plane>,
    pub blockers: Vec<AxisAlignedBox>,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
}

/// On-disk JSON shape of a [`Scene`]; carrier given in GHz, array normals
/// optional (default: horizontal, facing the x = 0 plane).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneFile {
    carrier_ghz: f64,
    bs_positions: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bs_array_normals: Option<Vec<Vec3>>,
    #[serde(default)]
    surfaces: Vec<Plane>,
    #[serde(default)]
    blockers: Vec<AxisAlignedBox>,
}

impl TryFrom<SceneFile> for Scene {
    type Error = SceneError;

    fn try_from(f: SceneFile) -> Result<Self, SceneError> {
        let normals = f.bs_array_normals.unwrap_or_else(|| {
            f.bs_positions
                .iter()
                .map(|p| {
                    if p.x <= 0.0 {
                        Vec3::new(1.0, 0.0, 0.0)
                    } else {
                        Vec3::new(-1.0, 0.0, 0.0)
                    }
                })
                .collect()
        });
        let scene = Scene {
            bs_positions: f.bs_positions,
            bs_array_normals: normals,
            surfaces: f.surfaces,
            blockers: f.blockers,
            carrier_freq: f.carrier_ghz * 1e9,
        };
        scene.validate()?;
        Ok(scene)
    }
}

impl From<Scene> for SceneFile {
    fn from(s: Scene) -> Self {
        SceneFile {
            carrier_ghz: s.carrier_freq / 1e9,
            bs_positions: s.bs_positions,
            bs_array_normals: Some(s.bs_array_normals),
            surfaces: s.surfaces,
            blockers: s.blockers,
        }
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene has no base stations")]
    NoBaseStations,
    #[error("scene has {normals} array normals for {positions} base stations")]
    NormalCountMismatch { normals: usize, positions: usize },
    #[error("array normal {index} is not unit length (|n| = {norm})")]
    NormalNotUnit { index: usize, norm: f64 },
    #[error("surface {index} normal is not unit length (|n| = {norm})")]
    SurfaceNormalNotUnit { index: usize, norm: f64 },
    #[error("surface {index} reflection coefficient {value} outside (0, 1]")]
    ReflectionOutOfRange { index: usize, value: f64 },
    #[error("blocker {index} has min > max on some axis")]
    BoxInverted { index: usize },
    #[error("carrier frequency must be positive, got {0}")]
    NonPositiveCarrier(f64),
    #[error("scene JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Scene {
    /// Checks the structural invariants: at least one BS, one unit normal per
    /// BS, surface normals unit, reflection coefficients in (0, 1], box
    /// corners ordered, positive carrier.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.bs_positions.is_empty() {
            return Err(SceneError::NoBaseStations);
        }
        if self.bs_array_normals.len() != self.bs_positions.len() {
            return Err(SceneError::NormalCountMismatch {
                normals: self.bs_array_normals.len(),
                positions: self.bs_positions.len(),
            });
        }
        for (i, n) in self.bs_array_normals.iter().enumerate() {
            let norm = n.norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(SceneError::NormalNotUnit { index: i, norm });
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            let norm = s.normal.norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(SceneError::SurfaceNormalNotUnit { index: i, norm });
            }
            if !(s.reflection > 0.0 && s.reflection <= 1.0) {
                return Err(SceneError::ReflectionOutOfRange {
                    index: i,
                    value: s.reflection,
                });
            }
        }
        for (i, b) in self.blockers.iter().enumerate() {
            if b.min.x > b.max.x || b.min.y > b.max.y || b.min.z > b.max.z {
                return Err(SceneError::BoxInverted { index: i });
            }
        }
        if !(self.carrier_freq > 0.0) {
            return Err(SceneError::NonPositiveCarrier(self.carrier_freq));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, SceneError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    /// Carrier wavelength in metres.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Default deployment: four lamp-post BSs on the corners of a
    /// 50 m x 60 m street rectangle at 6 m height, arrays facing the street,
    /// asphalt ground plane and two building facades just behind the posts.
    /// Every street-level location has line of sight to all four BSs.
    pub fn street_canyon() -> Self {
        let bs_x = 25.0;
        let bs_y = 30.0;
        let bs_h = 6.0;
        let scene = Scene {
            bs_positions: vec![
                Vec3::new(-bs_x, -bs_y, bs_h),
                Vec3::new(-bs_x, bs_y, bs_h),
                Vec3::new(bs_x, bs_y, bs_h),
                Vec3::new(bs_x, -bs_y, bs_h),
            ],
            bs_array_normals: vec![
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(-1.0, 0.0, 0.0),
            ],
            surfaces: vec![
                // Asphalt.
                Plane {
                    point: Vec3::new(0.0, 0.0, 0.0),
                    normal: Vec3::new(0.0, 0.0, 1.0),
                    reflection: 0.3,
                },
                // Building facades, one metre behind each lamp-post row.
                Plane {
                    point: Vec3::new(-26.0, 0.0, 0.0),
                    normal: Vec3::new(1.0, 0.0, 0.0),
                    reflection: 0.5,
                },
                Plane {
                    point: Vec3::new(26.0, 0.0, 0.0),
                    normal: Vec3::new(-1.0, 0.0, 0.0),
                    reflection: 0.5,
                },
            ],
            blockers: vec![],
            carrier_freq: 60e9,
        };
        scene.validate().expect("built-in scene is valid");
        scene
    }

    /// The street canyon with a parked double-deck bus in front of the third
    /// BS, shadowing a large part of the street from it.
    pub fn street_canyon_with_bus() -> Self {
        let mut scene = Self::street_canyon();
        scene.blockers.push(AxisAlignedBox {
            min: Vec3::new(10.5, 5.0, 0.0),
            max: Vec3::new(15.5, 25.0, 4.5),
        });
        scene.validate().expect("built-in scene is valid");
        scene
    }
}

/// One propagation path from a BS to a user location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPath {
    /// Propagation delay in seconds (`path_length / SPEED_OF_LIGHT`).
    pub delay: f64,
    /// Product of reflection coefficients times the carrier phase
    /// `exp(-j 2 pi f_c delay)`.
    pub complex_gain: num_complex::Complex64,
    /// Free-space power loss `(4 pi path_length / lambda)^2`.
    pub pathloss: f64,
    /// Arrival azimuth at the BS, radians from broadside in the array face
    /// frame.
    pub aoa_azimuth: f64,
    /// Arrival elevation at the BS, radians from the horizontal plane.
    pub aoa_elevation: f64,
    /// Total unfolded length in metres.
    pub path_length: f64,
    /// Number of specular reflections (0 = line of sight).
    pub bounce_count: usize,
}

impl RayPath {
    /// Received power fraction of this path relative to an isotropic link:
    /// `|gain|^2 / pathloss`. Used for ordering.
    pub fn power(&self) -> f64 {
        self.complex_gain.norm_sqr() / self.pathloss
    }
}

/// Mirror image of `point` across the reflector plane.
pub fn image_reflect(point: Vec3, plane: &Plane) -> Vec3 {
    let d = (point - plane.point).dot(plane.normal);
    point - plane.normal * (2.0 * d)
}

/// True when the open segment between `a` and `b` passes through the open
/// interior of any blocker. Touching a face, edge or corner without entering
/// the interior does not count as occlusion.
pub fn occluded(a: Vec3, b: Vec3, blockers: &[AxisAlignedBox]) -> bool {
    blockers.iter().any(|bx| segment_enters_box(a, b, bx))
}

fn segment_enters_box(a: Vec3, b: Vec3, bx: &AxisAlignedBox) -> bool {
    // Slab clipping of the parametric segment a + t (b - a), t in [0, 1].
    let d = b - a;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for axis in 0..3 {
        let (p, dir) = (a.axis(axis), d.axis(axis));
        let (lo, hi) = (bx.min.axis(axis), bx.max.axis(axis));
        if dir == 0.0 {
            // Parallel to the slab: must start strictly inside it, otherwise
            // the segment can only touch the boundary.
            if p <= lo || p >= hi {
                return false;
            }
        } else {
            let inv = 1.0 / dir;
            let (ta, tb) = ((lo - p) * inv, (hi - p) * inv);
            let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 >= t1 {
                // Empty or degenerate overlap: at most a boundary touch.
                return false;
            }
        }
    }
    true
}

/// Enumerates specular paths from `scene.bs_positions[bs_index]` to `user`:
/// line of sight plus single bounces (and double bounces when
/// `max_bounces == 2`) off the scene surfaces, with blocker occlusion applied
/// to every path segment. Paths are sorted by received power (strongest
/// first, ties broken by shorter length, then fewer bounces) and truncated to
/// `max_paths`. An empty result means the location is completely shadowed.
pub fn trace(
    scene: &Scene,
    bs_index: usize,
    user: Vec3,
    max_bounces: usize,
    max_paths: usize,
) -> Vec<RayPath> {
    assert!(
        bs_index < scene.bs_positions.len(),
        "bs_index {bs_index} out of range"
    );
    assert!(max_bounces <= 2, "at most double bounces are modelled");
    let bs = scene.bs_positions[bs_index];
    let mut paths = Vec::new();

    if !occluded(bs, user, &scene.blockers) {
        let length = (user - bs).norm();
        paths.push(make_path(scene, bs_index, user - bs, length, &[]));
    }

    if max_bounces >= 1 {
        for surface in &scene.surfaces {
            if let Some(path) = bounce_path(scene, bs_index, bs, user, &[surface]) {
                paths.push(path);
            }
        }
    }
    if max_bounces >= 2 {
        for (i, s1) in scene.surfaces.iter().enumerate() {
            for (j, s2) in scene.surfaces.iter().enumerate() {
                if i == j {
                    continue;
                }
                if let Some(path) = bounce_path(scene, bs_index, bs, user, &[s1, s2]) {
                    paths.push(path);
                }
            }
        }
    }

    paths.sort_by(|p, q| {
        q.power()
            .total_cmp(&p.power())
            .then(p.path_length.total_cmp(&q.path_length))
            .then(p.bounce_count.cmp(&q.bounce_count))
    });
    paths.truncate(max_paths);
    paths
}

/// Builds the specular path BS -> surfaces[0] -> surfaces[1] -> ... -> user
/// via the image method, or `None` if a reflection point is invalid or a
/// segment is occluded.
fn bounce_path(
    scene: &Scene,
    bs_index: usize,
    bs: Vec3,
    user: Vec3,
    surfaces: &[&Plane],
) -> Option<RayPath> {
    // Mirror the user across the surfaces in reverse bounce order:
    // images[k] is the user mirrored across the last k surfaces. Seen from
    // the BS, the folded path straightens into one segment to the deepest
    // image, so its length is the image distance.
    let mut images = vec![user];
    for surface in surfaces.iter().rev() {
        images.push(image_reflect(*images.last().unwrap(), surface));
    }
    let total_length = (*images.last().unwrap() - bs).norm();

    // Unfold front to back: leg k aims at the image that still carries the
    // remaining reflections; intersecting it with surface k recovers the
    // physical corner. The crossing must fall strictly inside the leg.
    let mut corners = vec![bs];
    for (k, surface) in surfaces.iter().enumerate() {
        let from = *corners.last().unwrap();
        let target = images[surfaces.len() - k];
        let denom = (target - from).dot(surface.normal);
        if denom == 0.0 {
            return None;
        }
        let t = (surface.point - from).dot(surface.normal) / denom;
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        corners.push(from + (target - from) * t);
    }
    corners.push(user);

    // Occlusion check on every physical leg.
    for leg in corners.windows(2) {
        if occluded(leg[0], leg[1], &scene.blockers) {
            return None;
        }
    }
    debug_assert!(
        (corners
            .windows(2)
            .map(|leg| (leg[1] - leg[0]).norm())
            .sum::<f64>()
            - total_length)
            .abs()
            < 1e-9 * total_length.max(1.0),
        "unfolded length must equal the image distance"
    );

    Some(make_path(
        scene,
        bs_index,
        corners[1] - corners[0],
        total_length,
        surfaces,
    ))
}

fn make_path(
    scene: &Scene,
    bs_index: usize,
    first_hop: Vec3,
    length: f64,
    surfaces: &[&Plane],
) -> RayPath {
    let delay = length / SPEED_OF_LIGHT;
    let lambda = scene.wavelength();
    let pathloss = {
        let v = 4.0 * std::f64::consts::PI * length / lambda;
        v * v
    };
    let reflect: f64 = surfaces.iter().map(|s| s.reflection).product();
    let phase = -2.0 * std::f64::consts::PI * scene.carrier_freq * delay;
    let complex_gain = num_complex::Complex64::from_polar(reflect, phase);
    let (aoa_azimuth, aoa_elevation) = arrival_angles(&scene.bs_array_normals[bs_index], first_hop);
    RayPath {
        delay,
        complex_gain,
        pathloss,
        aoa_azimuth,
        aoa_elevation,
        path_length: length,
        bounce_count: surfaces.len(),
    }
}

/// Decomposes the departure direction (BS towards the first corner or the
/// user) into elevation from the horizontal plane and azimuth from broadside
/// within the array face frame.
fn arrival_angles(broadside: &Vec3, first_hop: Vec3) -> (f64, f64) {
    let u = first_hop.normalized();
    let elevation = u.z.clamp(-1.0, 1.0).asin();
    let mut nh = Vec3::new(broadside.x, broadside.y, 0.0);
    if nh.norm() < 1e-12 {
        // Degenerate vertical boresight; fall back to a fixed reference.
        nh = Vec3::new(1.0, 0.0, 0.0);
    }
    let nh = nh.normalized();
    let yloc = Vec3::new(0.0, 0.0, 1.0).cross(nh);
    let azimuth = u.dot(yloc).atan2(u.dot(nh));
    (azimuth, elevation)
}
