//! Scene bundle I/O and asset preparation.
//!
//! A scene lives on disk as a directory: a versioned `manifest.json`
//! (units, coordinate convention, camera, chain, bodies, contact, file
//! references), one OBJ per labeled mesh, a binary PLY with the Gaussian
//! splats, optional line-delimited binding and trajectory files. Everything
//! is deterministic text or little-endian binary so bundles diff cleanly.

pub mod align;
pub mod mesh_clean;
pub mod metrics;
pub mod obj;
pub mod ply;
pub mod trajectory;
pub mod urdf;

use crate::binding::{BindingMap, BindingRecord, TriangleMesh};
use crate::dynamics::{ContactParams, Environment, RigidState, Wrench};
use crate::geometry::{Camera, GaussianPrimitive, Pose};
use crate::kinematics::{JointType, JointTrajectory, MdhChain, MdhLink};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },
    #[error("manifest declares schema version {found}, this build reads {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("scale lengths must be positive (measured {measured}, asset {asset})")]
    NonPositiveLength { measured: f64, asset: f64 },
    #[error("degenerate orientation hints: {reason}")]
    DegenerateHints { reason: String },
    #[error("mesh cleaning removed every face")]
    EmptyResult,
    #[error("geometry is empty: {what}")]
    EmptyGeometry { what: String },
    #[error("no mesh for link label {label}")]
    MissingMesh { label: u32 },
    #[error("scene has no kinematic chain")]
    NoChain,
    #[error("joint graph contains a cycle involving link {link}")]
    CyclicJointGraph { link: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl AssetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AssetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        AssetError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

/// A full scene: labeled meshes, Gaussians, their binding, the optional arm
/// chain, free rigid bodies, contact/gravity configuration, camera, and any
/// trajectories that ship with the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAsset {
    pub meshes: Vec<TriangleMesh>,
    pub gaussians: Vec<GaussianPrimitive>,
    pub binding: BindingMap,
    pub chain: Option<MdhChain>,
    /// Joint configuration the stored geometry corresponds to (zeros when
    /// absent): link motions are computed relative to FK at this vector.
    pub reference_q: Vec<f64>,
    pub bodies: Vec<RigidState>,
    pub environment: Environment,
    /// Constant external wrench per instance label, active on [t_start, t_end).
    pub wrenches: Vec<WrenchEntry>,
    pub camera: Camera,
    pub joint_trajectory: Option<JointTrajectory>,
    pub pose_tracks: Vec<crate::dynamics::RigidTrack>,
    /// Simulation defaults used by consumers that step this scene.
    pub dt: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrenchEntry {
    pub label: u32,
    pub force: [f64; 3],
    pub torque: [f64; 3],
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "infinity")]
    pub t_end: f64,
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl WrenchEntry {
    pub fn schedule(entries: &[WrenchEntry]) -> impl Fn(f64, u32) -> Wrench + '_ {
        move |t, label| {
            let mut w = Wrench::zero();
            for e in entries {
                if e.label == label && t >= e.t_start && t < e.t_end {
                    w.force += Vector3::new(e.force[0], e.force[1], e.force[2]);
                    w.torque += Vector3::new(e.torque[0], e.torque[1], e.torque[2]);
                }
            }
            w
        }
    }
}

impl SceneAsset {
    /// Labels carried by the meshes, ascending.
    pub fn mesh_labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.meshes.iter().map(|m| m.label).collect();
        labels.sort_unstable();
        labels
    }

    pub fn mesh_with_label(&self, label: u32) -> Option<&TriangleMesh> {
        self.meshes.iter().find(|m| m.label == label)
    }

    /// Structural validation: unique mesh labels, and every label referenced
    /// by gaussians, chain links, or bodies resolves to exactly one mesh.
    pub fn validate(&self) -> Result<(), AssetError> {
        let mut seen = BTreeMap::new();
        for m in &self.meshes {
            if seen.insert(m.label, ()).is_some() {
                return Err(AssetError::parse(
                    "scene",
                    format!("label {} appears on more than one mesh", m.label),
                ));
            }
            m.validate()
                .map_err(|e| AssetError::parse("scene", e.to_string()))?;
        }
        let missing = |label: u32, what: &str| {
            AssetError::parse(
                "scene",
                format!("no mesh for label {label} referenced by {what}"),
            )
        };
        for g in &self.gaussians {
            if !seen.contains_key(&g.label) {
                return Err(missing(g.label, "a gaussian"));
            }
        }
        if let Some(chain) = &self.chain {
            chain
                .validate()
                .map_err(|e| AssetError::parse("scene", e.to_string()))?;
            for link in &chain.links {
                if !seen.contains_key(&link.label) {
                    return Err(missing(link.label, "a chain link"));
                }
            }
            if self.reference_q.len() != chain.revolute_count() {
                return Err(AssetError::parse(
                    "scene",
                    format!(
                        "reference_q has {} entries, chain has {} revolute links",
                        self.reference_q.len(),
                        chain.revolute_count()
                    ),
                ));
            }
        }
        for b in &self.bodies {
            if !seen.contains_key(&b.label) {
                return Err(missing(b.label, "a rigid body"));
            }
        }
        Ok(())
    }
}

// --- manifest schema -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    units: Units,
    up_axis: String,
    meshes: Vec<MeshRef>,
    gaussians: Option<String>,
    binding: Option<String>,
    camera: CameraSpec,
    chain: Option<ChainSpec>,
    #[serde(default)]
    bodies: Vec<BodySpec>,
    contact: Option<ContactSpec>,
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    #[serde(default)]
    wrenches: Vec<WrenchEntry>,
    trajectory: Option<String>,
    tracks: Option<String>,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_steps")]
    n_steps: usize,
}

fn default_gravity() -> [f64; 3] {
    [0.0, -9.81, 0.0]
}

fn default_dt() -> f64 {
    1e-3
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Serialize, Deserialize)]
struct Units {
    length: String,
    time: String,
    angle: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            length: "meters".into(),
            time: "seconds".into(),
            angle: "radians".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MeshRef {
    label: u32,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraSpec {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    /// World→camera rotation, (w, x, y, z).
    quat: [f64; 4],
    pos: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainSpec {
    base_quat: [f64; 4],
    base_pos: [f64; 3],
    links: Vec<LinkSpec>,
    #[serde(default)]
    reference_q: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkSpec {
    a: f64,
    alpha: f64,
    d: f64,
    theta_offset: f64,
    joint: String,
    label: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct BodySpec {
    label: u32,
    mass: f64,
    /// Upper-triangular inertia (ixx, ixy, ixz, iyy, iyz, izz).
    inertia: [f64; 6],
    quat: [f64; 4],
    pos: [f64; 3],
    #[serde(default)]
    linear_velocity: [f64; 3],
    #[serde(default)]
    angular_velocity: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct ContactSpec {
    ground_height: f64,
    stiffness: f64,
    damping_contact: f64,
    friction_mu: f64,
    linear_damping: f64,
}

fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn pose_from_spec(quat: [f64; 4], pos: [f64; 3]) -> Pose {
    let q = UnitQuaternion::from_quaternion(Quaternion::new(quat[0], quat[1], quat[2], quat[3]));
    Pose::from_quaternion(q, Vector3::new(pos[0], pos[1], pos[2]))
}

fn inertia_from_triangular(t: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(t[0], t[1], t[2], t[1], t[3], t[4], t[2], t[4], t[5])
}

fn inertia_to_triangular(m: &Matrix3<f64>) -> [f64; 6] {
    [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]
}

// --- binding records file --------------------------------------------------

fn binding_to_text(binding: &BindingMap) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    for r in &binding.records {
        writeln!(
            s,
            "{} {} {} {} {} {} {}",
            r.gaussian_index,
            r.label,
            r.face_index,
            r.barycentric.x,
            r.barycentric.y,
            r.barycentric.z,
            r.normal_offset
        )
        .unwrap();
    }
    s
}

fn binding_from_text(
    text: &str,
    mesh_for_label: BTreeMap<u32, usize>,
    origin: &str,
) -> Result<BindingMap, AssetError> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let context = format!("{origin}:{}", lineno + 1);
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 7 {
            return Err(AssetError::parse(
                context,
                format!("expected 7 fields, found {}", toks.len()),
            ));
        }
        let num = |i: usize| -> Result<f64, AssetError> {
            toks[i]
                .parse()
                .map_err(|_| AssetError::parse(format!("{origin}:{}", lineno + 1), format!("bad number {:?}", toks[i])))
        };
        records.push(BindingRecord {
            gaussian_index: num(0)? as usize,
            label: num(1)? as u32,
            face_index: num(2)? as usize,
            barycentric: Vector3::new(num(3)?, num(4)?, num(5)?),
            normal_offset: num(6)?,
        });
    }
    Ok(BindingMap {
        records,
        mesh_for_label,
    })
}

// --- bundle save/load ------------------------------------------------------

/// Writes the scene as a bundle directory. Existing files are overwritten;
/// the directory is created if needed.
pub fn save_scene(asset: &SceneAsset, dir: &Path) -> Result<(), AssetError> {
    asset.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| AssetError::io(dir, e))?;

    let mut mesh_refs = Vec::new();
    for mesh in &asset.meshes {
        let file = format!("mesh_{:03}.obj", mesh.label);
        obj::write_obj(&dir.join(&file), mesh)?;
        mesh_refs.push(MeshRef {
            label: mesh.label,
            file,
        });
    }

    let gaussians_file = if asset.gaussians.is_empty() {
        None
    } else {
        ply::write_splat_ply(&dir.join("gaussians.ply"), &asset.gaussians)?;
        Some("gaussians.ply".to_string())
    };

    let binding_file = if asset.binding.is_empty() {
        None
    } else {
        let path = dir.join("binding.txt");
        std::fs::write(&path, binding_to_text(&asset.binding))
            .map_err(|e| AssetError::io(&path, e))?;
        Some("binding.txt".to_string())
    };

    let trajectory_file = match &asset.joint_trajectory {
        Some(tr) => {
            trajectory::write_joint_trajectory(&dir.join("trajectory.jsonl"), tr)?;
            Some("trajectory.jsonl".to_string())
        }
        None => None,
    };
    let tracks_file = if asset.pose_tracks.is_empty() {
        None
    } else {
        trajectory::write_pose_tracks(&dir.join("tracks.jsonl"), &asset.pose_tracks)?;
        Some("tracks.jsonl".to_string())
    };

    let cam_q = asset.camera.extrinsic.to_quaternion();
    let manifest = Manifest {
        version: SCHEMA_VERSION,
        units: Units::default(),
        up_axis: "y".into(),
        meshes: mesh_refs,
        gaussians: gaussians_file,
        binding: binding_file,
        camera: CameraSpec {
            fx: asset.camera.fx,
            fy: asset.camera.fy,
            cx: asset.camera.cx,
            cy: asset.camera.cy,
            width: asset.camera.width,
            height: asset.camera.height,
            quat: quat_to_wxyz(&cam_q),
            pos: asset.camera.extrinsic.translation.into(),
        },
        chain: asset.chain.as_ref().map(|c| ChainSpec {
            base_quat: quat_to_wxyz(&c.base_pose.to_quaternion()),
            base_pos: c.base_pose.translation.into(),
            links: c
                .links
                .iter()
                .map(|l| LinkSpec {
                    a: l.a,
                    alpha: l.alpha,
                    d: l.d,
                    theta_offset: l.theta_offset,
                    joint: match l.joint {
                        JointType::Revolute => "revolute".into(),
                        JointType::Fixed => "fixed".into(),
                    },
                    label: l.label,
                })
                .collect(),
            reference_q: asset.reference_q.clone(),
        }),
        bodies: asset
            .bodies
            .iter()
            .map(|b| BodySpec {
                label: b.label,
                mass: b.mass,
                inertia: inertia_to_triangular(&b.inertia),
                quat: quat_to_wxyz(&b.pose.to_quaternion()),
                pos: b.pose.translation.into(),
                linear_velocity: b.linear_velocity.into(),
                angular_velocity: b.angular_velocity.into(),
            })
            .collect(),
        contact: asset.environment.contact.map(|c| ContactSpec {
            ground_height: c.ground_height,
            stiffness: c.stiffness,
            damping_contact: c.damping_contact,
            friction_mu: c.friction_mu,
            linear_damping: c.linear_damping,
        }),
        gravity: asset.environment.gravity.into(),
        wrenches: asset.wrenches.clone(),
        trajectory: trajectory_file,
        tracks: tracks_file,
        dt: asset.dt,
        n_steps: asset.n_steps,
    };
    let path = dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| AssetError::parse(path.display().to_string(), e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| AssetError::io(&path, e))
}

/// Loads and validates a bundle directory.
pub fn load_scene(dir: &Path) -> Result<SceneAsset, AssetError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| AssetError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        AssetError::parse(
            format!("{}:{}", manifest_path.display(), e.line()),
            e.to_string(),
        )
    })?;
    if manifest.version != SCHEMA_VERSION {
        return Err(AssetError::SchemaVersionMismatch {
            found: manifest.version,
            expected: SCHEMA_VERSION,
        });
    }

    let mut meshes = Vec::new();
    let mut mesh_for_label = BTreeMap::new();
    for (i, mref) in manifest.meshes.iter().enumerate() {
        let mesh = obj::read_obj(&dir.join(&mref.file), mref.label)?;
        mesh_for_label.insert(mref.label, i);
        meshes.push(mesh);
    }

    let gaussians = match &manifest.gaussians {
        Some(file) => ply::read_splat_ply(&dir.join(file))?,
        None => Vec::new(),
    };

    let binding = match &manifest.binding {
        Some(file) => {
            let path = dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| AssetError::io(&path, e))?;
            binding_from_text(&text, mesh_for_label.clone(), &path.display().to_string())?
        }
        None => BindingMap::default(),
    };

    let camera = Camera {
        fx: manifest.camera.fx,
        fy: manifest.camera.fy,
        cx: manifest.camera.cx,
        cy: manifest.camera.cy,
        width: manifest.camera.width,
        height: manifest.camera.height,
        extrinsic: pose_from_spec(manifest.camera.quat, manifest.camera.pos),
    };
    camera
        .validate()
        .map_err(|e| AssetError::parse(manifest_path.display().to_string(), e.to_string()))?;

    let (chain, reference_q) = match &manifest.chain {
        Some(spec) => {
            let links = spec
                .links
                .iter()
                .map(|l| {
                    let joint = match l.joint.as_str() {
                        "revolute" => Ok(JointType::Revolute),
                        "fixed" => Ok(JointType::Fixed),
                        other => Err(AssetError::parse(
                            manifest_path.display().to_string(),
                            format!("unknown joint type {other:?}"),
                        )),
                    }?;
                    Ok(MdhLink {
                        a: l.a,
                        alpha: l.alpha,
                        d: l.d,
                        theta_offset: l.theta_offset,
                        joint,
                        label: l.label,
                    })
                })
                .collect::<Result<Vec<_>, AssetError>>()?;
            let chain = MdhChain {
                base_pose: pose_from_spec(spec.base_quat, spec.base_pos),
                links,
            };
            let reference_q = if spec.reference_q.is_empty() {
                vec![0.0; chain.revolute_count()]
            } else {
                spec.reference_q.clone()
            };
            (Some(chain), reference_q)
        }
        None => (None, Vec::new()),
    };

    let bodies = manifest
        .bodies
        .iter()
        .map(|b| RigidState {
            pose: pose_from_spec(b.quat, b.pos),
            linear_velocity: Vector3::from(b.linear_velocity),
            angular_velocity: Vector3::from(b.angular_velocity),
            mass: b.mass,
            inertia: inertia_from_triangular(&b.inertia),
            label: b.label,
        })
        .collect::<Vec<_>>();
    for b in &bodies {
        b.validate()
            .map_err(|e| AssetError::parse(manifest_path.display().to_string(), e.to_string()))?;
    }

    let environment = Environment {
        gravity: Vector3::from(manifest.gravity),
        contact: manifest.contact.as_ref().map(|c| ContactParams {
            ground_height: c.ground_height,
            stiffness: c.stiffness,
            damping_contact: c.damping_contact,
            friction_mu: c.friction_mu,
            linear_damping: c.linear_damping,
        }),
    };

    let joint_trajectory = match &manifest.trajectory {
        Some(file) => Some(trajectory::read_joint_trajectory(&dir.join(file))?),
        None => None,
    };
    let pose_tracks = match &manifest.tracks {
        Some(file) => trajectory::read_pose_tracks(&dir.join(file))?,
        None => Vec::new(),
    };

    let asset = SceneAsset {
        meshes,
        gaussians,
        binding,
        chain,
        reference_q,
        bodies,
        environment,
        wrenches: manifest.wrenches,
        camera,
        joint_trajectory,
        pose_tracks,
        dt: manifest.dt,
        n_steps: manifest.n_steps,
    };
    asset.validate()?;
    Ok(asset)
}

pub use align::{reorient_scene, rescale_scene, set_origin};
pub use mesh_clean::clean_mesh;
pub use metrics::{mesh_fscore, mesh_mse, point_cloud_fscore, point_cloud_mse, sample_surface};
pub use urdf::{emit_urdf, parse_urdf, urdf_to_xml, UrdfJoint, UrdfLink, UrdfModel};
