//! URDF emission and parsing.
//!
//! The emitter writes one link per chain link plus a base link, with joint
//! origins taken from the per-link MDH transform at zero joint angle (the
//! joint axis is the link-frame z). Origins are stored as xyz + rpy exactly
//! as written, and floats print with shortest round-trip formatting, so
//! emit → parse → emit is byte-stable.

use super::{obj, AssetError, SceneAsset};
use crate::geometry::Pose;
use crate::kinematics::{link_transform, JointType};
use nalgebra::{Matrix3, Vector3};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfLink {
    pub name: String,
    pub mass: f64,
    /// Upper-triangular inertia (ixx, ixy, ixz, iyy, iyz, izz), kg·m².
    pub inertia: [f64; 6],
    pub visual_mesh: Option<String>,
    pub collision_mesh: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrdfJointType {
    Revolute,
    Fixed,
}

impl UrdfJointType {
    fn as_str(&self) -> &'static str {
        match self {
            UrdfJointType::Revolute => "revolute",
            UrdfJointType::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfJoint {
    pub name: String,
    pub joint_type: UrdfJointType,
    pub parent: String,
    pub child: String,
    pub origin_xyz: [f64; 3],
    /// Extrinsic roll-pitch-yaw: R = Rz(y)·Ry(p)·Rx(r).
    pub origin_rpy: [f64; 3],
    pub axis: [f64; 3],
    pub damping: f64,
    pub friction: f64,
}

impl UrdfJoint {
    pub fn origin_pose(&self) -> Pose {
        Pose {
            rotation: rotation_from_rpy(&self.origin_rpy),
            translation: Vector3::from(self.origin_xyz),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfModel {
    pub name: String,
    pub links: Vec<UrdfLink>,
    pub joints: Vec<UrdfJoint>,
}

pub fn rotation_from_rpy(rpy: &[f64; 3]) -> Matrix3<f64> {
    let rx = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), rpy[0]).into_inner();
    let ry = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), rpy[1]).into_inner();
    let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), rpy[2]).into_inner();
    rz * ry * rx
}

/// Roll-pitch-yaw of a rotation matrix (pitch forced into [−π/2, π/2]).
pub fn rpy_from_rotation(r: &Matrix3<f64>) -> [f64; 3] {
    let sp = -r[(2, 0)];
    let pitch = sp.clamp(-1.0, 1.0).asin();
    if sp.abs() > 1.0 - 1e-12 {
        // Gimbal lock: roll and yaw are degenerate; put everything in yaw.
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        return [0.0, pitch, yaw];
    }
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    [roll, pitch, yaw]
}

impl UrdfModel {
    /// Checks masses and that the joint graph is a tree with exactly one
    /// root link.
    pub fn validate(&self) -> Result<(), AssetError> {
        let err = |m: String| AssetError::parse("urdf model", m);
        if self.links.is_empty() {
            return Err(err("model has no links".into()));
        }
        let mut names = std::collections::BTreeMap::new();
        for (i, l) in self.links.iter().enumerate() {
            if !(l.mass > 0.0) {
                return Err(err(format!("link {:?} has non-positive mass {}", l.name, l.mass)));
            }
            if names.insert(l.name.clone(), i).is_some() {
                return Err(err(format!("duplicate link name {:?}", l.name)));
            }
        }
        let mut parent_of: std::collections::BTreeMap<&str, &str> = Default::default();
        for j in &self.joints {
            for end in [&j.parent, &j.child] {
                if !names.contains_key(end.as_str()) {
                    return Err(err(format!(
                        "joint {:?} references unknown link {end:?}",
                        j.name
                    )));
                }
            }
            if parent_of.insert(j.child.as_str(), j.parent.as_str()).is_some() {
                return Err(err(format!("link {:?} has more than one parent joint", j.child)));
            }
        }
        let roots: Vec<&str> = self
            .links
            .iter()
            .map(|l| l.name.as_str())
            .filter(|n| !parent_of.contains_key(n))
            .collect();
        if roots.is_empty() {
            return Err(AssetError::CyclicJointGraph {
                link: self.links[0].name.clone(),
            });
        }
        if roots.len() > 1 {
            return Err(err(format!("multiple root links: {roots:?}")));
        }
        // Walk up from every link; failing to reach the root means a cycle.
        for l in &self.links {
            let mut cur = l.name.as_str();
            let mut hops = 0;
            while let Some(&p) = parent_of.get(cur) {
                cur = p;
                hops += 1;
                if hops > self.links.len() {
                    return Err(AssetError::CyclicJointGraph {
                        link: l.name.clone(),
                    });
                }
            }
            if cur != roots[0] {
                return Err(AssetError::CyclicJointGraph {
                    link: l.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn root_link(&self) -> Option<&str> {
        let children: std::collections::BTreeSet<&str> =
            self.joints.iter().map(|j| j.child.as_str()).collect();
        self.links
            .iter()
            .map(|l| l.name.as_str())
            .find(|n| !children.contains(n))
    }
}

/// Deterministic XML serialization; repeated emission of the same model is
/// byte-identical.
pub fn urdf_to_xml(model: &UrdfModel) -> String {
    let mut s = String::new();
    writeln!(s, "<?xml version=\"1.0\"?>").unwrap();
    writeln!(s, "<robot name=\"{}\">", model.name).unwrap();
    for l in &model.links {
        writeln!(s, "  <link name=\"{}\">", l.name).unwrap();
        writeln!(s, "    <inertial>").unwrap();
        writeln!(s, "      <mass value=\"{}\"/>", l.mass).unwrap();
        writeln!(
            s,
            "      <inertia ixx=\"{}\" ixy=\"{}\" ixz=\"{}\" iyy=\"{}\" iyz=\"{}\" izz=\"{}\"/>",
            l.inertia[0], l.inertia[1], l.inertia[2], l.inertia[3], l.inertia[4], l.inertia[5]
        )
        .unwrap();
        writeln!(s, "    </inertial>").unwrap();
        if let Some(mesh) = &l.visual_mesh {
            writeln!(s, "    <visual>").unwrap();
            writeln!(s, "      <geometry>").unwrap();
            writeln!(s, "        <mesh filename=\"{mesh}\"/>").unwrap();
            writeln!(s, "      </geometry>").unwrap();
            writeln!(s, "    </visual>").unwrap();
        }
        if let Some(mesh) = &l.collision_mesh {
            writeln!(s, "    <collision>").unwrap();
            writeln!(s, "      <geometry>").unwrap();
            writeln!(s, "        <mesh filename=\"{mesh}\"/>").unwrap();
            writeln!(s, "      </geometry>").unwrap();
            writeln!(s, "    </collision>").unwrap();
        }
        writeln!(s, "  </link>").unwrap();
    }
    for j in &model.joints {
        writeln!(
            s,
            "  <joint name=\"{}\" type=\"{}\">",
            j.name,
            j.joint_type.as_str()
        )
        .unwrap();
        writeln!(s, "    <parent link=\"{}\"/>", j.parent).unwrap();
        writeln!(s, "    <child link=\"{}\"/>", j.child).unwrap();
        writeln!(
            s,
            "    <origin xyz=\"{} {} {}\" rpy=\"{} {} {}\"/>",
            j.origin_xyz[0],
            j.origin_xyz[1],
            j.origin_xyz[2],
            j.origin_rpy[0],
            j.origin_rpy[1],
            j.origin_rpy[2]
        )
        .unwrap();
        writeln!(
            s,
            "    <axis xyz=\"{} {} {}\"/>",
            j.axis[0], j.axis[1], j.axis[2]
        )
        .unwrap();
        writeln!(
            s,
            "    <dynamics damping=\"{}\" friction=\"{}\"/>",
            j.damping, j.friction
        )
        .unwrap();
        if j.joint_type == UrdfJointType::Revolute {
            // Limits are not modeled; URDF requires the element for revolute
            // joints, so emit a wide symmetric range.
            writeln!(
                s,
                "    <limit lower=\"-6.283185307179586\" upper=\"6.283185307179586\" effort=\"100\" velocity=\"10\"/>"
            )
            .unwrap();
        }
        writeln!(s, "  </joint>").unwrap();
    }
    writeln!(s, "</robot>").unwrap();
    s
}

/// Builds the URDF model for the scene's chain and writes `robot.urdf` plus
/// one OBJ per link under `out_dir/meshes/`. Inertials come from the rigid
/// body with the link's label when present, otherwise defaults (1 kg,
/// diagonal 1e-3 kg·m²).
pub fn emit_urdf(asset: &SceneAsset, out_dir: &Path) -> Result<UrdfModel, AssetError> {
    let chain = asset.chain.as_ref().ok_or(AssetError::NoChain)?;
    for link in &chain.links {
        if asset.mesh_with_label(link.label).is_none() {
            return Err(AssetError::MissingMesh { label: link.label });
        }
    }
    let mesh_dir = out_dir.join("meshes");
    std::fs::create_dir_all(&mesh_dir).map_err(|e| AssetError::io(&mesh_dir, e))?;

    let (damping, friction) = match &asset.environment.contact {
        Some(c) => (c.linear_damping, c.friction_mu),
        None => (0.0, 0.0),
    };

    let mut links = vec![UrdfLink {
        name: "base_link".into(),
        mass: 1.0,
        inertia: [1e-3, 0.0, 0.0, 1e-3, 0.0, 1e-3],
        visual_mesh: None,
        collision_mesh: None,
    }];
    let mut joints = Vec::new();
    let mut parent = "base_link".to_string();
    for link in &chain.links {
        let name = format!("link_{}", link.label);
        let mesh = asset.mesh_with_label(link.label).unwrap();
        let mesh_file = format!("meshes/link_{}.obj", link.label);
        obj::write_obj(&out_dir.join(&mesh_file), mesh)?;

        let (mass, inertia) = match asset.bodies.iter().find(|b| b.label == link.label) {
            Some(b) => (b.mass, super::inertia_to_triangular(&b.inertia)),
            None => (1.0, [1e-3, 0.0, 0.0, 1e-3, 0.0, 1e-3]),
        };
        links.push(UrdfLink {
            name: name.clone(),
            mass,
            inertia,
            visual_mesh: Some(mesh_file.clone()),
            collision_mesh: Some(mesh_file),
        });

        let origin = Pose::from_homogeneous(&link_transform(link, 0.0));
        joints.push(UrdfJoint {
            name: format!("joint_{}", link.label),
            joint_type: match link.joint {
                JointType::Revolute => UrdfJointType::Revolute,
                JointType::Fixed => UrdfJointType::Fixed,
            },
            parent: parent.clone(),
            child: name.clone(),
            origin_xyz: origin.translation.into(),
            origin_rpy: rpy_from_rotation(&origin.rotation),
            axis: [0.0, 0.0, 1.0],
            damping,
            friction,
        });
        parent = name;
    }

    let model = UrdfModel {
        name: "robot".into(),
        links,
        joints,
    };
    model.validate()?;
    let urdf_path = out_dir.join("robot.urdf");
    std::fs::write(&urdf_path, urdf_to_xml(&model)).map_err(|e| AssetError::io(&urdf_path, e))?;
    Ok(model)
}

fn parse_vec3(s: &str, context: &str) -> Result<[f64; 3], AssetError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(AssetError::parse(
            context,
            format!("expected 3 numbers, found {s:?}"),
        ));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| AssetError::parse(context, format!("bad number {p:?}")))?;
    }
    Ok(out)
}

pub fn parse_urdf_str(text: &str, origin: &str) -> Result<UrdfModel, AssetError> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| AssetError::parse(origin, e.to_string()))?;
    let robot = doc
        .descendants()
        .find(|n| n.has_tag_name("robot"))
        .ok_or_else(|| AssetError::parse(origin, "missing <robot> element"))?;
    let name = robot.attribute("name").unwrap_or("robot").to_string();

    let attr_f64 = |node: roxmltree::Node, attr: &str, default: f64| -> Result<f64, AssetError> {
        match node.attribute(attr) {
            Some(v) => v.parse().map_err(|_| {
                AssetError::parse(origin, format!("bad {attr} value {v:?}"))
            }),
            None => Ok(default),
        }
    };

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "link" => {
                let lname = node
                    .attribute("name")
                    .ok_or_else(|| AssetError::parse(origin, "link without a name"))?
                    .to_string();
                let mut mass = 1.0;
                let mut inertia = [1e-3, 0.0, 0.0, 1e-3, 0.0, 1e-3];
                let mut visual_mesh = None;
                let mut collision_mesh = None;
                for child in node.children().filter(|n| n.is_element()) {
                    match child.tag_name().name() {
                        "inertial" => {
                            for sub in child.children().filter(|n| n.is_element()) {
                                match sub.tag_name().name() {
                                    "mass" => mass = attr_f64(sub, "value", 1.0)?,
                                    "inertia" => {
                                        inertia = [
                                            attr_f64(sub, "ixx", 0.0)?,
                                            attr_f64(sub, "ixy", 0.0)?,
                                            attr_f64(sub, "ixz", 0.0)?,
                                            attr_f64(sub, "iyy", 0.0)?,
                                            attr_f64(sub, "iyz", 0.0)?,
                                            attr_f64(sub, "izz", 0.0)?,
                                        ];
                                    }
                                    _ => {}
                                }
                            }
                        }
                        tag @ ("visual" | "collision") => {
                            let mesh = child
                                .descendants()
                                .find(|n| n.has_tag_name("mesh"))
                                .and_then(|m| m.attribute("filename"))
                                .map(str::to_string);
                            if tag == "visual" {
                                visual_mesh = mesh;
                            } else {
                                collision_mesh = mesh;
                            }
                        }
                        _ => {}
                    }
                }
                links.push(UrdfLink {
                    name: lname,
                    mass,
                    inertia,
                    visual_mesh,
                    collision_mesh,
                });
            }
            "joint" => {
                let jname = node
                    .attribute("name")
                    .ok_or_else(|| AssetError::parse(origin, "joint without a name"))?
                    .to_string();
                let jtype = match node.attribute("type") {
                    Some("revolute") | Some("continuous") => UrdfJointType::Revolute,
                    Some("fixed") => UrdfJointType::Fixed,
                    Some(other) => {
                        return Err(AssetError::parse(
                            origin,
                            format!("unsupported joint type {other:?} on {jname:?}"),
                        ))
                    }
                    None => {
                        return Err(AssetError::parse(
                            origin,
                            format!("joint {jname:?} has no type"),
                        ))
                    }
                };
                let mut parent = None;
                let mut child_link = None;
                let mut origin_xyz = [0.0; 3];
                let mut origin_rpy = [0.0; 3];
                let mut axis = [1.0, 0.0, 0.0];
                let mut damping = 0.0;
                let mut friction = 0.0;
                for sub in node.children().filter(|n| n.is_element()) {
                    match sub.tag_name().name() {
                        "parent" => parent = sub.attribute("link").map(str::to_string),
                        "child" => child_link = sub.attribute("link").map(str::to_string),
                        "origin" => {
                            if let Some(v) = sub.attribute("xyz") {
                                origin_xyz = parse_vec3(v, origin)?;
                            }
                            if let Some(v) = sub.attribute("rpy") {
                                origin_rpy = parse_vec3(v, origin)?;
                            }
                        }
                        "axis" => {
                            if let Some(v) = sub.attribute("xyz") {
                                axis = parse_vec3(v, origin)?;
                            }
                        }
                        "dynamics" => {
                            damping = attr_f64(sub, "damping", 0.0)?;
                            friction = attr_f64(sub, "friction", 0.0)?;
                        }
                        _ => {}
                    }
                }
                joints.push(UrdfJoint {
                    name: jname.clone(),
                    joint_type: jtype,
                    parent: parent.ok_or_else(|| {
                        AssetError::parse(origin, format!("joint {jname:?} has no parent"))
                    })?,
                    child: child_link.ok_or_else(|| {
                        AssetError::parse(origin, format!("joint {jname:?} has no child"))
                    })?,
                    origin_xyz,
                    origin_rpy,
                    axis,
                    damping,
                    friction,
                });
            }
            _ => {}
        }
    }
    let model = UrdfModel {
        name,
        links,
        joints,
    };
    model.validate()?;
    Ok(model)
}

pub fn parse_urdf(path: &Path) -> Result<UrdfModel, AssetError> {
    let text = std::fs::read_to_string(path).map_err(|e| AssetError::io(path, e))?;
    parse_urdf_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn loop_model() -> UrdfModel {
        let link = |n: &str| UrdfLink {
            name: n.into(),
            mass: 1.0,
            inertia: [1e-3, 0.0, 0.0, 1e-3, 0.0, 1e-3],
            visual_mesh: None,
            collision_mesh: None,
        };
        let joint = |n: &str, p: &str, c: &str| UrdfJoint {
            name: n.into(),
            joint_type: UrdfJointType::Fixed,
            parent: p.into(),
            child: c.into(),
            origin_xyz: [0.0; 3],
            origin_rpy: [0.0; 3],
            axis: [0.0, 0.0, 1.0],
            damping: 0.0,
            friction: 0.0,
        };
        UrdfModel {
            name: "looped".into(),
            links: vec![link("a"), link("b"), link("c")],
            joints: vec![joint("j1", "a", "b"), joint("j2", "b", "c"), joint("j3", "c", "a")],
        }
    }

    #[test]
    fn rpy_round_trip() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let r = crate::testutil::random_rotation(&mut rng);
            let rpy = rpy_from_rotation(&r);
            let back = rotation_from_rpy(&rpy);
            assert!((r - back).abs().max() < 1e-9, "rpy {rpy:?}");
        }
    }

    #[test]
    fn minimal_model_round_trips() {
        let model = UrdfModel {
            name: "one".into(),
            links: vec![
                UrdfLink {
                    name: "base_link".into(),
                    mass: 1.0,
                    inertia: [1e-3, 0.0, 0.0, 1e-3, 0.0, 1e-3],
                    visual_mesh: None,
                    collision_mesh: None,
                },
                UrdfLink {
                    name: "link_0".into(),
                    mass: 1.0,
                    inertia: [1e-3, 0.0, 0.0, 1e-3, 0.0, 1e-3],
                    visual_mesh: Some("meshes/link_0.obj".into()),
                    collision_mesh: Some("meshes/link_0.obj".into()),
                },
            ],
            joints: vec![UrdfJoint {
                name: "joint_0".into(),
                joint_type: UrdfJointType::Revolute,
                parent: "base_link".into(),
                child: "link_0".into(),
                origin_xyz: [0.0; 3],
                origin_rpy: [0.0; 3],
                axis: [0.0, 0.0, 1.0],
                damping: 0.1,
                friction: 0.2,
            }],
        };
        let xml = urdf_to_xml(&model);
        let parsed = parse_urdf_str(&xml, "mem").unwrap();
        assert_eq!(parsed, model);
        // Second emission is byte-identical.
        assert_eq!(urdf_to_xml(&parsed), xml);
    }

    #[test]
    fn cyclic_joint_graph_is_rejected() {
        let err = loop_model().validate().unwrap_err();
        assert!(matches!(err, AssetError::CyclicJointGraph { .. }));
    }

    #[test]
    fn six_link_arm_fixture_parses_to_six_revolute_joints() {
        let mut xml = String::from("<?xml version=\"1.0\"?>\n<robot name=\"arm6\">\n");
        xml.push_str("  <link name=\"base_link\"/>\n");
        for i in 0..6 {
            xml.push_str(&format!("  <link name=\"l{i}\">\n    <inertial>\n      <mass value=\"0.5\"/>\n      <inertia ixx=\"0.001\" ixy=\"0\" ixz=\"0\" iyy=\"0.001\" iyz=\"0\" izz=\"0.001\"/>\n    </inertial>\n  </link>\n"));
            let parent = if i == 0 { "base_link".to_string() } else { format!("l{}", i - 1) };
            xml.push_str(&format!(
                "  <joint name=\"j{i}\" type=\"revolute\">\n    <parent link=\"{parent}\"/>\n    <child link=\"l{i}\"/>\n    <origin xyz=\"0 0 0.1\" rpy=\"0 0 0\"/>\n    <axis xyz=\"0 0 1\"/>\n  </joint>\n"
            ));
        }
        xml.push_str("</robot>\n");
        let model = parse_urdf_str(&xml, "mem").unwrap();
        assert_eq!(model.links.len(), 7);
        assert_eq!(model.joints.len(), 6);
        assert!(model
            .joints
            .iter()
            .all(|j| j.joint_type == UrdfJointType::Revolute));
        assert_eq!(model.root_link(), Some("base_link"));
    }

    #[test]
    fn random_rpy_magnitudes_reprint_identically() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..100 {
            let v: f64 = rng.gen_range(-10.0..10.0);
            let printed = format!("{v}");
            let reparsed: f64 = printed.parse().unwrap();
            assert_eq!(v, reparsed);
        }
    }
}
