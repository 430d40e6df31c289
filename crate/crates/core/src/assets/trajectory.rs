//! Line-delimited trajectory files (one JSON record per line).
//!
//! Joint records: `{"t": 0.1, "q": [0.0, 0.5, ...]}` — radians, one entry
//! per revolute link. Pose records: `{"t": 0.1, "label": 2,
//! "quat": [w,x,y,z], "pos": [x,y,z]}`.

use super::AssetError;
use crate::dynamics::RigidTrack;
use crate::geometry::Pose;
use crate::kinematics::JointTrajectory;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct JointRecord {
    t: f64,
    q: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRecord {
    t: f64,
    label: u32,
    quat: [f64; 4],
    pos: [f64; 3],
}

pub fn joint_trajectory_to_jsonl(traj: &JointTrajectory) -> String {
    let mut s = String::new();
    for (t, q) in traj.timestamps.iter().zip(&traj.joint_angles) {
        let record = JointRecord { t: *t, q: q.clone() };
        writeln!(s, "{}", serde_json::to_string(&record).unwrap()).unwrap();
    }
    s
}

pub fn write_joint_trajectory(path: &Path, traj: &JointTrajectory) -> Result<(), AssetError> {
    std::fs::write(path, joint_trajectory_to_jsonl(traj)).map_err(|e| AssetError::io(path, e))
}

pub fn parse_joint_trajectory(text: &str, origin: &str) -> Result<JointTrajectory, AssetError> {
    let mut traj = JointTrajectory::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JointRecord = serde_json::from_str(line).map_err(|e| {
            AssetError::parse(format!("{origin}:{}", lineno + 1), e.to_string())
        })?;
        traj.timestamps.push(record.t);
        traj.joint_angles.push(record.q);
    }
    traj.validate()
        .map_err(|e| AssetError::parse(origin, e.to_string()))?;
    Ok(traj)
}

pub fn read_joint_trajectory(path: &Path) -> Result<JointTrajectory, AssetError> {
    let text = std::fs::read_to_string(path).map_err(|e| AssetError::io(path, e))?;
    parse_joint_trajectory(&text, &path.display().to_string())
}

pub fn pose_tracks_to_jsonl(tracks: &[RigidTrack]) -> String {
    let mut s = String::new();
    for track in tracks {
        for (t, pose) in &track.samples {
            let q = pose.to_quaternion();
            let record = PoseRecord {
                t: *t,
                label: track.label,
                quat: [q.w, q.i, q.j, q.k],
                pos: pose.translation.into(),
            };
            writeln!(s, "{}", serde_json::to_string(&record).unwrap()).unwrap();
        }
    }
    s
}

pub fn write_pose_tracks(path: &Path, tracks: &[RigidTrack]) -> Result<(), AssetError> {
    std::fs::write(path, pose_tracks_to_jsonl(tracks)).map_err(|e| AssetError::io(path, e))
}

pub fn parse_pose_tracks(text: &str, origin: &str) -> Result<Vec<RigidTrack>, AssetError> {
    let mut by_label: BTreeMap<u32, Vec<(f64, Pose)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PoseRecord = serde_json::from_str(line).map_err(|e| {
            AssetError::parse(format!("{origin}:{}", lineno + 1), e.to_string())
        })?;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(
            record.quat[0],
            record.quat[1],
            record.quat[2],
            record.quat[3],
        ));
        by_label.entry(record.label).or_default().push((
            record.t,
            Pose::from_quaternion(q, Vector3::from(record.pos)),
        ));
    }
    let mut tracks = Vec::new();
    for (label, samples) in by_label {
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(AssetError::parse(
                    origin,
                    format!("track {label}: timestamps not strictly increasing at t = {}", w[1].0),
                ));
            }
        }
        tracks.push(RigidTrack { label, samples });
    }
    Ok(tracks)
}

pub fn read_pose_tracks(path: &Path) -> Result<Vec<RigidTrack>, AssetError> {
    let text = std::fs::read_to_string(path).map_err(|e| AssetError::io(path, e))?;
    parse_pose_tracks(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn joint_trajectory_round_trip() {
        let traj = JointTrajectory {
            timestamps: vec![0.0, 0.1, 0.25],
            joint_angles: vec![vec![0.0, 1.0], vec![0.5, -0.5], vec![1.0, 0.25]],
        };
        let text = joint_trajectory_to_jsonl(&traj);
        let back = parse_joint_trajectory(&text, "mem").unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn malformed_line_is_reported_with_its_number() {
        let text = "{\"t\": 0.0, \"q\": [0.0]}\nnot json\n";
        let err = parse_joint_trajectory(text, "traj.jsonl").unwrap_err();
        assert!(err.to_string().contains("traj.jsonl:2"), "{err}");
    }

    #[test]
    fn pose_tracks_round_trip() {
        let mut rng = StdRng::seed_from_u64(11);
        let tracks = vec![
            RigidTrack {
                label: 0,
                samples: (0..5)
                    .map(|i| (i as f64 * 0.1, crate::testutil::random_pose(&mut rng)))
                    .collect(),
            },
            RigidTrack {
                label: 3,
                samples: (0..3)
                    .map(|i| (i as f64 * 0.2, crate::testutil::random_pose(&mut rng)))
                    .collect(),
            },
        ];
        let text = pose_tracks_to_jsonl(&tracks);
        let back = parse_pose_tracks(&text, "mem").unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in tracks.iter().zip(&back) {
            assert_eq!(a.label, b.label);
            for ((ta, pa), (tb, pb)) in a.samples.iter().zip(&b.samples) {
                assert_eq!(ta, tb);
                assert!((pa.translation - pb.translation).norm() < 1e-12);
                assert!((pa.rotation - pb.rotation).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn non_monotone_track_is_rejected() {
        let text = concat!(
            "{\"t\": 0.1, \"label\": 0, \"quat\": [1,0,0,0], \"pos\": [0,0,0]}\n",
            "{\"t\": 0.1, \"label\": 0, \"quat\": [1,0,0,0], \"pos\": [1,0,0]}\n",
        );
        assert!(parse_pose_tracks(text, "mem").is_err());
    }
}
