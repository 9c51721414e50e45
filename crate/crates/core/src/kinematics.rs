//! Forward kinematics of the seven-DOF arm.
//!
//! Convention: the shoulder frame is fixed with `x` anterior, `y` up and `z`
//! lateral (to the right). Every segment points along its local `-y`. At zero
//! angles the arm hangs straight down. The chain is
//!
//! ```text
//! R_shoulder = Ry(plane_of_elevation) · Rz(angle_of_elevation) · Ry(internal_rotation)
//! R_forearm  = R_shoulder · Rz(elbow_flexion) · Ry(supination)
//! R_hand     = R_forearm  · Rz(wrist_flexion) · Rx(deviation)
//! ```
//!
//! so elevation and flexion angles rotate about axes normal to the sagittal
//! plane and the side-dependent angles about axes inside it. Mirroring the
//! side-dependent channels therefore reflects every origin through `z = 0`.

use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_csv, write_json};
use crate::model::{JointModel, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub humerus_length: f64,
    pub forearm_length: f64,
    pub hand_length: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        ArmGeometry {
            humerus_length: 0.31,
            forearm_length: 0.26,
            hand_length: 0.08,
        }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("humerus", self.humerus_length),
            ("forearm", self.forearm_length),
            ("hand", self.hand_length),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} length must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub rotation: Rotation3<f64>,
    pub origin: Vector3<f64>,
}

/// Segment frames in shoulder-fixed coordinates. `hand.origin` is the end
/// effector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPose {
    pub shoulder: Frame,
    pub elbow: Frame,
    pub wrist: Frame,
    pub hand: Frame,
}

impl ArmPose {
    pub fn frames(&self) -> [&Frame; 4] {
        [&self.shoulder, &self.elbow, &self.wrist, &self.hand]
    }
}

pub fn forward_kinematics(angles: &[f64; 7], g: &ArmGeometry) -> Result<ArmPose> {
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("joint angles must be finite"));
    }
    g.validate()?;
    let [poe, elev, axial, flex, sup, wflex, dev] = *angles;
    let ry = |a| Rotation3::from_axis_angle(&Vector3::y_axis(), a);
    let rz = |a| Rotation3::from_axis_angle(&Vector3::z_axis(), a);
    let rx = |a| Rotation3::from_axis_angle(&Vector3::x_axis(), a);
    let down = Vector3::new(0.0, -1.0, 0.0);

    let shoulder_rot = ry(poe) * rz(elev) * ry(axial);
    let forearm_rot = shoulder_rot * rz(flex) * ry(sup);
    let hand_rot = forearm_rot * rz(wflex) * rx(dev);

    let elbow = shoulder_rot * down * g.humerus_length;
    let wrist = elbow + forearm_rot * down * g.forearm_length;
    let tip = wrist + hand_rot * down * g.hand_length;

    Ok(ArmPose {
        shoulder: Frame {
            rotation: shoulder_rot,
            origin: Vector3::zeros(),
        },
        elbow: Frame {
            rotation: forearm_rot,
            origin: elbow,
        },
        wrist: Frame {
            rotation: hand_rot,
            origin: wrist,
        },
        hand: Frame {
            rotation: hand_rot,
            origin: tip,
        },
    })
}

/// Per-frame poses of a seven-DOF trajectory.
pub fn trace_motion(t: &Trajectory, g: &ArmGeometry) -> Result<Vec<ArmPose>> {
    if t.model() != JointModel::Full7 {
        return Err(Error::ModelMismatch {
            left: t.model().to_string(),
            right: JointModel::Full7.to_string(),
        });
    }
    t.samples()
        .rows()
        .map(|r| {
            let angles: [f64; 7] = r.try_into().expect("seven channels");
            forward_kinematics(&angles, g)
        })
        .collect()
}

#[derive(Serialize)]
struct FrameRecord {
    origin: [f64; 3],
    /// `[w, x, y, z]`
    quaternion: [f64; 4],
}

#[derive(Serialize)]
struct PoseRecord {
    shoulder: FrameRecord,
    elbow: FrameRecord,
    wrist: FrameRecord,
    hand: FrameRecord,
}

fn record(f: &Frame) -> FrameRecord {
    let q = UnitQuaternion::from_rotation_matrix(&f.rotation);
    FrameRecord {
        origin: [f.origin.x, f.origin.y, f.origin.z],
        quaternion: [q.w, q.i, q.j, q.k],
    }
}

/// Writes `<stem>.json` (per-frame origins and quaternions) and
/// `<stem>.csv` (end-effector positions).
pub fn save_trace(dir: &Path, stem: &str, poses: &[ArmPose]) -> Result<()> {
    let records: Vec<PoseRecord> = poses
        .iter()
        .map(|p| PoseRecord {
            shoulder: record(&p.shoulder),
            elbow: record(&p.elbow),
            wrist: record(&p.wrist),
            hand: record(&p.hand),
        })
        .collect();
    write_json(&dir.join(format!("{stem}.json")), &records)?;
    write_csv(
        &dir.join(format!("{stem}.csv")),
        &["frame", "x", "y", "z"],
        poses.iter().enumerate().map(|(i, p)| {
            let o = p.hand.origin;
            vec![
                i.to_string(),
                o.x.to_string(),
                o.y.to_string(),
                o.z.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Series;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_pose_hangs_straight_down() {
        let g = ArmGeometry::default();
        let p = forward_kinematics(&[0.0; 7], &g).unwrap();
        assert_eq!(p.elbow.origin, Vector3::new(0.0, -0.31, 0.0));
        assert!((p.wrist.origin - Vector3::new(0.0, -0.57, 0.0)).norm() < 1e-15);
        assert!((p.hand.origin - Vector3::new(0.0, -0.65, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn elbow_flexion_swings_forearm_forward() {
        let g = ArmGeometry::default();
        let mut a = [0.0; 7];
        a[3] = FRAC_PI_2;
        let p = forward_kinematics(&a, &g).unwrap();
        let fore = p.wrist.origin - p.elbow.origin;
        assert!((fore.norm() - g.forearm_length).abs() < 1e-12);
        assert!((fore - Vector3::new(g.forearm_length, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wrist_motion_leaves_proximal_joints_fixed() {
        let g = ArmGeometry::default();
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                vec![
                    0.3,
                    0.8,
                    -0.2,
                    1.1,
                    0.1 * i as f64,
                    -0.05 * i as f64,
                    0.02 * i as f64,
                ]
            })
            .collect();
        let t =
            Trajectory::new(Series::from_rows(&rows).unwrap(), 100.0, JointModel::Full7).unwrap();
        let poses = trace_motion(&t, &g).unwrap();
        assert_eq!(poses.len(), 10);
        for p in &poses {
            assert!((p.elbow.origin - poses[0].elbow.origin).norm() < 1e-15);
            assert!((p.wrist.origin - poses[0].wrist.origin).norm() < 1e-15);
        }
    }

    #[test]
    fn requires_full_model() {
        let t = Trajectory::new(
            Series::new(vec![0.0; 6], 3).unwrap(),
            100.0,
            JointModel::WristOnly3,
        )
        .unwrap();
        assert!(trace_motion(&t, &ArmGeometry::default()).is_err());
        assert!(forward_kinematics(&[f64::NAN; 7], &ArmGeometry::default()).is_err());
    }
}
