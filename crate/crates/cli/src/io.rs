//! Versioned CSV tables for IMU input and pose output.
//!
//! Every file starts with the line `# lgpose-csv v1`, then a header row with
//! the frozen column order. Quaternions are `w, x, y, z` with `w ≥ 0`.
//! Angles are in degrees. Writes go to a temporary file in the target
//! directory that is renamed into place.

use std::io::Write;
use std::path::Path;

use lgpose_core::biomech::{hip_angles, knee_angle, thigh_orientation};
use lgpose_core::lie::Vec3;
use lgpose_core::{BodyParams, ImuFrame, PoseState, Rotation3, Segment, Side};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_LINE: &str = "# lgpose-csv v1";

const SEGMENTS: [&str; 3] = ["p", "ls", "rs"];

pub const ANGLE_COLUMNS: [&str; 8] = [
    "knee_l", "knee_r", "hip_l_y", "hip_l_x", "hip_l_z", "hip_r_y", "hip_r_x", "hip_r_z",
];

pub fn imu_header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for seg in SEGMENTS {
        cols.extend(["x", "y", "z"].map(|a| format!("a{seg}_{a}")));
    }
    for seg in SEGMENTS {
        cols.extend(["w", "x", "y", "z"].map(|a| format!("q{seg}_{a}")));
    }
    cols.extend(["fc_l".into(), "fc_r".into()]);
    cols
}

pub fn pose_header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for seg in SEGMENTS {
        cols.extend(["x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz"].map(|c| format!("{seg}_{c}")));
    }
    cols.extend(ANGLE_COLUMNS.map(String::from));
    cols
}

/// `w, x, y, z` with a non-negative scalar part.
pub fn quaternion(r: &Rotation3) -> [f64; 4] {
    let q = UnitQuaternion::from_matrix(r.matrix());
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

pub fn rotation_from_quaternion(q: [f64; 4]) -> Option<Rotation3> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    if !(raw.norm() > 1e-6) {
        return None;
    }
    let m = UnitQuaternion::from_quaternion(raw).to_rotation_matrix().into_inner();
    Some(Rotation3::new_unchecked(m))
}

/// Knee then hip angles, in degrees, in [`ANGLE_COLUMNS`] order.
pub fn joint_angles(x: &PoseState, body: &BodyParams) -> lgpose_core::Result<[f64; 8]> {
    let mut out = [0.0; 8];
    for (i, side) in Side::BOTH.into_iter().enumerate() {
        out[i] = knee_angle(x, body, side)?.to_degrees();
        let thigh = thigh_orientation(x, body, side)?;
        let hip = hip_angles(&x.pelvis.rot, &thigh);
        for (j, a) in hip.iter().enumerate() {
            out[2 + 3 * i + j] = a.to_degrees();
        }
    }
    Ok(out)
}

/// One row of `truth.csv` or `est.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseRow {
    pub t: f64,
    pub state: PoseState,
    pub angles_deg: [f64; 8],
}

impl PoseRow {
    pub fn new(t: f64, state: PoseState, body: &BodyParams) -> lgpose_core::Result<Self> {
        Ok(PoseRow {
            t,
            state,
            angles_deg: joint_angles(&state, body)?,
        })
    }

    pub fn ankle(&self, side: Side) -> Vec3 {
        self.state.pose(side.shank()).trans
    }

    fn to_record(self) -> Vec<f64> {
        let mut rec = vec![self.t];
        for seg in Segment::ALL {
            let pose = self.state.pose(seg);
            rec.extend(pose.trans.iter());
            rec.extend(quaternion(&pose.rot));
            rec.extend(self.state.velocity(seg).iter());
        }
        rec.extend(self.angles_deg);
        rec
    }

    fn from_record(rec: &[f64]) -> Result<Self, String> {
        let mut state = PoseState::identity();
        for seg in Segment::ALL {
            let o = 1 + 10 * seg.index();
            let q = [rec[o + 3], rec[o + 4], rec[o + 5], rec[o + 6]];
            let rot = rotation_from_quaternion(q).ok_or("zero quaternion")?;
            let pose = state.pose_mut(seg);
            pose.trans = Vec3::new(rec[o], rec[o + 1], rec[o + 2]);
            pose.rot = rot;
            *state.velocity_mut(seg) = Vec3::new(rec[o + 7], rec[o + 8], rec[o + 9]);
        }
        let mut angles_deg = [0.0; 8];
        angles_deg.copy_from_slice(&rec[31..39]);
        Ok(PoseRow {
            t: rec[0],
            state,
            angles_deg,
        })
    }
}

fn imu_record(f: &ImuFrame) -> Vec<f64> {
    let mut rec = vec![f.t];
    for seg in Segment::ALL {
        rec.extend(f.acc(seg).iter());
    }
    for seg in Segment::ALL {
        rec.extend(quaternion(f.rot(seg)));
    }
    rec.push(f.fc_left as u8 as f64);
    rec.push(f.fc_right as u8 as f64);
    rec
}

fn imu_from_record(rec: &[f64]) -> Result<ImuFrame, String> {
    let acc = |i: usize| Vec3::new(rec[1 + 3 * i], rec[2 + 3 * i], rec[3 + 3 * i]);
    let rot = |i: usize| {
        let o = 10 + 4 * i;
        rotation_from_quaternion([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]).ok_or("zero quaternion")
    };
    let flag = |v: f64| match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(format!("contact flag must be 0 or 1, got {v}")),
    };
    Ok(ImuFrame {
        t: rec[0],
        acc_p: acc(0),
        acc_ls: acc(1),
        acc_rs: acc(2),
        rot_p: rot(0)?,
        rot_ls: rot(1)?,
        rot_rs: rot(2)?,
        fc_left: flag(rec[22])?,
        fc_right: flag(rec[23])?,
    })
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        contents(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn write_table(path: &Path, header: &[String], records: &[Vec<f64>]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        writeln!(w, "{SCHEMA_LINE}")?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for rec in records {
            csv.write_record(rec.iter().map(|v| v.to_string()))?;
        }
        csv.flush()
    })
}

fn read_table(path: &Path, header: &[String]) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    if first.trim_end() != SCHEMA_LINE {
        return Err(CliError::schema(path, format!("first line must be `{SCHEMA_LINE}`")));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| CliError::schema(path, e.to_string()))?
        .clone();
    if found.iter().ne(header.iter().map(String::as_str)) {
        return Err(CliError::schema(
            path,
            format!("expected columns [{}], found [{}]", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Schema line and header row precede the first record.
        let line = i + 3;
        let rec = rec.map_err(|e| CliError::schema(path, format!("line {line}: {e}")))?;
        let values = rec
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::schema(path, format!("line {line}: expected finite numbers")))?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(CliError::schema(path, "no data rows"));
    }
    Ok(rows)
}

fn parse_rows<T>(
    path: &Path,
    rows: &[Vec<f64>],
    parse: impl Fn(&[f64]) -> Result<T, String>,
) -> Result<Vec<T>, CliError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| parse(r).map_err(|m| CliError::schema(path, format!("line {}: {m}", i + 3))))
        .collect()
}

pub fn write_imu(path: &Path, frames: &[ImuFrame]) -> Result<(), CliError> {
    let records: Vec<_> = frames.iter().map(imu_record).collect();
    write_table(path, &imu_header(), &records)
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuFrame>, CliError> {
    let rows = read_table(path, &imu_header())?;
    let frames = parse_rows(path, &rows, imu_from_record)?;
    if let Some(i) = frames.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(CliError::schema(path, format!("line {}: timestamps must increase", i + 4)));
    }
    Ok(frames)
}

pub fn write_poses(path: &Path, rows: &[PoseRow]) -> Result<(), CliError> {
    let records: Vec<_> = rows.iter().map(|r| r.to_record()).collect();
    write_table(path, &pose_header(), &records)
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseRow>, CliError> {
    let rows = read_table(path, &pose_header())?;
    parse_rows(path, &rows, PoseRow::from_record)
}
