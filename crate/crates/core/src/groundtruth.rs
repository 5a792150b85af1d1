//! Motion-capture ground truth: CSV ingestion, handedness conversion,
//! frame synchronisation and the marker-plate world frame.
//!
//! The CSV layout is described by a [`ViconSchema`]. The default matches a
//! Tracker export:
//!
//! ```text
//! Objects
//! 80
//! ,,cam0,,,,,,cam2,,,,,
//! Frame,Sub Frame,RX,RY,RZ,TX,TY,TZ,RX,RY,RZ,TX,TY,TZ
//! ,,deg,deg,deg,mm,mm,mm,deg,deg,deg,mm,mm,mm
//! 1,0,0.5,-1.25,90,102.5,-40,310,...
//! ```
//!
//! Every non-empty cell of the object row opens a block that runs up to the
//! next non-empty cell. Blank pose fields mark an occlusion gap.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{euler_xyz_from_rotation, frame, rotation_from_euler_xyz, FrameId, Pose};

/// Frame label of raw motion-capture poses after handedness conversion.
pub const VICON_FRAME: &str = "VICON";
/// Frame label of the marker-plate world frame.
pub const COMMON_FRAME: &str = "COMMON";
pub const PLATE_FRAME: &str = "PLATE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationEncoding {
    /// `R = Rx · Ry · Rz`, angles in degrees.
    EulerXyzDeg,
    EulerXyzRad,
    /// Rotation vector (axis × angle), radians.
    AxisAngle,
    /// Fields in order x, y, z, w.
    Quaternion,
}

impl RotationEncoding {
    pub fn field_count(self) -> usize {
        match self {
            RotationEncoding::Quaternion => 4,
            _ => 3,
        }
    }

    pub fn to_rotation(self, v: &[f64]) -> Result<Matrix3<f64>> {
        if v.len() != self.field_count() {
            return Err(Error::MalformedCsv(format!(
                "{self:?} needs {} rotation fields, got {}",
                self.field_count(),
                v.len()
            )));
        }
        Ok(match self {
            RotationEncoding::EulerXyzDeg => {
                rotation_from_euler_xyz(&Vector3::new(v[0], v[1], v[2]).map(f64::to_radians))
            }
            RotationEncoding::EulerXyzRad => rotation_from_euler_xyz(&Vector3::new(v[0], v[1], v[2])),
            RotationEncoding::AxisAngle => Rotation3::new(Vector3::new(v[0], v[1], v[2])).into_inner(),
            RotationEncoding::Quaternion => {
                let q = Quaternion::new(v[3], v[0], v[1], v[2]);
                if !(q.norm() > 0.0) {
                    return Err(Error::MalformedCsv("zero quaternion".into()));
                }
                UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
            }
        })
    }

    pub fn from_rotation(self, r: &Matrix3<f64>) -> Vec<f64> {
        match self {
            RotationEncoding::EulerXyzDeg => euler_xyz_from_rotation(r).map(f64::to_degrees).as_slice().to_vec(),
            RotationEncoding::EulerXyzRad => euler_xyz_from_rotation(r).as_slice().to_vec(),
            RotationEncoding::AxisAngle => Rotation3::from_matrix_unchecked(*r).scaled_axis().as_slice().to_vec(),
            RotationEncoding::Quaternion => {
                let q = UnitQuaternion::from_matrix(r);
                vec![q.i, q.j, q.k, q.w]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidParameter(format!("unknown axis `{other}`"))),
        }
    }
}

/// Column layout of a motion-capture CSV export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViconSchema {
    /// Rows before the object-name row, kept verbatim.
    pub preamble_rows: usize,
    pub units_row: bool,
    pub frame_column: usize,
    pub rotation: RotationEncoding,
    pub rotation_fields: Vec<String>,
    pub translation_fields: Vec<String>,
    /// Objects the caller expects; with `strict`, any other object is an
    /// error. Empty accepts everything.
    pub known_objects: Vec<String>,
    pub strict: bool,
    /// Axis mirrored to turn the left-handed export right-handed; `None`
    /// keeps the data as written.
    pub handedness_axis: Option<Axis>,
}

impl Default for ViconSchema {
    fn default() -> Self {
        ViconSchema {
            preamble_rows: 2,
            units_row: true,
            frame_column: 0,
            rotation: RotationEncoding::EulerXyzDeg,
            rotation_fields: vec!["RX".into(), "RY".into(), "RZ".into()],
            translation_fields: vec!["TX".into(), "TY".into(), "TZ".into()],
            known_objects: Vec::new(),
            strict: false,
            handedness_axis: Some(Axis::Y),
        }
    }
}

impl ViconSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: ViconSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation_fields.len() != self.rotation.field_count() {
            return Err(Error::Config(format!(
                "rotation encoding {:?} needs {} rotation_fields",
                self.rotation,
                self.rotation.field_count()
            )));
        }
        if self.translation_fields.len() != 3 {
            return Err(Error::Config("translation_fields needs three names".into()));
        }
        Ok(())
    }
}

/// One tracked pose, position in mm.
#[derive(Clone, Debug, PartialEq)]
pub struct ViconSample {
    pub index: u64,
    pub object: String,
    pub position: Vector3<f64>,
    /// Right-handed rotation (after conversion).
    pub rotation: Matrix3<f64>,
    /// Fields as written in the file, rotation then translation.
    pub raw: Vec<f64>,
}

impl ViconSample {
    /// `VICON ← object`.
    pub fn pose(&self) -> Pose {
        Pose::from_parts_projected(&self.rotation, self.position, frame(VICON_FRAME), object_frame(&self.object))
            .expect("sample rotation is proper")
    }

    /// Sample whose raw fields encode `pose` (`VICON ← object`) under `schema`.
    pub fn from_pose(index: u64, object: &str, pose: &Pose, schema: &ViconSchema) -> ViconSample {
        let (r_raw, t_raw) = match schema.handedness_axis {
            Some(axis) => mirror(pose.rotation(), pose.translation(), axis),
            None => (*pose.rotation(), *pose.translation()),
        };
        let mut raw = schema.rotation.from_rotation(&r_raw);
        raw.extend_from_slice(t_raw.as_slice());
        ViconSample {
            index,
            object: object.to_string(),
            position: *pose.translation(),
            rotation: *pose.rotation(),
            raw,
        }
    }
}

fn object_frame(name: &str) -> FrameId {
    FrameId::new(name).unwrap_or_else(|_| frame("object"))
}

/// Per-object stream with one slot per data row; `None` is a gap.
#[derive(Clone, Debug, PartialEq)]
pub struct ViconStream {
    pub object: String,
    pub samples: Vec<Option<ViconSample>>,
}

impl ViconStream {
    pub fn gaps(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Block {
    start: usize,
    rotation: [usize; 4],
    translation: [usize; 3],
}

/// Parsed export, including the header rows needed to write it back.
#[derive(Clone, Debug, PartialEq)]
pub struct ViconData {
    pub schema: ViconSchema,
    pub preamble: Vec<Vec<String>>,
    pub object_row: Vec<String>,
    pub field_row: Vec<String>,
    pub units: Option<Vec<String>>,
    pub frame_indices: Vec<u64>,
    pub streams: Vec<ViconStream>,
    /// Non-pose cells of each data row (for example sub-frame counters).
    extra: Vec<Vec<(usize, String)>>,
    blocks: Vec<Block>,
}

impl ViconData {
    pub fn stream(&self, object: &str) -> Result<&ViconStream> {
        self.streams
            .iter()
            .find(|s| s.object == object)
            .ok_or_else(|| Error::UnknownObject(object.to_string()))
    }

    pub fn objects(&self) -> Vec<&str> {
        self.streams.iter().map(|s| s.object.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    /// Builds an export from complete per-object trajectories, `VICON ←
    /// object` poses, one per row.
    pub fn from_trajectories(
        schema: &ViconSchema,
        rate_hz: u32,
        objects: &[(&str, Vec<Option<Pose>>)],
    ) -> Result<ViconData> {
        schema.validate()?;
        let rows = objects.first().map_or(0, |(_, p)| p.len());
        if let Some((_, p)) = objects.iter().find(|(_, p)| p.len() != rows) {
            return Err(Error::LengthMismatch { left: rows, right: p.len() });
        }
        let per_block = schema.rotation.field_count() + 3;
        let lead = schema.frame_column + 2;
        let width = lead + per_block * objects.len();
        let mut object_row = vec![String::new(); width];
        let mut field_row = vec![String::new(); width];
        let mut units = vec![String::new(); width];
        field_row[schema.frame_column] = "Frame".into();
        field_row[schema.frame_column + 1] = "Sub Frame".into();
        let rot_unit = match schema.rotation {
            RotationEncoding::EulerXyzDeg => "deg",
            RotationEncoding::EulerXyzRad | RotationEncoding::AxisAngle => "rad",
            RotationEncoding::Quaternion => "",
        };
        let mut blocks = Vec::new();
        for (b, (name, _)) in objects.iter().enumerate() {
            let start = lead + b * per_block;
            object_row[start] = name.to_string();
            let mut rotation = [usize::MAX; 4];
            for (i, f) in schema.rotation_fields.iter().enumerate() {
                field_row[start + i] = f.clone();
                units[start + i] = rot_unit.into();
                rotation[i] = start + i;
            }
            let t0 = start + schema.rotation.field_count();
            let mut translation = [0; 3];
            for (i, f) in schema.translation_fields.iter().enumerate() {
                field_row[t0 + i] = f.clone();
                units[t0 + i] = "mm".into();
                translation[i] = t0 + i;
            }
            blocks.push(Block { start, rotation, translation });
        }
        let mut preamble = vec![vec!["Objects".to_string()], vec![rate_hz.to_string()]];
        preamble.resize(schema.preamble_rows, vec![String::new()]);
        preamble.truncate(schema.preamble_rows);
        let frame_indices: Vec<u64> = (1..=rows as u64).collect();
        let streams = objects
            .iter()
            .map(|(name, poses)| ViconStream {
                object: name.to_string(),
                samples: poses
                    .iter()
                    .zip(&frame_indices)
                    .map(|(p, &i)| p.as_ref().map(|p| ViconSample::from_pose(i, name, p, schema)))
                    .collect(),
            })
            .collect();
        Ok(ViconData {
            schema: schema.clone(),
            preamble,
            object_row,
            field_row,
            units: schema.units_row.then_some(units),
            extra: (0..rows).map(|_| vec![(schema.frame_column + 1, "0".to_string())]).collect(),
            frame_indices,
            streams,
            blocks,
        })
    }
}

/// `M R M`, `M t` with `M` the reflection of `axis`. An involution.
fn mirror(r: &Matrix3<f64>, t: &Vector3<f64>, axis: Axis) -> (Matrix3<f64>, Vector3<f64>) {
    let mut m = Vector3::new(1.0, 1.0, 1.0);
    m[axis.index()] = -1.0;
    let m = Matrix3::from_diagonal(&m);
    (m * r * m, m * t)
}

/// Converts a raw left-handed pose to the right-handed convention by
/// mirroring `axis`.
pub fn convert_handedness(r: &Matrix3<f64>, t: &Vector3<f64>, axis: Axis) -> (Matrix3<f64>, Vector3<f64>) {
    mirror(r, t, axis)
}

fn cell(record: &csv::StringRecord, i: usize) -> &str {
    record.get(i).map(str::trim).unwrap_or("")
}

fn row_strings(record: &csv::StringRecord) -> Vec<String> {
    record.iter().map(str::to_string).collect()
}

/// Parses a motion-capture export with the given schema.
pub fn parse_vicon_csv(bytes: &[u8], schema: &ViconSchema) -> Result<ViconData> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let mut next_row = |what: &str| -> Result<csv::StringRecord> {
        match records.next() {
            Some(r) => r.map_err(|e| Error::MalformedCsv(e.to_string())),
            None => Err(Error::MalformedCsv(format!("missing {what} row"))),
        }
    };

    let mut preamble = Vec::new();
    for _ in 0..schema.preamble_rows {
        preamble.push(row_strings(&next_row("preamble")?));
    }
    let object_rec = next_row("object name")?;
    let field_rec = next_row("field name")?;
    let units = if schema.units_row { Some(row_strings(&next_row("units")?)) } else { None };

    let starts: Vec<(usize, String)> = object_rec
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.trim().is_empty())
        .map(|(i, c)| (i, c.trim().to_string()))
        .collect();
    let known: BTreeSet<&str> = schema.known_objects.iter().map(String::as_str).collect();
    let mut blocks = Vec::new();
    let mut names = Vec::new();
    for (b, (start, name)) in starts.iter().enumerate() {
        if !known.is_empty() && !known.contains(name.as_str()) {
            if schema.strict {
                return Err(Error::UnknownObject(name.clone()));
            }
            continue;
        }
        let end = starts.get(b + 1).map_or(field_rec.len().max(*start + 1), |(s, _)| *s);
        let find = |field: &str| -> Result<usize> {
            (*start..end)
                .find(|&i| cell(&field_rec, i).eq_ignore_ascii_case(field))
                .ok_or_else(|| Error::MalformedCsv(format!("object `{name}` has no `{field}` column")))
        };
        let mut rotation = [usize::MAX; 4];
        for (i, f) in schema.rotation_fields.iter().enumerate() {
            rotation[i] = find(f)?;
        }
        let mut translation = [0; 3];
        for (i, f) in schema.translation_fields.iter().enumerate() {
            translation[i] = find(f)?;
        }
        blocks.push(Block { start: *start, rotation, translation });
        names.push(name.clone());
    }
    if schema.strict {
        for k in &schema.known_objects {
            if !names.contains(k) {
                return Err(Error::UnknownObject(k.clone()));
            }
        }
    }

    let pose_columns: BTreeSet<usize> = blocks
        .iter()
        .flat_map(|b| b.rotation.iter().copied().filter(|&c| c != usize::MAX).chain(b.translation))
        .chain(std::iter::once(schema.frame_column))
        .collect();
    let mut streams: Vec<ViconStream> =
        names.iter().map(|n| ViconStream { object: n.clone(), samples: Vec::new() }).collect();
    let mut frame_indices = Vec::new();
    let mut extra = Vec::new();
    let nrot = schema.rotation.field_count();
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let idx_text = cell(&rec, schema.frame_column);
        let index: u64 = idx_text
            .parse()
            .map_err(|_| Error::MalformedCsv(format!("data row {}: bad frame index `{idx_text}`", line + 1)))?;
        if frame_indices.last().is_some_and(|&prev| index <= prev) {
            return Err(Error::MalformedCsv(format!("frame index {index} is not increasing")));
        }
        frame_indices.push(index);
        extra.push(
            rec.iter()
                .enumerate()
                .filter(|(i, c)| !pose_columns.contains(i) && !c.is_empty())
                .map(|(i, c)| (i, c.to_string()))
                .collect(),
        );
        for (b, block) in blocks.iter().enumerate() {
            let cols: Vec<usize> = block.rotation[..nrot].iter().copied().chain(block.translation).collect();
            let texts: Vec<&str> = cols.iter().map(|&c| cell(&rec, c)).collect();
            if texts.iter().any(|t| t.is_empty()) {
                streams[b].samples.push(None);
                continue;
            }
            let raw: Vec<f64> = texts
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::MalformedCsv(format!("frame {index}: bad number `{t}`")))
                })
                .collect::<Result<_>>()?;
            let r = schema.rotation.to_rotation(&raw[..nrot])?;
            let t = Vector3::new(raw[nrot], raw[nrot + 1], raw[nrot + 2]);
            let (rotation, position) = match schema.handedness_axis {
                Some(axis) => convert_handedness(&r, &t, axis),
                None => (r, t),
            };
            streams[b].samples.push(Some(ViconSample {
                index,
                object: names[b].clone(),
                position,
                rotation,
                raw,
            }));
        }
    }
    Ok(ViconData {
        schema: schema.clone(),
        preamble,
        object_row: row_strings(&object_rec),
        field_row: row_strings(&field_rec),
        units,
        frame_indices,
        streams,
        extra,
        blocks,
    })
}

/// Writes `data` back in its own schema. Parsing the output reproduces
/// `data`; a file produced by this writer round-trips byte for byte.
pub fn write_vicon_csv(data: &ViconData) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::MalformedCsv(e.to_string());
    for row in &data.preamble {
        w.write_record(row).map_err(csv_err)?;
    }
    w.write_record(&data.object_row).map_err(csv_err)?;
    w.write_record(&data.field_row).map_err(csv_err)?;
    if let Some(u) = &data.units {
        w.write_record(u).map_err(csv_err)?;
    }
    let nrot = data.schema.rotation.field_count();
    let width = data.field_row.len();
    for (row, &index) in data.frame_indices.iter().enumerate() {
        let mut cells = vec![String::new(); width];
        cells[data.schema.frame_column] = index.to_string();
        for (i, text) in &data.extra[row] {
            if *i >= cells.len() {
                cells.resize(i + 1, String::new());
            }
            cells[*i] = text.clone();
        }
        for (block, stream) in data.blocks.iter().zip(&data.streams) {
            if let Some(s) = &stream.samples[row] {
                let cols = block.rotation[..nrot].iter().chain(&block.translation);
                for (&c, v) in cols.zip(&s.raw) {
                    cells[c] = format!("{v}");
                }
            }
        }
        w.write_record(&cells).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::MalformedCsv(e.to_string()))
}

/// Ground-truth pose per camera frame: frame `k` takes the sample at
/// position `offset + k · factor` of the stream. Gaps stay `None`.
pub fn sync_frames(
    stream: &ViconStream,
    n_frames: usize,
    factor: usize,
    offset: usize,
) -> Result<Vec<Option<Pose>>> {
    if factor == 0 {
        return Err(Error::InvalidParameter("factor must be >= 1".into()));
    }
    (0..n_frames)
        .map(|k| {
            let i = offset + k * factor;
            stream
                .samples
                .get(i)
                .map(|s| s.as_ref().map(ViconSample::pose))
                .ok_or(Error::IndexOutOfRange { index: i, len: stream.samples.len() })
        })
        .collect()
}

/// ArUco marker centers (mm, in the motion-capture frame) and the printed
/// offset from the origin ArUco marker to the origin sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerPlate {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub p2: Vector3<f64>,
    pub p3: Vector3<f64>,
    /// Origin sphere relative to `p2`, in plate coordinates.
    pub aruco_to_vicon_offset: Vector3<f64>,
    /// Template position of `p1` in plate coordinates; validation is skipped
    /// when absent.
    #[serde(default)]
    pub expected_p1: Option<Vector3<f64>>,
    #[serde(default = "default_tolerance")]
    pub tolerance_mm: f64,
}

fn default_tolerance() -> f64 {
    5.0
}

impl MarkerPlate {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `VICON ← PLATE`: origin at `p2`, x toward `p3`, y toward `p0`.
pub fn plate_frame(plate: &MarkerPlate) -> Result<Pose> {
    let ex = plate.p3 - plate.p2;
    let ey = plate.p0 - plate.p2;
    if ex.norm() == 0.0 || ey.norm() == 0.0 {
        return Err(Error::CollinearMarkers);
    }
    let x = ex.normalize();
    let y0 = ey.normalize();
    let zc = x.cross(&y0);
    if zc.norm() < 1e-9 {
        return Err(Error::CollinearMarkers);
    }
    let z = zc.normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_columns(&[x, y, z]);
    if let Some(expected) = plate.expected_p1 {
        let local = r.transpose() * (plate.p1 - plate.p2);
        let deviation = (local - expected).norm();
        if deviation > plate.tolerance_mm {
            return Err(Error::ValidationFailed { measured: [local.x, local.y, local.z], deviation });
        }
    }
    Pose::from_parts_projected(&r, plate.p2, frame(VICON_FRAME), frame(PLATE_FRAME))
}

/// `VICON ← COMMON`: the plate frame shifted to the origin sphere.
pub fn common_frame(plate_pose: &Pose, offset: &Vector3<f64>) -> Result<Pose> {
    plate_pose.compose(&Pose::from_translation(*offset, plate_pose.child().clone(), frame(COMMON_FRAME)))
}

/// Re-expresses a `VICON ← object` pose as `COMMON ← object`.
pub fn to_common_frame(pose: &Pose, plate_pose: &Pose, offset: &Vector3<f64>) -> Result<Pose> {
    common_frame(plate_pose, offset)?.inverse().compose(pose)
}

/// Inverse of [`to_common_frame`].
pub fn from_common_frame(pose: &Pose, plate_pose: &Pose, offset: &Vector3<f64>) -> Result<Pose> {
    common_frame(plate_pose, offset)?.compose(pose)
}
