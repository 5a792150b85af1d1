//! Feature containers, brute-force L2 matching and the binary/CSV feature
//! sidecar format.
//!
//! Sidecar layout (little-endian):
//!
//! ```text
//! magic     4 bytes  "LFMF"
//! version   u32      1
//! count     u32
//! dim       u32
//! kind      u8       0 = 2D keypoints on the corrected image
//!                    1 = 3D points
//!                    2 = 2D keypoints on the raw (distorted) image
//!                    3 = 2D virtual-image keypoints with virtual depth
//! records   count × { coords: 2 or 3 × f64, descriptor: dim × f32 }
//! ```
//!
//! Kind 3 stores `(x, y, v)` as its three coordinates.


use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::PixelPoint;
use crate::error::{Error, Result};
use crate::se3::FrameId;

/// Row-major set of equal-length descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    values: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite descriptor entry".into()));
        }
        Ok(DescriptorSet { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter("descriptor rows differ in length".into()));
        }
        if rows.is_empty() {
            return Ok(DescriptorSet { dim: 1, values: Vec::new() });
        }
        DescriptorSet::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, indices: &[usize]) -> DescriptorSet {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DescriptorSet { dim: self.dim, values }
    }
}

pub fn l2_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// 3D points with descriptors, in a labeled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCloud {
    pub frame: FrameId,
    pub points: Vec<Vector3<f64>>,
    pub descriptors: DescriptorSet,
}

impl FeatureCloud {
    pub fn new(frame: FrameId, points: Vec<Vector3<f64>>, descriptors: DescriptorSet) -> Result<Self> {
        if points.len() != descriptors.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: descriptors.len(),
            });
        }
        Ok(FeatureCloud { frame, points, descriptors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Coordinate space of image keypoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointSpace {
    /// Already undistorted and projected onto the common image plane.
    Corrected,
    /// Raw image coordinates, lens distortion still present.
    Distorted,
    /// Virtual-image coordinates with a virtual depth per keypoint.
    Virtual,
}

/// 2D keypoints with descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImage {
    pub space: KeypointSpace,
    pub keypoints: Vec<PixelPoint>,
    /// Virtual depth per keypoint, present iff `space == Virtual`.
    pub depths: Option<Vec<f64>>,
    pub descriptors: DescriptorSet,
}

impl FeatureImage {
    pub fn new(
        space: KeypointSpace,
        keypoints: Vec<PixelPoint>,
        depths: Option<Vec<f64>>,
        descriptors: DescriptorSet,
    ) -> Result<Self> {
        if keypoints.len() != descriptors.len() {
            return Err(Error::LengthMismatch {
                left: keypoints.len(),
                right: descriptors.len(),
            });
        }
        match (&depths, space) {
            (Some(d), KeypointSpace::Virtual) if d.len() == keypoints.len() => {}
            (None, KeypointSpace::Corrected | KeypointSpace::Distorted) => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "virtual depths must be given exactly for virtual-space keypoints".into(),
                ))
            }
        }
        Ok(FeatureImage { space, keypoints, depths, descriptors })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub query_idx: usize,
    pub train_idx: usize,
    pub distance: f64,
}

fn check_dims(a: &DescriptorSet, b: &DescriptorSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

/// `k` nearest rows of `train` for one query row, ascending distance, ties
/// toward the lower index.
fn nearest_k(query: &[f32], train: &DescriptorSet, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..train.len())
        .map(|j| (j, l2_distance(query, train.row(j))))
        .collect();
    let by_distance = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, by_distance);
        all.truncate(k);
    }
    all.sort_by(by_distance);
    all
}

/// Nearest train descriptor for every query, best `keep_ratio` fraction
/// retained (floor, at least one).
pub fn match_bruteforce_l2(
    query: &DescriptorSet,
    train: &DescriptorSet,
    keep_ratio: f64,
) -> Result<Vec<Match>> {
    check_dims(query, train)?;
    if query.is_empty() || train.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("keep_ratio {keep_ratio} not in (0, 1]")));
    }
    let mut matches: Vec<Match> = (0..query.len())
        .into_par_iter()
        .map(|i| {
            let (j, d) = nearest_k(query.row(i), train, 1)[0];
            Match { query_idx: i, train_idx: j, distance: d }
        })
        .collect();
    matches.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.query_idx.cmp(&b.query_idx))
    });
    let keep = ((keep_ratio * query.len() as f64).floor() as usize).max(1);
    matches.truncate(keep);
    Ok(matches)
}

/// Mutual k-nearest-neighbour matching.
///
/// A pair `(i, j)` survives when `j` is among the `k` nearest of `i` in `b`
/// and `i` is among the `k` nearest of `j` in `a`. Of the surviving pairs,
/// each descriptor keeps only its closest mutual partner, and a pair is
/// reported when it is the closest for both sides, so the result is the
/// same whichever set is passed first. Output is ordered by `query_idx`.
pub fn match_knn_crosscheck(a: &DescriptorSet, b: &DescriptorSet, k: usize) -> Result<Vec<Match>> {
    check_dims(a, b)?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    let ab: Vec<Vec<(usize, f64)>> = (0..a.len())
        .into_par_iter()
        .map(|i| nearest_k(a.row(i), b, k))
        .collect();
    let ba: Vec<Vec<(usize, f64)>> = (0..b.len())
        .into_par_iter()
        .map(|j| nearest_k(b.row(j), a, k))
        .collect();

    // closest mutual partner on each side; lists are already sorted
    let best_for_a: Vec<Option<(usize, f64)>> = ab
        .iter()
        .enumerate()
        .map(|(i, list)| {
            list.iter()
                .find(|(j, _)| ba[*j].iter().any(|(ii, _)| *ii == i))
                .copied()
        })
        .collect();
    let best_for_b: Vec<Option<usize>> = ba
        .iter()
        .enumerate()
        .map(|(j, list)| {
            list.iter()
                .find(|(i, _)| ab[*i].iter().any(|(jj, _)| *jj == j))
                .map(|(i, _)| *i)
        })
        .collect();

    Ok(best_for_a
        .into_iter()
        .enumerate()
        .filter_map(|(i, best)| {
            let (j, d) = best?;
            (best_for_b[j] == Some(i)).then_some(Match { query_idx: i, train_idx: j, distance: d })
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Sidecar files

const MAGIC: &[u8; 4] = b"LFMF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Keypoints = 0,
    Points3d = 1,
    DistortedKeypoints = 2,
    VirtualKeypoints = 3,
}

impl PayloadKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => PayloadKind::Keypoints,
            1 => PayloadKind::Points3d,
            2 => PayloadKind::DistortedKeypoints,
            3 => PayloadKind::VirtualKeypoints,
            other => return Err(Error::MalformedSidecar(format!("unknown payload kind {other}"))),
        })
    }

    fn coords(self) -> usize {
        match self {
            PayloadKind::Keypoints | PayloadKind::DistortedKeypoints => 2,
            PayloadKind::Points3d | PayloadKind::VirtualKeypoints => 3,
        }
    }

    fn for_space(space: KeypointSpace) -> Self {
        match space {
            KeypointSpace::Corrected => PayloadKind::Keypoints,
            KeypointSpace::Distorted => PayloadKind::DistortedKeypoints,
            KeypointSpace::Virtual => PayloadKind::VirtualKeypoints,
        }
    }
}

/// Decoded sidecar: either an image feature set or a 3D feature cloud.
#[derive(Clone, Debug, PartialEq)]
pub enum Sidecar {
    Image(FeatureImage),
    Cloud(FeatureCloud),
}

impl Sidecar {
    pub fn into_image(self) -> Result<FeatureImage> {
        match self {
            Sidecar::Image(img) => Ok(img),
            Sidecar::Cloud(_) => Err(Error::MalformedSidecar("expected 2D keypoints, found 3D points".into())),
        }
    }

    /// Cloud payload, labeled with `frame`.
    pub fn into_cloud(self, frame: FrameId) -> Result<FeatureCloud> {
        match self {
            Sidecar::Cloud(mut c) => {
                c.frame = frame;
                Ok(c)
            }
            Sidecar::Image(_) => Err(Error::MalformedSidecar("expected 3D points, found 2D keypoints".into())),
        }
    }
}

fn write_header(out: &mut Vec<u8>, count: usize, dim: usize, kind: PayloadKind) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.push(kind as u8);
}

fn write_descriptor(out: &mut Vec<u8>, d: &[f32]) {
    for v in d {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_cloud(cloud: &FeatureCloud) -> Vec<u8> {
    let dim = cloud.descriptors.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + cloud.len() * (24 + 4 * dim));
    write_header(&mut out, cloud.len(), dim, PayloadKind::Points3d);
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        write_descriptor(&mut out, cloud.descriptors.row(i));
    }
    out
}

pub fn encode_image(image: &FeatureImage) -> Vec<u8> {
    let dim = image.descriptors.dim();
    let kind = PayloadKind::for_space(image.space);
    let mut out = Vec::with_capacity(HEADER_LEN + image.len() * (8 * kind.coords() + 4 * dim));
    write_header(&mut out, image.len(), dim, kind);
    for (i, p) in image.keypoints.iter().enumerate() {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
        if let Some(depths) = &image.depths {
            out.extend_from_slice(&depths[i].to_le_bytes());
        }
        write_descriptor(&mut out, image.descriptors.row(i));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedSidecar("truncated file".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take()?);
        if !v.is_finite() {
            return Err(Error::MalformedSidecar("non-finite coordinate".into()));
        }
        Ok(v)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

/// Decodes a binary sidecar. The cloud frame label is a placeholder `W0`;
/// callers relabel through [`Sidecar::into_cloud`].
pub fn decode_sidecar(bytes: &[u8]) -> Result<Sidecar> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::MalformedSidecar("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::MalformedSidecar(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::MalformedSidecar("descriptor dimension 0".into()));
    }
    let kind = PayloadKind::from_u8(r.take::<1>()?[0])?;
    let record = 8 * kind.coords() + 4 * dim;
    if bytes.len() != HEADER_LEN + count * record {
        return Err(Error::MalformedSidecar(format!(
            "expected {} bytes for {count} records, found {}",
            HEADER_LEN + count * record,
            bytes.len()
        )));
    }
    let mut coords = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let mut c = [0.0; 3];
        for slot in c.iter_mut().take(kind.coords()) {
            *slot = r.f64()?;
        }
        coords.push(c);
        for _ in 0..dim {
            values.push(r.f32()?);
        }
    }
    let descriptors = DescriptorSet::new(dim, values)?;
    sidecar_from_parts(kind, coords, descriptors)
}

fn sidecar_from_parts(kind: PayloadKind, coords: Vec<[f64; 3]>, descriptors: DescriptorSet) -> Result<Sidecar> {
    let keypoints = || coords.iter().map(|c| PixelPoint::new(c[0], c[1])).collect();
    Ok(match kind {
        PayloadKind::Points3d => Sidecar::Cloud(FeatureCloud::new(
            crate::se3::frame("W0"),
            coords.iter().map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
            descriptors,
        )?),
        PayloadKind::Keypoints => Sidecar::Image(FeatureImage::new(KeypointSpace::Corrected, keypoints(), None, descriptors)?),
        PayloadKind::DistortedKeypoints => {
            Sidecar::Image(FeatureImage::new(KeypointSpace::Distorted, keypoints(), None, descriptors)?)
        }
        PayloadKind::VirtualKeypoints => {
            let depths = coords.iter().map(|c| c[2]).collect();
            Sidecar::Image(FeatureImage::new(KeypointSpace::Virtual, keypoints(), Some(depths), descriptors)?)
        }
    })
}

/// CSV debugging form. The header names the coordinate columns
/// (`x,y` corrected, `xd,yd` distorted, `x,y,v` virtual, `x,y,z` 3D)
/// followed by `d0..d{dim-1}`.
pub fn decode_sidecar_csv(text: &str) -> Result<Sidecar> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedSidecar(e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let kind = match names.as_slice() {
        ["x", "y", "z", ..] => PayloadKind::Points3d,
        ["x", "y", "v", ..] => PayloadKind::VirtualKeypoints,
        ["xd", "yd", ..] => PayloadKind::DistortedKeypoints,
        ["x", "y", ..] => PayloadKind::Keypoints,
        _ => return Err(Error::MalformedSidecar("unrecognized CSV header".into())),
    };
    let nc = kind.coords();
    let dim = names.len() - nc;
    if dim == 0 {
        return Err(Error::MalformedSidecar("no descriptor columns".into()));
    }
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedSidecar(e.to_string()))?;
        if row.len() != names.len() {
            return Err(Error::MalformedSidecar("ragged CSV row".into()));
        }
        let mut c = [0.0; 3];
        for (k, slot) in c.iter_mut().take(nc).enumerate() {
            *slot = row[k]
                .parse()
                .map_err(|_| Error::MalformedSidecar(format!("bad coordinate {:?}", &row[k])))?;
        }
        coords.push(c);
        for field in row.iter().skip(nc) {
            values.push(
                field
                    .parse::<f32>()
                    .map_err(|_| Error::MalformedSidecar(format!("bad descriptor value {field:?}")))?,
            );
        }
    }
    sidecar_from_parts(kind, coords, DescriptorSet::new(dim, values)?)
}

/// Reads a sidecar from disk; `.csv` files use the CSV form.
pub fn read_sidecar(path: &std::path::Path) -> Result<Sidecar> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = String::from_utf8(bytes).map_err(|e| Error::MalformedSidecar(e.to_string()))?;
        decode_sidecar_csv(&text)
    } else {
        decode_sidecar(&bytes)
    }
}
