//! MLA calibration file: parsing, normalized serialization and lens-grid
//! geometry.
//!
//! The MLA frame sits in the middle of the central type 1 micro lens with
//! `x` to the right and `y` up. Image rows grow downward, so the `y`
//! component is negated when centers are emitted in pixel coordinates.
//! Grid vectors and lens-type offsets are in units of the micro-image
//! diameter.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::camera::PixelPoint;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensType {
    pub id: u8,
    /// Position relative to type 1, in lens diameters.
    pub offset: Vector2<f64>,
    /// Measurable virtual-depth interval `[min, max]`.
    pub depth_range: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlaCalibration {
    /// Image center to MLA origin, pixels, y up.
    pub offset: Vector2<f64>,
    /// Micro-image diameter in pixels.
    pub diameter: f64,
    /// MLA rotation relative to the image axes, radians.
    pub rotation: f64,
    pub lens_border: f64,
    /// Total covering plane, virtual-depth units.
    pub tcp: f64,
    pub lens_base_x: Vector2<f64>,
    pub lens_base_y: Vector2<f64>,
    pub sub_grid_base: Vector2<f64>,
    pub lens_types: Vec<LensType>,
}

/// Parse result: the calibration plus a list of ignored elements.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParsedMla {
    pub calibration: MlaCalibration,
    pub warnings: Vec<String>,
}

const ROOT_FIELDS: [&str; 9] = [
    "offset",
    "diameter",
    "rotation",
    "lens_border",
    "tcp",
    "lens_base_x",
    "lens_base_y",
    "sub_grid_base",
    "lens_type",
];

pub fn parse_mla_xml(bytes: &[u8]) -> Result<ParsedMla> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    let mut warnings = Vec::new();

    for child in root.children().filter(|n| n.is_element()) {
        let name = child.tag_name().name();
        if !ROOT_FIELDS.contains(&name) {
            warnings.push(format!("ignored element <{name}>"));
        }
    }

    let offset = vector(&root, "offset")?;
    let diameter = scalar(&root, "diameter")?;
    let rotation = scalar(&root, "rotation")?;
    let lens_border = scalar(&root, "lens_border")?;
    let tcp = scalar(&root, "tcp")?;
    let lens_base_x = vector(&root, "lens_base_x")?;
    let lens_base_y = vector(&root, "lens_base_y")?;
    let sub_grid_base = vector(&root, "sub_grid_base")?;

    let mut lens_types = Vec::new();
    for (pos, node) in root
        .children()
        .filter(|n| n.has_tag_name("lens_type"))
        .enumerate()
    {
        for child in node.children().filter(|n| n.is_element()) {
            let name = child.tag_name().name();
            if !matches!(name, "offset" | "depth_range" | "id") {
                warnings.push(format!("ignored element <lens_type>/<{name}>"));
            }
        }
        let id = match node.attribute("id").map(str::to_owned).or_else(|| {
            element(&node, "id").and_then(|n| n.text()).map(|t| t.trim().to_owned())
        }) {
            Some(text) => text
                .parse::<u8>()
                .map_err(|_| Error::OutOfRange("lens_type.id".into()))?,
            None => (pos + 1) as u8,
        };
        let offset = vector(&node, "offset").map_err(|e| rename_missing(e, "lens_type.offset"))?;
        let range = element(&node, "depth_range")
            .ok_or_else(|| Error::MissingField("lens_type.depth_range".into()))?;
        let min = number_in(&range, &["min", "x"], "lens_type.depth_range.min")?;
        let max = number_in(&range, &["max", "y"], "lens_type.depth_range.max")?;
        lens_types.push(LensType {
            id,
            offset,
            depth_range: [min, max],
        });
    }

    // Zero-based type ids are shifted onto the documented 1..=3 numbering.
    let mut ids: Vec<u8> = lens_types.iter().map(|t| t.id).collect();
    ids.sort_unstable();
    if ids == [0, 1, 2] {
        for t in &mut lens_types {
            t.id += 1;
        }
    }
    lens_types.sort_by_key(|t| t.id);

    let calibration = MlaCalibration {
        offset,
        diameter,
        rotation,
        lens_border,
        tcp,
        lens_base_x,
        lens_base_y,
        sub_grid_base,
        lens_types,
    };
    calibration.validate()?;
    Ok(ParsedMla {
        calibration,
        warnings,
    })
}

fn rename_missing(e: Error, name: &str) -> Error {
    match e {
        Error::MissingField(_) => Error::MissingField(name.into()),
        other => other,
    }
}

fn element<'a, 'i>(node: &roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn parse_number(text: &str, name: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::MalformedXml(format!("`{name}` is not a number: {text:?}")))?;
    if !v.is_finite() {
        return Err(Error::OutOfRange(name.into()));
    }
    Ok(v)
}

fn scalar(node: &roxmltree::Node, name: &str) -> Result<f64> {
    let el = element(node, name).ok_or_else(|| Error::MissingField(name.into()))?;
    if let Some(v) = el.attribute("value") {
        return parse_number(v, name);
    }
    parse_number(el.text().unwrap_or(""), name)
}

/// Number stored as a child element or attribute under any of `keys`.
fn number_in(node: &roxmltree::Node, keys: &[&str], name: &str) -> Result<f64> {
    for key in keys {
        if let Some(v) = node.attribute(*key) {
            return parse_number(v, name);
        }
        if let Some(el) = element(node, key) {
            return parse_number(el.text().unwrap_or(""), name);
        }
    }
    Err(Error::MissingField(name.into()))
}

/// 2-vector as `<x>/<y>` children, `x=`/`y=` attributes or "x y" text.
fn vector(node: &roxmltree::Node, name: &str) -> Result<Vector2<f64>> {
    let el = element(node, name).ok_or_else(|| Error::MissingField(name.into()))?;
    let has_parts = el.attribute("x").is_some() || element(&el, "x").is_some();
    if has_parts {
        let x = number_in(&el, &["x"], &format!("{name}.x"))?;
        let y = number_in(&el, &["y"], &format!("{name}.y"))?;
        return Ok(Vector2::new(x, y));
    }
    let text = el.text().unwrap_or("");
    let parts: Vec<&str> = text.split([' ', ',', '\t', '\n']).filter(|s| !s.is_empty()).collect();
    match parts.as_slice() {
        [x, y] => Ok(Vector2::new(parse_number(x, name)?, parse_number(y, name)?)),
        [] => Err(Error::MissingField(format!("{name}.x"))),
        _ => Err(Error::MalformedXml(format!("`{name}` must hold two numbers"))),
    }
}

impl MlaCalibration {
    pub fn validate(&self) -> Result<()> {
        let range = |ok: bool, name: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange(name.into()))
            }
        };
        range(self.diameter > 0.0, "diameter")?;
        range(self.lens_border >= 0.0, "lens_border")?;
        range(self.tcp > 1.0, "tcp")?;
        let mut ids: Vec<u8> = self.lens_types.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        range(ids == [1, 2, 3], "lens_type")?;
        for t in &self.lens_types {
            if t.id == 1 {
                range(t.offset == Vector2::zeros(), "lens_type.offset")?;
            }
            range(t.depth_range[0] < t.depth_range[1], "lens_type.depth_range")?;
        }
        Ok(())
    }

    pub fn lens_type(&self, id: u8) -> Result<&LensType> {
        self.lens_types
            .iter()
            .find(|t| t.id == id)
            .ok_or(Error::UnknownLensType(id))
    }

    /// Normalized XML rendering. Numbers use the shortest representation
    /// that parses back to the same `f64`; `-0` prints as `0`.
    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        let n = |v: f64| v + 0.0;
        let vec2 = |out: &mut String, indent: &str, name: &str, v: &Vector2<f64>| {
            let _ = writeln!(out, "{indent}<{name}><x>{}</x><y>{}</y></{name}>", n(v.x), n(v.y));
        };
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<RayCalibData version=\"1.0\">\n");
        vec2(&mut out, "  ", "offset", &self.offset);
        let _ = writeln!(out, "  <diameter>{}</diameter>", n(self.diameter));
        let _ = writeln!(out, "  <rotation>{}</rotation>", n(self.rotation));
        let _ = writeln!(out, "  <lens_border>{}</lens_border>", n(self.lens_border));
        let _ = writeln!(out, "  <tcp>{}</tcp>", n(self.tcp));
        vec2(&mut out, "  ", "lens_base_x", &self.lens_base_x);
        vec2(&mut out, "  ", "lens_base_y", &self.lens_base_y);
        vec2(&mut out, "  ", "sub_grid_base", &self.sub_grid_base);
        for t in &self.lens_types {
            let _ = writeln!(out, "  <lens_type id=\"{}\">", t.id);
            vec2(&mut out, "    ", "offset", &t.offset);
            let _ = writeln!(
                out,
                "    <depth_range><min>{}</min><max>{}</max></depth_range>",
                n(t.depth_range[0]), n(t.depth_range[1])
            );
            out.push_str("  </lens_type>\n");
        }
        out.push_str("</RayCalibData>\n");
        out
    }

    fn rotation_matrix(&self) -> Matrix2<f64> {
        let (s, c) = self.rotation.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    /// Lens center relative to the image center in the y-up MLA
    /// convention, pixels.
    pub fn lens_center_mla(&self, type_id: u8, grid_index: (i64, i64)) -> Result<Vector2<f64>> {
        let t = self.lens_type(type_id)?;
        let (i, j) = grid_index;
        let lattice = self.lens_base_x * i as f64 + self.lens_base_y * j as f64 + t.offset;
        Ok(self.offset + self.rotation_matrix() * (lattice * self.diameter))
    }

    /// Lens center in pixel coordinates (rows grow downward). The image
    /// center is `(width / 2, height / 2)`.
    pub fn lens_center(
        &self,
        type_id: u8,
        grid_index: (i64, i64),
        image_size: (u32, u32),
    ) -> Result<PixelPoint> {
        let rel = self.lens_center_mla(type_id, grid_index)?;
        let (cx, cy) = image_center(image_size);
        Ok(PixelPoint::new(cx + rel.x, cy - rel.y))
    }

    /// Centers of one lens type enumerated through its two rectangular
    /// sub-grids, relative to the image center (y up). Sub-grid A is
    /// spanned by `(2·sx, 0)` and `(0, 2·sy)` where `(sx, sy)` is
    /// `sub_grid_base`; sub-grid B is A shifted by `sub_grid_base`.
    pub fn sub_grid_centers_mla(&self, type_id: u8, half_extent: i64) -> Result<Vec<Vector2<f64>>> {
        let t = self.lens_type(type_id)?;
        let sx = Vector2::new(2.0 * self.sub_grid_base.x, 0.0);
        let sy = Vector2::new(0.0, 2.0 * self.sub_grid_base.y);
        let rot = self.rotation_matrix();
        let mut out = Vec::new();
        for m in -half_extent..=half_extent {
            for n in -half_extent..=half_extent {
                let a = sx * m as f64 + sy * n as f64 + t.offset;
                for p in [a, a + self.sub_grid_base] {
                    out.push(self.offset + rot * (p * self.diameter));
                }
            }
        }
        Ok(out)
    }

    /// Lens types whose depth range contains `v` (bounds inclusive).
    pub fn lens_types_for_depth(&self, v: f64) -> Vec<u8> {
        self.lens_types
            .iter()
            .filter(|t| t.depth_range[0] <= v && v <= t.depth_range[1])
            .map(|t| t.id)
            .collect()
    }
}

pub fn image_center(image_size: (u32, u32)) -> (f64, f64) {
    (image_size.0 as f64 / 2.0, image_size.1 as f64 / 2.0)
}

pub fn lens_type_for_depth(cal: &MlaCalibration, v: f64) -> Vec<u8> {
    cal.lens_types_for_depth(v)
}
