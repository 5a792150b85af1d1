//! Reads a micro lens array calibration file and locates lens centers.
//!
//! `cargo run --example mla_calibration -- path/to/mla.xml`; without an
//! argument the bundled fixture is used.

use std::path::PathBuf;

use plenreg::mla::parse_mla_xml;

fn main() -> plenreg::Result<()> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mla_messy.xml"));
    let bytes = std::fs::read(&path).map_err(|e| plenreg::Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = parse_mla_xml(&bytes)?;
    for w in &parsed.warnings {
        println!("warning: {w}");
    }
    let cal = &parsed.calibration;
    println!("diameter {} px, rotation {} rad, {} lens types", cal.diameter, cal.rotation, cal.lens_types.len());
    for t in &cal.lens_types {
        println!("  type {}: virtual depth {}..{}", t.id, t.depth_range[0], t.depth_range[1]);
    }
    for v in [2.0, 3.2, 4.5, 7.0] {
        println!("v = {v}: in focus for types {:?}", cal.lens_types_for_depth(v));
    }
    for (i, j) in [(0, 0), (1, 0), (0, 1), (-2, 3)] {
        let c = cal.lens_center(1, (i, j), (6560, 4948))?;
        println!("type 1 lens ({i}, {j}) at pixel ({:.2}, {:.2})", c.x, c.y);
    }
    let sub = cal.sub_grid_centers_mla(2, 1)?;
    println!("type 2 sub-grid, {} centers around the image center", sub.len());
    print!("\nnormalized:\n{}", cal.to_xml());
    Ok(())
}
