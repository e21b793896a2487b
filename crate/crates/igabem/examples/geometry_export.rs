//! Writes the shipped reference geometries to geometry/*.json and verifies
//! the round trip through the file format.

use igabem::nurbs::{screen, torus, NurbsSurface};
use std::path::Path;

fn roundtrip(srf: &NurbsSurface, path: &Path) {
    srf.save(path).expect("save");
    let back = NurbsSurface::load(path).expect("load");
    let dom = srf.domain();
    let mut max_dev = 0.0f64;
    for i in 0..=20 {
        for j in 0..=20 {
            let t = [
                dom[0][0] + (dom[0][1] - dom[0][0]) * i as f64 / 20.0,
                dom[1][0] + (dom[1][1] - dom[1][0]) * j as f64 / 20.0,
            ];
            let a = srf.point(t).unwrap();
            let b = back.point(t).unwrap();
            for c in 0..3 {
                max_dev = max_dev.max((a[c] - b[c]).abs());
            }
        }
    }
    println!("{}: round trip max deviation {max_dev:.3e}", path.display());
    assert!(max_dev < 1e-12);
}

fn main() {
    std::fs::create_dir_all("geometry").unwrap();
    roundtrip(&torus(3.0, 1.0), Path::new("geometry/torus.json"));
    roundtrip(&screen(), Path::new("geometry/screen.json"));
}
