#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use pivbench::flowfield::{make_lamb_oseen, VelocityField};
use pivbench::ingest::FlowTag;
use pivbench::io;
use sha2::{Digest, Sha256};

pub const BIN: &str = env!("CARGO_BIN_EXE_pivbench");

/// Drifting vortex snapshots standing in for the turbulence data drop.
pub fn fixture_snapshot(tag: FlowTag, k: usize, w: usize, h: usize) -> VelocityField {
    let t = FlowTag::TURBULENT.iter().position(|x| *x == tag).unwrap_or(0) as f64;
    let k = k as f64;
    make_lamb_oseen(w, h, 150.0 + 40.0 * t + 5.0 * k, 12.0, (w as f64 / 2.0 + 1.5 * k, h as f64 / 2.0 - 0.5 * t)).unwrap()
}

pub fn write_fixture(root: &Path, snapshots: usize, w: usize, h: usize) {
    for tag in FlowTag::TURBULENT {
        let dir = root.join(tag.as_str());
        fs::create_dir_all(&dir).unwrap();
        for k in 0..snapshots {
            io::write_flow(&dir.join(tag.snapshot_name(k)), &fixture_snapshot(tag, k, w, h)).unwrap();
        }
    }
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(&p, out);
        } else {
            out.push(p);
        }
    }
}

/// (relative path, sha256) of every file below `root`, sorted by path.
pub fn tree_checksums(root: &Path) -> Vec<(String, String)> {
    let mut files = Vec::new();
    walk(root, &mut files);
    let mut out: Vec<(String, String)> = files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let digest = Sha256::digest(fs::read(p).unwrap());
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            (rel, hex)
        })
        .collect();
    out.sort();
    out
}
