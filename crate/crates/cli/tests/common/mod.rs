//! Shared helpers for driving the binary in tests.
//!
//! Each test target compiles its own copy and uses a subset of these.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn georel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_georel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = georel(dir, args);
    assert!(
        out.status.success(),
        "`georel {}` failed:\nstdout: {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn run_err(dir: &Path, args: &[&str]) -> String {
    let out = georel(dir, args);
    assert!(
        !out.status.success(),
        "`georel {}` unexpectedly succeeded",
        args.join(" ")
    );
    String::from_utf8(out.stderr).expect("utf-8 stderr")
}

/// Tiny deterministic generator so fixtures need no extra dependencies.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Roughly normal via the sum of uniforms; plenty for fixtures.
    pub fn next_gaussian(&mut self) -> f64 {
        let s: f64 = (0..12).map(|_| self.next_f64()).sum();
        s - 6.0
    }
}

/// A clustered feature file: three separated blobs, 3 * `per_cluster` rows.
pub fn write_clustered_features(path: &Path, per_cluster: usize, seed: u64) {
    let mut rng = Lcg(seed);
    let mut body = String::from("distance_km,orientation_deg\n");
    for center in [[5.0, 60.0], [15.0, 180.0], [25.0, 300.0]] {
        for _ in 0..per_cluster {
            let d = (center[0] + rng.next_gaussian()).max(0.0);
            let o = (center[1] + rng.next_gaussian()).rem_euclid(360.0);
            body.push_str(&format!("{d},{o}\n"));
        }
    }
    std::fs::write(path, body).unwrap();
}
