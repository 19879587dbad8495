#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use treefix_core::{SpinConfiguration, Topology};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name)
}

/// Compare `actual` with the stored golden file. The file is written on the
/// first run and rewritten when `UPDATE_GOLDEN=1`.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") || !path.exists() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        eprintln!("recorded golden file {}", path.display());
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the recorded golden output", path.display()))
    }
}

/// One-sided Mann-Whitney test of "`x` tends to exceed `y`": the normal
/// approximation p-value with tie correction.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut all: Vec<(f64, usize)> = x.iter().map(|&v| (v, 0)).chain(y.iter().map(|&v| (v, 1))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for rank in &mut ranks[i..=j] {
            *rank = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let r1: f64 = all.iter().zip(&ranks).filter(|((_, g), _)| *g == 0).map(|(_, r)| r).sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let total = n1 + n2;
    let var = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var == 0.0 {
        return 0.5;
    }
    let z = (u - mean) / var.sqrt();
    upper_normal_tail(z)
}

/// `P(Z > z)` for a standard normal.
pub fn upper_normal_tail(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().sf(z)
}

/// K = 3 oracle: a copy of `T_2` is a bi-infinite path, so inside the ball
/// with wildcard leaves it is an all-`+1` path between two radius-`R`
/// vertices (possibly the same one).
pub fn k3_path_oracle(t: &Topology, c: &SpinConfiguration) -> BTreeSet<usize> {
    let ball = t.ball();
    let outer: Vec<usize> = (0..ball.len()).filter(|&v| ball.depth(v) == ball.radius()).collect();
    let mut union = BTreeSet::new();
    for (i, &a) in outer.iter().enumerate() {
        for &b in &outer[i..] {
            let path = ball.path(a, b);
            if path.iter().all(|&v| c.is_plus(v)) {
                union.extend(path);
            }
        }
    }
    union
}

