#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use strata_core::synthetic::{raw_values, SyntheticSpec};

/// A frame with `cells.len()` regions; region `d` has `cells[d]` auxiliary
/// cells, and every record carries a continuous `area` column.
pub fn frame_csv(cells: &[usize], seed: u64) -> String {
    let mut s = String::from("REG,cell,area,y1,y2\n");
    for (d, &l) in cells.iter().enumerate() {
        let rows = raw_values(&SyntheticSpec::new(l, 2).with_counts(3, 25), seed + d as u64);
        for (c, units) in rows.iter().enumerate() {
            for (u, y) in units.iter().enumerate() {
                let area = (y[0] * 1.7 + u as f64).round();
                let _ = writeln!(s, "R{d},c{c:03},{area},{:.3},{:.3}", y[0], y[1]);
            }
        }
    }
    s
}

pub fn config_json(frame: &str, annealer: &str, extra: &str) -> String {
    format!(
        r#"{{
  "frame": {{
    "path": "{frame}",
    "target_columns": ["y1", "y2"],
    "aux_columns": [{{"name": "cell"}}],
    "domain_column": "REG",
    "precision": [0.05]
  }},
  "seeding": {{"restarts": 3}},
  "annealer": {annealer}{extra}
}}
"#
    )
}

pub const SMALL_ANNEALER: &str =
    r#"{"maxit": 4, "seq_len": 60, "t_max": 0.01, "decrement": 0.7, "l_max_pct": 0.1, "p_new": 0.1, "seed": 17}"#;

/// Writes `frame.csv` and `config.json` into `dir` and returns the config path.
pub fn setup(dir: &Path, cells: &[usize], annealer: &str, extra: &str) -> PathBuf {
    std::fs::write(dir.join("frame.csv"), frame_csv(cells, 40)).unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config_json("frame.csv", annealer, extra)).unwrap();
    cfg
}
