//! Structured text output. Everything here is a pure function of its input
//! so repeated runs print identical bytes.

use ssc_core::lga::LgaHistogram;
use ssc_core::metrics::{Averaging, Counts, MetricsReport};
use std::fmt::Write;

/// Twelve significant digits in scientific notation.
pub fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn ratio(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), sig12)
}

pub fn histogram_text(h: &LgaHistogram, files: usize) -> String {
    let mut s = String::new();
    writeln!(s, "grids: {files}").unwrap();
    writeln!(s, "defined voxels: {}", h.total()).unwrap();
    writeln!(s, "{:>3}  {:>12}  {:>18}", "lga", "count", "fraction").unwrap();
    for (m, (c, f)) in h.counts.iter().zip(h.fractions).enumerate() {
        writeln!(s, "{m:>3}  {c:>12}  {:>18}", sig12(f)).unwrap();
    }
    s
}

pub fn histogram_csv(h: &LgaHistogram) -> String {
    let mut s = String::from("lga,count,fraction\n");
    for (m, (c, f)) in h.counts.iter().zip(h.fractions).enumerate() {
        writeln!(s, "{m},{c},{}", sig12(f)).unwrap();
    }
    s
}

pub fn losses(
    kind: &str,
    voxels: usize,
    classes: usize,
    participating: usize,
    values: &[(&str, f64)],
) -> String {
    let mut s = String::new();
    writeln!(s, "input: {kind}").unwrap();
    writeln!(s, "voxels: {voxels}").unwrap();
    writeln!(s, "participating: {participating}").unwrap();
    writeln!(s, "classes: {classes}").unwrap();
    for (name, v) in values {
        writeln!(s, "{name}: {}", sig12(*v)).unwrap();
    }
    s
}

fn counts(c: &Counts) -> String {
    format!("tp {} fp {} fn {}", c.tp, c.fp, c.fn_)
}

pub fn metrics(r: &MetricsReport, scenes: usize, averaging: Averaging) -> String {
    let mut s = String::new();
    let avg = match averaging {
        Averaging::Micro => "micro",
        Averaging::Macro => "macro",
    };
    writeln!(s, "scenes: {scenes}").unwrap();
    writeln!(s, "averaging: {avg}").unwrap();
    writeln!(s, "sc.precision: {}", ratio(r.sc.precision)).unwrap();
    writeln!(s, "sc.recall: {}", ratio(r.sc.recall)).unwrap();
    writeln!(s, "sc.iou: {}", ratio(r.sc.iou)).unwrap();
    writeln!(s, "sc.counts: {}", counts(&r.sc.counts)).unwrap();
    for c in &r.per_class {
        writeln!(
            s,
            "ssc.{}: iou {} | {}",
            c.label.name(),
            ratio(c.iou),
            counts(&c.counts)
        )
        .unwrap();
    }
    writeln!(s, "ssc.miou: {}", ratio(r.mean_iou)).unwrap();
    let excluded: Vec<&str> = r.excluded.iter().map(|l| l.name()).collect();
    writeln!(
        s,
        "ssc.excluded: {}",
        if excluded.is_empty() {
            "none".to_string()
        } else {
            excluded.join(",")
        }
    )
    .unwrap();
    s
}
