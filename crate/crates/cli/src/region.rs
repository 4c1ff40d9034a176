//! Line segments of the correlator plane, ready to plot.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::{json, Value};
use trinet::bound::{slp_bound, Direction, SlpOptions};
use trinet::constraint::{build_constraints, Mode};
use trinet::opi::special_points;
use trinet::scalar::{format_sig, round_sig};
use trinet::{OpiCorrelators, Scalar};

use crate::numbers::parse_tuple;
use crate::output::{append_jsonl, read_jsonl, to_value, Sink, DIGITS};
use crate::{CliError, RegionDirection};

type Point = (f64, f64);

fn xy(c: &OpiCorrelators<f64>) -> Point {
    (c.e2, c.e3o)
}

/// Ends of the segment `e2 = b` inside the triangle with corners `tri`.
pub fn clip_vertical(tri: [Point; 3], b: f64) -> Option<(Point, Point)> {
    let mut hits: Vec<f64> = Vec::new();
    for i in 0..3 {
        let (p, q) = (tri[i], tri[(i + 1) % 3]);
        let (lo, hi) = if p.0 <= q.0 { (p, q) } else { (q, p) };
        if b < lo.0 - 1e-12 || b > hi.0 + 1e-12 {
            continue;
        }
        if (hi.0 - lo.0).abs() < 1e-15 {
            hits.extend([lo.1, hi.1]);
        } else {
            let t = ((b - lo.0) / (hi.0 - lo.0)).clamp(0.0, 1.0);
            hits.push(lo.1 + t * (hi.1 - lo.1));
        }
    }
    let lo = hits.iter().copied().reduce(f64::min)?;
    let hi = hits.iter().copied().reduce(f64::max)?;
    Some(((b, lo), (b, hi)))
}

/// Cumulative bounds per polygon size: ledger entries first, the rest
/// computed (and appended to the ledger when there is one).
fn cumulative_bounds(max_n: usize, direction: Direction, ledger: Option<&PathBuf>) -> Result<BTreeMap<usize, f64>, CliError> {
    let mut known = BTreeMap::new();
    if let Some(path) = ledger {
        for entry in read_jsonl(path)? {
            let matches =
                entry.get("mode") == Some(&json!(Mode::Cumulative)) && entry.get("direction") == Some(&json!(direction));
            if let (true, Some(n), Some(b)) =
                (matches, entry.get("polygon").and_then(Value::as_u64), entry.get("bound").and_then(Value::as_f64))
            {
                known.insert(n as usize, round_sig(b, DIGITS));
            }
        }
    }
    let mut previous = None;
    for n in 3..=max_n {
        if let Some(&b) = known.get(&n) {
            previous = Some(b);
            continue;
        }
        let cs = build_constraints(n, Mode::Cumulative)?;
        let r = slp_bound(&cs, direction, &SlpOptions { ebar: previous, ..SlpOptions::default() })?;
        if let Some(path) = ledger {
            append_jsonl(path, &to_value(&r)?)?;
        }
        previous = Some(r.bound);
        // same precision as a ledger entry, so reruns draw identical lines
        known.insert(n, round_sig(r.bound, DIGITS));
    }
    known.retain(|&n, _| (3..=max_n).contains(&n));
    Ok(known)
}

pub fn run(
    max_n: usize,
    direction: RegionDirection,
    ledger: Option<PathBuf>,
    ejm: Option<String>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
) -> Result<(), CliError> {
    let directions: &[Direction] = match direction {
        RegionDirection::Max => &[Direction::Max],
        RegionDirection::Min => &[Direction::Min],
        RegionDirection::Both => &[Direction::Max, Direction::Min],
    };
    let ejm_point = ejm.as_deref().map(|s| parse_tuple(s, 2)).transpose()?;
    let params = json!({
        "max_n": max_n, "directions": directions, "ejm": ejm,
        "ledger": ledger.as_ref().map(|p| p.display().to_string()),
    });
    let sink = Sink::new("region", params, out, manifest);

    let sp = special_points::<f64>();
    let (a, b, c) = (xy(&sp.vertex_all_equal), xy(&sp.vertex_all_distinct), xy(&sp.vertex_two_equal));
    let mut segments: Vec<(&str, String, Point, Point)> = vec![
        ("positivity", "p112=0".into(), a, b),
        ("positivity", "p111=0".into(), b, c),
        ("positivity", "p123=0".into(), c, a),
        ("finner", "p111=1/8".into(), xy(&sp.finner_segment[0]), xy(&sp.finner_segment[1])),
    ];
    for (name, p) in sp.named() {
        segments.push(("point", name.into(), xy(&p), xy(&p)));
    }
    if let Some(v) = ejm_point {
        let p = (v[0].to_f64(), v[1].to_f64());
        segments.push(("point", "ejm".into(), p, p));
    }
    for &d in directions {
        let kind = match d {
            Direction::Max => "bound_max",
            Direction::Min => "bound_min",
        };
        for (n, bound) in cumulative_bounds(max_n, d, ledger.as_ref())? {
            if let Some((lo, hi)) = clip_vertical([a, b, c], bound) {
                segments.push((kind, format!("n={n}"), lo, hi));
            }
        }
    }

    let f = |x: f64| format_sig(x, DIGITS);
    let mut rows = vec![["kind", "label", "e2_start", "e3_start", "e2_end", "e3_end"].map(String::from).to_vec()];
    rows.extend(segments.into_iter().map(|(kind, label, p, q)| vec![kind.to_string(), label, f(p.0), f(p.1), f(q.0), f(q.1)]));
    sink.csv(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: [Point; 3] = [(1.0, 1.0), (-1.0 / 3.0, 1.0 / 3.0), (1.0 / 9.0, -1.0 / 3.0)];

    #[test]
    fn clipping() {
        // at e2 = 1/3 the line runs from the p123=0 edge to the p112=0 edge
        let ((_, lo), (_, hi)) = clip_vertical(TRI, 1.0 / 3.0).unwrap();
        assert!((lo - 0.0).abs() < 1e-12);
        assert!((hi - 2.0 / 3.0).abs() < 1e-12);
        let ((_, lo), (_, hi)) = clip_vertical(TRI, -1.0 / 3.0).unwrap();
        assert!((lo - 1.0 / 3.0).abs() < 1e-12 && (hi - 1.0 / 3.0).abs() < 1e-12);
        assert!(clip_vertical(TRI, 1.5).is_none());
    }
}
