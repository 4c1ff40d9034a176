use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use trinet::bound::{exact_linear_bound, fit_extrapolate, slp_bound_with, BoundResult, Direction, SlpOptions, Status};
use trinet::certify::{self, Certificate};
use trinet::constraint::{build_constraints, Factorization, Mode, PolygonSystem};
use trinet::local::{scan_local, search_finner_saturating, LocalError, Sampling, SearchOptions};
use trinet::opi::{correlators_to_probs, finner_margin_opi, probs_to_correlators, OpiCorrelators, OpiDistribution};
use trinet::scalar::format_sig;
use trinet::{build_matrix, Rational, Scalar};

use crate::numbers::{exact, parse_tuple};
use crate::output::{append_jsonl, read_jsonl, to_value, write_json_file, Sink, DIGITS};
use crate::{CliError, FormatArg, SlpArgs};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn enumerate(n: usize, rule: Factorization, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let sink = Sink::new("enumerate", json!({"n": n, "rule": rule}), out, manifest);
    let sys = PolygonSystem::build(n, rule)?;
    let words: Vec<String> = sys.words().map(ToString::to_string).collect();
    let outcomes: Vec<String> = sys.matrix.outcomes.iter().map(|o| o.display()).collect();
    let doc = json!({
        "n": n,
        "rule": rule,
        "words": words,
        "outcomes": outcomes,
        "linear": sys.linear_display(),
        "quadratic": sys.quadratic_display(),
        "counts": {
            "correlators": words.len(),
            "linear": sys.linear.len(),
            "quadratic": sys.quadratic.len(),
            "outcomes": outcomes.len(),
        },
    });
    sink.json(&doc)
}

fn slp_options(slp: &SlpArgs) -> Result<SlpOptions, CliError> {
    let time_limit = match slp.time_limit {
        Some(t) if !(t.is_finite() && t >= 0.0) => return Err(CliError::Usage(format!("invalid time limit {t}"))),
        t => t.map(Duration::from_secs_f64),
    };
    if slp.tol.is_nan() || slp.tol <= 0.0 {
        return Err(CliError::Usage(format!("tolerance must be positive, got {}", slp.tol)));
    }
    Ok(SlpOptions { tol: slp.tol, max_iter: slp.max_iter, time_limit, ..SlpOptions::default() })
}

/// Result document of one bound run, with the exact optimum for linear
/// systems.
fn bound_document(r: &BoundResult) -> Result<Value, CliError> {
    let mut v = to_value(r)?;
    if r.constraint_counts.quadratic == 0 {
        let cs = build_constraints(r.polygon, r.mode)?;
        let e = exact_linear_bound(&cs, r.direction)?;
        v["exact"] = Value::String(exact(&e));
    }
    Ok(v)
}

fn run_bound(n: usize, slp: &SlpArgs, opts: &SlpOptions, checkpoint: Option<&Path>) -> Result<(BoundResult, Value), CliError> {
    let cs = build_constraints(n, slp.mode.into())?;
    let write_error = RefCell::new(None);
    let r = slp_bound_with(&cs, slp.direction.into(), opts, |state| {
        if let Some(path) = checkpoint {
            let res = serde_json::to_value(state).map_err(CliError::from).and_then(|v| write_json_file(path, &v));
            if let Err(e) = res {
                write_error.borrow_mut().get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_error.into_inner() {
        return Err(e);
    }
    let doc = bound_document(&r)?;
    if let Some(ledger) = &slp.ledger {
        append_jsonl(ledger, &doc)?;
    }
    Ok((r, doc))
}

fn not_converged(r: &BoundResult) -> CliError {
    CliError::NotConverged(format!(
        "{} {} bound of the {}-gon did not converge after {} iterations",
        r.mode, r.direction, r.polygon, r.iterations
    ))
}

pub fn bound(
    n: usize,
    slp: &SlpArgs,
    ebar: Option<f64>,
    checkpoint: Option<PathBuf>,
    resume: Option<PathBuf>,
    manifest: Option<PathBuf>,
) -> Result<(), CliError> {
    let params = json!({
        "n": n, "mode": Mode::from(slp.mode), "direction": Direction::from(slp.direction),
        "tol": slp.tol, "max_iter": slp.max_iter, "ebar": ebar,
        "resume": resume.as_ref().map(|p| p.display().to_string()),
    });
    let sink = Sink::new("bound", params, slp.out.clone(), manifest);
    let mut opts = slp_options(slp)?;
    opts.ebar = ebar;
    opts.resume = resume.as_deref().map(read_json).transpose()?;
    let (r, doc) = run_bound(n, slp, &opts, checkpoint.as_deref())?;
    sink.json(&doc)?;
    match r.status {
        Status::Converged => Ok(()),
        Status::NotConverged => Err(not_converged(&r)),
    }
}

pub fn curve(from: usize, to: usize, slp: &SlpArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    if from > to {
        return Err(CliError::Usage(format!("empty range {from}..={to}")));
    }
    let params = json!({
        "from": from, "to": to, "mode": Mode::from(slp.mode),
        "direction": Direction::from(slp.direction), "tol": slp.tol, "max_iter": slp.max_iter,
    });
    let sink = Sink::new("curve", params, slp.out.clone(), manifest);
    let base = slp_options(slp)?;
    let mut docs = Vec::new();
    let mut failed = None;
    let mut previous: Option<f64> = None;
    for n in from..=to {
        let opts = SlpOptions { ebar: previous, ..base.clone() };
        let (r, doc) = run_bound(n, slp, &opts, None)?;
        if r.status == Status::NotConverged && failed.is_none() {
            failed = Some(not_converged(&r));
        }
        previous = Some(r.bound);
        docs.push(doc);
    }
    sink.json(&Value::Array(docs))?;
    failed.map_or(Ok(()), Err)
}

pub fn fit(
    ledger: Option<PathBuf>,
    values: Option<Vec<f64>>,
    start: usize,
    mode: Mode,
    direction: Direction,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
) -> Result<(), CliError> {
    let points: Vec<(f64, f64)> = match (&ledger, &values) {
        (_, Some(v)) => v.iter().enumerate().map(|(i, &b)| ((start + i) as f64, b)).collect(),
        (Some(path), None) => {
            let mut latest = BTreeMap::new();
            for entry in read_jsonl(path)? {
                let matches = entry.get("mode") == Some(&json!(mode)) && entry.get("direction") == Some(&json!(direction));
                if let (true, Some(n), Some(b)) =
                    (matches, entry.get("polygon").and_then(Value::as_u64), entry.get("bound").and_then(Value::as_f64))
                {
                    latest.insert(n, b);
                }
            }
            latest.into_iter().map(|(n, b)| (n as f64, b)).collect()
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let params = json!({
        "ledger": ledger.as_ref().map(|p| p.display().to_string()),
        "values": values, "start": start, "mode": mode, "direction": direction,
    });
    let sink = Sink::new("fit", params, out, manifest);
    let f = fit_extrapolate(&points)?;
    let mut doc = to_value(&f)?;
    doc["points"] = to_value(&points)?;
    sink.json(&doc)
}

fn rationals(v: &[Rational]) -> Vec<String> {
    v.iter().map(exact).collect()
}

fn certificate_json(c: &Certificate) -> Value {
    json!({
        "polygon": c.polygon,
        "method": "certificate",
        "bound": c.bound,
        "active": c.active,
        "q": rationals(&c.q),
        "targets": c.targets,
        "coefficients": rationals(&c.coefficients),
        "cancelled": c.cancelled,
        "root": c.root.to_string(),
        "root_value": c.root.to_f64(),
    })
}

pub fn certify(n: usize, format: FormatArg, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let sink = Sink::new("certify", json!({"n": n}), out, manifest);
    let cs = build_constraints(n, Mode::Single)?;
    if cs.quadratic.is_empty() {
        let e = exact_linear_bound(&cs, Direction::Max)?;
        let value = e.to_f64();
        return match format {
            FormatArg::Json => sink.json(&to_value(&json!({
                "polygon": n, "method": "exact-lp", "root": exact(&e), "root_value": value,
            }))?),
            FormatArg::Text => {
                sink.text(&format!("polygon {n}\nexact linear program\nroot {} = {}\n", exact(&e), format_sig(value, DIGITS)))
            }
        };
    }
    let c = certify::certify(n)?;
    match format {
        FormatArg::Json => sink.json(&to_value(&certificate_json(&c))?),
        FormatArg::Text => sink.text(&c.to_text()),
    }
}

pub fn matrix(n: usize, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let sink = Sink::new("matrix", json!({"n": n}), out, manifest);
    let m = build_matrix(n)?;
    let mut rows = vec![std::iter::once("outcome".to_string()).chain(m.row_labels()).collect::<Vec<_>>()];
    for (o, entries) in m.outcomes.iter().zip(m.transpose()) {
        rows.push(std::iter::once(o.display()).chain(entries.iter().map(i64::to_string)).collect());
    }
    sink.csv(&rows)
}

pub fn scan(k: usize, samples: Option<u64>, seed: u64, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let sampling = match samples {
        Some(count) => Sampling::Random { seed, count },
        None => Sampling::Exhaustive,
    };
    let mut sink = Sink::new("scan", json!({"k": k, "samples": samples, "seed": seed}), out, manifest);
    if samples.is_some() {
        sink.seed = Some(seed);
    }
    sink.csv_stream(|w| {
        w.write_record(["k", "strategy_hash", "e2_avg", "e3_avg", "opi_dev", "finner_margin"])?;
        let mut failure = None;
        scan_local(k, sampling, |r| {
            if failure.is_some() {
                return;
            }
            let f = |x: f64| format_sig(x, DIGITS);
            let record = [r.k.to_string(), r.strategy_hash, f(r.e2_avg), f(r.e3_avg), f(r.opi_dev), f(r.finner_margin)];
            if let Err(e) = w.write_record(&record) {
                failure = Some(e);
            }
        })?;
        failure.map_or(Ok(()), |e| Err(e.into()))
    })
}

pub fn verify_theorem(
    k: usize,
    budget: Option<u64>,
    checkpoint: Option<PathBuf>,
    resume: Option<PathBuf>,
    manifest: Option<PathBuf>,
) -> Result<(), CliError> {
    let sink = Sink::new("verify-theorem", json!({"k": k, "budget": budget}), None, manifest);
    let opts = SearchOptions { budget, resume: resume.as_deref().map(read_json).transpose()? };
    let found = match search_finner_saturating(k, true, &opts) {
        Ok(found) => found,
        Err(LocalError::BudgetExceeded(cp)) => {
            if let Some(path) = &checkpoint {
                write_json_file(path, &serde_json::to_value(&cp)?)?;
            }
            return Err(LocalError::BudgetExceeded(cp).into());
        }
        Err(e) => return Err(e.into()),
    };
    if found.is_empty() {
        return sink.text("EMPTY\n");
    }
    let mut text = format!("FOUND {}\n", found.len());
    for s in &found {
        text.push_str(&format!("{s}\n"));
    }
    sink.text(&text)?;
    Err(CliError::Found(found.len()))
}

pub fn finner(p: Option<String>, e: Option<String>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let sink = Sink::new("finner", json!({"p": p, "e": e}), None, manifest);
    let (probs, corr) = match (&p, &e) {
        (Some(p), _) => {
            let v = parse_tuple(p, 3)?;
            let d = OpiDistribution::new(v[0].clone(), v[1].clone(), v[2].clone());
            let c = probs_to_correlators(&d)?;
            (d, c)
        }
        (None, Some(e)) => {
            let v = parse_tuple(e, 2)?;
            let c = OpiCorrelators::new(v[0].clone(), v[1].clone());
            (correlators_to_probs(&c), c)
        }
        (None, None) => unreachable!("clap requires a point"),
    };
    let margin = finner_margin_opi(&probs);
    let zero = Rational::from_int(0);
    let doc = json!({
        "e2": corr.e2.to_f64(),
        "e3o": corr.e3o.to_f64(),
        "p111": probs.p111.to_f64(),
        "p112": probs.p112.to_f64(),
        "p123": probs.p123.to_f64(),
        "finner_margin": margin.to_f64(),
        "valid": probs.is_nonnegative(),
        "saturated": margin == zero,
        "violated": margin < zero,
        "exact": {
            "e2": exact(&corr.e2),
            "e3o": exact(&corr.e3o),
            "p111": exact(&probs.p111),
            "p112": exact(&probs.p112),
            "p123": exact(&probs.p123),
            "finner_margin": exact(&margin),
        },
    });
    sink.json(&to_value(&doc)?)
}
