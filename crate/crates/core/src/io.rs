//! CSV and JSON artifacts.
//!
//! Every CSV starts with one `#` line carrying the toolkit version, the
//! artifact kind, the model parameters, the seed and whatever else is needed
//! to regenerate the file, e.g.
//!
//! ```text
//! # bhawkes 0.1.0 artifact=event-log lambda0=2 a=1 b=2 c=1 d=1 seed=42 horizon=50
//! time,kind,lambda,gamma,n
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back recovers every value exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::cluster::{ClusterSample, ZPath};
use crate::error::{Error, Result};
use crate::exact::{Event, EventKind, EventLog, GridPath, SimState};
use crate::moments::MomentCurves;
use crate::params::{validate_params, ModelParams};
use crate::price::PricePath;
use crate::scaling::ScalingReport;

pub const TOOLKIT: &str = "bhawkes";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The key/value content of a metadata line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    pub artifact: String,
    pub params: Option<ModelParams>,
    pub seed: Option<u64>,
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(artifact: &str, params: &ModelParams, seed: Option<u64>) -> Self {
        Metadata {
            artifact: artifact.to_string(),
            params: Some(*params),
            seed,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn line(&self) -> String {
        let mut s = format!("# {TOOLKIT} {VERSION} artifact={}", self.artifact);
        if let Some(p) = &self.params {
            s.push_str(&format!(
                " lambda0={} a={} b={} c={} d={}",
                p.lambda0(),
                p.a(),
                p.b(),
                p.c(),
                p.d()
            ));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!(" seed={seed}"));
        }
        for (k, v) in &self.extra {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }

    /// Parses a line produced by [`Metadata::line`].
    pub fn parse(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| bad("metadata line must start with '#'"))?;
        let mut tokens = body.split_whitespace();
        if tokens.next() != Some(TOOLKIT) {
            return Err(bad("metadata line does not name the toolkit"));
        }
        tokens.next();
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        let mut order = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(&format!("malformed metadata token `{tok}`")))?;
            order.push(k.to_string());
            map.insert(k.to_string(), v.to_string());
        }
        let num = |k: &str| -> Result<Option<f64>> {
            map.get(k)
                .map(|v| v.parse::<f64>().map_err(|_| bad(&format!("metadata `{k}` is not a number"))))
                .transpose()
        };
        let params = match (num("lambda0")?, num("a")?, num("b")?, num("c")?, num("d")?) {
            (Some(l), Some(a), Some(b), Some(c), Some(d)) => Some(validate_params(l, a, b, c, d)?),
            _ => None,
        };
        let seed = map
            .get("seed")
            .map(|v| v.parse::<u64>().map_err(|_| bad("metadata `seed` is not an integer")))
            .transpose()?;
        let reserved = ["artifact", "lambda0", "a", "b", "c", "d", "seed"];
        let extra = order
            .into_iter()
            .filter(|k| !reserved.contains(&k.as_str()))
            .map(|k| {
                let v = map[&k].clone();
                (k, v)
            })
            .collect();
        Ok(Metadata {
            artifact: map.get("artifact").cloned().unwrap_or_default(),
            params,
            seed,
            extra,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn bad(msg: &str) -> Error {
    Error::InvalidArgument(msg.to_string())
}

fn io_err(e: std::io::Error) -> Error {
    Error::from(e)
}

fn header<W: Write + ?Sized>(w: &mut W, meta: &Metadata, columns: &str) -> Result<()> {
    writeln!(w, "{}", meta.line()).map_err(io_err)?;
    writeln!(w, "{columns}").map_err(io_err)
}

pub const EVENT_LOG_HEADER: &str = "time,kind,lambda,gamma,n";

pub fn event_log_metadata(log: &EventLog) -> Metadata {
    let i = &log.init;
    Metadata::new("event-log", &log.params, Some(log.seed))
        .with("horizon", log.horizon)
        .with("init_t", i.t)
        .with("init_lambda", i.lambda)
        .with("init_gamma", i.gamma)
        .with("init_n", i.n)
        .with("init_l", i.l)
        .with("init_k", i.k_cancelled)
}

/// Writes an event log; `meta` defaults to [`event_log_metadata`].
pub fn write_event_log<W: Write + ?Sized>(w: &mut W, log: &EventLog, meta: Option<Metadata>) -> Result<()> {
    header(w, &meta.unwrap_or_else(|| event_log_metadata(log)), EVENT_LOG_HEADER)?;
    for e in &log.events {
        let s = &e.state;
        writeln!(w, "{},{},{},{},{}", s.t, e.kind.as_str(), s.lambda, s.gamma, s.n).map_err(io_err)?;
    }
    Ok(())
}

/// Reads back a file written by [`write_event_log`].
pub fn read_event_log<R: BufRead>(r: R) -> Result<EventLog> {
    let mut lines = r.lines();
    let meta_line = lines.next().ok_or_else(|| bad("empty event log"))?.map_err(io_err)?;
    let meta = Metadata::parse(&meta_line)?;
    let params = meta.params.ok_or_else(|| bad("event log metadata lacks parameters"))?;
    let field = |k: &str| -> Result<&str> { meta.get(k).ok_or_else(|| bad(&format!("event log metadata lacks `{k}`"))) };
    let f = |k: &str| -> Result<f64> { field(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
    let u = |k: &str| -> Result<u64> { field(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
    let init = SimState {
        t: f("init_t")?,
        lambda: f("init_lambda")?,
        gamma: u("init_gamma")?,
        n: u("init_n")?,
        l: u("init_l")?,
        k_cancelled: u("init_k")?,
    };
    let horizon = f("horizon")?;
    match lines.next() {
        Some(Ok(h)) if h.trim() == EVENT_LOG_HEADER => {}
        _ => return Err(bad("missing event log column header")),
    }
    let mut events = Vec::new();
    let mut prev = init;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 3;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(&format!("line {row}: expected 5 columns")));
        }
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("line {row}: bad number `{s}`")));
        let parse_u = |s: &str| s.parse::<u64>().map_err(|_| bad(&format!("line {row}: bad count `{s}`")));
        let kind: EventKind = cols[1].parse()?;
        let mut state = SimState {
            t: parse_f(cols[0])?,
            lambda: parse_f(cols[2])?,
            gamma: parse_u(cols[3])?,
            n: parse_u(cols[4])?,
            l: prev.l,
            k_cancelled: prev.k_cancelled,
        };
        match kind {
            EventKind::LimitArrival => state.l += 1,
            EventKind::Cancellation => state.k_cancelled += 1,
            EventKind::Execution => {}
        }
        if !state.is_balanced() {
            return Err(bad(&format!("line {row}: book balance violated")));
        }
        events.push(Event { kind, state });
        prev = state;
    }
    Ok(EventLog {
        params,
        seed: meta.seed.unwrap_or(0),
        horizon,
        init,
        events,
    })
}

pub fn write_grid_path<W: Write + ?Sized>(w: &mut W, meta: &Metadata, path: &GridPath) -> Result<()> {
    header(w, meta, "t,lambda,gamma,n")?;
    for i in 0..path.t.len() {
        writeln!(w, "{},{},{},{}", path.t[i], path.lambda[i], path.gamma[i], path.n[i]).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_order_times<W: Write + ?Sized>(w: &mut W, sample: &ClusterSample) -> Result<()> {
    let meta = Metadata::new("order-times", &sample.params, Some(sample.seed))
        .with("horizon", sample.horizon)
        .with("lookback", sample.lookback);
    header(w, &meta, "time")?;
    for t in &sample.order_times {
        writeln!(w, "{t}").map_err(io_err)?;
    }
    Ok(())
}

/// `Z` as a step path: the root at time 0, then one row per birth.
pub fn write_z_path<W: Write + ?Sized>(w: &mut W, meta: &Metadata, z: &ZPath) -> Result<()> {
    header(w, meta, "time,z")?;
    writeln!(w, "0,1").map_err(io_err)?;
    for (i, t) in z.births.iter().enumerate() {
        writeln!(w, "{t},{}", i + 2).map_err(io_err)?;
    }
    Ok(())
}

pub const MOMENTS_HEADER: &str = "t,ell,g,m,pbar,qbar,rbar,ubar,vbar,wbar,x,y";

pub fn write_moment_curves<W: Write + ?Sized>(w: &mut W, curves: &MomentCurves) -> Result<()> {
    let meta = Metadata::new("moments", &curves.params, None).with("points", curves.len());
    header(w, &meta, MOMENTS_HEADER)?;
    let c = curves;
    for i in 0..c.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.grid[i], c.ell[i], c.g[i], c.m[i], c.pbar[i], c.qbar[i], c.rbar[i], c.ubar[i], c.vbar[i], c.wbar[i], c.x[i], c.y[i]
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Parses a CSV with a metadata line and a column header into named numeric
/// columns.
pub fn read_numeric_csv<R: BufRead>(r: R) -> Result<(Metadata, Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = r.lines();
    let meta = Metadata::parse(&lines.next().ok_or_else(|| bad("empty file"))?.map_err(io_err)?)?;
    let names: Vec<String> = lines
        .next()
        .ok_or_else(|| bad("missing column header"))?
        .map_err(io_err)?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); names.len()];
    for line in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        for (j, v) in line.split(',').enumerate() {
            let x = v.parse::<f64>().map_err(|_| bad(&format!("bad number `{v}`")))?;
            cols.get_mut(j).ok_or_else(|| bad("ragged row"))?.push(x);
        }
    }
    Ok((meta, names, cols))
}

pub const SCALING_HEADER: &str = "m,t,n_paths,emp_mean,emp_var,predicted_var,ks";

pub fn write_scaling_csv<W: Write + ?Sized>(w: &mut W, report: &ScalingReport) -> Result<()> {
    let meta = Metadata::new("scaling", &report.params, Some(report.seed))
        .with("n_paths", report.n_paths)
        .with("start", start_label(report));
    header(w, &meta, SCALING_HEADER)?;
    for s in &report.scales {
        for p in &s.points {
            writeln!(w, "{},{},{},{},{},{},{}", s.m, p.t, p.n_paths, p.emp_mean, p.emp_var, p.predicted_var, p.ks)
                .map_err(io_err)?;
        }
    }
    Ok(())
}

fn start_label(report: &ScalingReport) -> String {
    match report.start {
        crate::scaling::StartMode::EmptyBook => "empty".into(),
        crate::scaling::StartMode::Stationary { burn_in } => format!("burn-in:{burn_in}"),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: JsonMeta<'a>,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct JsonMeta<'a> {
    toolkit: &'a str,
    version: &'a str,
    artifact: &'a str,
}

/// Pretty JSON with a leading `meta` object; key order follows field order.
pub fn write_json<W: Write + ?Sized, T: Serialize>(w: &mut W, artifact: &str, value: &T) -> Result<()> {
    let env = Envelope {
        meta: JsonMeta {
            toolkit: TOOLKIT,
            version: VERSION,
            artifact,
        },
        body: value,
    };
    serde_json::to_writer_pretty(&mut *w, &env).map_err(|e| Error::Io(format!("json: {e}")))?;
    writeln!(w).map_err(io_err)
}

pub fn write_price_path<W: Write + ?Sized>(w: &mut W, meta: &Metadata, path: &PricePath) -> Result<()> {
    header(w, meta, "t,price")?;
    for (t, v) in path.grid.iter().zip(&path.values) {
        writeln!(w, "{t},{v}").map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{simulate_path, simulate_stationary_path};

    #[test]
    fn metadata_round_trip() {
        let p = ModelParams::rational_example();
        let m = Metadata::new("x", &p, Some(9)).with("horizon", 2.5).with("note", "hi");
        let back = Metadata::parse(&m.line()).unwrap();
        assert_eq!(back, m);
        assert!(m.line().starts_with("# bhawkes "));
    }

    #[test]
    fn event_log_round_trip_is_exact() {
        let p = ModelParams::rational_example();
        for log in [
            simulate_path(&p, 40.0, 5, None).unwrap(),
            simulate_stationary_path(&p, 10.0, 20.0, 6).unwrap(),
            simulate_path(&p, 0.0, 1, None).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_event_log(&mut buf, &log, None).unwrap();
            let back = read_event_log(buf.as_slice()).unwrap();
            assert_eq!(back, log);
        }
    }

    #[test]
    fn zero_horizon_log_is_header_only() {
        let p = ModelParams::rational_example();
        let mut buf = Vec::new();
        write_event_log(&mut buf, &simulate_path(&p, 0.0, 1, None).unwrap(), None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], EVENT_LOG_HEADER);
    }

    #[test]
    fn corrupted_log_is_rejected() {
        let p = ModelParams::rational_example();
        let mut buf = Vec::new();
        write_event_log(&mut buf, &simulate_path(&p, 5.0, 2, None).unwrap(), None).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("LIMIT_ARRIVAL", "EXECUTION", 1);
        assert!(read_event_log(text.as_bytes()).is_err());
    }

    #[test]
    fn numeric_csv_reader() {
        let p = ModelParams::rational_example();
        let curves = crate::moments::second_moments(&p, &[0.0, 1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_moment_curves(&mut buf, &curves).unwrap();
        let (meta, names, cols) = read_numeric_csv(buf.as_slice()).unwrap();
        assert_eq!(meta.params, Some(p));
        assert_eq!(names.join(","), MOMENTS_HEADER);
        assert_eq!(cols[9], curves.wbar);
    }

    #[test]
    fn json_has_meta_first() {
        let mut buf = Vec::new();
        write_json(&mut buf, "estimate", &ModelParams::rational_example()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["meta"]["toolkit"], "bhawkes");
        assert_eq!(v["lambda0"], 2.0);
        assert!(text.find("\"meta\"").unwrap() < text.find("lambda0").unwrap());
    }
}
