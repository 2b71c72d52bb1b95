//! Pre-flight checks: schema, pmf normalization and size guards, collected
//! in full rather than stopping at the first problem. Nothing is computed
//! beyond constructing the setups.

use osrb_core::binning::{BinningSpec, ENUMERATION_LIMIT};
use osrb_core::prob::NORMALIZATION_TOL;
use osrb_core::secondorder::{SimMethod, LogTermPolicy};
use osrb_core::secondorder::sim::{HISTOGRAM_LIMIT, LITERAL_SEQUENCE_LIMIT};
use serde_json::Value;

use crate::config::{Kind, Payload};
use crate::run;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.errors {
            s.push_str(&format!("error: {e}\n"));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

const TOP_KEYS: [&str; 5] = ["kind", "seed", "workers", "output_path", "payload"];

pub fn validate_text(text: &str) -> Report {
    let mut r = Report::default();
    let v: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            r.error(format!("not valid JSON: {e}"));
            return r;
        }
    };
    let Some(obj) = v.as_object() else {
        r.error("top level must be an object");
        return r;
    };
    for k in obj.keys() {
        if !TOP_KEYS.contains(&k.as_str()) {
            r.error(format!("unknown field `{k}`"));
        }
    }
    let kind = match obj.get("kind") {
        None => {
            r.error("missing field `kind`");
            None
        }
        Some(k) => match serde_json::from_value::<Kind>(k.clone()) {
            Ok(k) => Some(k),
            Err(_) => {
                let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
                r.error(format!("kind: {k} is not one of {}", names.join(", ")));
                None
            }
        },
    };
    match obj.get("seed") {
        None => r.error("missing field `seed` (there is no default seed)"),
        Some(s) if s.as_u64().is_none() => r.error(format!("seed: {s} is not a 64-bit unsigned integer")),
        _ => {}
    }
    if let Some(w) = obj.get("workers") {
        if w.as_u64().is_none_or(|w| w == 0) {
            r.error(format!("workers: {w} must be an integer >= 1"));
        }
    }
    if let Some(p) = obj.get("output_path") {
        if !p.is_string() {
            r.error("output_path: must be a string");
        }
    }
    let payload = match obj.get("payload") {
        None => {
            r.error("missing field `payload`");
            return r;
        }
        Some(p) if !p.is_object() => {
            r.error("payload: must be an object");
            return r;
        }
        Some(p) => p,
    };
    let Some(kind) = kind else { return r };
    check_pmfs(kind, payload, &mut r);
    match Payload::parse(kind, payload) {
        Err(e) => r.error(format!("payload: {e}")),
        Ok(p) => check_semantics(&p, obj.get("seed").and_then(Value::as_u64).unwrap_or(0), &mut r),
    }
    r
}

fn check_vector(path: &str, v: &Value, r: &mut Report) {
    let Some(arr) = v.as_array() else { return };
    let mut sum = 0.0;
    let mut ok = true;
    for (i, e) in arr.iter().enumerate() {
        match e.as_f64() {
            Some(x) if x.is_finite() && x >= 0.0 => sum += x,
            _ => {
                r.error(format!("{path}[{i}]: entry {e} must be a finite non-negative number"));
                ok = false;
            }
        }
    }
    if ok && (sum - 1.0).abs() > NORMALIZATION_TOL {
        r.error(format!("{path}: probabilities sum to {sum}, expected 1"));
    }
}

fn check_joint(path: &str, v: Option<&Value>, r: &mut Report) {
    if let Some(p) = v.and_then(|j| j.get("probs")) {
        check_vector(&format!("{path}.probs"), p, r);
    }
}

fn check_channel(path: &str, v: Option<&Value>, r: &mut Report) {
    if let Some(rows) = v.and_then(|c| c.get("rows")).and_then(Value::as_array) {
        for (i, row) in rows.iter().enumerate() {
            check_vector(&format!("{path}.rows[{i}]"), row, r);
        }
    }
}

fn check_pmfs(kind: Kind, p: &Value, r: &mut Report) {
    match kind {
        Kind::Thm1 | Kind::Thm2 => {
            check_joint("payload.source", p.get("source"), r);
            for key in ["t_z", "t_joint"] {
                if let Some(list) = p.get(key).and_then(Value::as_array) {
                    for (i, t) in list.iter().enumerate() {
                        if t.is_array() {
                            check_vector(&format!("payload.{key}[{i}]"), t, r);
                        } else if t.is_object() {
                            check_joint(&format!("payload.{key}[{i}]"), Some(t), r);
                        }
                    }
                }
            }
        }
        Kind::P2p => {
            if let Some(i) = p.get("input") {
                check_vector("payload.input", i, r);
            }
            check_channel("payload.channel", p.get("channel"), r);
        }
        Kind::Bc => {
            check_joint("payload.q_u1u2x", p.get("q_u1u2x"), r);
            check_channel("payload.channel", p.get("channel"), r);
        }
        Kind::Wiretap => {
            check_joint("payload.q_ux", p.get("q_ux"), r);
            check_channel("payload.channel", p.get("channel"), r);
        }
    }
}

/// Normalization problems were already listed by [`check_pmfs`].
fn is_normalization(e: &crate::CliError) -> bool {
    matches!(e, crate::CliError::Core(osrb_core::Error::NotNormalized { .. } | osrb_core::Error::InvalidEntry { .. }))
}

fn policy_checks(policy: &LogTermPolicy, r: &mut Report) {
    if let Err(e) = policy.validate() {
        r.error(format!("payload.policy: {e}"));
    }
}

fn check_semantics(p: &Payload, seed: u64, r: &mut Report) {
    let add = |ctx: String, res: Result<(), crate::CliError>, r: &mut Report| {
        if let Err(e) = res {
            if !is_normalization(&e) {
                r.error(format!("{ctx}: {e}"));
            }
        }
    };
    match p {
        Payload::Thm1(t) => {
            if t.gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                r.error("payload.gamma_grid: every gamma must be positive and finite");
            }
            if t.trials == 1 {
                r.error("payload.trials: must be 0 or at least 2");
            }
            add("payload".into(), run::tz_choices(&t.t_z).map(|_| ()), r);
            source_checks(&t.source, &t.spec, t.standard_sweep, seed, r);
        }
        Payload::Thm2(t) => {
            if t.gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                r.error("payload.gamma_grid: every gamma must be positive and finite");
            }
            if t.trials == 1 {
                r.error("payload.trials: must be 0 or at least 2");
            }
            add("payload".into(), run::t_choices(&t.t_joint).map(|_| ()), r);
            source_checks(&t.source, &t.spec, t.standard_sweep, seed, r);
        }
        Payload::P2p(pp) => {
            policy_checks(&pp.policy, r);
            if pp.n_grid.is_empty() {
                r.error("payload.n_grid: empty");
            }
            for &n in &pp.n_grid {
                let ctx = format!("payload.n_grid (n = {n})");
                match run::p2p_base(pp, n) {
                    Err(e) => add(ctx, Err(e), r),
                    Ok(s) => {
                        if let Err(e) = pp.policy.budget(pp.eps, n) {
                            r.error(format!("{ctx}: {e}"));
                        }
                        if let Some(sim) = &pp.simulate {
                            let bits = n as f64 * (s.input.len() as f64).log2();
                            if sim.method == SimMethod::Literal && bits > (LITERAL_SEQUENCE_LIMIT as f64).log2() {
                                r.warn(format!(
                                    "{ctx}: guard: literal simulation would enumerate 2^{bits:.1} sequences (limit {LITERAL_SEQUENCE_LIMIT})"
                                ));
                            }
                        }
                    }
                }
            }
        }
        Payload::Bc(b) => {
            policy_checks(&b.policy, r);
            if b.directions < 2 {
                r.error("payload.directions: must be at least 2");
            }
            match run::bc_setup(b) {
                Err(e) => add("payload".into(), Err(e), r),
                Ok(_) => {
                    if let Err(e) = b.policy.budget(b.eps, b.n) {
                        r.error(format!("payload.eps: {e}"));
                    }
                }
            }
        }
        Payload::Wiretap(w) => {
            policy_checks(&w.policy, r);
            if w.n_grid.is_empty() || w.theta_grid.is_empty() {
                r.error("payload: n_grid and theta_grid must be nonempty");
            }
            for &n in &w.n_grid {
                for &theta in &w.theta_grid {
                    let ctx = format!("payload (n = {n}, theta = {theta})");
                    match run::wiretap_setup(w, n, theta) {
                        Err(e) => add(ctx, Err(e), r),
                        Ok(s) => {
                            for (name, eps) in [("eps_r", theta * w.eps_r), ("eps_sec", (1.0 - theta) * w.eps_sec)] {
                                if let Err(e) = w.policy.budget(eps, n) {
                                    r.error(format!("{ctx}: {name}: {e}"));
                                }
                            }
                            if w.simulate.is_some() {
                                let ku = s.q_ux.shape()[0] as f64;
                                let kz = s.channel.outputs()[1].size() as f64;
                                let seqs = ku.powf(n as f64);
                                let hist = seqs * kz.powf(n as f64);
                                if seqs > LITERAL_SEQUENCE_LIMIT as f64 || hist > HISTOGRAM_LIMIT as f64 {
                                    r.warn(format!(
                                        "{ctx}: guard: exact secrecy histograms need {hist:.3e} cells (limit {HISTOGRAM_LIMIT})"
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn source_checks(
    source: &Option<osrb_core::prob::json::JointJson>,
    spec: &Option<Vec<[usize; 2]>>,
    sweep: Option<usize>,
    seed: u64,
    r: &mut Report,
) {
    // the standard grid is small by construction
    if sweep.is_some() && source.is_none() && spec.is_none() {
        if sweep == Some(0) {
            r.error("payload.standard_sweep: must be at least 1");
        }
        return;
    }
    if let Some(spec) = spec {
        let pairs: Vec<(usize, usize)> = spec.iter().map(|p| (p[0], p[1])).collect();
        if let Ok(s) = BinningSpec::from_sizes(&pairs) {
            let count = s.assignment_count();
            if count > ENUMERATION_LIMIT {
                r.warn(format!(
                    "payload.spec: guard: the exact oracle would enumerate {count:.3e} assignments (limit {ENUMERATION_LIMIT:e})"
                ));
            }
        }
    }
    match run::instances(source, spec, sweep, seed) {
        Ok(insts) => {
            for inst in insts {
                if let Err(e) = inst.spec.check_source(&inst.source) {
                    r.error(format!("payload.source: {e}"));
                }
            }
        }
        Err(e) if is_normalization(&e) => {}
        Err(e) => r.error(format!("payload: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2p(input: &str, rows: &str) -> String {
        format!(
            r#"{{"kind":"p2p","seed":1,"payload":{{"input":{input},
            "channel":{{"input_size":2,"output_sizes":[2],"rows":{rows}}},
            "n_grid":[1000],"eps":0.1}}}}"#
        )
    }

    #[test]
    fn clean_config_has_empty_report() {
        let r = validate_text(&p2p("[0.5,0.5]", "[[0.9,0.1],[0.1,0.9]]"));
        assert_eq!(r, Report::default());
    }

    #[test]
    fn every_normalization_violation_is_listed_with_its_index() {
        let r = validate_text(&p2p("[0.49,0.49]", "[[0.9,0.1],[0.2,0.9]]"));
        assert_eq!(r.errors.len(), 2, "{r:?}");
        assert!(r.errors[0].starts_with("payload.input:") && r.errors[0].contains("0.98"));
        assert!(r.errors[1].starts_with("payload.channel.rows[1]:"));
    }

    #[test]
    fn top_level_problems_accumulate() {
        let r = validate_text(r#"{"kind":"nope","workers":0,"extra":1,"payload":{}}"#);
        assert_eq!(r.errors.len(), 4, "{r:?}");
    }

    #[test]
    fn oversized_exact_oracle_is_a_guard_warning() {
        let text = r#"{"kind":"thm1","seed":3,"payload":{
            "source":{"axis_sizes":[12,1],"probs":[0.25,0.25,0.25,0.25,0,0,0,0,0,0,0,0]},
            "spec":[[12,4]],"gamma_grid":[1.0]}}"#;
        let r = validate_text(text);
        assert!(r.errors.is_empty(), "{r:?}");
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("guard"));
    }

    #[test]
    fn slack_exhaustion_is_reported_per_n() {
        let text = r#"{"kind":"p2p","seed":1,"payload":{"input":[0.5,0.5],
            "channel":{"input_size":2,"output_sizes":[2],"rows":[[0.9,0.1],[0.1,0.9]]},
            "n_grid":[4, 9, 10000],"eps":0.2}}"#;
        let r = validate_text(text);
        assert_eq!(r.errors.len(), 2, "{r:?}");
    }
}
