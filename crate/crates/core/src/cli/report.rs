//! Report rendering. JSON objects are emitted with sorted keys and
//! shortest round-trip floats; non-finite numbers become `null`.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::run::{Check, Verdict, VerificationReport};

pub const TOOL_NAME: &str = "skewwarp";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

fn check_json(c: &Check) -> Value {
    json!({
        "name": c.name,
        "value": c.value,
        "relation": c.relation,
        "tolerance": c.tolerance,
        "asserted": c.asserted,
        "within_tolerance": c.holds(),
        "verdict": c.verdict(),
        "detail": c.detail,
    })
}

impl VerificationReport {
    pub fn to_json(&self) -> Value {
        let count = |v: Verdict| self.checks.iter().filter(|c| c.verdict() == v).count();
        let mut doc = json!({
            "tool": { "name": TOOL_NAME, "version": TOOL_VERSION },
            "scenario": self.scenario,
            "description": self.description,
            "command": self.stage,
            "seed": self.seed,
            "samples": self.samples,
            "tolerances": self.tolerances,
            "constants": self.constants,
            "checks": self.checks.iter().map(check_json).collect::<Vec<_>>(),
            "totals": {
                "pass": count(Verdict::Pass),
                "fail": count(Verdict::Fail),
                "info": count(Verdict::Info),
            },
            "verdict": if self.passed() { "pass" } else { "fail" },
        });
        let obj = doc.as_object_mut().expect("object literal");
        for (k, v) in &self.sections {
            obj.insert(k.clone(), v.clone());
        }
        doc
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{TOOL_NAME} {TOOL_VERSION}  {} {}",
            self.stage.as_str(),
            self.scenario
        );
        let _ = writeln!(out, "seed {}  samples {}", self.seed, self.samples);
        if !self.constants.is_empty() {
            let list: Vec<String> = self
                .constants
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            let _ = writeln!(out, "constants {}", list.join(" "));
        }
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:<2} {:>9}  verdict",
            "check", "value", "", "tolerance"
        );
        for c in &self.checks {
            let _ = write!(
                out,
                "{:<width$}  {:>12.4e}  {:<2} {:>9.1e}  {}",
                c.name,
                c.value,
                c.relation.as_str(),
                c.tolerance,
                c.verdict().as_str()
            );
            if let Some(d) = &c.detail {
                let _ = write!(out, "  ({d})");
            }
            out.push('\n');
        }
        if let Some(cls) = self
            .section("classification")
            .and_then(|c| c.get("summary"))
        {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "classification: {}  dims (D, D_perp, D_theta) = ({}, {}, {:?})  angles (deg) {}",
                cls["label"].as_str().unwrap_or("?"),
                cls["invariant_dim"],
                cls["anti_invariant_dim"],
                cls["slant_dims"]
                    .as_array()
                    .map(|a| a
                        .iter()
                        .map(|x| x.as_u64().unwrap_or(0))
                        .collect::<Vec<_>>())
                    .unwrap_or_default(),
                cls["slant_angles_deg"],
            );
        }
        if let Some(w) = self.section("warped") {
            let _ = writeln!(out, "warped: {}", w["verdict"].as_str().unwrap_or("?"));
        }
        if let Some(t) = self.section("theorem41").filter(|t| t.get("lhs").is_some()) {
            let _ = writeln!(
                out,
                "inequality at {}: lhs {}  rhs(i) {}  rhs(ii) {}  rhs(i, csc variant) {}  margin {}  hypotheses hold: {}",
                t["reference_point"], t["lhs"], t["rhs_statement_i"], t["rhs_statement_ii"],
                t["rhs_proof_variant_i"], t["margin"], t["hypotheses_hold"],
            );
        }
        let fails = self.failures().count();
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "verdict: {}  ({} asserted checks failed)",
            if fails == 0 { "pass" } else { "fail" },
            fails
        );
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.render_json(),
            Format::Text => self.render_text(),
        }
    }

    /// Writes to `path`, or stdout when `None`.
    pub fn emit(&self, format: Format, path: Option<&Path>) -> Result<()> {
        let body = self.render(format);
        match path {
            Some(p) => std::fs::write(p, body).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            }),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }
}
