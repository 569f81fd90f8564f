//! Feeder and scenario documents.
//!
//! One JSON object holds the network and, optionally, a restoration
//! scenario. Quantities are in engineering units and converted to per unit
//! on the declared base:
//!
//! | field | unit |
//! |---|---|
//! | `lines[].r`, `lines[].x` | ohm |
//! | `lines[].s_max`, `ders[].s_inv_max` | kVA |
//! | `loads[].p_max`, `scenario.profile[].p` | kW |
//! | `loads[].q_max`, `caps[].q_cap_max`, `scenario.profile[].q` | kvar |
//! | `scenario.v_min`, `scenario.v_max` | p.u. voltage magnitude |
//!
//! Per-phase quantities take a number (single-phase feeders) or a list.
//! Impedances take a number, a flat row-major list or a list of rows.

use std::path::Path;

use restora_core::feeder::FeederParts;
use restora_core::{
    validate_feeder, Base, CapBank, DerUnit, Feeder, Line, LineKind, Load, Node, NodeId, Scenario, SubstationCapacity,
};
use serde::{Deserialize, Serialize};

use crate::error::{from_json, read_text, InputError};

/// A parsed document: the feeder and the scenario, when one is given.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederFile {
    pub feeder: Feeder,
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PerPhase {
    One(f64),
    Many(Vec<f64>),
}

impl PerPhase {
    fn to_vec(&self, scale: f64) -> Vec<f64> {
        match self {
            PerPhase::One(v) => vec![v / scale],
            PerPhase::Many(v) => v.iter().map(|x| x / scale).collect(),
        }
    }

    fn from_slice(v: &[f64], scale: f64) -> PerPhase {
        match v {
            [one] => PerPhase::One(one * scale),
            _ => PerPhase::Many(v.iter().map(|x| x * scale).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Matrix {
    One(f64),
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl Matrix {
    fn to_vec(&self, scale: f64) -> Vec<f64> {
        match self {
            Matrix::One(v) => vec![v / scale],
            Matrix::Rows(rows) => rows.iter().flatten().map(|x| x / scale).collect(),
            Matrix::Flat(v) => v.iter().map(|x| x / scale).collect(),
        }
    }

    fn from_slice(v: &[f64], phases: usize, scale: f64) -> Matrix {
        if v.len() == 1 {
            Matrix::One(v[0] * scale)
        } else {
            Matrix::Rows(v.chunks(phases.max(1)).map(|r| r.iter().map(|x| x * scale).collect()).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Plain,
    Switchable,
    Tie,
    Regulator,
}

impl From<KindDoc> for LineKind {
    fn from(k: KindDoc) -> LineKind {
        match k {
            KindDoc::Plain => LineKind::Plain,
            KindDoc::Switchable => LineKind::Switchable,
            KindDoc::Tie => LineKind::Tie,
            KindDoc::Regulator => LineKind::Regulator,
        }
    }
}

impl From<LineKind> for KindDoc {
    fn from(k: LineKind) -> KindDoc {
        match k {
            LineKind::Plain => KindDoc::Plain,
            LineKind::Switchable => KindDoc::Switchable,
            LineKind::Tie => KindDoc::Tie,
            LineKind::Regulator => KindDoc::Regulator,
        }
    }
}

fn plain() -> KindDoc {
    KindDoc::Plain
}

fn one_phase() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseDoc {
    s_mva: Option<f64>,
    v_kv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    id: String,
    from: u32,
    to: u32,
    r: Matrix,
    x: Matrix,
    s_max: PerPhase,
    #[serde(default = "plain")]
    kind: KindDoc,
    #[serde(default)]
    switch_priority: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regulator_ratio: Option<PerPhase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadDoc {
    node: u32,
    p_max: PerPhase,
    q_max: PerPhase,
    priority: PerPhase,
    #[serde(default)]
    dispatchable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DerDoc {
    node: u32,
    s_inv_max: PerPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapDoc {
    node: u32,
    q_cap_max: PerPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityDoc {
    p: f64,
    q: f64,
}

fn v_min_default() -> f64 {
    0.95
}

fn v_max_default() -> f64 {
    1.05
}

fn step_default() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    faults: Vec<String>,
    profile: Vec<CapacityDoc>,
    /// Defaults to the profile length.
    #[serde(default)]
    horizon: Option<usize>,
    #[serde(default = "v_min_default")]
    v_min: f64,
    #[serde(default = "v_max_default")]
    v_max: f64,
    #[serde(default = "step_default")]
    step_minutes: f64,
    /// Served load per load entry before the first step, kW.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_pickup: Option<Vec<PerPhase>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    base: Option<BaseDoc>,
    #[serde(default = "one_phase")]
    phase_count: usize,
    nodes: Vec<NodeDoc>,
    lines: Vec<LineDoc>,
    #[serde(default)]
    loads: Vec<LoadDoc>,
    #[serde(default)]
    ders: Vec<DerDoc>,
    #[serde(default)]
    caps: Vec<CapDoc>,
    substation: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioDoc>,
}

fn base_of(doc: Option<&BaseDoc>) -> Result<Base, InputError> {
    let doc = doc.ok_or_else(|| InputError::Config("missing `base` (s_mva, v_kv)".into()))?;
    let s_mva = doc.s_mva.ok_or_else(|| InputError::Config("missing `base.s_mva`".into()))?;
    let v_kv = doc.v_kv.ok_or_else(|| InputError::Config("missing `base.v_kv`".into()))?;
    for (name, v) in [("base.s_mva", s_mva), ("base.v_kv", v_kv)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(InputError::Config(format!("`{name}` must be positive (got {v})")));
        }
    }
    Ok(Base { s_mva, v_kv })
}

fn scenario_of(doc: &ScenarioDoc, f: &Feeder) -> Result<Scenario, InputError> {
    let s = f.base().s_kva();
    let faults: Vec<&str> = doc.faults.iter().map(String::as_str).collect();
    let profile: Vec<SubstationCapacity> =
        doc.profile.iter().map(|c| SubstationCapacity { p: c.p / s, q: c.q / s }).collect();
    let horizon = doc.horizon.unwrap_or(profile.len());
    let invalid = |e: restora_core::ScenarioError| InputError::Invalid(format!("scenario: {e}"));
    let mut sc = restora_core::make_scenario(f, &faults, &profile, horizon)
        .map_err(invalid)?
        .with_voltage_limits(doc.v_min, doc.v_max)
        .with_step_minutes(doc.step_minutes);
    if let Some(init) = &doc.initial_pickup {
        sc = sc.with_initial_pickup(init.iter().map(|p| p.to_vec(s)).collect());
    }
    if !(doc.step_minutes > 0.0) {
        return Err(InputError::Config(format!("`scenario.step_minutes` must be positive (got {})", doc.step_minutes)));
    }
    sc.validate(f).map_err(invalid)?;
    Ok(sc)
}

fn feeder_of(doc: &Document) -> Result<Feeder, InputError> {
    let base = base_of(doc.base.as_ref())?;
    let s = base.s_kva();
    let z = base.z_ohm();
    let parts = FeederParts {
        base,
        phase_count: doc.phase_count,
        nodes: doc.nodes.iter().map(|n| Node { id: NodeId(n.id) }).collect(),
        lines: doc
            .lines
            .iter()
            .map(|l| Line {
                id: l.id.clone(),
                from: NodeId(l.from),
                to: NodeId(l.to),
                r: l.r.to_vec(z),
                x: l.x.to_vec(z),
                s_max: l.s_max.to_vec(s),
                kind: l.kind.into(),
                switch_priority: l.switch_priority,
                regulator_ratio: l.regulator_ratio.as_ref().map(|a| a.to_vec(1.0)),
            })
            .collect(),
        loads: doc
            .loads
            .iter()
            .map(|l| Load {
                node: NodeId(l.node),
                p_max: l.p_max.to_vec(s),
                q_max: l.q_max.to_vec(s),
                priority: l.priority.to_vec(1.0),
                dispatchable: l.dispatchable,
            })
            .collect(),
        ders: doc.ders.iter().map(|d| DerUnit { node: NodeId(d.node), s_inv_max: d.s_inv_max.to_vec(s) }).collect(),
        caps: doc.caps.iter().map(|c| CapBank { node: NodeId(c.node), q_cap_max: c.q_cap_max.to_vec(s) }).collect(),
        substation: NodeId(doc.substation),
    };
    Feeder::new(parts).map_err(|e| InputError::Invalid(e.to_string()))
}

/// Parses a document without checking topological invariants.
pub fn from_json_str(text: &str) -> Result<FeederFile, InputError> {
    let doc: Document = from_json(text)?;
    let feeder = feeder_of(&doc)?;
    let scenario = doc.scenario.as_ref().map(|s| scenario_of(s, &feeder)).transpose()?;
    Ok(FeederFile { feeder, scenario })
}

/// Reads and parses a document, rejecting feeders that fail validation.
pub fn parse_feeder(path: &Path) -> Result<FeederFile, InputError> {
    let file = from_json_str(&read_text(path)?)?;
    let report = validate_feeder(&file.feeder);
    if !report.ok() {
        let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(InputError::Invalid(format!("invalid feeder: {}", list.join("; "))));
    }
    Ok(file)
}

/// Parses a stand-alone scenario object (the `scenario` key of a document).
pub fn scenario_from_json_str(text: &str, f: &Feeder) -> Result<Scenario, InputError> {
    let doc: ScenarioDoc = from_json(text)?;
    scenario_of(&doc, f)
}

fn scenario_doc(sc: &Scenario, f: &Feeder) -> ScenarioDoc {
    let s = f.base().s_kva();
    let untouched = sc.initial_pickup.iter().flatten().all(|p| *p == 0.0);
    ScenarioDoc {
        faults: sc.faulted_ids(f),
        profile: sc.substation_profile.iter().map(|c| CapacityDoc { p: c.p * s, q: c.q * s }).collect(),
        horizon: Some(sc.horizon),
        v_min: sc.v_min,
        v_max: sc.v_max,
        step_minutes: sc.step_minutes,
        initial_pickup: (!untouched).then(|| sc.initial_pickup.iter().map(|p| PerPhase::from_slice(p, s)).collect()),
    }
}

/// Serializes a feeder, and optionally a scenario, in engineering units.
pub fn to_json_string(f: &Feeder, sc: Option<&Scenario>) -> String {
    let base = f.base();
    let s = base.s_kva();
    let z = base.z_ohm();
    let ph = f.phase_count();
    let doc = Document {
        base: Some(BaseDoc { s_mva: Some(base.s_mva), v_kv: Some(base.v_kv) }),
        phase_count: ph,
        nodes: f.nodes().iter().map(|n| NodeDoc { id: n.id.0 }).collect(),
        lines: f
            .lines()
            .iter()
            .map(|l| LineDoc {
                id: l.id.clone(),
                from: l.from.0,
                to: l.to.0,
                r: Matrix::from_slice(&l.r, ph, z),
                x: Matrix::from_slice(&l.x, ph, z),
                s_max: PerPhase::from_slice(&l.s_max, s),
                kind: l.kind.into(),
                switch_priority: l.switch_priority,
                regulator_ratio: l.regulator_ratio.as_ref().map(|a| PerPhase::from_slice(a, 1.0)),
            })
            .collect(),
        loads: f
            .loads()
            .iter()
            .map(|l| LoadDoc {
                node: l.node.0,
                p_max: PerPhase::from_slice(&l.p_max, s),
                q_max: PerPhase::from_slice(&l.q_max, s),
                priority: PerPhase::from_slice(&l.priority, 1.0),
                dispatchable: l.dispatchable,
            })
            .collect(),
        ders: f.ders().iter().map(|d| DerDoc { node: d.node.0, s_inv_max: PerPhase::from_slice(&d.s_inv_max, s) }).collect(),
        caps: f.caps().iter().map(|c| CapDoc { node: c.node.0, q_cap_max: PerPhase::from_slice(&c.q_cap_max, s) }).collect(),
        substation: f.substation().0,
        scenario: sc.map(|sc| scenario_doc(sc, f)),
    };
    serde_json::to_string_pretty(&doc).expect("feeder documents contain only finite numbers")
}

#[cfg(test)]
mod tests {
    use super::*;
    use restora_core::fixtures;

    const F6: &str = r#"{
  "base": {"s_mva": 1.0, "v_kv": 4.16},
  "nodes": [{"id": 1}, {"id": 2}],
  "lines": [{"id": "1-2", "from": 1, "to": 2, "r": 1.7, "x": 3.4, "s_max": 500}],
  "loads": [{"node": 2, "p_max": 100, "q_max": 40, "priority": 10}],
  "substation": 1
}"#;

    #[test]
    fn engineering_units_become_per_unit() {
        let f = from_json_str(F6).unwrap().feeder;
        let z = 4.16 * 4.16;
        assert!((f.lines()[0].r[0] - 1.7 / z).abs() < 1e-15);
        assert!((f.lines()[0].s_max[0] - 0.5).abs() < 1e-15);
        assert!((f.loads()[0].p_max[0] - 0.1).abs() < 1e-15);
        assert_eq!(f.lines()[0].kind, LineKind::Plain);
    }

    #[test]
    fn missing_base_is_a_config_error() {
        let text = F6.replace(r#""base": {"s_mva": 1.0, "v_kv": 4.16},"#, "");
        assert!(matches!(from_json_str(&text), Err(InputError::Config(_))));
        let text = F6.replace(r#""s_mva": 1.0, "#, "");
        let err = from_json_str(&text).unwrap_err();
        assert!(matches!(err, InputError::Config(_)));
        assert!(err.to_string().contains("s_mva"));
    }

    #[test]
    fn type_errors_name_field_and_line() {
        let text = F6.replace(r#""s_max": 500"#, r#""s_max": "lots""#);
        let msg = from_json_str(&text).unwrap_err().to_string();
        assert!(msg.contains("lines[0].s_max"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
        let text = F6.replace(r#""to": 2,"#, r#""to": 2, "colour": "red","#);
        let msg = from_json_str(&text).unwrap_err().to_string();
        assert!(msg.contains("colour") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn referential_errors() {
        let text = F6.replace(r#""to": 2"#, r#""to": 99"#);
        assert!(from_json_str(&text).unwrap_err().to_string().contains("unknown node"));
        let text = r#"{"base": {"s_mva": 1, "v_kv": 4.16}, "nodes": [], "lines": [], "substation": 1}"#;
        assert!(from_json_str(text).unwrap_err().to_string().contains("no nodes"));
    }

    #[test]
    fn scenario_defaults_and_conversion() {
        let text = F6.replace(
            r#""substation": 1"#,
            r#""substation": 1, "scenario": {"faults": ["1-2"], "profile": [{"p": 50, "q": 20}]}"#,
        );
        let sc = from_json_str(&text).unwrap().scenario.unwrap();
        assert_eq!(sc.horizon, 1);
        assert_eq!(sc.faulted_lines.len(), 1);
        assert!((sc.substation_profile[0].p - 0.05).abs() < 1e-15);
        assert_eq!((sc.v_min, sc.v_max, sc.step_minutes), (0.95, 1.05, 15.0));
        let bad = text.replace(r#"["1-2"]"#, r#"["7-8"]"#);
        assert!(from_json_str(&bad).unwrap_err().to_string().contains("unknown line"));
    }

    #[test]
    fn invalid_topology_is_rejected_on_load() {
        let (f, _) = fixtures::f6_blackout();
        let text = to_json_string(&f, None).replace(r#""kind": "tie""#, r#""kind": "plain""#);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f6.json");
        std::fs::write(&path, text).unwrap();
        let msg = parse_feeder(&path).unwrap_err().to_string();
        assert!(msg.contains("cycle under normal topology"), "{msg}");
    }
}
