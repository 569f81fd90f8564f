use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

/// Which modelling constraint a row came from. Used for diagnostics,
/// row-count checks and the debug dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowTag {
    LoadPickup,
    LoadGate,
    VoltageBox,
    VoltageRef,
    FlowCap,
    SubstationP,
    SubstationQ,
    CapBank,
    Inverter,
    Regulator,
    VoltageDrop,
    VoltageDropSwitched,
    BalanceP,
    BalanceQ,
    Sequencing,
    TreeLine,
    TreeSwitch,
    OneParent,
    EnergizedHasParent,
    EnergizeTogether,
    ClosedEnergized,
    Fixed,
    User,
}

impl RowTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RowTag::LoadPickup => "load_pickup",
            RowTag::LoadGate => "load_gate",
            RowTag::VoltageBox => "voltage_box",
            RowTag::VoltageRef => "voltage_ref",
            RowTag::FlowCap => "flow_cap",
            RowTag::SubstationP => "substation_p",
            RowTag::SubstationQ => "substation_q",
            RowTag::CapBank => "cap_bank",
            RowTag::Inverter => "inverter",
            RowTag::Regulator => "regulator",
            RowTag::VoltageDrop => "voltage_drop",
            RowTag::VoltageDropSwitched => "voltage_drop_switched",
            RowTag::BalanceP => "balance_p",
            RowTag::BalanceQ => "balance_q",
            RowTag::Sequencing => "sequencing",
            RowTag::TreeLine => "tree_line",
            RowTag::TreeSwitch => "tree_switch",
            RowTag::OneParent => "one_parent",
            RowTag::EnergizedHasParent => "energized_has_parent",
            RowTag::EnergizeTogether => "energize_together",
            RowTag::ClosedEnergized => "closed_energized",
            RowTag::Fixed => "fixed",
            RowTag::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
}

/// `lower <= sum(coef * x[var]) <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
    pub tag: RowTag,
}

impl Row {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(j, a)| a * x[*j]).sum()
    }

    /// Distance of the row activity from `[lower, upper]`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.eval(x);
        (self.lower - v).max(v - self.upper).max(0.0)
    }

    pub fn is_equality(&self) -> bool {
        self.lower == self.upper
    }
}

/// `p^2 + q^2 <= (radius * gate)^2`, or `<= radius^2` when ungated.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskCap {
    pub p: usize,
    pub q: usize,
    pub radius: f64,
    pub gate: Option<usize>,
    pub tag: RowTag,
}

impl DiskCap {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let g = self.gate.map_or(1.0, |g| x[g]);
        (crate::math::sqrt(x[self.p] * x[self.p] + x[self.q] * x[self.q]) - self.radius * g).max(0.0)
    }
}

/// `weight * (x[var] - center)^2` added to the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub var: usize,
    pub center: f64,
    pub weight: f64,
}

/// Linear cost plus separable quadratic penalties over linear rows, variable
/// bounds and (before polygonization) gated disk constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexProgram {
    pub vars: Vec<Variable>,
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
    pub cones: Vec<DiskCap>,
    pub penalties: Vec<Penalty>,
}

impl ConvexProgram {
    pub fn add_var(&mut self, label: String, lower: f64, upper: f64) -> usize {
        self.vars.push(Variable { label, lower, upper });
        self.cost.push(0.0);
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, lower: f64, upper: f64, tag: RowTag) {
        self.rows.push(Row { terms, lower, upper, tag });
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.cost.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self
            .penalties
            .iter()
            .map(|p| {
                let d = x[p.var] - p.center;
                p.weight * d * d
            })
            .sum();
        lin + quad
    }

    /// Largest bound, row or disk violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (v, xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for r in &self.rows {
            worst = worst.max(r.violation(x));
        }
        for c in &self.cones {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    pub fn rows_tagged(&self, tag: RowTag) -> usize {
        self.rows.iter().filter(|r| r.tag == tag).count()
    }

    /// Text dump in a loose MPS-like layout, one section per block.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "NAME restoration_subproblem");
        let _ = writeln!(s, "COLUMNS {}", self.vars.len());
        for (j, v) in self.vars.iter().enumerate() {
            let _ = writeln!(s, "  x{j} {} cost={} [{}, {}]", v.label, self.cost[j], v.lower, v.upper);
        }
        let _ = writeln!(s, "ROWS {}", self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let terms: Vec<String> = r.terms.iter().map(|(j, a)| format!("{a}*x{j}")).collect();
            let _ = writeln!(s, "  r{i} {} {} <= {} <= {}", r.tag.as_str(), r.lower, terms.join(" + "), r.upper);
        }
        let _ = writeln!(s, "DISKS {}", self.cones.len());
        for c in &self.cones {
            let gate = c.gate.map_or(String::from("1"), |g| format!("x{g}"));
            let _ = writeln!(s, "  {} |x{}, x{}| <= {} * {}", c.tag.as_str(), c.p, c.q, c.radius, gate);
        }
        let _ = writeln!(s, "PENALTIES {}", self.penalties.len());
        for p in &self.penalties {
            let _ = writeln!(s, "  {} * (x{} - {})^2", p.weight, p.var, p.center);
        }
        let _ = writeln!(s, "ENDATA");
        s
    }
}
