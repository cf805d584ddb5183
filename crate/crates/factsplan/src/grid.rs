//! Network case loading, validation and indexing.
//!
//! Two input syntaxes are accepted: a JSON mirror of the MATPOWER case
//! matrices (canonical, unambiguous to serialize) and the numeric subset of
//! MATPOWER `.m` case files (`mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
//! `mpc.branch`, `mpc.gencost`). Element records keep the source units
//! (MW, MVAr, degrees) so that round trips are bit-exact; the dense
//! [`PerUnit`] snapshot built at validation time is what the numeric modules
//! consume.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("case schema error: {0}")]
    Schema(String),
    #[error("{table} row {row} references unknown bus {id}")]
    UnknownBus { table: &'static str, row: usize, id: i64 },
    #[error("duplicate bus id {0}")]
    DuplicateBus(i64),
    #[error("no slack bus among in-service buses")]
    NoSlack,
    #[error("multiple slack buses in one island: {0:?}")]
    MultipleSlack(Vec<i64>),
    #[error("in-service grid is disconnected (bus {0} unreachable from slack)")]
    Disconnected(i64),
    #[error("invalid case data: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
    Isolated,
}

/// Bus record in source units (loads MW/MVAr, angle degrees, voltages pu).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub area: f64,
    pub v_init: f64,
    pub theta_init: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub v_max: f64,
    pub v_min: f64,
}

/// Quadratic generation cost c2·P² + c1·P + c0 with P in MW, cost in $/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoly {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub startup: f64,
    pub shutdown: f64,
}

impl CostPoly {
    /// Cost in $/h for an output given in per-unit.
    pub fn eval_pu(&self, p_pu: f64, base_mva: f64) -> f64 {
        let p = p_pu * base_mva;
        self.c2 * p * p + self.c1 * p + self.c0
    }
}

/// Generator record in source units (MW/MVAr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: i64,
    pub p_init: f64,
    pub q_init: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub v_setpoint: f64,
    pub mbase: f64,
    pub in_service: bool,
    pub p_max: f64,
    pub p_min: f64,
    pub cost: CostPoly,
}

/// Branch record (π model) in source units (impedances pu, rating MVA,
/// angles degrees). `tau = 0` means no transformer (ratio 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x0: f64,
    pub b: f64,
    pub s_rate: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub tau: f64,
    pub theta_shift: f64,
    pub in_service: bool,
    pub ang_min: f64,
    pub ang_max: f64,
}

/// Dense per-unit snapshot over the in-service, non-isolated elements.
/// Angles in radians, powers per-unit on the system base.
#[derive(Debug, Clone, Default)]
pub struct PerUnit {
    // per dense bus
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub g_shunt: Vec<f64>,
    pub b_shunt: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub kind: Vec<BusKind>,
    // per dense generator
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub p_init: Vec<f64>,
    pub q_init: Vec<f64>,
    pub v_setpoint: Vec<f64>,
    // per dense branch
    pub r: Vec<f64>,
    pub x0: Vec<f64>,
    pub b: Vec<f64>,
    pub s_rate: Vec<f64>,
    pub tau: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Immutable validated network with dense index maps. Safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub pu: PerUnit,
    // storage position per external bus id
    bus_pos: HashMap<i64, usize>,
    // dense index -> storage position
    bus_order: Vec<usize>,
    branch_order: Vec<usize>,
    gen_order: Vec<usize>,
    // storage position -> dense index
    bus_didx: Vec<Option<usize>>,
    // per dense branch: (dense from bus, dense to bus)
    branch_ends: Vec<(usize, usize)>,
    // per dense gen: dense bus
    gen_bus: Vec<usize>,
    // per dense bus: dense gens attached
    bus_gens: Vec<Vec<usize>>,
    slack: usize,
}

impl Network {
    /// Number of dense (non-isolated) buses.
    pub fn n_bus(&self) -> usize {
        self.bus_order.len()
    }

    /// Number of dense (in-service) branches.
    pub fn n_branch(&self) -> usize {
        self.branch_order.len()
    }

    /// Number of dense (in-service) generators.
    pub fn n_gen(&self) -> usize {
        self.gen_order.len()
    }

    pub fn bus(&self, dense: usize) -> &Bus {
        &self.buses[self.bus_order[dense]]
    }

    pub fn branch(&self, dense: usize) -> &Branch {
        &self.branches[self.branch_order[dense]]
    }

    pub fn gen(&self, dense: usize) -> &Generator {
        &self.generators[self.gen_order[dense]]
    }

    /// Dense endpoints (from, to) of a dense branch.
    pub fn branch_ends(&self, dense: usize) -> (usize, usize) {
        self.branch_ends[dense]
    }

    /// Dense bus of a dense generator.
    pub fn gen_bus(&self, dense: usize) -> usize {
        self.gen_bus[dense]
    }

    /// Dense generators attached to a dense bus.
    pub fn gens_at(&self, dense_bus: usize) -> &[usize] {
        &self.bus_gens[dense_bus]
    }

    /// True if at least one in-service generator sits on the dense bus.
    pub fn is_gen_bus(&self, dense_bus: usize) -> bool {
        !self.bus_gens[dense_bus].is_empty()
    }

    /// Dense index of the slack bus.
    pub fn slack(&self) -> usize {
        self.slack
    }

    /// Dense bus index for an external bus id, if in service.
    pub fn dense_bus_of_id(&self, id: i64) -> Option<usize> {
        self.bus_pos.get(&id).and_then(|&p| self.bus_didx[p])
    }

    /// Total in-service active load, per-unit.
    pub fn total_p_load(&self) -> f64 {
        self.pu.p_load.iter().sum()
    }

    /// Returns a copy with every load multiplied by `factor`.
    pub fn scale_loads(&self, factor: f64) -> Result<Network, GridError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(GridError::Invalid("factor must be positive".into()));
        }
        let mut net = self.clone();
        for bus in &mut net.buses {
            bus.p_load *= factor;
            bus.q_load *= factor;
        }
        net.index()?;
        Ok(net)
    }

    fn index(&mut self) -> Result<(), GridError> {
        let nb = self.buses.len();
        self.bus_pos.clear();
        for (pos, bus) in self.buses.iter().enumerate() {
            if self.bus_pos.insert(bus.id, pos).is_some() {
                return Err(GridError::DuplicateBus(bus.id));
            }
        }
        self.bus_didx = vec![None; nb];
        self.bus_order.clear();
        for (pos, bus) in self.buses.iter().enumerate() {
            if bus.kind != BusKind::Isolated {
                self.bus_didx[pos] = Some(self.bus_order.len());
                self.bus_order.push(pos);
            }
        }
        if self.bus_order.is_empty() {
            return Err(GridError::Invalid("case has no in-service buses".into()));
        }

        self.branch_order.clear();
        self.branch_ends.clear();
        for (pos, br) in self.branches.iter().enumerate() {
            let f = *self.bus_pos.get(&br.from).ok_or(GridError::UnknownBus {
                table: "branch",
                row: pos + 1,
                id: br.from,
            })?;
            let t = *self.bus_pos.get(&br.to).ok_or(GridError::UnknownBus {
                table: "branch",
                row: pos + 1,
                id: br.to,
            })?;
            if !br.in_service {
                continue;
            }
            let (df, dt) = match (self.bus_didx[f], self.bus_didx[t]) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(GridError::Invalid(format!(
                        "in-service branch {}-{} touches an isolated bus",
                        br.from, br.to
                    )))
                }
            };
            if br.x0 == 0.0 {
                return Err(GridError::Invalid(format!(
                    "branch {}-{} has zero series reactance",
                    br.from, br.to
                )));
            }
            if br.tau < 0.0 {
                return Err(GridError::Invalid(format!(
                    "branch {}-{} has negative tap ratio",
                    br.from, br.to
                )));
            }
            self.branch_order.push(pos);
            self.branch_ends.push((df, dt));
        }

        self.gen_order.clear();
        self.gen_bus.clear();
        for (pos, gen) in self.generators.iter().enumerate() {
            let p = *self.bus_pos.get(&gen.bus).ok_or(GridError::UnknownBus {
                table: "gen",
                row: pos + 1,
                id: gen.bus,
            })?;
            if !gen.in_service {
                continue;
            }
            let dense = self.bus_didx[p].ok_or_else(|| {
                GridError::Invalid(format!("in-service generator at isolated bus {}", gen.bus))
            })?;
            if gen.p_min > gen.p_max || gen.q_min > gen.q_max {
                return Err(GridError::Invalid(format!(
                    "generator at bus {} has inverted limits",
                    gen.bus
                )));
            }
            if gen.cost.c2 < 0.0 {
                return Err(GridError::Invalid(format!(
                    "generator at bus {} has concave cost (c2 < 0)",
                    gen.bus
                )));
            }
            self.gen_order.push(pos);
            self.gen_bus.push(dense);
        }

        for &pos in &self.bus_order {
            let bus = &self.buses[pos];
            if !(bus.v_min > 0.0) || bus.v_min > bus.v_max {
                return Err(GridError::Invalid(format!(
                    "bus {} has invalid voltage bounds [{}, {}]",
                    bus.id, bus.v_min, bus.v_max
                )));
            }
        }

        // connectivity + unique slack over the dense graph
        let n = self.bus_order.len();
        self.bus_gens = vec![Vec::new(); n];
        for (g, &db) in self.gen_bus.iter().enumerate() {
            self.bus_gens[db].push(g);
        }
        let mut adj = vec![Vec::new(); n];
        for &(f, t) in &self.branch_ends {
            adj[f].push(t);
            adj[t].push(f);
        }
        let slacks: Vec<usize> = (0..n)
            .filter(|&i| self.bus(i).kind == BusKind::Slack)
            .collect();
        if slacks.is_empty() {
            return Err(GridError::NoSlack);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![slacks[0]];
        seen[slacks[0]] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| !seen[i]) {
            return Err(GridError::Disconnected(self.bus(i).id));
        }
        if slacks.len() > 1 {
            return Err(GridError::MultipleSlack(
                slacks.iter().map(|&i| self.bus(i).id).collect(),
            ));
        }
        self.slack = slacks[0];

        // dense per-unit snapshot
        let base = self.base_mva;
        let mut pu = PerUnit::default();
        for d in 0..n {
            let bus = self.bus(d);
            pu.p_load.push(bus.p_load / base);
            pu.q_load.push(bus.q_load / base);
            pu.g_shunt.push(bus.g_shunt / base);
            pu.b_shunt.push(bus.b_shunt / base);
            pu.v_min.push(bus.v_min);
            pu.v_max.push(bus.v_max);
            pu.kind.push(bus.kind);
        }
        for g in 0..self.gen_order.len() {
            let gen = &self.generators[self.gen_order[g]];
            pu.p_min.push(gen.p_min / base);
            pu.p_max.push(gen.p_max / base);
            pu.q_min.push(gen.q_min / base);
            pu.q_max.push(gen.q_max / base);
            pu.p_init.push(gen.p_init / base);
            pu.q_init.push(gen.q_init / base);
            pu.v_setpoint.push(gen.v_setpoint);
        }
        for l in 0..self.branch_order.len() {
            let br = &self.branches[self.branch_order[l]];
            pu.r.push(br.r);
            pu.x0.push(br.x0);
            pu.b.push(br.b);
            pu.s_rate.push(br.s_rate / base);
            pu.tau.push(if br.tau == 0.0 { 1.0 } else { br.tau });
            pu.shift.push(br.theta_shift.to_radians());
        }
        self.pu = pu;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize, Serialize)]
struct CaseDoc {
    base_mva: f64,
    bus: Vec<Vec<f64>>,
    gen: Vec<Vec<f64>>,
    branch: Vec<Vec<f64>>,
    gencost: Vec<Vec<f64>>,
}

/// Parse a case document (JSON mirror or MATPOWER `.m` numeric subset) into
/// a validated [`Network`].
pub fn parse_case(text: &str) -> Result<Network, GridError> {
    let doc = if text.trim_start().starts_with('{') {
        serde_json::from_str::<CaseDoc>(text).map_err(|e| GridError::Syntax {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })?
    } else {
        parse_matpower(text)?
    };
    network_from_doc(doc)
}

fn network_from_doc(doc: CaseDoc) -> Result<Network, GridError> {
    let base = doc.base_mva;
    if !(base > 0.0) {
        return Err(GridError::Schema("base_mva must be positive".into()));
    }
    let mut buses = Vec::with_capacity(doc.bus.len());
    for (i, row) in doc.bus.iter().enumerate() {
        if row.len() < 13 {
            return Err(GridError::Schema(format!(
                "bus row {} has {} columns, expected 13",
                i + 1,
                row.len()
            )));
        }
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => BusKind::Isolated,
            k => {
                return Err(GridError::Schema(format!(
                    "bus row {} has unknown type {}",
                    i + 1,
                    k
                )))
            }
        };
        buses.push(Bus {
            id: row[0] as i64,
            kind,
            p_load: row[2],
            q_load: row[3],
            g_shunt: row[4],
            b_shunt: row[5],
            area: row[6],
            v_init: row[7],
            theta_init: row[8],
            base_kv: row[9],
            zone: row[10],
            v_max: row[11],
            v_min: row[12],
        });
    }

    if doc.gencost.len() != doc.gen.len() {
        return Err(GridError::Schema(format!(
            "gencost has {} rows for {} generators",
            doc.gencost.len(),
            doc.gen.len()
        )));
    }
    let mut generators = Vec::with_capacity(doc.gen.len());
    for (i, row) in doc.gen.iter().enumerate() {
        if row.len() < 10 {
            return Err(GridError::Schema(format!(
                "gen row {} has {} columns, expected at least 10",
                i + 1,
                row.len()
            )));
        }
        let cost = parse_gencost(&doc.gencost[i], i)?;
        generators.push(Generator {
            bus: row[0] as i64,
            p_init: row[1],
            q_init: row[2],
            q_max: row[3],
            q_min: row[4],
            v_setpoint: row[5],
            mbase: row[6],
            in_service: row[7] != 0.0,
            p_max: row[8],
            p_min: row[9],
            cost,
        });
    }

    let mut branches = Vec::with_capacity(doc.branch.len());
    for (i, row) in doc.branch.iter().enumerate() {
        if row.len() < 13 {
            return Err(GridError::Schema(format!(
                "branch row {} has {} columns, expected 13",
                i + 1,
                row.len()
            )));
        }
        branches.push(Branch {
            from: row[0] as i64,
            to: row[1] as i64,
            r: row[2],
            x0: row[3],
            b: row[4],
            s_rate: row[5],
            rate_b: row[6],
            rate_c: row[7],
            tau: row[8],
            theta_shift: row[9],
            in_service: row[10] != 0.0,
            ang_min: row[11],
            ang_max: row[12],
        });
    }

    let mut net = Network {
        base_mva: base,
        buses,
        branches,
        generators,
        pu: PerUnit::default(),
        bus_pos: HashMap::new(),
        bus_order: Vec::new(),
        branch_order: Vec::new(),
        gen_order: Vec::new(),
        bus_didx: Vec::new(),
        branch_ends: Vec::new(),
        gen_bus: Vec::new(),
        bus_gens: Vec::new(),
        slack: 0,
    };
    net.index()?;
    Ok(net)
}

fn parse_gencost(row: &[f64], i: usize) -> Result<CostPoly, GridError> {
    if row.len() < 4 {
        return Err(GridError::Schema(format!("gencost row {} too short", i + 1)));
    }
    if row[0] as i64 != 2 {
        return Err(GridError::Schema(format!(
            "gencost row {}: only polynomial model 2 is supported",
            i + 1
        )));
    }
    let n = row[3] as usize;
    if n > 3 {
        return Err(GridError::Schema(format!(
            "gencost row {}: polynomial order above quadratic not supported",
            i + 1
        )));
    }
    if row.len() < 4 + n {
        return Err(GridError::Schema(format!(
            "gencost row {}: {} coefficients declared, {} present",
            i + 1,
            n,
            row.len() - 4
        )));
    }
    let coeffs = &row[4..4 + n];
    let (c2, c1, c0) = match n {
        3 => (coeffs[0], coeffs[1], coeffs[2]),
        2 => (0.0, coeffs[0], coeffs[1]),
        1 => (0.0, 0.0, coeffs[0]),
        _ => (0.0, 0.0, 0.0),
    };
    Ok(CostPoly {
        c2,
        c1,
        c0,
        startup: row[1],
        shutdown: row[2],
    })
}

/// Serialize a network to the canonical JSON mirror (MATPOWER column order
/// and units). `parse_case(serialize_case(net))` reproduces `net` exactly.
pub fn serialize_case(net: &Network) -> String {
    let doc = CaseDoc {
        base_mva: net.base_mva,
        bus: net
            .buses
            .iter()
            .map(|b| {
                vec![
                    b.id as f64,
                    match b.kind {
                        BusKind::Pq => 1.0,
                        BusKind::Pv => 2.0,
                        BusKind::Slack => 3.0,
                        BusKind::Isolated => 4.0,
                    },
                    b.p_load,
                    b.q_load,
                    b.g_shunt,
                    b.b_shunt,
                    b.area,
                    b.v_init,
                    b.theta_init,
                    b.base_kv,
                    b.zone,
                    b.v_max,
                    b.v_min,
                ]
            })
            .collect(),
        gen: net
            .generators
            .iter()
            .map(|g| {
                vec![
                    g.bus as f64,
                    g.p_init,
                    g.q_init,
                    g.q_max,
                    g.q_min,
                    g.v_setpoint,
                    g.mbase,
                    if g.in_service { 1.0 } else { 0.0 },
                    g.p_max,
                    g.p_min,
                ]
            })
            .collect(),
        branch: net
            .branches
            .iter()
            .map(|l| {
                vec![
                    l.from as f64,
                    l.to as f64,
                    l.r,
                    l.x0,
                    l.b,
                    l.s_rate,
                    l.rate_b,
                    l.rate_c,
                    l.tau,
                    l.theta_shift,
                    if l.in_service { 1.0 } else { 0.0 },
                    l.ang_min,
                    l.ang_max,
                ]
            })
            .collect(),
        gencost: net
            .generators
            .iter()
            .map(|g| {
                vec![2.0, g.cost.startup, g.cost.shutdown, 3.0, g.cost.c2, g.cost.c1, g.cost.c0]
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("case serialization cannot fail")
}

// MATPOWER .m numeric subset: `mpc.<name> = <scalar>;` and
// `mpc.<name> = [ rows ];` with `%` comments. String fields (version) are
// skipped.
fn parse_matpower(text: &str) -> Result<CaseDoc, GridError> {
    let mut base_mva: Option<f64> = None;
    let mut tables: HashMap<String, Vec<Vec<f64>>> = HashMap::new();

    let mut lines = text.lines().enumerate().peekable();
    while let Some((ln, raw)) = lines.next() {
        let line = strip_comment(raw).trim().to_string();
        if line.is_empty() || line.starts_with("function") {
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some(eq) = rest.find('=') else {
            return Err(GridError::Syntax {
                line: ln + 1,
                col: 1,
                msg: "expected assignment".into(),
            });
        };
        let name = rest[..eq].trim().to_string();
        let mut value = rest[eq + 1..].trim().to_string();
        if name == "version" {
            continue;
        }
        if value.starts_with('[') {
            // accumulate until the closing bracket
            let mut body = value.split_off(1);
            let mut end_line = ln;
            while !body.contains(']') {
                match lines.next() {
                    Some((ln2, raw2)) => {
                        end_line = ln2;
                        body.push('\n');
                        body.push_str(strip_comment(raw2).trim());
                    }
                    None => {
                        return Err(GridError::Syntax {
                            line: ln + 1,
                            col: 1,
                            msg: format!("unterminated matrix mpc.{name}"),
                        });
                    }
                }
            }
            let close = body.find(']').unwrap();
            let inner = &body[..close];
            let mut rows = Vec::new();
            for row_text in inner.split(|c| c == ';' || c == '\n') {
                let row_text = row_text.trim();
                if row_text.is_empty() {
                    continue;
                }
                let mut row = Vec::new();
                for tok in row_text.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
                    let v: f64 = tok.parse().map_err(|_| GridError::Syntax {
                        line: end_line + 1,
                        col: 1,
                        msg: format!("invalid number `{tok}` in mpc.{name}"),
                    })?;
                    row.push(v);
                }
                rows.push(row);
            }
            tables.insert(name, rows);
        } else {
            let value = value.trim_end_matches(';').trim();
            if name == "baseMVA" {
                base_mva = Some(value.parse().map_err(|_| GridError::Syntax {
                    line: ln + 1,
                    col: 1,
                    msg: format!("invalid baseMVA `{value}`"),
                })?);
            }
        }
    }

    let take = |tables: &mut HashMap<String, Vec<Vec<f64>>>, key: &str| {
        tables
            .remove(key)
            .ok_or_else(|| GridError::Schema(format!("missing mpc.{key}")))
    };
    let mut tables = tables;
    Ok(CaseDoc {
        base_mva: base_mva.ok_or_else(|| GridError::Schema("missing mpc.baseMVA".into()))?,
        bus: take(&mut tables, "bus")?,
        gen: take(&mut tables, "gen")?,
        branch: take(&mut tables, "branch")?,
        gencost: take(&mut tables, "gencost")?,
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE30: &str = include_str!("../cases/case30.m");

    pub(crate) fn two_bus_json() -> String {
        serde_json::json!({
            "base_mva": 100.0,
            "bus": [
                [1, 3, 0.0, 0.0, 0, 0, 1, 1.0, 0.0, 135, 1, 1.05, 0.95],
                [2, 1, 50.0, 10.0, 0, 0, 1, 1.0, 0.0, 135, 1, 1.05, 0.95],
            ],
            "gen": [[1, 50.0, 0.0, 100.0, -100.0, 1.0, 100, 1, 200.0, 0.0]],
            "branch": [[1, 2, 0.0, 0.1, 0.0, 0, 0, 0, 0, 0, 1, -360, 360]],
            "gencost": [[2, 0, 0, 3, 0.01, 1.0, 0.0]],
        })
        .to_string()
    }

    #[test]
    fn minimal_two_bus_case() {
        let net = parse_case(&two_bus_json()).unwrap();
        assert_eq!(net.n_bus(), 2);
        assert_eq!(net.n_branch(), 1);
        assert_eq!(net.n_gen(), 1);
        assert_eq!(net.pu.p_load[1], 0.5);
        assert_eq!(net.slack(), 0);
    }

    #[test]
    fn case30_counts() {
        let net = parse_case(CASE30).unwrap();
        assert_eq!(net.n_bus(), 30);
        assert_eq!(net.n_branch(), 41);
        assert_eq!(net.n_gen(), 6);
        // spot checks against the distributed case
        let d8 = net.dense_bus_of_id(8).unwrap();
        assert_eq!(net.pu.p_load[d8] * net.base_mva, 30.0);
        assert_eq!(net.pu.q_load[d8] * net.base_mva, 30.0);
        let l68 = (0..net.n_branch())
            .find(|&l| net.branch(l).from == 6 && net.branch(l).to == 8)
            .unwrap();
        assert_eq!(net.pu.s_rate[l68] * net.base_mva, 32.0);
    }

    #[test]
    fn unknown_bus_reference() {
        let mut doc: serde_json::Value = serde_json::from_str(&two_bus_json()).unwrap();
        doc["branch"][0][1] = serde_json::json!(99);
        let err = parse_case(&doc.to_string()).unwrap_err();
        assert!(matches!(err, GridError::UnknownBus { id: 99, .. }), "{err}");
    }

    #[test]
    fn duplicate_bus_id() {
        let mut doc: serde_json::Value = serde_json::from_str(&two_bus_json()).unwrap();
        doc["bus"][1][0] = serde_json::json!(1);
        let err = parse_case(&doc.to_string()).unwrap_err();
        assert!(matches!(err, GridError::DuplicateBus(1)), "{err}");
    }

    #[test]
    fn no_slack_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(&two_bus_json()).unwrap();
        doc["bus"][0][1] = serde_json::json!(2);
        let err = parse_case(&doc.to_string()).unwrap_err();
        assert!(matches!(err, GridError::NoSlack), "{err}");
    }

    #[test]
    fn disconnected_grid_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(&two_bus_json()).unwrap();
        doc["bus"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!([3, 1, 1.0, 0.0, 0, 0, 1, 1.0, 0.0, 135, 1, 1.05, 0.95]));
        let err = parse_case(&doc.to_string()).unwrap_err();
        assert!(matches!(err, GridError::Disconnected(3)), "{err}");
    }

    #[test]
    fn scale_loads_linearity() {
        let net = parse_case(CASE30).unwrap();
        let total: f64 = net.total_p_load();
        let scaled = net.scale_loads(1.05).unwrap();
        assert!((scaled.total_p_load() - 1.05 * total).abs() < 1e-12);
        let same = net.scale_loads(1.0).unwrap();
        assert_eq!(serialize_case(&same), serialize_case(&net));
        assert!(net.scale_loads(0.0).is_err());
    }

    #[test]
    fn per_unit_conversion() {
        let net = parse_case(CASE30).unwrap();
        for d in 0..net.n_bus() {
            let mw = net.bus(d).p_load;
            if mw != 0.0 {
                assert!((net.pu.p_load[d] * net.base_mva - mw).abs() / mw.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_identical() {
        for text in [CASE30.to_string(), two_bus_json()] {
            let n1 = parse_case(&text).unwrap();
            let n2 = parse_case(&serialize_case(&n1)).unwrap();
            assert_eq!(n1.base_mva, n2.base_mva);
            assert_eq!(n1.buses, n2.buses);
            assert_eq!(n1.branches, n2.branches);
            assert_eq!(n1.generators, n2.generators);
            // dense pu views coincide as well
            assert_eq!(n1.pu.p_load, n2.pu.p_load);
            assert_eq!(n1.pu.s_rate, n2.pu.s_rate);
        }
    }

    #[test]
    fn out_of_service_branch_not_indexed() {
        let mut doc: serde_json::Value = serde_json::from_str(&two_bus_json()).unwrap();
        doc["branch"].as_array_mut().unwrap().push(serde_json::json!([
            1, 2, 0.0, 0.2, 0.0, 0, 0, 0, 0, 0, 0, -360, 360
        ]));
        let net = parse_case(&doc.to_string()).unwrap();
        assert_eq!(net.branches.len(), 2);
        assert_eq!(net.n_branch(), 1);
        // round trip keeps the dead branch
        let n2 = parse_case(&serialize_case(&net)).unwrap();
        assert_eq!(n2.branches.len(), 2);
    }

    #[test]
    fn matpower_syntax_error_reported_with_line() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 135 1 1.05 oops;\n];";
        match parse_case(text) {
            Err(GridError::Syntax { line, .. }) => assert!(line >= 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }
}
