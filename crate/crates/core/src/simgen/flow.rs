//! Linearized per-phase power flow on a switchable feeder.
//!
//! Every phase is solved independently on the graph of energized branches
//! carrying it. Branch flows `(P, Q)` satisfy bus conservation; each
//! independent loop adds the two components of the linearized voltage-drop
//! law `Σ ±(r + jx)(P − jQ) = 0`. Bus voltages then follow a spanning tree
//! from the source with `V_to = V_from − (rP + xQ) / V0`.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::feeder::{FeederModel, LoadType, Phase, PhaseSet};
use crate::error::{Error, Result};
use crate::schema::{PredictorSchema, TopologyLabel};

/// Largest number of independent loops an admissible configuration may have.
pub const MAX_LOOPS: usize = 1;

#[derive(Debug, Clone)]
struct NetBranch {
    from: usize,
    to: usize,
    phases: PhaseSet,
    r: f64,
    x: f64,
    switch: Option<usize>,
    pd: Option<usize>,
}

#[derive(Debug, Clone)]
struct NetLoad {
    id: String,
    bus: usize,
    kind: LoadType,
    phases: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone)]
struct NetDer {
    bus: usize,
    phases: PhaseSet,
    tan_phi: f64,
    metered: bool,
}

/// A validated feeder with resolved indices and its admissible topologies.
#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    feeder: FeederModel,
    n_bus: usize,
    source: usize,
    substation: usize,
    branches: Vec<NetBranch>,
    loads: Vec<NetLoad>,
    ders: Vec<NetDer>,
    configs: Vec<(String, Vec<bool>)>,
    topologies: Vec<TopologyLabel>,
    schema: PredictorSchema,
}

/// Breadth-first spanning tree of one phase.
struct Component {
    reachable: Vec<bool>,
    /// `(branch, parent bus)` for every reachable bus except the source.
    parent: Vec<Option<(usize, usize)>>,
    order: Vec<usize>,
    edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Per-bus phase magnitudes; zero on absent or de-energized phases.
    pub voltages: Vec<[f64; 3]>,
    pub substation_p: f64,
    pub substation_q: f64,
    pub losses_p: f64,
    pub losses_q: f64,
    pub der_p: Vec<f64>,
    pub der_q: Vec<f64>,
    /// Load served per load (active power, summed over phases).
    pub load_p: Vec<f64>,
}

/// `(V⁺, V⁻)` of three magnitudes placed at 0°, −120° and +120°.
pub fn sequence_components(v: [f64; 3]) -> (f64, f64) {
    let deg = std::f64::consts::PI / 180.0;
    let a = Complex64::from_polar(1.0, 120.0 * deg);
    let a2 = a * a;
    let va = Complex64::from_polar(v[0], 0.0);
    let vb = Complex64::from_polar(v[1], -120.0 * deg);
    let vc = Complex64::from_polar(v[2], 120.0 * deg);
    let pos = (va + a * vb + a2 * vc).norm() / 3.0;
    let neg = (va + a2 * vb + a * vc).norm() / 3.0;
    (pos, neg)
}

impl PreparedNetwork {
    pub fn new(feeder: &FeederModel) -> Result<Self> {
        feeder.validate()?;
        let bus_index: HashMap<&str, usize> = feeder
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        let switch_ids = feeder.switch_ids();
        let switch_index: HashMap<&str, usize> =
            switch_ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let pd_of_branch: HashMap<&str, usize> = feeder
            .protective_devices
            .iter()
            .enumerate()
            .map(|(i, pd)| (pd.branch.as_str(), i))
            .collect();

        let branches = feeder
            .branches
            .iter()
            .map(|b| NetBranch {
                from: bus_index[b.from.as_str()],
                to: bus_index[b.to.as_str()],
                phases: b.phases,
                r: b.r,
                x: b.x,
                switch: b.switch_id.as_deref().map(|s| switch_index[s]),
                pd: pd_of_branch.get(b.id.as_str()).copied(),
            })
            .collect();
        let loads = feeder
            .loads
            .iter()
            .map(|l| NetLoad {
                id: l.id.clone(),
                bus: bus_index[l.bus.as_str()],
                kind: l.kind,
                phases: l.phases.iter().map(|p| (p.phase.index(), p.p, p.q)).collect(),
            })
            .collect();
        let ders = feeder
            .ders
            .iter()
            .map(|d| NetDer {
                bus: bus_index[d.bus.as_str()],
                phases: d.phases,
                tan_phi: d.power_factor.acos().tan(),
                metered: d.metered,
            })
            .collect();

        let mut names = Vec::new();
        for q in ["P", "Q", "V+", "V-"] {
            names.push(format!("{}.{q}", feeder.substation.id));
        }
        for d in feeder.ders.iter().filter(|d| d.metered) {
            for q in ["P", "V+", "V-"] {
                names.push(format!("{}.{q}", d.id));
            }
        }

        let mut net = PreparedNetwork {
            feeder: feeder.clone(),
            n_bus: feeder.buses.len(),
            source: bus_index[feeder.source_bus.as_str()],
            substation: bus_index[feeder.substation.bus.as_str()],
            branches,
            loads,
            ders,
            configs: Vec::new(),
            topologies: Vec::new(),
            schema: PredictorSchema::new(names)?,
        };
        net.configs = net.admissible_configs(&switch_index)?;
        let n_pd = feeder.protective_devices.len();
        for (id, _) in &net.configs {
            for bits in 0..(1usize << n_pd) {
                let status = (0..n_pd).map(|i| bits >> (n_pd - 1 - i) & 1 == 1).collect();
                net.topologies.push(TopologyLabel::new(id.clone(), status));
            }
        }
        Ok(net)
    }

    pub fn feeder(&self) -> &FeederModel {
        &self.feeder
    }

    /// Admissible topologies: switch configurations × protective-device
    /// states, configuration-major.
    pub fn topologies(&self) -> &[TopologyLabel] {
        &self.topologies
    }

    /// Substation `(P, Q, V⁺, V⁻)` followed by `(P, V⁺, V⁻)` per metered DER.
    pub fn schema(&self) -> &PredictorSchema {
        &self.schema
    }

    pub fn num_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn num_ders(&self) -> usize {
        self.ders.len()
    }

    pub fn der_p_mean(&self, j: usize) -> f64 {
        self.feeder.ders[j].p_mean
    }

    fn admissible_configs(&self, switch_index: &HashMap<&str, usize>) -> Result<Vec<(String, Vec<bool>)>> {
        let n_sw = switch_index.len();
        let mut out = Vec::new();
        if self.feeder.switch_configs.is_empty() {
            for mask in 0..(1usize << n_sw) {
                let closed: Vec<bool> = (0..n_sw).map(|i| mask >> i & 1 == 1).collect();
                if self.check_config(&closed).is_ok() {
                    out.push((format!("C{}", out.len() + 1), closed));
                }
            }
            if out.is_empty() {
                return Err(Error::NoValidTopology);
            }
        } else {
            for cfg in &self.feeder.switch_configs {
                let mut closed = vec![false; n_sw];
                for s in &cfg.closed {
                    closed[switch_index[s.as_str()]] = true;
                }
                self.check_config(&closed).map_err(|m| {
                    Error::feeder(format!("switch_configs[{}]", cfg.id), m)
                })?;
                out.push((cfg.id.clone(), closed));
            }
        }
        Ok(out)
    }

    /// Loads, DERs and the substation must be energized with every device
    /// closed; DERs and the substation must stay energized with every device
    /// open; no phase may have more than [`MAX_LOOPS`] loops.
    fn check_config(&self, closed: &[bool]) -> std::result::Result<(), String> {
        let n_pd = self.feeder.protective_devices.len();
        for pd_open in [false, true] {
            let active = self.active_branches(closed, &vec![pd_open; n_pd]);
            for phase in Phase::ALL {
                let comp = self.component(phase, &active);
                let on = |bus: usize| comp.reachable[bus];
                if !on(self.substation) {
                    return Err("substation is not energized".into());
                }
                for (j, d) in self.ders.iter().enumerate() {
                    if d.phases.contains(phase) && !on(d.bus) {
                        let id = &self.feeder.ders[j].id;
                        return Err(if pd_open {
                            format!("DER {id} sits downstream of a protective device")
                        } else {
                            format!("DER {id} is not energized")
                        });
                    }
                }
                if !pd_open {
                    for l in &self.loads {
                        if l.phases.iter().any(|&(ph, _, _)| ph == phase.index()) && !on(l.bus) {
                            return Err(format!("load {} is not supplied", l.id));
                        }
                    }
                    let loops = comp.edges.len() + 1 - comp.order.len();
                    if loops > MAX_LOOPS {
                        return Err(format!("{loops} loops on phase {phase:?}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn active_branches(&self, closed: &[bool], pd_open: &[bool]) -> Vec<bool> {
        self.branches
            .iter()
            .map(|b| b.switch.map_or(true, |s| closed[s]) && b.pd.map_or(true, |p| !pd_open[p]))
            .collect()
    }

    fn component(&self, phase: Phase, active: &[bool]) -> Component {
        let mut reachable = vec![false; self.n_bus];
        let mut parent = vec![None; self.n_bus];
        let mut order = vec![self.source];
        reachable[self.source] = true;
        let mut queue = VecDeque::from([self.source]);
        while let Some(u) = queue.pop_front() {
            for (bi, b) in self.branches.iter().enumerate() {
                if !active[bi] || !b.phases.contains(phase) {
                    continue;
                }
                let v = if b.from == u {
                    b.to
                } else if b.to == u {
                    b.from
                } else {
                    continue;
                };
                if !reachable[v] {
                    reachable[v] = true;
                    parent[v] = Some((bi, u));
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
        let edges = (0..self.branches.len())
            .filter(|&bi| {
                let b = &self.branches[bi];
                active[bi] && b.phases.contains(phase) && reachable[b.from]
            })
            .collect();
        Component {
            reachable,
            parent,
            order,
            edges,
        }
    }

    fn config_index(&self, label: &TopologyLabel) -> Result<usize> {
        let unknown = || Error::InvalidParameter {
            name: "topology",
            message: format!("{label} is not a topology of feeder {}", self.feeder.name),
        };
        if label.pd_status.len() != self.feeder.protective_devices.len() {
            return Err(unknown());
        }
        self.configs
            .iter()
            .position(|(id, _)| *id == label.switch_config)
            .ok_or_else(unknown)
    }

    /// Linearized voltage drop across branch `b` carrying `(p, q)`, per unit of `V0`.
    fn drop(&self, b: usize, p: f64, q: f64) -> f64 {
        let br = &self.branches[b];
        (br.r * p + br.x * q) / self.feeder.v0
    }

    /// Solves branch flows of one phase for the given per-bus net demand.
    fn phase_flows(&self, comp: &Component, demand_p: &[f64], demand_q: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut flow = vec![(0.0, 0.0); self.branches.len()];
        let tree: Vec<usize> = comp.order[1..]
            .iter()
            .map(|&u| comp.parent[u].expect("non-source bus has a parent").0)
            .collect();
        let chords: Vec<usize> = comp.edges.iter().copied().filter(|e| !tree.contains(e)).collect();

        if chords.is_empty() {
            // radial: each tree branch carries the demand of its subtree
            let mut sub_p = demand_p.to_vec();
            let mut sub_q = demand_q.to_vec();
            for &u in comp.order[1..].iter().rev() {
                let (b, par) = comp.parent[u].expect("non-source bus has a parent");
                let sign = if self.branches[b].from == par { 1.0 } else { -1.0 };
                flow[b] = (sign * sub_p[u], sign * sub_q[u]);
                sub_p[par] += sub_p[u];
                sub_q[par] += sub_q[u];
            }
            return Ok(flow);
        }

        let m = comp.edges.len();
        let col: HashMap<usize, usize> = comp.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut a = DMatrix::<f64>::zeros(2 * m, 2 * m);
        let mut rhs = DVector::<f64>::zeros(2 * m);
        let mut row = 0;
        for &u in &comp.order[1..] {
            for &e in &comp.edges {
                let b = &self.branches[e];
                let s = if b.to == u {
                    1.0
                } else if b.from == u {
                    -1.0
                } else {
                    continue;
                };
                a[(row, col[&e])] = s;
                a[(row + 1, m + col[&e])] = s;
            }
            rhs[row] = demand_p[u];
            rhs[row + 1] = demand_q[u];
            row += 2;
        }
        for &e in &chords {
            // tree path from the chord's `from` end to its `to` end, each step
            // signed by whether it follows the branch orientation
            let (u, v) = (self.branches[e].from, self.branches[e].to);
            let mut steps: Vec<(usize, f64)> = Vec::new();
            let up_u = self.path_to_source(comp, u);
            let up_v = self.path_to_source(comp, v);
            let common = up_u
                .iter()
                .rev()
                .zip(up_v.iter().rev())
                .take_while(|(x, y)| x == y)
                .count();
            for w in 0..up_u.len() - common {
                let node = up_u[w];
                let (b, _) = comp.parent[node].expect("path bus has a parent");
                steps.push((b, if self.branches[b].from == node { 1.0 } else { -1.0 }));
            }
            for w in (0..up_v.len() - common).rev() {
                let node = up_v[w];
                let (b, _) = comp.parent[node].expect("path bus has a parent");
                steps.push((b, if self.branches[b].to == node { 1.0 } else { -1.0 }));
            }
            steps.push((e, -1.0));
            for (b, s) in steps {
                let br = &self.branches[b];
                let c = col[&b];
                a[(row, c)] += s * br.r;
                a[(row, m + c)] += s * br.x;
                a[(row + 1, c)] += s * br.x;
                a[(row + 1, m + c)] -= s * br.r;
            }
            row += 2;
        }
        let sol = a
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::InvalidParameter {
                name: "flow",
                message: e.to_string(),
            })?;
        for (i, &e) in comp.edges.iter().enumerate() {
            flow[e] = (sol[i], sol[m + i]);
        }
        Ok(flow)
    }

    fn path_to_source(&self, comp: &Component, mut u: usize) -> Vec<usize> {
        let mut path = vec![u];
        while let Some((_, p)) = comp.parent[u] {
            path.push(p);
            u = p;
        }
        path
    }

    /// Solves the flow for one topology, load scales (one per load) and DER
    /// active outputs (one per DER).
    pub fn solve(&self, topology: &TopologyLabel, load_scale: &[f64], der_p: &[f64]) -> Result<FlowSolution> {
        if load_scale.len() != self.loads.len() || der_p.len() != self.ders.len() {
            return Err(Error::InvalidParameter {
                name: "scenario",
                message: format!(
                    "{} load scales and {} DER outputs for {} loads and {} DERs",
                    load_scale.len(),
                    der_p.len(),
                    self.loads.len(),
                    self.ders.len()
                ),
            });
        }
        let k = self.config_index(topology)?;
        let closed = &self.configs[k].1;
        let active = self.active_branches(closed, &topology.pd_status);
        let reference = self.active_branches(closed, &vec![false; topology.pd_status.len()]);
        let comps: Vec<Component> = Phase::ALL.iter().map(|&ph| self.component(ph, &active)).collect();
        let ref_comps: Vec<Component> = Phase::ALL.iter().map(|&ph| self.component(ph, &reference)).collect();

        for l in &self.loads {
            for &(ph, _, _) in &l.phases {
                if !comps[ph].reachable[l.bus] && !ref_comps[ph].reachable[l.bus] {
                    return Err(Error::DisconnectedLoadWithoutPd(l.id.clone()));
                }
            }
        }

        let v0 = self.feeder.v0;
        let mut voltages = vec![[0.0; 3]; self.n_bus];
        for (ph, comp) in comps.iter().enumerate() {
            for &u in &comp.order {
                voltages[u][ph] = v0;
            }
        }
        let refine = self.loads.iter().any(|l| l.kind != LoadType::ConstantPower);
        let sweeps = if refine { 2 } else { 1 };
        let mut flows = vec![vec![(0.0, 0.0); self.branches.len()]; 3];
        let mut served = vec![0.0; self.loads.len()];
        let mut load_pq = [0.0f64; 2];
        for _ in 0..sweeps {
            let mut dp = vec![vec![0.0; self.n_bus]; 3];
            let mut dq = vec![vec![0.0; self.n_bus]; 3];
            served.iter_mut().for_each(|s| *s = 0.0);
            load_pq = [0.0; 2];
            for (li, l) in self.loads.iter().enumerate() {
                for &(ph, p, q) in &l.phases {
                    if !comps[ph].reachable[l.bus] {
                        continue;
                    }
                    let factor = (voltages[l.bus][ph] / v0).powi(l.kind.voltage_exponent());
                    let (pl, ql) = (p * load_scale[li] * factor, q * load_scale[li] * factor);
                    dp[ph][l.bus] += pl;
                    dq[ph][l.bus] += ql;
                    served[li] += pl;
                    load_pq[0] += pl;
                    load_pq[1] += ql;
                }
            }
            for (j, d) in self.ders.iter().enumerate() {
                let share = der_p[j] / d.phases.count() as f64;
                for ph in d.phases.iter() {
                    dp[ph.index()][d.bus] -= share;
                    dq[ph.index()][d.bus] += share * d.tan_phi;
                }
            }
            for ph in 0..3 {
                let comp = &comps[ph];
                flows[ph] = self.phase_flows(comp, &dp[ph], &dq[ph])?;
                for &u in &comp.order[1..] {
                    let (b, par) = comp.parent[u].expect("non-source bus has a parent");
                    let (p, q) = flows[ph][b];
                    let d = self.drop(b, p, q);
                    voltages[u][ph] = if self.branches[b].from == par {
                        voltages[par][ph] - d
                    } else {
                        voltages[par][ph] + d
                    };
                }
            }
        }

        let (mut losses_p, mut losses_q) = (0.0, 0.0);
        for (ph, comp) in comps.iter().enumerate() {
            for &e in &comp.edges {
                let (p, q) = flows[ph][e];
                let s2 = (p * p + q * q) / (v0 * v0);
                losses_p += self.branches[e].r * s2;
                losses_q += self.branches[e].x * s2;
            }
        }
        let der_q: Vec<f64> = self.ders.iter().zip(der_p).map(|(d, p)| -p * d.tan_phi).collect();
        let substation_p = load_pq[0] - der_p.iter().sum::<f64>() + losses_p;
        let substation_q = load_pq[1] - der_q.iter().sum::<f64>() + losses_q;
        Ok(FlowSolution {
            voltages,
            substation_p,
            substation_q,
            losses_p,
            losses_q,
            der_p: der_p.to_vec(),
            der_q,
            load_p: served,
        })
    }

    /// Noise-free measurement vector in [`Self::schema`] order.
    pub fn measure(&self, sol: &FlowSolution) -> Vec<f64> {
        let (sp, sn) = sequence_components(sol.voltages[self.substation]);
        let mut out = vec![sol.substation_p, sol.substation_q, sp, sn];
        for (j, d) in self.ders.iter().enumerate().filter(|(_, d)| d.metered) {
            let (vp, vn) = sequence_components(sol.voltages[d.bus]);
            out.extend([sol.der_p[j], vp, vn]);
        }
        out
    }
}

/// Convenience wrapper over [`PreparedNetwork::solve`].
pub fn solve_linearized_flow(
    feeder: &FeederModel,
    topology: &TopologyLabel,
    load_scale: &[f64],
    der_p: &[f64],
) -> Result<FlowSolution> {
    PreparedNetwork::new(feeder)?.solve(topology, load_scale, der_p)
}
