//! Module graphs and the training schedule.
//!
//! Modules live on layers; a connection binds the shared latent of a module on
//! layer `m - 1` to a slot of a module on layer `m`. Each training round sweeps
//! every module bottom-up, then fires every connector top-down.

use serde::{Deserialize, Serialize};

use crate::connector::{mh_round, mp_round, sir_round};
use crate::error::GraphError;
use crate::message::CategoricalMessage;
use crate::module::{Arity, Module};
use crate::rng::derived;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModuleId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConnectionKind {
    Mp,
    Sir { samples: usize },
    Mh { steps: usize, burn_in: usize },
}

impl ConnectionKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Mp => "mp",
            Self::Sir { .. } => "sir",
            Self::Mh { .. } => "mh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub lower: ModuleId,
    pub upper: ModuleId,
    pub kind: ConnectionKind,
    /// Upper-side slot the lower latent is bound to.
    pub slot: usize,
}

/// Read-only view of a registered module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleHandle {
    pub id: ModuleId,
    pub name: String,
    pub layer: usize,
    pub arity: Arity,
}

struct Node {
    name: String,
    layer: usize,
    module: Box<dyn Module>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub round_index: usize,
    /// `(module name, log-likelihood proxy)` in registration order.
    pub log_likelihood: Vec<(String, f64)>,
    /// Largest mean L1 change between successive top-down messages over all
    /// message-passing connections; `None` before a previous round exists.
    pub message_change: Option<f64>,
    pub degenerate_products: usize,
    pub all_zero_selections: usize,
    pub zero_denominators: usize,
}

#[derive(Default)]
pub struct ModuleGraph {
    nodes: Vec<Node>,
    connections: Vec<Connection>,
    last_top_down: Vec<Option<Vec<CategoricalMessage>>>,
}

impl std::fmt::Debug for ModuleGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModuleGraph")
            .field("modules", &self.handles())
            .field("connections", &self.connections)
            .finish()
    }
}

impl ModuleGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        layer: usize,
        module: Box<dyn Module>,
    ) -> Result<ModuleId, GraphError> {
        let name = name.into();
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(GraphError::DuplicateModule(name));
        }
        self.nodes.push(Node { name, layer, module });
        Ok(ModuleId(self.nodes.len() - 1))
    }

    pub fn id(&self, name: &str) -> Result<ModuleId, GraphError> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(ModuleId)
            .ok_or_else(|| GraphError::UnknownModule(name.to_owned()))
    }

    pub fn handle(&self, id: ModuleId) -> Result<ModuleHandle, GraphError> {
        let node = self.node(id)?;
        Ok(ModuleHandle {
            id,
            name: node.name.clone(),
            layer: node.layer,
            arity: node.module.latent_arity(),
        })
    }

    pub fn handles(&self) -> Vec<ModuleHandle> {
        (0..self.nodes.len())
            .map(|i| self.handle(ModuleId(i)).expect("index in range"))
            .collect()
    }

    fn node(&self, id: ModuleId) -> Result<&Node, GraphError> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| GraphError::UnknownModule(format!("#{}", id.0)))
    }

    pub fn module(&self, id: ModuleId) -> Result<&dyn Module, GraphError> {
        Ok(self.node(id)?.module.as_ref())
    }

    pub fn module_mut(&mut self, id: ModuleId) -> Result<&mut dyn Module, GraphError> {
        let node = self
            .nodes
            .get_mut(id.0)
            .ok_or_else(|| GraphError::UnknownModule(format!("#{}", id.0)))?;
        Ok(node.module.as_mut())
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    /// Binds `lower`'s latent to slot `slot` of `upper`.
    pub fn connect(
        &mut self,
        lower: ModuleId,
        upper: ModuleId,
        kind: ConnectionKind,
        slot: usize,
    ) -> Result<usize, GraphError> {
        let lo = self.node(lower)?;
        let up = self.node(upper)?;
        if lower == upper || self.reaches(upper, lower) {
            return Err(GraphError::Cycle {
                lower: lo.name.clone(),
                upper: up.name.clone(),
            });
        }
        if lo.layer + 1 != up.layer {
            return Err(GraphError::LayerMismatch {
                lower: lo.name.clone(),
                lower_layer: lo.layer,
                upper: up.name.clone(),
                upper_layer: up.layer,
            });
        }
        match (kind, lo.module.latent_arity()) {
            (ConnectionKind::Mp, Arity::Unbounded) => {
                return Err(GraphError::ArityMismatch(lo.name.clone()));
            }
            (_, Arity::Finite(k)) => {
                if let Some(slot_k) = up.module.slot_arity(slot) {
                    if slot_k != k {
                        return Err(GraphError::InvalidArgument(format!(
                            "`{}` has K = {k} but slot {slot} of `{}` expects {slot_k}",
                            lo.name, up.name
                        )));
                    }
                }
            }
            _ => {}
        }
        match kind {
            ConnectionKind::Sir { samples: 0 } => {
                return Err(GraphError::InvalidArgument("SIR needs at least one sample".into()))
            }
            ConnectionKind::Mh { steps, burn_in } if burn_in >= steps => {
                return Err(GraphError::InvalidArgument("MH burn-in must be below the step count".into()))
            }
            _ => {}
        }
        self.connections.push(Connection {
            lower,
            upper,
            kind,
            slot,
        });
        self.last_top_down.push(None);
        Ok(self.connections.len() - 1)
    }

    /// True when `to` is reachable from `from` following lower -> upper edges.
    fn reaches(&self, from: ModuleId, to: ModuleId) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if std::mem::replace(&mut seen[n.0], true) {
                continue;
            }
            stack.extend(self.connections.iter().filter(|c| c.lower == n).map(|c| c.upper));
        }
        false
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for c in &self.connections {
            let lo = self.node(c.lower)?;
            let up = self.node(c.upper)?;
            if lo.layer + 1 != up.layer {
                return Err(GraphError::LayerMismatch {
                    lower: lo.name.clone(),
                    lower_layer: lo.layer,
                    upper: up.name.clone(),
                    upper_layer: up.layer,
                });
            }
            if c.kind == ConnectionKind::Mp && lo.module.latent_arity() == Arity::Unbounded {
                return Err(GraphError::ArityMismatch(lo.name.clone()));
            }
            if lo.module.instances() != up.module.instances() {
                return Err(GraphError::InstanceMismatch {
                    lower: lo.module.instances(),
                    upper: up.module.instances(),
                });
            }
        }
        Ok(())
    }

    /// Mutable access to both endpoints of a connection.
    fn endpoints(&mut self, c: &Connection) -> (&mut dyn Module, &mut dyn Module) {
        let (lo, up) = (c.lower.0, c.upper.0);
        if lo < up {
            let (a, b) = self.nodes.split_at_mut(up);
            (a[lo].module.as_mut(), b[0].module.as_mut())
        } else {
            let (a, b) = self.nodes.split_at_mut(lo);
            (b[0].module.as_mut(), a[up].module.as_mut())
        }
    }

    /// Runs `rounds` scheduler rounds: every module sweeps once (lowest layer
    /// first), then every connector fires once (highest upper layer first).
    pub fn train(&mut self, rounds: usize, seed: u64) -> Result<Vec<TrainDiagnostics>, GraphError> {
        self.validate()?;
        let mut sweep_order: Vec<usize> = (0..self.nodes.len()).collect();
        sweep_order.sort_by_key(|&i| (self.nodes[i].layer, i));
        let mut fire_order: Vec<usize> = (0..self.connections.len()).collect();
        fire_order.sort_by_key(|&c| {
            let layer = self.nodes[self.connections[c].upper.0].layer;
            (std::cmp::Reverse(layer), c)
        });

        let mut diagnostics = Vec::with_capacity(rounds);
        for round in 0..rounds {
            let mut rng = derived(seed, round as u64);
            let mut log_likelihood = vec![(String::new(), 0.0); self.nodes.len()];
            for &i in &sweep_order {
                let ll = self.nodes[i].module.sweep(&mut rng)?;
                if !ll.is_finite() {
                    return Err(GraphError::NonFiniteLikelihood {
                        module: self.nodes[i].name.clone(),
                        round,
                    });
                }
                log_likelihood[i] = (self.nodes[i].name.clone(), ll);
            }

            let mut diag = TrainDiagnostics {
                round_index: round,
                log_likelihood,
                message_change: None,
                degenerate_products: 0,
                all_zero_selections: 0,
                zero_denominators: 0,
            };
            for &ci in &fire_order {
                let conn = self.connections[ci].clone();
                let (lower, upper) = self.endpoints(&conn);
                match conn.kind {
                    ConnectionKind::Mp => {
                        let out = mp_round(lower, upper, conn.slot, &mut rng)?;
                        diag.degenerate_products += out.degenerate.len();
                        if let Some(prev) = &self.last_top_down[ci] {
                            let change = mean_l1(prev, &out.top_down);
                            diag.message_change =
                                Some(diag.message_change.map_or(change, |c: f64| c.max(change)));
                        }
                        self.last_top_down[ci] = Some(out.top_down);
                    }
                    ConnectionKind::Sir { samples } => {
                        let out = sir_round(lower, upper, conn.slot, samples, &mut rng)?;
                        diag.all_zero_selections += out.all_zero.len();
                    }
                    ConnectionKind::Mh { steps, burn_in } => {
                        let out = mh_round(lower, upper, conn.slot, steps, burn_in, &mut rng)?;
                        diag.zero_denominators += out.zero_denominator;
                    }
                }
            }
            diagnostics.push(diag);
        }
        Ok(diagnostics)
    }

    /// Concatenated fingerprints of every module, in registration order.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.nodes.iter().flat_map(|n| n.module.fingerprint()).collect()
    }
}

fn mean_l1(a: &[CategoricalMessage], b: &[CategoricalMessage]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x.l1_distance(y)).sum::<f64>() / a.len() as f64
}
