//! Hierarchical Pitman-Yor n-gram model over integer symbols.
//!
//! Contexts form a suffix trie: the root is the empty context and each child
//! extends its parent's context by one older symbol. Every node keeps a
//! Chinese-restaurant seating. A customer that opens a new table at a node is
//! passed on to the parent node, and a customer opening a table at the root is
//! passed to the base measure, which is owned by the caller.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap as HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::LmError;
use crate::message::sample_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyParams {
    pub discount: f64,
    pub concentration: f64,
}

impl PyParams {
    pub fn new(discount: f64, concentration: f64) -> Result<Self, LmError> {
        if !(0.0..1.0).contains(&discount) || !(concentration > -discount) {
            return Err(LmError::InvalidArgument(format!(
                "need 0 <= d < 1 and theta > -d, got d = {discount}, theta = {concentration}"
            )));
        }
        Ok(Self {
            discount,
            concentration,
        })
    }
}

impl Default for PyParams {
    fn default() -> Self {
        Self {
            discount: 0.5,
            concentration: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Seating {
    customers: u32,
    /// Customers per table.
    tables: Vec<u32>,
}

/// Seating arrangement at one context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Restaurant {
    seats: HashMap<u32, Seating>,
    total_customers: u32,
    total_tables: u32,
}

impl Restaurant {
    pub fn customers(&self, w: u32) -> u32 {
        self.seats.get(&w).map_or(0, |s| s.customers)
    }

    pub fn tables(&self, w: u32) -> u32 {
        self.seats.get(&w).map_or(0, |s| s.tables.len() as u32)
    }

    pub fn total_customers(&self) -> u32 {
        self.total_customers
    }

    pub fn total_tables(&self) -> u32 {
        self.total_tables
    }

    pub fn is_empty(&self) -> bool {
        self.total_customers == 0
    }

    /// Predictive probability of `w` given the parent's predictive `parent_prob`.
    pub fn prob(&self, w: u32, parent_prob: f64, params: PyParams) -> f64 {
        let (d, theta) = (params.discount, params.concentration);
        let total = self.total_customers as f64;
        let denom = theta + total;
        if denom <= 0.0 {
            return parent_prob;
        }
        let (c, t) = self
            .seats
            .get(&w)
            .map_or((0.0, 0.0), |s| (s.customers as f64, s.tables.len() as f64));
        (c - d * t).max(0.0) / denom + (theta + d * self.total_tables as f64) / denom * parent_prob
    }

    /// Weight the parent predictive receives in [`Restaurant::prob`].
    pub fn backoff(&self, params: PyParams) -> f64 {
        let denom = params.concentration + self.total_customers as f64;
        if denom <= 0.0 {
            return 1.0;
        }
        (params.concentration + params.discount * self.total_tables as f64) / denom
    }

    /// Seats a customer for `w`. Returns true if a new table was opened.
    pub fn add<R: Rng + ?Sized>(&mut self, w: u32, parent_prob: f64, params: PyParams, rng: &mut R) -> bool {
        let new_table_weight = (params.concentration + params.discount * self.total_tables as f64) * parent_prob;
        let seating = self.seats.entry(w).or_default();
        let opened = if seating.tables.is_empty() {
            true
        } else {
            let mut weights: Vec<f64> = seating
                .tables
                .iter()
                .map(|&c| (c as f64 - params.discount).max(0.0))
                .collect();
            weights.push(new_table_weight.max(0.0));
            let pick = if weights.iter().sum::<f64>() > 0.0 {
                sample_index(&weights, rng)
            } else {
                0
            };
            if pick < seating.tables.len() {
                seating.tables[pick] += 1;
                false
            } else {
                true
            }
        };
        if opened {
            seating.tables.push(1);
            self.total_tables += 1;
        }
        seating.customers += 1;
        self.total_customers += 1;
        opened
    }

    /// Unseats a customer of `w`, chosen proportionally to table size. Returns
    /// true if that emptied a table.
    pub fn remove<R: Rng + ?Sized>(&mut self, w: u32, rng: &mut R) -> Result<bool, LmError> {
        let Some(seating) = self.seats.get_mut(&w) else {
            return Err(LmError::RemoveFromEmpty(w.to_string()));
        };
        let weights: Vec<f64> = seating.tables.iter().map(|&c| c as f64).collect();
        let pick = sample_index(&weights, rng);
        seating.tables[pick] -= 1;
        seating.customers -= 1;
        self.total_customers -= 1;
        let closed = seating.tables[pick] == 0;
        if closed {
            seating.tables.swap_remove(pick);
            self.total_tables -= 1;
        }
        if seating.customers == 0 {
            self.seats.remove(&w);
        }
        Ok(closed)
    }

    /// Checks tally consistency, `1 <= t <= c` and the stored totals.
    pub fn check(&self) -> Result<(), String> {
        let mut customers = 0;
        let mut tables = 0;
        for (w, s) in &self.seats {
            let tally: u32 = s.tables.iter().sum();
            if tally != s.customers {
                return Err(format!("word {w}: tallies {tally} != customers {}", s.customers));
            }
            if s.customers == 0 || s.tables.is_empty() || s.tables.len() as u32 > s.customers {
                return Err(format!("word {w}: c = {}, t = {}", s.customers, s.tables.len()));
            }
            if s.tables.contains(&0) {
                return Err(format!("word {w}: empty table"));
            }
            customers += s.customers;
            tables += s.tables.len() as u32;
        }
        if customers != self.total_customers || tables != self.total_tables {
            return Err(format!(
                "totals ({}, {}) != sums ({customers}, {tables})",
                self.total_customers, self.total_tables
            ));
        }
        Ok(())
    }

    fn words(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.seats.iter().map(|(w, s)| (*w, s.customers, s.tables.len() as u32))
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
struct Node {
    restaurant: Restaurant,
    children: HashMap<u32, NodeId>,
    parent: Option<NodeId>,
    /// Context symbol this node adds to its parent's context.
    symbol: u32,
    depth: usize,
}

/// Hierarchical Pitman-Yor model of a fixed order. Order 1 is a unigram
/// model (root only), order 2 a bigram model, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Hpylm {
    order: usize,
    params: Vec<PyParams>,
    nodes: Vec<Node>,
}

impl Hpylm {
    pub fn new(order: usize, params: PyParams) -> Self {
        assert!(order >= 1, "order must be at least 1");
        Self {
            order,
            params: vec![params; order],
            nodes: vec![Node {
                restaurant: Restaurant::default(),
                children: HashMap::default(),
                parent: None,
                symbol: u32::MAX,
                depth: 0,
            }],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn params(&self, depth: usize) -> PyParams {
        self.params[depth]
    }

    pub fn clear(&mut self) {
        self.nodes.truncate(1);
        self.nodes[0].restaurant = Restaurant::default();
        self.nodes[0].children.clear();
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn restaurant(&self, node: NodeId) -> &Restaurant {
        &self.nodes[node].restaurant
    }

    /// Deepest existing node matching `context` (oldest symbol first).
    pub fn context_node(&self, context: &[u32]) -> NodeId {
        let mut node = 0;
        for &sym in context.iter().rev().take(self.order - 1) {
            match self.nodes[node].children.get(&sym) {
                Some(&child) => node = child,
                None => break,
            }
        }
        node
    }

    /// Child of `node` for context symbol `sym`, if it exists.
    pub fn child(&self, node: NodeId, sym: u32) -> Option<NodeId> {
        self.nodes[node].children.get(&sym).copied()
    }

    fn path_mut(&mut self, context: &[u32]) -> Vec<NodeId> {
        let mut path = vec![0];
        let mut node = 0;
        for &sym in context.iter().rev().take(self.order - 1) {
            node = match self.nodes[node].children.get(&sym) {
                Some(&child) => child,
                None => {
                    let id = self.nodes.len();
                    let depth = self.nodes[node].depth + 1;
                    self.nodes.push(Node {
                        restaurant: Restaurant::default(),
                        children: HashMap::default(),
                        parent: Some(node),
                        symbol: sym,
                        depth,
                    });
                    self.nodes[node].children.insert(sym, id);
                    id
                }
            };
            path.push(node);
        }
        path
    }

    fn path(&self, context: &[u32]) -> Vec<NodeId> {
        let mut path = vec![0];
        let mut node = 0;
        for &sym in context.iter().rev().take(self.order - 1) {
            match self.nodes[node].children.get(&sym) {
                Some(&child) => {
                    node = child;
                    path.push(node);
                }
                None => break,
            }
        }
        path
    }

    /// Predictive probability at `node` given the predictive of its parent.
    pub fn node_prob(&self, node: NodeId, w: u32, parent_prob: f64) -> f64 {
        let n = &self.nodes[node];
        n.restaurant.prob(w, parent_prob, self.params[n.depth])
    }

    /// `P(w | context)`, backing off recursively to `base`.
    pub fn prob(&self, context: &[u32], w: u32, base: f64) -> f64 {
        let mut node = 0;
        let mut p = self.node_prob(node, w, base);
        for &sym in context.iter().rev().take(self.order - 1) {
            match self.nodes[node].children.get(&sym) {
                Some(&child) => {
                    node = child;
                    p = self.node_prob(node, w, p);
                }
                None => break,
            }
        }
        p
    }

    /// Product of back-off weights along the context path: the mass `P(. |
    /// context)` gives to the base measure for a symbol with no customers.
    pub fn backoff_product(&self, context: &[u32]) -> f64 {
        self.path(context)
            .into_iter()
            .map(|n| self.nodes[n].restaurant.backoff(self.params[self.nodes[n].depth]))
            .product()
    }

    /// Adds a customer for `w` in `context`. Returns true if a new table
    /// reached the base measure.
    pub fn add<R: Rng + ?Sized>(&mut self, context: &[u32], w: u32, base: f64, rng: &mut R) -> bool {
        let path = self.path_mut(context);
        let mut parent_probs = Vec::with_capacity(path.len());
        let mut p = base;
        for &node in &path {
            parent_probs.push(p);
            p = self.node_prob(node, w, p);
        }
        for (level, &node) in path.iter().enumerate().rev() {
            let params = self.params[self.nodes[node].depth];
            if !self.nodes[node].restaurant.add(w, parent_probs[level], params, rng) {
                return false;
            }
        }
        true
    }

    /// Removes a customer for `w` in `context`. Returns true if a table
    /// closed at the root, i.e. the base measure lost a customer.
    pub fn remove<R: Rng + ?Sized>(&mut self, context: &[u32], w: u32, rng: &mut R) -> Result<bool, LmError> {
        let path = self.path(context);
        if path.len() < context.len().min(self.order - 1) + 1 {
            return Err(LmError::RemoveFromEmpty(w.to_string()));
        }
        let deepest = *path.last().expect("path has the root");
        if self.nodes[deepest].restaurant.customers(w) == 0 {
            return Err(LmError::RemoveFromEmpty(w.to_string()));
        }
        for &node in path.iter().rev() {
            if !self.nodes[node].restaurant.remove(w, rng)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Checks every restaurant, and that each table at a node matches one
    /// customer for the same symbol at its parent.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (id, node) in self.nodes.iter().enumerate() {
            node.restaurant.check().map_err(|e| format!("node {id}: {e}"))?;
            if node.children.is_empty() {
                continue;
            }
            let mut child_tables: HashMap<u32, u32> = HashMap::default();
            for &child in node.children.values() {
                for (w, _, t) in self.nodes[child].restaurant.words() {
                    *child_tables.entry(w).or_default() += t;
                }
            }
            for (w, t) in &child_tables {
                let c = node.restaurant.customers(*w);
                if c != *t {
                    return Err(format!("node {id}, word {w}: {c} customers but {t} child tables"));
                }
            }
            for (w, c, _) in node.restaurant.words() {
                if child_tables.get(&w).copied().unwrap_or(0) != c {
                    return Err(format!("node {id}, word {w}: customers without child tables"));
                }
            }
        }
        Ok(())
    }

    fn context_of(&self, mut node: NodeId) -> Vec<u32> {
        let mut ctx = Vec::new();
        while let Some(parent) = self.nodes[node].parent {
            ctx.push(self.nodes[node].symbol);
            node = parent;
        }
        ctx
    }

    /// Non-empty `(context, symbol) -> (customers, tables)` entries, context oldest first.
    pub fn count_profile(&self) -> BTreeMap<(Vec<u32>, u32), (u32, u32)> {
        let mut out = BTreeMap::new();
        for id in 0..self.nodes.len() {
            let ctx = self.context_of(id);
            for (w, c, t) in self.nodes[id].restaurant.words() {
                out.insert((ctx.clone(), w), (c, t));
            }
        }
        out
    }

    /// `(context, symbol) -> customers`, ignoring table structure.
    pub fn customer_profile(&self) -> BTreeMap<(Vec<u32>, u32), u32> {
        self.count_profile().into_iter().map(|(k, (c, _))| (k, c)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.iter().all(|n| n.restaurant.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn params_are_validated() {
        assert!(PyParams::new(1.0, 2.0).is_err());
        assert!(PyParams::new(0.5, -0.5).is_err());
        assert!(PyParams::new(0.0, 0.1).is_ok());
    }

    #[test]
    fn empty_model_returns_base() {
        let m = Hpylm::new(3, PyParams::default());
        assert_eq!(m.prob(&[1, 2], 7, 0.125), 0.125);
    }

    #[test]
    fn single_customer_matches_hand_value() {
        let mut rng = seeded(0);
        let mut m = Hpylm::new(1, PyParams::default());
        assert!(m.add(&[], 5, 0.1, &mut rng));
        let r = m.restaurant(m.root());
        assert_eq!((r.customers(5), r.tables(5)), (1, 1));
        // (1 - 0.5) / 3 + (2 + 0.5) / 3 * base
        let expect = 0.5 / 3.0 + 2.5 / 3.0 * 0.1;
        assert!((m.prob(&[], 5, 0.1) - expect).abs() < 1e-15);
    }

    #[test]
    fn first_customer_opens_table_and_propagates() {
        let mut rng = seeded(1);
        let mut m = Hpylm::new(2, PyParams::default());
        assert!(m.add(&[3], 9, 0.2, &mut rng));
        let child = m.context_node(&[3]);
        assert_ne!(child, m.root());
        assert_eq!(m.restaurant(child).tables(9), 1);
        assert_eq!(m.restaurant(m.root()).customers(9), 1);
        m.check_invariants().unwrap();
    }

    #[test]
    fn add_remove_restores_empty() {
        let mut rng = seeded(2);
        let mut m = Hpylm::new(3, PyParams::default());
        m.add(&[1, 2], 4, 0.3, &mut rng);
        assert!(m.remove(&[1, 2], 4, &mut rng).unwrap());
        assert!(m.is_empty());
        assert!(m.count_profile().is_empty());
    }

    #[test]
    fn remove_from_empty_fails() {
        let mut rng = seeded(3);
        let mut m = Hpylm::new(2, PyParams::default());
        assert!(matches!(m.remove(&[1], 4, &mut rng), Err(LmError::RemoveFromEmpty(_))));
        m.add(&[1], 4, 0.3, &mut rng);
        assert!(matches!(m.remove(&[2], 4, &mut rng), Err(LmError::RemoveFromEmpty(_))));
        assert!(matches!(m.remove(&[1], 5, &mut rng), Err(LmError::RemoveFromEmpty(_))));
    }
}
