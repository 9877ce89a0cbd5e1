//! The contract every module satisfies to take part in a module graph.
//!
//! A module may act as a *lower* endpoint (it owns a shared latent and can
//! report its posterior over it) and/or an *upper* endpoint (it generates a
//! lower module's latent from its own variables, through one or more slots).

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::message::{sample_index, CategoricalMessage};
use crate::mlda::{draw_pseudo_obs, Mlda};
use crate::rng::SerketRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arity {
    Finite(usize),
    Unbounded,
}

pub trait Module: Send {
    /// Number of data instances (documents, utterances) that carry a shared latent.
    fn instances(&self) -> usize;

    /// Arity of the latent this module shares with the module above it.
    fn latent_arity(&self) -> Arity;

    /// One internal update; returns a log-likelihood proxy in nats.
    fn sweep(&mut self, rng: &mut SerketRng) -> Result<f64, GraphError>;

    /// `P(z | o)` per instance.
    fn bottom_up(&self) -> Result<Vec<CategoricalMessage>, GraphError>;

    /// Takes `P(z | z_upper)` per instance together with the latents sampled
    /// from the product, and updates internal parameters.
    fn absorb_top_down(
        &mut self,
        messages: &[CategoricalMessage],
        latents: &[usize],
        rng: &mut SerketRng,
    ) -> Result<(), GraphError>;

    /// Updates parameters from latents chosen by a sampling connector.
    fn commit_latents(&mut self, latents: &[usize], rng: &mut SerketRng) -> Result<(), GraphError>;

    /// Latent value currently held for instance `i`, if the module tracks one.
    fn current_latent(&self, _i: usize) -> Option<usize> {
        None
    }

    /// Arity expected at upper slot `slot`, if this module has such a slot.
    fn slot_arity(&self, _slot: usize) -> Option<usize> {
        None
    }

    /// Re-estimates `P(z | z_upper)` for slot `slot` from bottom-up messages.
    fn receive_bottom_up(
        &mut self,
        slot: usize,
        _messages: &[CategoricalMessage],
        _rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        Err(GraphError::UnsupportedConnector(format!("no upper slot {slot}")))
    }

    /// `P(z | z_upper)` per instance for slot `slot`.
    fn top_down(&self, slot: usize) -> Result<Vec<CategoricalMessage>, GraphError> {
        Err(GraphError::UnsupportedConnector(format!("no upper slot {slot}")))
    }

    /// Updates the upper side from latents chosen by a sampling connector.
    fn commit_from_lower(
        &mut self,
        slot: usize,
        _latents: &[usize],
        _rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        Err(GraphError::UnsupportedConnector(format!("no upper slot {slot}")))
    }

    /// Snapshot of internal assignments, used for determinism checks.
    fn fingerprint(&self) -> Vec<u64> {
        Vec::new()
    }
}

/// Lower module with a fixed posterior `P(z | o_i)` per instance.
///
/// It keeps a tally of every latent it has been handed, which makes it a
/// convenient probe for checking connector output against enumeration.
#[derive(Debug, Clone)]
pub struct FixedPosterior {
    posteriors: Vec<CategoricalMessage>,
    current: Vec<Option<usize>>,
    tallies: Vec<Vec<u64>>,
}

impl FixedPosterior {
    pub fn new(posteriors: Vec<CategoricalMessage>) -> Self {
        let k = posteriors.first().map_or(0, CategoricalMessage::len);
        Self {
            current: vec![None; posteriors.len()],
            tallies: vec![vec![0; k]; posteriors.len()],
            posteriors,
        }
    }

    /// Empirical distribution of latents received for instance `i`.
    pub fn empirical(&self, i: usize) -> Vec<f64> {
        let total: u64 = self.tallies[i].iter().sum();
        self.tallies[i].iter().map(|&c| c as f64 / total.max(1) as f64).collect()
    }

    pub fn reset_tallies(&mut self) {
        self.tallies.iter_mut().for_each(|t| t.iter_mut().for_each(|c| *c = 0));
    }

    fn record(&mut self, latents: &[usize]) {
        for (i, &z) in latents.iter().enumerate() {
            self.current[i] = Some(z);
            self.tallies[i][z] += 1;
        }
    }
}

impl Module for FixedPosterior {
    fn instances(&self) -> usize {
        self.posteriors.len()
    }

    fn latent_arity(&self) -> Arity {
        Arity::Finite(self.posteriors.first().map_or(0, CategoricalMessage::len))
    }

    fn sweep(&mut self, _rng: &mut SerketRng) -> Result<f64, GraphError> {
        Ok(self
            .current
            .iter()
            .zip(&self.posteriors)
            .map(|(z, p)| z.map_or(0.0, |z| p.prob(z).ln()))
            .sum())
    }

    fn bottom_up(&self) -> Result<Vec<CategoricalMessage>, GraphError> {
        Ok(self.posteriors.clone())
    }

    fn absorb_top_down(
        &mut self,
        _messages: &[CategoricalMessage],
        latents: &[usize],
        _rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        self.record(latents);
        Ok(())
    }

    fn commit_latents(&mut self, latents: &[usize], _rng: &mut SerketRng) -> Result<(), GraphError> {
        self.record(latents);
        Ok(())
    }

    fn current_latent(&self, i: usize) -> Option<usize> {
        self.current[i]
    }

    fn fingerprint(&self) -> Vec<u64> {
        self.tallies.iter().flatten().copied().collect()
    }
}

/// Upper module with a fixed prior `P(z_upper)` and conditional table
/// `P(z | z_upper)`, holding one upper latent per instance.
///
/// On a soft bottom-up message `m` it draws `z_upper ~ P(z_upper) sum_z
/// P(z | z_upper) m(z)` and replies with the matching table row, so the lower
/// module's product sample is an exact joint posterior draw.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    prior: Vec<f64>,
    table: Vec<Vec<f64>>,
    state: Vec<usize>,
}

impl ConditionalTable {
    /// `table[u][z] = P(z | z_upper = u)`.
    pub fn new(prior: Vec<f64>, table: Vec<Vec<f64>>, instances: usize) -> Result<Self, GraphError> {
        if prior.len() != table.len() || table.is_empty() {
            return Err(GraphError::InvalidArgument("prior and table rows disagree".into()));
        }
        CategoricalMessage::new(prior.clone())?;
        for row in &table {
            CategoricalMessage::new(row.clone())?;
        }
        let start = crate::message::argmax(&prior);
        Ok(Self {
            prior,
            table,
            state: vec![start; instances],
        })
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    fn lower_arity(&self) -> usize {
        self.table[0].len()
    }

    fn resample(&mut self, i: usize, evidence: impl Fn(&[f64]) -> f64, rng: &mut SerketRng) {
        let w: Vec<f64> = self
            .prior
            .iter()
            .zip(&self.table)
            .map(|(p, row)| p * evidence(row))
            .collect();
        if w.iter().sum::<f64>() > 0.0 {
            self.state[i] = sample_index(&w, rng);
        }
    }
}

impl Module for ConditionalTable {
    fn instances(&self) -> usize {
        self.state.len()
    }

    fn latent_arity(&self) -> Arity {
        Arity::Finite(self.prior.len())
    }

    fn sweep(&mut self, _rng: &mut SerketRng) -> Result<f64, GraphError> {
        Ok(self.state.iter().map(|&u| self.prior[u].ln()).sum())
    }

    fn bottom_up(&self) -> Result<Vec<CategoricalMessage>, GraphError> {
        Ok(vec![CategoricalMessage::new(self.prior.clone())?; self.state.len()])
    }

    fn absorb_top_down(
        &mut self,
        _messages: &[CategoricalMessage],
        _latents: &[usize],
        _rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        Ok(())
    }

    fn commit_latents(&mut self, _latents: &[usize], _rng: &mut SerketRng) -> Result<(), GraphError> {
        Ok(())
    }

    fn slot_arity(&self, slot: usize) -> Option<usize> {
        (slot == 0).then(|| self.lower_arity())
    }

    fn receive_bottom_up(
        &mut self,
        slot: usize,
        messages: &[CategoricalMessage],
        rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        check_slot(slot)?;
        check_count(messages.len(), self.state.len())?;
        for (i, m) in messages.iter().enumerate() {
            if m.len() != self.lower_arity() {
                return Err(crate::error::MessageError::DimensionMismatch {
                    expected: self.lower_arity(),
                    found: m.len(),
                }
                .into());
            }
            self.resample(i, |row| row.iter().zip(m.probs()).map(|(a, b)| a * b).sum(), rng);
        }
        Ok(())
    }

    fn top_down(&self, slot: usize) -> Result<Vec<CategoricalMessage>, GraphError> {
        check_slot(slot)?;
        self.state
            .iter()
            .map(|&u| CategoricalMessage::new(self.table[u].clone()).map_err(GraphError::from))
            .collect()
    }

    fn commit_from_lower(
        &mut self,
        slot: usize,
        latents: &[usize],
        rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        check_slot(slot)?;
        check_count(latents.len(), self.state.len())?;
        for (i, &z) in latents.iter().enumerate() {
            self.resample(i, |row| row[z], rng);
        }
        Ok(())
    }

    fn fingerprint(&self) -> Vec<u64> {
        self.state.iter().map(|&u| u as u64).collect()
    }
}

fn check_slot(slot: usize) -> Result<(), GraphError> {
    if slot == 0 {
        Ok(())
    } else {
        Err(GraphError::UnsupportedConnector(format!("no upper slot {slot}")))
    }
}

fn check_count(found: usize, expected: usize) -> Result<(), GraphError> {
    if found == expected {
        Ok(())
    } else {
        Err(GraphError::InstanceMismatch {
            lower: found,
            upper: expected,
        })
    }
}

/// Lower module whose latent space is unbounded; only usable with sampling connectors.
#[derive(Debug, Clone, Default)]
pub struct UnboundedStub {
    pub instances: usize,
}

impl Module for UnboundedStub {
    fn instances(&self) -> usize {
        self.instances
    }
    fn latent_arity(&self) -> Arity {
        Arity::Unbounded
    }
    fn sweep(&mut self, _rng: &mut SerketRng) -> Result<f64, GraphError> {
        Ok(0.0)
    }
    fn bottom_up(&self) -> Result<Vec<CategoricalMessage>, GraphError> {
        Err(GraphError::UnsupportedConnector("unbounded latent has no categorical posterior".into()))
    }
    fn absorb_top_down(
        &mut self,
        _m: &[CategoricalMessage],
        _l: &[usize],
        _rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        Ok(())
    }
    fn commit_latents(&mut self, _l: &[usize], _rng: &mut SerketRng) -> Result<(), GraphError> {
        Ok(())
    }
}

impl Module for Mlda {
    fn instances(&self) -> usize {
        self.num_docs()
    }

    fn latent_arity(&self) -> Arity {
        Arity::Finite(self.k())
    }

    fn sweep(&mut self, rng: &mut SerketRng) -> Result<f64, GraphError> {
        for _ in 0..self.config().sweeps_per_round.max(1) {
            self.gibbs_sweep_stored(rng)?;
        }
        Ok(self.log_likelihood())
    }

    fn bottom_up(&self) -> Result<Vec<CategoricalMessage>, GraphError> {
        Ok((0..self.num_docs()).map(|j| self.doc_posterior(j)).collect())
    }

    fn absorb_top_down(
        &mut self,
        messages: &[CategoricalMessage],
        _latents: &[usize],
        _rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        self.set_external(messages.to_vec())?;
        Ok(())
    }

    /// A chosen category becomes a message that favours it by one
    /// pseudo-count over the Dirichlet prior.
    fn commit_latents(&mut self, latents: &[usize], _rng: &mut SerketRng) -> Result<(), GraphError> {
        let k = self.k();
        let alpha = self.config().alpha;
        let msgs = latents
            .iter()
            .map(|&z| {
                let mut w = vec![alpha; k];
                w[z] += 1.0;
                CategoricalMessage::from_weights(&w)
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.set_external(msgs)?;
        Ok(())
    }

    fn current_latent(&self, i: usize) -> Option<usize> {
        Some(self.doc_label(i))
    }

    fn slot_arity(&self, slot: usize) -> Option<usize> {
        self.slot_modality(slot).map(|m| self.vocab_size(m))
    }

    fn receive_bottom_up(
        &mut self,
        slot: usize,
        messages: &[CategoricalMessage],
        rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        let m = self
            .slot_modality(slot)
            .ok_or_else(|| GraphError::UnsupportedConnector(format!("no upper slot {slot}")))?;
        let n = self.config().pseudo_obs;
        let counts: Vec<Vec<u32>> = messages.iter().map(|msg| draw_pseudo_obs(msg, n, rng)).collect();
        self.replace_modality(m, &counts, rng)?;
        Ok(())
    }

    fn top_down(&self, slot: usize) -> Result<Vec<CategoricalMessage>, GraphError> {
        let m = self
            .slot_modality(slot)
            .ok_or_else(|| GraphError::UnsupportedConnector(format!("no upper slot {slot}")))?;
        Ok((0..self.num_docs()).map(|j| self.topdown_message(j, m)).collect())
    }

    fn commit_from_lower(
        &mut self,
        slot: usize,
        latents: &[usize],
        rng: &mut SerketRng,
    ) -> Result<(), GraphError> {
        let m = self
            .slot_modality(slot)
            .ok_or_else(|| GraphError::UnsupportedConnector(format!("no upper slot {slot}")))?;
        let v = self.vocab_size(m);
        let n = self.config().pseudo_obs as u32;
        let counts: Vec<Vec<u32>> = latents
            .iter()
            .map(|&z| {
                let mut c = vec![0; v];
                c[z] = n;
                c
            })
            .collect();
        self.replace_modality(m, &counts, rng)?;
        Ok(())
    }

    fn fingerprint(&self) -> Vec<u64> {
        (0..self.num_docs())
            .flat_map(|j| (0..self.num_modalities()).flat_map(move |m| self.assignments(j, m)))
            .map(|z| z as u64)
            .collect()
    }
}
