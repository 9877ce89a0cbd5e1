//! The three ways two modules agree on a shared latent variable.
//!
//! * Message passing: the lower module sends `P(z | o)`, the upper replies with
//!   `P(z | z_upper)`, and the lower samples from their normalized product.
//! * Sampling-importance-resampling: the lower sends `L` samples drawn from
//!   `P(z | o)`; the upper picks one with weight `P(z | z_upper)`.
//! * Metropolis-Hastings: the lower proposes from `P(z | o)`; the upper accepts
//!   with probability `min(1, P(z* | z_upper) / P(z | z_upper))`.
//!
//! The functions here work on [`Module`] trait objects for finite latents.
//! [`sir_select`] and [`mh_accept_prob`] are the bare selection rules, usable
//! with any latent type (e.g. recognized strings).

use rand::Rng;

use crate::error::{GraphError, MessageError};
use crate::message::{sample_index, CategoricalMessage, SampleMessage};
use crate::module::Module;
use crate::rng::SerketRng;

/// Result of one message-passing exchange.
#[derive(Debug, Clone)]
pub struct MpOutcome {
    /// Latent sampled per instance from the product of the two messages.
    pub latents: Vec<usize>,
    pub bottom_up: Vec<CategoricalMessage>,
    pub top_down: Vec<CategoricalMessage>,
    /// Instances whose product was all zero and fell back to the bottom-up message.
    pub degenerate: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SirOutcome {
    pub selected: Vec<usize>,
    /// Instances where every candidate had zero upper weight.
    pub all_zero: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MhOutcome {
    /// Post-burn-in states, one vector of per-instance latents per step.
    pub chain: Vec<Vec<usize>>,
    pub final_state: Vec<usize>,
    pub accepted: usize,
    pub proposed: usize,
    /// Steps whose current state had zero upper probability.
    pub zero_denominator: usize,
}

/// Sampling distribution for the lower module: the normalized elementwise
/// product of the bottom-up and top-down messages. Returns the fallback flag
/// when the product vanishes.
pub fn mp_product(
    bottom_up: &CategoricalMessage,
    top_down: &CategoricalMessage,
) -> Result<(CategoricalMessage, bool), MessageError> {
    match bottom_up.product(top_down) {
        Ok(p) => Ok((p, false)),
        Err(MessageError::AllZero) => Ok((bottom_up.clone(), true)),
        Err(e) => Err(e),
    }
}

fn check_normalized(msgs: &[CategoricalMessage]) -> Result<(), MessageError> {
    for m in msgs {
        let s: f64 = m.probs().iter().sum();
        if (s - 1.0).abs() > crate::message::NORMALIZATION_TOL {
            return Err(MessageError::NotNormalized(s));
        }
    }
    Ok(())
}

/// One message-passing exchange between `lower` and slot `slot` of `upper`.
pub fn mp_round(
    lower: &mut dyn Module,
    upper: &mut dyn Module,
    slot: usize,
    rng: &mut SerketRng,
) -> Result<MpOutcome, GraphError> {
    let bottom_up = lower.bottom_up()?;
    check_normalized(&bottom_up)?;
    upper.receive_bottom_up(slot, &bottom_up, rng)?;
    let top_down = upper.top_down(slot)?;
    check_normalized(&top_down)?;
    if top_down.len() != bottom_up.len() {
        return Err(GraphError::InstanceMismatch {
            lower: bottom_up.len(),
            upper: top_down.len(),
        });
    }
    let mut latents = Vec::with_capacity(bottom_up.len());
    let mut degenerate = Vec::new();
    for (i, (up, down)) in bottom_up.iter().zip(&top_down).enumerate() {
        let (dist, fallback) = mp_product(up, down)?;
        if fallback {
            degenerate.push(i);
        }
        latents.push(dist.sample(rng));
    }
    lower.absorb_top_down(&top_down, &latents, rng)?;
    Ok(MpOutcome {
        latents,
        bottom_up,
        top_down,
        degenerate,
    })
}

/// Picks one candidate with probability proportional to `exp(log_weight)`.
/// When every weight is zero the pick is uniform and the flag is set.
pub fn sir_select<T, R: Rng + ?Sized>(
    candidates: &SampleMessage<T>,
    mut log_weight: impl FnMut(&T) -> f64,
    rng: &mut R,
) -> (usize, bool) {
    let logs: Vec<f64> = candidates.samples().iter().map(&mut log_weight).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return (rng.random_range(0..candidates.len()), true);
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    (sample_index(&weights, rng), false)
}

/// Draws `l` samples per instance from the lower module's posterior.
pub fn draw_candidates(
    lower: &dyn Module,
    l: usize,
    rng: &mut SerketRng,
) -> Result<Vec<SampleMessage<usize>>, GraphError> {
    if l == 0 {
        return Err(GraphError::InvalidArgument("SIR needs at least one sample".into()));
    }
    let posts = lower.bottom_up()?;
    check_normalized(&posts)?;
    posts
        .iter()
        .map(|p| {
            let samples: Vec<usize> = (0..l).map(|_| p.sample(rng)).collect();
            let scores = samples.iter().map(|&s| p.prob(s).ln()).collect();
            SampleMessage::new(samples, scores).map_err(GraphError::from)
        })
        .collect()
}

/// One sampling-importance-resampling exchange.
pub fn sir_round(
    lower: &mut dyn Module,
    upper: &mut dyn Module,
    slot: usize,
    l: usize,
    rng: &mut SerketRng,
) -> Result<SirOutcome, GraphError> {
    let candidates = draw_candidates(lower, l, rng)?;
    let weights = upper.top_down(slot)?;
    if weights.len() != candidates.len() {
        return Err(GraphError::InstanceMismatch {
            lower: candidates.len(),
            upper: weights.len(),
        });
    }
    let mut selected = Vec::with_capacity(candidates.len());
    let mut all_zero = Vec::new();
    for (i, (cands, w)) in candidates.iter().zip(&weights).enumerate() {
        let (idx, zero) = sir_select(cands, |&z| w.prob(z).ln(), rng);
        if zero {
            all_zero.push(i);
        }
        selected.push(cands.samples()[idx]);
    }
    lower.commit_latents(&selected, rng)?;
    upper.commit_from_lower(slot, &selected, rng)?;
    Ok(SirOutcome { selected, all_zero })
}

/// Acceptance probability `min(1, proposed / current)`; a zero-probability
/// current state accepts unconditionally.
pub fn mh_accept_prob(p_proposed: f64, p_current: f64) -> (f64, bool) {
    if p_current <= 0.0 {
        return (1.0, true);
    }
    ((p_proposed / p_current).min(1.0), false)
}

/// Runs `steps` Metropolis-Hastings steps per instance with the upper module
/// held fixed, then commits the final state to both modules. The first
/// `burn_in` steps are dropped from the returned chain.
pub fn mh_round(
    lower: &mut dyn Module,
    upper: &mut dyn Module,
    slot: usize,
    steps: usize,
    burn_in: usize,
    rng: &mut SerketRng,
) -> Result<MhOutcome, GraphError> {
    let proposals = lower.bottom_up()?;
    check_normalized(&proposals)?;
    let target = upper.top_down(slot)?;
    if target.len() != proposals.len() {
        return Err(GraphError::InstanceMismatch {
            lower: proposals.len(),
            upper: target.len(),
        });
    }
    let mut state: Vec<usize> = (0..proposals.len())
        .map(|i| lower.current_latent(i).unwrap_or_else(|| proposals[i].sample(rng)))
        .collect();
    let mut chain = Vec::with_capacity(steps.saturating_sub(burn_in));
    let (mut accepted, mut proposed, mut zero_denominator) = (0, 0, 0);
    for step in 0..steps {
        for (i, z) in state.iter_mut().enumerate() {
            let candidate = proposals[i].sample(rng);
            let (a, zero) = mh_accept_prob(target[i].prob(candidate), target[i].prob(*z));
            proposed += 1;
            if zero {
                zero_denominator += 1;
            }
            if a >= 1.0 || rng.random::<f64>() < a {
                *z = candidate;
                accepted += 1;
            }
        }
        if step >= burn_in {
            chain.push(state.clone());
        }
    }
    if steps > 0 {
        lower.commit_latents(&state, rng)?;
        upper.commit_from_lower(slot, &state, rng)?;
    }
    Ok(MhOutcome {
        chain,
        final_state: state,
        accepted,
        proposed,
        zero_denominator,
    })
}
